//! C ABI over `ccs_core`.
//!
//! Every entry point returns a [`CcsStatus`] and writes results through
//! out-pointers. Datasets and estimates are opaque handles released with
//! their `_free` function. After a failure, [`ccs_last_error_message`]
//! describes it; the message belongs to the calling thread.
//!
//! Panics never cross the boundary: they are reported as
//! [`CcsStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ccs_core::cli::parse_scenario;
use ccs_core::dataset::{
    load_csv, CovariateEntry, CovariateSchema, DataError, Dataset, Observation, OutcomeKind,
    SchemaDescriptor,
};
use ccs_core::diagnostics::test_a2a3;
use ccs_core::estimators::{
    all_requests, contrast, run_crossfit, AssumptionSet, CrossFitOutput, Estimand, EstimandRequest,
    EstimateError, SeMode,
};
use ccs_core::nuisance::{ClipPolicy, NuisanceError, NuisanceSpecs};
use ccs_core::simlab::monte_carlo::{run_monte_carlo_multi, ScenarioConfig};
use ccs_core::simlab::special::{bvn_cdf, normal_cdf, Cov2};
use ccs_core::simlab::SimError;

/// Result code of every `ccs_*` call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Data = 3,
    Estimation = 4,
    Simulation = 5,
    Io = 6,
    Panic = 7,
}

pub const CCS_MU: u32 = 0;
pub const CCS_NU: u32 = 1;

pub const CCS_A1: u32 = 0;
pub const CCS_A1A2: u32 = 1;
pub const CCS_A1A3: u32 = 2;
pub const CCS_A1A2A3: u32 = 3;

/// Standard error from the per-row influence difference.
pub const CCS_SE_IF_DIFFERENCE: u32 = 0;
/// Standard error treating the two arms as independent.
pub const CCS_SE_INDEPENDENT_ARMS: u32 = 1;

/// Opaque dataset handle.
pub struct CcsDataset {
    inner: Dataset,
}

/// Opaque handle to the reports of one cross-fitted run.
pub struct CcsEstimate {
    inner: CrossFitOutput,
}

/// One estimator: `estimand` is `CCS_MU` or `CCS_NU`, `assumptions` one of
/// the `CCS_A1*` constants, `arm` 0 or 1.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CcsRequest {
    pub estimand: u32,
    pub arm: u32,
    pub assumptions: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcsSummary {
    pub request: CcsRequest,
    pub point: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub n: usize,
    pub k: usize,
    /// Whether every fold's nuisance fits converged.
    pub converged: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcsContrast {
    pub delta: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Odds ratio of study membership on the outcome within one arm.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcsIndependenceTest {
    pub arm: u32,
    pub log_or: f64,
    pub se: f64,
    pub or_point: f64,
    pub or_ci_lower: f64,
    pub or_ci_upper: f64,
    pub converged: bool,
    pub separation: bool,
    pub n: usize,
    /// Whether the 95% interval excludes 1.
    pub rejects: bool,
}

struct Failure {
    status: CcsStatus,
    message: String,
}

impl Failure {
    fn new(status: CcsStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn null(what: &str) -> Self {
        Self::new(CcsStatus::NullPointer, format!("{what} is null"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(CcsStatus::InvalidArgument, message)
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        let status = match e {
            DataError::Io(_) => CcsStatus::Io,
            _ => CcsStatus::Data,
        };
        Self::new(status, e.to_string())
    }
}

impl From<EstimateError> for Failure {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::InvalidRequest(_) => Self::invalid(e.to_string()),
            EstimateError::Data(d) => d.into(),
            _ => Self::new(CcsStatus::Estimation, e.to_string()),
        }
    }
}

impl From<NuisanceError> for Failure {
    fn from(e: NuisanceError) -> Self {
        let status = match e {
            NuisanceError::EmptySubgroup { .. } | NuisanceError::NonBinaryTarget => CcsStatus::Data,
            NuisanceError::InvalidSpec(_) => CcsStatus::InvalidArgument,
            _ => CcsStatus::Estimation,
        };
        Self::new(status, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let status = match e {
            SimError::InvalidConfig(_) | SimError::Domain(_) | SimError::NotPositiveDefinite => {
                CcsStatus::InvalidArgument
            }
            _ => CcsStatus::Simulation,
        };
        Self::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CcsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CcsStatus::Ok,
        Ok(Err(fail)) => {
            set_error(&fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            CcsStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn in_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::invalid(format!("{what} is not valid UTF-8")))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s)
        .expect("JSON output contains no NUL bytes")
        .into_raw()
}

fn request_from_c(r: &CcsRequest) -> Result<EstimandRequest, Failure> {
    let estimand = match r.estimand {
        CCS_MU => Estimand::Mu,
        CCS_NU => Estimand::Nu,
        e => return Err(Failure::invalid(format!("unknown estimand code {e}"))),
    };
    let assumptions = match r.assumptions {
        CCS_A1 => AssumptionSet::A1,
        CCS_A1A2 => AssumptionSet::A1A2,
        CCS_A1A3 => AssumptionSet::A1A3,
        CCS_A1A2A3 => AssumptionSet::A1A2A3,
        a => return Err(Failure::invalid(format!("unknown assumption set code {a}"))),
    };
    let arm = u8::try_from(r.arm).unwrap_or(u8::MAX);
    Ok(EstimandRequest::new(estimand, arm, assumptions)?)
}

fn request_to_c(r: &EstimandRequest) -> CcsRequest {
    CcsRequest {
        estimand: match r.estimand {
            Estimand::Mu => CCS_MU,
            Estimand::Nu => CCS_NU,
        },
        arm: u32::from(r.arm),
        assumptions: match r.assumptions {
            AssumptionSet::A1 => CCS_A1,
            AssumptionSet::A1A2 => CCS_A1A2,
            AssumptionSet::A1A3 => CCS_A1A3,
            AssumptionSet::A1A2A3 => CCS_A1A2A3,
        },
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ccs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next `ccs_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ccs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from a `ccs_*` function that transfers ownership and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ccs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a headered CSV described by a JSON schema file.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccs_dataset_load_csv(
    data_path: *const c_char,
    schema_path: *const c_char,
    pi_t1: f64,
    out: *mut *mut CcsDataset,
) -> CcsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let data_path = string(data_path, "data_path")?;
        let schema_path = string(schema_path, "schema_path")?;
        let desc = SchemaDescriptor::from_json_file(schema_path)?;
        let d = load_csv(
            data_path,
            &desc.covariates,
            &desc.columns,
            desc.outcome,
            pi_t1,
        )?;
        *out = Box::into_raw(Box::new(CcsDataset { inner: d }));
        Ok(())
    })
}

/// Builds a dataset from arrays. `x` holds `n * p` values in row-major
/// order; the covariates are continuous and named `x1..xp`. `r` and `t` hold
/// 0/1 codes; with `binary_outcome` every `y` must be 0 or 1.
///
/// # Safety
/// Each non-empty array must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn ccs_dataset_from_arrays(
    n: usize,
    p: usize,
    x: *const f64,
    r: *const u8,
    t: *const u8,
    y: *const f64,
    pi_t1: f64,
    binary_outcome: bool,
    out: *mut *mut CcsDataset,
) -> CcsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let len = n
            .checked_mul(p)
            .ok_or_else(|| Failure::invalid("n * p overflows"))?;
        let x = slice(x, len, "x")?;
        let r = slice(r, n, "r")?;
        let t = slice(t, n, "t")?;
        let y = slice(y, n, "y")?;
        let names: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
        let schema = CovariateSchema::new(
            names
                .iter()
                .map(|s| CovariateEntry::continuous(s))
                .collect(),
        )?;
        let rows = (0..n)
            .map(|i| Observation {
                x: x[i * p..(i + 1) * p].to_vec(),
                r: r[i],
                t: t[i],
                y: y[i],
            })
            .collect();
        let kind = if binary_outcome {
            OutcomeKind::Binary
        } else {
            OutcomeKind::Continuous
        };
        let d = Dataset::new(schema, rows, kind, pi_t1)?;
        *out = Box::into_raw(Box::new(CcsDataset { inner: d }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccs_dataset_len(dataset: *const CcsDataset, out: *mut usize) -> CcsStatus {
    guard(|| {
        *out_ref(out, "out")? = in_ref(dataset, "dataset")?.inner.len();
        Ok(())
    })
}

/// Releases a dataset. NULL is ignored.
///
/// # Safety
/// `dataset` must come from a `ccs_dataset_*` constructor and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn ccs_dataset_free(dataset: *mut CcsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Cross-fits the default nuisance models with `k` folds and evaluates each
/// request. With `n_requests == 0` every estimator of both arms is run.
/// `epsilon` clips fitted probabilities to `[epsilon, 1 - epsilon]`.
///
/// # Safety
/// `requests` must hold `n_requests` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccs_estimate(
    dataset: *const CcsDataset,
    requests: *const CcsRequest,
    n_requests: usize,
    k: usize,
    seed: u64,
    epsilon: f64,
    out: *mut *mut CcsEstimate,
) -> CcsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let d = &in_ref(dataset, "dataset")?.inner;
        let reqs = if n_requests == 0 {
            all_requests()
        } else {
            slice(requests, n_requests, "requests")?
                .iter()
                .map(request_from_c)
                .collect::<Result<Vec<_>, _>>()?
        };
        let clip = ClipPolicy::new(epsilon)?;
        let specs = NuisanceSpecs::default_for(d.schema());
        let output = run_crossfit(d, &reqs, k, seed, &specs, clip)?;
        *out = Box::into_raw(Box::new(CcsEstimate { inner: output }));
        Ok(())
    })
}

/// # Safety
/// `estimate` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccs_estimate_count(
    estimate: *const CcsEstimate,
    out: *mut usize,
) -> CcsStatus {
    guard(|| {
        *out_ref(out, "out")? = in_ref(estimate, "estimate")?.inner.reports.len();
        Ok(())
    })
}

/// # Safety
/// `estimate` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccs_estimate_get(
    estimate: *const CcsEstimate,
    index: usize,
    out: *mut CcsSummary,
) -> CcsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let reports = &in_ref(estimate, "estimate")?.inner.reports;
        let rep = reports.get(index).ok_or_else(|| {
            Failure::invalid(format!("index {index} out of range ({})", reports.len()))
        })?;
        *out = CcsSummary {
            request: request_to_c(&rep.request),
            point: rep.point,
            se: rep.se,
            ci_lower: rep.ci95.0,
            ci_upper: rep.ci95.1,
            n: rep.n,
            k: rep.k,
            converged: rep.nuisance_converged(),
        };
        Ok(())
    })
}

/// Arm-1 minus arm-0 contrast of two reports of the same run and family.
///
/// # Safety
/// `estimate` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccs_estimate_contrast(
    estimate: *const CcsEstimate,
    index_arm1: usize,
    index_arm0: usize,
    se_mode: u32,
    out: *mut CcsContrast,
) -> CcsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let reports = &in_ref(estimate, "estimate")?.inner.reports;
        let get = |i: usize| {
            reports
                .get(i)
                .ok_or_else(|| Failure::invalid(format!("index {i} out of range")))
        };
        let mode = match se_mode {
            CCS_SE_IF_DIFFERENCE => SeMode::IfDifference,
            CCS_SE_INDEPENDENT_ARMS => SeMode::IndependentArms,
            m => return Err(Failure::invalid(format!("unknown se mode {m}"))),
        };
        let c = contrast(get(index_arm1)?, get(index_arm0)?, mode)?;
        *out = CcsContrast {
            delta: c.delta,
            se: c.se,
            ci_lower: c.ci95.0,
            ci_upper: c.ci95.1,
        };
        Ok(())
    })
}

/// Full reports and contrasts as JSON. Free the string with
/// [`ccs_string_free`].
///
/// # Safety
/// `estimate` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccs_estimate_to_json(
    estimate: *const CcsEstimate,
    out: *mut *mut c_char,
) -> CcsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let e = in_ref(estimate, "estimate")?;
        let s = serde_json::to_string_pretty(&e.inner)
            .map_err(|err| Failure::new(CcsStatus::Estimation, err.to_string()))?;
        *out = to_c_string(s);
        Ok(())
    })
}

/// Releases an estimate. NULL is ignored.
///
/// # Safety
/// `estimate` must come from [`ccs_estimate`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ccs_estimate_free(estimate: *mut CcsEstimate) {
    if !estimate.is_null() {
        drop(Box::from_raw(estimate));
    }
}

/// Tests within `arm` whether study membership predicts the outcome given
/// covariates. Requires a binary outcome and both studies in the arm.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccs_test_a2a3(
    dataset: *const CcsDataset,
    arm: u32,
    out: *mut CcsIndependenceTest,
) -> CcsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let d = &in_ref(dataset, "dataset")?.inner;
        if arm > 1 {
            return Err(Failure::invalid(format!("arm must be 0 or 1, got {arm}")));
        }
        let spec = NuisanceSpecs::default_for(d.schema()).tau_pooled;
        let res = test_a2a3(d, arm as u8, &spec)?;
        *out = CcsIndependenceTest {
            arm,
            log_or: res.log_or,
            se: res.se,
            or_point: res.or_point,
            or_ci_lower: res.or_ci95.0,
            or_ci_upper: res.or_ci95.1,
            converged: res.converged,
            separation: res.separation,
            n: res.n,
            rejects: res.rejects(),
        };
        Ok(())
    })
}

/// `P[Z <= z]` for `Z ~ N(mean, variance)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccs_normal_cdf(
    z: f64,
    mean: f64,
    variance: f64,
    out: *mut f64,
) -> CcsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if variance.is_nan() || variance <= 0.0 {
            return Err(Failure::invalid(format!(
                "variance must be positive, got {variance}"
            )));
        }
        *out = normal_cdf(z, mean, variance);
        Ok(())
    })
}

/// `P[Z1 <= a, Z2 <= b]` for a centered bivariate normal with covariance
/// `[[s11, s12], [s12, s22]]`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccs_bvn_cdf(
    a: f64,
    b: f64,
    s11: f64,
    s12: f64,
    s22: f64,
    out: *mut f64,
) -> CcsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = bvn_cdf(a, b, Cov2::new(s11, s12, s22)?)?;
        Ok(())
    })
}

/// Runs a Monte Carlo scenario given as JSON (the `simulate` scenario file
/// format) and returns the metrics tables as JSON. Free the string with
/// [`ccs_string_free`].
///
/// # Safety
/// `scenario_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccs_simulate_json(
    scenario_json: *const c_char,
    out: *mut *mut c_char,
) -> CcsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let text = string(scenario_json, "scenario_json")?;
        let (cfg, labels) = parse_scenario(text).map_err(Failure::invalid)?;
        for &l in &labels {
            ScenarioConfig {
                misspec: l,
                ..cfg.clone()
            }
            .validate()?;
        }
        let tables = run_monte_carlo_multi(&cfg, &labels)?;
        let s = serde_json::to_string_pretty(&tables)
            .map_err(|err| Failure::new(CcsStatus::Simulation, err.to_string()))?;
        *out = to_c_string(s);
        Ok(())
    })
}
