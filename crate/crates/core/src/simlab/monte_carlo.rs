//! Replicated simulation runs and their summary metrics.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distort::Distortions;
use super::generate::generate;
use super::truth::{CovariateGenerator, TrueNuisanceSet};
use super::{GeneratorOptions, SimError, Study};
use crate::dataset::{make_folds, FoldMode};
use crate::estimators::{
    all_requests, contrast, CrossFitter, Estimand, EstimandRequest, EstimatorFamily, SeMode,
};
use crate::nuisance::{ClipPolicy, NuisanceSpecs, Requirements};
use crate::report::sig6;

pub const DEFAULT_N_TRUTH: usize = 1_000_000;
pub const DEFAULT_TRUTH_SEED: u64 = 0x5EED_7207;

fn default_k() -> usize {
    5
}

fn default_epsilon() -> f64 {
    ClipPolicy::DEFAULT_EPSILON
}

fn default_n_truth() -> usize {
    DEFAULT_N_TRUTH
}

fn default_truth_seed() -> u64 {
    DEFAULT_TRUTH_SEED
}

/// One simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub study: Study,
    pub misspec: char,
    pub n: usize,
    pub reps: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Defaults to smooth continuous terms and dummy-coded categoricals.
    #[serde(default)]
    pub specs: Option<NuisanceSpecs>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_n_truth")]
    pub n_truth: usize,
    #[serde(default = "default_truth_seed")]
    pub truth_seed: u64,
    #[serde(default)]
    pub generator: GeneratorOptions,
    #[serde(default)]
    pub fold_mode: FoldMode,
}

impl ScenarioConfig {
    pub fn new(study: Study, misspec: char, n: usize, reps: usize, master_seed: u64) -> Self {
        Self {
            study,
            misspec,
            n,
            reps,
            k: default_k(),
            master_seed,
            specs: None,
            epsilon: default_epsilon(),
            n_truth: DEFAULT_N_TRUTH,
            truth_seed: DEFAULT_TRUTH_SEED,
            generator: GeneratorOptions::default(),
            fold_mode: FoldMode::Balanced,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        Distortions::for_scenario(self.study, self.misspec)?;
        if self.reps == 0 {
            return Err(SimError::InvalidConfig("reps must be at least 1".into()));
        }
        if self.k == 0 || self.k > self.n {
            return Err(SimError::InvalidConfig(format!(
                "need 1 <= k <= n, got k={} n={}",
                self.k, self.n
            )));
        }
        if self.n_truth == 0 {
            return Err(SimError::InvalidConfig("n_truth must be positive".into()));
        }
        ClipPolicy::new(self.epsilon).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `rep`, independent of scheduling.
pub fn replicate_seed(master_seed: u64, rep: usize) -> u64 {
    mix(mix(master_seed) ^ (rep as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// True arm means of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthValues {
    /// Cohort means `μ₀, μ₁`.
    pub mu: [f64; 2],
    /// Trial means `ν₀, ν₁`.
    pub nu: [f64; 2],
}

impl TruthValues {
    pub fn of(&self, estimand: Estimand, arm: u8) -> f64 {
        match estimand {
            Estimand::Mu => self.mu[arm as usize],
            Estimand::Nu => self.nu[arm as usize],
        }
    }
}

const TRUTH_CHUNKS: usize = 64;
const PROGRESS_BATCH: usize = 50;

/// Integrates the true arm means over `n_truth` covariate draws:
/// `μₜ = E[P(Yₜ=1|X)]` and `νₜ = E[λ₁(X)·P(Yₜ=1|R=1,X)] / E[λ₁(X)]`.
/// Results are cached per input within the process.
pub fn truth_values(
    study: Study,
    truths: &TrueNuisanceSet,
    gen: &CovariateGenerator,
    opts: &GeneratorOptions,
    n_truth: usize,
    seed: u64,
) -> Result<TruthValues, SimError> {
    static CACHE: OnceLock<Mutex<HashMap<String, TruthValues>>> = OnceLock::new();
    let key =
        serde_json::to_string(&(study, truths, gen, opts, n_truth, seed)).expect("serializable");
    let cache = CACHE.get_or_init(Default::default);
    if let Some(v) = cache.lock().expect("cache lock").get(&key) {
        return Ok(*v);
    }
    let per = n_truth.div_ceil(TRUTH_CHUNKS);
    let sums: Vec<[f64; 5]> = (0..TRUTH_CHUNKS)
        .into_par_iter()
        .map(|c| -> Result<[f64; 5], SimError> {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(seed, c));
            let count = per.min(n_truth.saturating_sub(c * per));
            let mut s = [0.0; 5];
            for _ in 0..count {
                let x = gen.sample(&mut rng);
                let ind = truths.induced(study, &x, opts)?;
                for t in 0..2 {
                    s[t] += ind.tau_pooled[t];
                    s[2 + t] += ind.lambda1 * ind.tau[t][1];
                }
                s[4] += ind.lambda1;
            }
            Ok(s)
        })
        .collect::<Result<_, _>>()?;
    let mut tot = [0.0; 5];
    for s in &sums {
        for j in 0..5 {
            tot[j] += s[j];
        }
    }
    let n = n_truth as f64;
    let v = TruthValues {
        mu: [tot[0] / n, tot[1] / n],
        nu: [tot[2] / tot[4], tot[3] / tot[4]],
    };
    cache.lock().expect("cache lock").insert(key, v);
    Ok(v)
}

/// Summary of one estimator over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub bias: f64,
    pub mean_se: f64,
    /// Sample standard deviation of the point estimates.
    pub sd: f64,
    pub coverage: f64,
    /// `√(bias² + sd²·(reps−1)/reps)`.
    pub rmse: f64,
    pub reps: usize,
    /// False with a single replicate, where `sd` is reported as 0.
    pub sd_defined: bool,
}

/// Bias, mean SE, SD, Wald coverage and root mean squared error.
pub fn summarize_metrics(
    points: &[f64],
    ses: &[f64],
    cis: &[(f64, f64)],
    truth: f64,
) -> MetricsSummary {
    let reps = points.len();
    let m = reps as f64;
    let mean = points.iter().sum::<f64>() / m;
    let bias = mean - truth;
    let mean_se = ses.iter().sum::<f64>() / m;
    let ss: f64 = points.iter().map(|p| (p - mean).powi(2)).sum();
    let (sd, sd_defined) = if reps >= 2 {
        ((ss / (m - 1.0)).sqrt(), true)
    } else {
        (0.0, false)
    };
    let covered = cis
        .iter()
        .filter(|(lo, hi)| *lo <= truth && truth <= *hi)
        .count();
    let rmse = (bias * bias + ss / m).sqrt();
    MetricsSummary {
        bias,
        mean_se,
        sd,
        coverage: covered as f64 / m,
        rmse,
        reps,
        sd_defined,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    /// `mu1`, `nu0`, or `delta_cc` / `delta_rct` for contrasts.
    pub parameter: String,
    /// Assumption set, e.g. `A1,A2`.
    pub estimator: String,
    pub truth: f64,
    #[serde(flatten)]
    pub metrics: MetricsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTable {
    pub study: Study,
    pub misspec: char,
    pub n: usize,
    pub reps: usize,
    pub k: usize,
    pub master_seed: u64,
    pub failed_reps: usize,
    pub truth: TruthValues,
    pub rows: Vec<MetricsRow>,
    pub delta_rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn row(&self, request: &EstimandRequest) -> Option<&MetricsRow> {
        let param = parameter_name(request.estimand, request.arm);
        self.rows
            .iter()
            .find(|r| r.parameter == param && r.estimator == request.assumptions.label())
    }

    pub const CSV_HEADER: &'static str =
        "study,scenario,parameter,estimator,truth,bias,mean_se,sd,coverage,rmse,reps";

    /// Rows in panel order; six significant digits.
    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .chain(&self.delta_rows)
            .map(|r| {
                format!(
                    "{},{},{},\"{}\",{},{},{},{},{},{},{}",
                    self.study,
                    self.misspec,
                    r.parameter,
                    r.estimator,
                    sig6(r.truth),
                    sig6(r.metrics.bias),
                    sig6(r.metrics.mean_se),
                    sig6(r.metrics.sd),
                    sig6(r.metrics.coverage),
                    sig6(r.metrics.rmse),
                    r.metrics.reps
                )
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        tables_to_csv(std::slice::from_ref(self))
    }
}

pub fn tables_to_csv(tables: &[MetricsTable]) -> String {
    let mut out = String::from(MetricsTable::CSV_HEADER);
    out.push('\n');
    for t in tables {
        for line in t.csv_rows() {
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

fn parameter_name(e: Estimand, arm: u8) -> String {
    match e {
        Estimand::Mu => format!("mu{arm}"),
        Estimand::Nu => format!("nu{arm}"),
    }
}

/// Requests in table order: μ₁, μ₀, ν₁, ν₀.
fn table_requests() -> Vec<EstimandRequest> {
    let mut reqs = all_requests();
    reqs.sort_by_key(|r| (r.estimand, std::cmp::Reverse(r.arm), r.assumptions));
    reqs
}

#[derive(Debug, Clone, Copy)]
struct Draw {
    point: f64,
    se: f64,
    ci: (f64, f64),
}

/// Per-scenario draws of one replicate: requests, then contrasts.
type RepDraws = Vec<Vec<Draw>>;

pub fn run_monte_carlo(cfg: &ScenarioConfig) -> Result<MetricsTable, SimError> {
    Ok(run_monte_carlo_multi(cfg, &[cfg.misspec])?.remove(0))
}

/// Runs several scenarios of one study on shared replicates: each dataset
/// and its nuisance fits are reused, only the distortions differ.
pub fn run_monte_carlo_multi(
    cfg: &ScenarioConfig,
    labels: &[char],
) -> Result<Vec<MetricsTable>, SimError> {
    run_monte_carlo_with(
        cfg,
        labels,
        &TrueNuisanceSet::bari_like(),
        &CovariateGenerator::bari_like(),
    )
}

pub fn run_monte_carlo_with(
    cfg: &ScenarioConfig,
    labels: &[char],
    truths: &TrueNuisanceSet,
    gen: &CovariateGenerator,
) -> Result<Vec<MetricsTable>, SimError> {
    cfg.validate()?;
    if labels.is_empty() {
        return Err(SimError::InvalidConfig("no scenarios requested".into()));
    }
    let distortions = labels
        .iter()
        .map(|&l| Distortions::for_scenario(cfg.study, l))
        .collect::<Result<Vec<_>, _>>()?;
    let clip = ClipPolicy::new(cfg.epsilon).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let specs = cfg
        .specs
        .clone()
        .unwrap_or_else(|| NuisanceSpecs::default_for(&gen.schema));
    specs
        .validate(&gen.schema)
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let truth = truth_values(
        cfg.study,
        truths,
        gen,
        &cfg.generator,
        cfg.n_truth,
        cfg.truth_seed,
    )?;
    let fitter = CrossFitter::new(specs, clip);
    let requests = table_requests();
    let families: Vec<EstimatorFamily> = EstimatorFamily::ALL.to_vec();
    let req = requests
        .iter()
        .fold(Requirements::default(), |a, r| a.union(r.requirements()));

    let one_rep = |rep: usize| -> Result<RepDraws, SimError> {
        let seed = replicate_seed(cfg.master_seed, rep);
        let d = generate(cfg.study, cfg.n, truths, gen, &cfg.generator, seed)?;
        let plan = make_folds(cfg.n, cfg.k, mix(seed), cfg.fold_mode)?;
        let preds = fitter.predictions(&d, &plan, req)?;
        let mut out = Vec::with_capacity(distortions.len());
        for dist in &distortions {
            let mut p = preds.clone();
            if !dist.is_empty() {
                p.iter_mut().for_each(|fp| dist.apply(fp, clip));
            }
            let reports = requests
                .iter()
                .map(|&r| fitter.evaluate(&d, &plan, &p, r))
                .collect::<Result<Vec<_>, _>>()?;
            let mut draws: Vec<Draw> = reports
                .iter()
                .map(|r| Draw {
                    point: r.point,
                    se: r.se,
                    ci: r.ci95,
                })
                .collect();
            for fam in &families {
                let find = |arm: u8| {
                    reports
                        .iter()
                        .find(|r| r.request == fam.arm(arm))
                        .expect("all requests run")
                };
                let c = contrast(find(1), find(0), SeMode::IfDifference)?;
                draws.push(Draw {
                    point: c.delta,
                    se: c.se,
                    ci: c.ci95,
                });
            }
            out.push(draws);
        }
        Ok(out)
    };

    let mut results: Vec<Result<RepDraws, SimError>> = Vec::with_capacity(cfg.reps);
    for start in (0..cfg.reps).step_by(PROGRESS_BATCH) {
        let end = (start + PROGRESS_BATCH).min(cfg.reps);
        results.par_extend((start..end).into_par_iter().map(one_rep));
        log::info!(
            "study {} n={}: {end}/{} replicates",
            cfg.study,
            cfg.n,
            cfg.reps
        );
    }
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed as f64 > 0.01 * cfg.reps as f64 {
        let first = results
            .iter()
            .find_map(|r| r.as_ref().err())
            .map(|e| e.to_string())
            .unwrap_or_default();
        return Err(SimError::TooManyFailures {
            failed,
            reps: cfg.reps,
            first,
        });
    }
    if failed > 0 {
        log::warn!(
            "{failed} of {} replicates failed and were excluded",
            cfg.reps
        );
    }
    let ok: Vec<&RepDraws> = results.iter().filter_map(|r| r.as_ref().ok()).collect();

    let summarize = |s: usize, j: usize, truth: f64| -> MetricsSummary {
        let draws: Vec<Draw> = ok.iter().map(|rep| rep[s][j]).collect();
        let points: Vec<f64> = draws.iter().map(|d| d.point).collect();
        let ses: Vec<f64> = draws.iter().map(|d| d.se).collect();
        let cis: Vec<(f64, f64)> = draws.iter().map(|d| d.ci).collect();
        summarize_metrics(&points, &ses, &cis, truth)
    };

    let tables = labels
        .iter()
        .enumerate()
        .map(|(s, &label)| {
            let rows = requests
                .iter()
                .enumerate()
                .map(|(j, r)| {
                    let t = truth.of(r.estimand, r.arm);
                    MetricsRow {
                        parameter: parameter_name(r.estimand, r.arm),
                        estimator: r.assumptions.label().to_string(),
                        truth: t,
                        metrics: summarize(s, j, t),
                    }
                })
                .collect();
            let delta_rows = families
                .iter()
                .enumerate()
                .map(|(j, fam)| {
                    let t = truth.of(fam.estimand, 1) - truth.of(fam.estimand, 0);
                    MetricsRow {
                        parameter: match fam.estimand {
                            Estimand::Mu => "delta_cc".into(),
                            Estimand::Nu => "delta_rct".into(),
                        },
                        estimator: fam.assumptions.label().to_string(),
                        truth: t,
                        metrics: summarize(s, requests.len() + j, t),
                    }
                })
                .collect();
            MetricsTable {
                study: cfg.study,
                misspec: label,
                n: cfg.n,
                reps: cfg.reps,
                k: cfg.k,
                master_seed: cfg.master_seed,
                failed_reps: failed,
                truth,
                rows,
                delta_rows,
            }
        })
        .collect();
    Ok(tables)
}
