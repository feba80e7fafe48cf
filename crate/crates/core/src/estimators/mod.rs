//! Cross-fitted one-step estimators of the cohort arm means `μₜ` and the
//! trial arm means `νₜ`, with influence-function standard errors.
//!
//! Nuisances are fitted once per fold into [`FoldPredictions`]; every
//! estimator is then a pure function of those predictions. This lets several
//! estimators (and simulation distortions) share one set of fits.

mod formulas;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{cell_counts_of, make_folds, DataError, Dataset, FoldMode, FoldPlan};
use crate::nuisance::{
    fit_bundle_with, AdditiveLearner, ClipPolicy, Learner, NuisanceError, NuisanceSpecs,
    Requirements,
};

pub use formulas::{evaluate_fold, FoldTerms};

/// Normal quantile used for Wald intervals.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("invalid estimand request: {0}")]
    InvalidRequest(String),
    #[error("fold {fold}: {source}")]
    Nuisance { fold: usize, source: NuisanceError },
    #[error("fold {0} has no rows")]
    EmptyFold(usize),
    #[error("fold {fold} has no (R={r}, T={t}) rows; use fewer folds")]
    DegenerateFold { fold: usize, r: u8, t: u8 },
    #[error("reports are not from the same run: {0}")]
    MismatchedRuns(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Estimand {
    /// Arm mean over the whole cohort.
    Mu,
    /// Arm mean over the trial population.
    Nu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum AssumptionSet {
    A1,
    A1A2,
    A1A3,
    A1A2A3,
}

impl AssumptionSet {
    pub fn label(self) -> &'static str {
        match self {
            Self::A1 => "A1",
            Self::A1A2 => "A1,A2",
            Self::A1A3 => "A1,A3",
            Self::A1A2A3 => "A1,A2,A3",
        }
    }
}

/// An estimator family: estimand plus assumption set, both arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub struct EstimatorFamily {
    pub estimand: Estimand,
    pub assumptions: AssumptionSet,
}

impl EstimatorFamily {
    /// The five valid families in presentation order.
    pub const ALL: [EstimatorFamily; 5] = [
        EstimatorFamily {
            estimand: Estimand::Mu,
            assumptions: AssumptionSet::A1A2,
        },
        EstimatorFamily {
            estimand: Estimand::Mu,
            assumptions: AssumptionSet::A1A3,
        },
        EstimatorFamily {
            estimand: Estimand::Mu,
            assumptions: AssumptionSet::A1A2A3,
        },
        EstimatorFamily {
            estimand: Estimand::Nu,
            assumptions: AssumptionSet::A1,
        },
        EstimatorFamily {
            estimand: Estimand::Nu,
            assumptions: AssumptionSet::A1A2A3,
        },
    ];

    pub fn new(estimand: Estimand, assumptions: AssumptionSet) -> Result<Self, EstimateError> {
        let ok = match estimand {
            Estimand::Mu => assumptions != AssumptionSet::A1,
            Estimand::Nu => matches!(assumptions, AssumptionSet::A1 | AssumptionSet::A1A2A3),
        };
        if ok {
            Ok(Self {
                estimand,
                assumptions,
            })
        } else {
            Err(EstimateError::InvalidRequest(format!(
                "{} is not identified under ({})",
                estimand_name(estimand),
                assumptions.label()
            )))
        }
    }

    pub fn arm(self, arm: u8) -> EstimandRequest {
        EstimandRequest {
            estimand: self.estimand,
            arm,
            assumptions: self.assumptions,
        }
    }

    /// Short identifier such as `mu:a1a2`.
    pub fn key(self) -> String {
        format!(
            "{}:{}",
            estimand_name(self.estimand),
            format!("{:?}", self.assumptions).to_lowercase()
        )
    }
}

fn estimand_name(e: Estimand) -> &'static str {
    match e {
        Estimand::Mu => "mu",
        Estimand::Nu => "nu",
    }
}

impl fmt::Display for EstimatorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for EstimatorFamily {
    type Err = EstimateError;

    /// Parses `mu:a1a2`, `nu:a1`, `mu:a1,a2,a3` and similar.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || {
            EstimateError::InvalidRequest(format!(
                "cannot parse estimand `{s}` (expected e.g. mu:a1a2)"
            ))
        };
        let (e, a) = s.split_once(':').ok_or_else(bad)?;
        let estimand = match e.trim().to_ascii_lowercase().as_str() {
            "mu" => Estimand::Mu,
            "nu" => Estimand::Nu,
            _ => return Err(bad()),
        };
        let norm: String = a
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let assumptions = match norm.as_str() {
            "a1" => AssumptionSet::A1,
            "a1a2" => AssumptionSet::A1A2,
            "a1a3" => AssumptionSet::A1A3,
            "a1a2a3" => AssumptionSet::A1A2A3,
            _ => return Err(bad()),
        };
        EstimatorFamily::new(estimand, assumptions)
    }
}

/// One estimand for one arm under one assumption set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EstimandRequest {
    pub estimand: Estimand,
    pub arm: u8,
    pub assumptions: AssumptionSet,
}

impl EstimandRequest {
    pub fn new(
        estimand: Estimand,
        arm: u8,
        assumptions: AssumptionSet,
    ) -> Result<Self, EstimateError> {
        if arm > 1 {
            return Err(EstimateError::InvalidRequest(format!(
                "arm must be 0 or 1, got {arm}"
            )));
        }
        Ok(EstimatorFamily::new(estimand, assumptions)?.arm(arm))
    }

    pub fn mu(arm: u8, assumptions: AssumptionSet) -> Self {
        Self {
            estimand: Estimand::Mu,
            arm,
            assumptions,
        }
    }

    pub fn nu(arm: u8, assumptions: AssumptionSet) -> Self {
        Self {
            estimand: Estimand::Nu,
            arm,
            assumptions,
        }
    }

    pub fn family(&self) -> EstimatorFamily {
        EstimatorFamily {
            estimand: self.estimand,
            assumptions: self.assumptions,
        }
    }

    pub fn validate(&self) -> Result<(), EstimateError> {
        Self::new(self.estimand, self.arm, self.assumptions).map(|_| ())
    }

    /// Nuisance functions this estimator evaluates.
    pub fn requirements(&self) -> Requirements {
        let t = self.arm as usize;
        let mut req = Requirements::default();
        match (self.estimand, self.assumptions) {
            (Estimand::Mu, AssumptionSet::A1A2) => {
                req.pi1_obs = true;
                req.tau_by_study[t] = [true, true];
            }
            (Estimand::Mu, AssumptionSet::A1A3) => {
                req.lambda1 = true;
                req.tau_by_study[t][1] = true;
            }
            (Estimand::Nu, AssumptionSet::A1) => {
                req.tau_by_study[t][1] = true;
            }
            _ => {
                req.lambda1 = true;
                req.pi1_obs = true;
                req.tau_pooled[t] = true;
            }
        }
        req
    }

    /// `(r, t)` cells every evaluation fold must contain.
    pub fn required_cells(&self) -> Vec<(u8, u8)> {
        let t = self.arm;
        match (self.estimand, self.assumptions) {
            (Estimand::Mu, AssumptionSet::A1A2) => vec![(0, t), (1, t)],
            (Estimand::Mu, AssumptionSet::A1A3) | (Estimand::Nu, AssumptionSet::A1) => vec![(1, t)],
            _ => Vec::new(),
        }
    }

    /// Human-readable label, e.g. `mu1 (A1,A2)`.
    pub fn label(&self) -> String {
        format!(
            "{}{} ({})",
            estimand_name(self.estimand),
            self.arm,
            self.assumptions.label()
        )
    }
}

/// Per-fold summary of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldContribution {
    pub fold: usize,
    pub n_k: usize,
    pub fold_point: f64,
    /// Plug-in part of the one-step estimate.
    pub plug_in: f64,
    pub fold_sq_sum: f64,
    pub nuisance_converged: bool,
    pub separation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub request: EstimandRequest,
    pub point: f64,
    pub se: f64,
    pub ci95: (f64, f64),
    pub per_fold: Vec<FoldContribution>,
    /// Estimated influence value of each row, in dataset order.
    #[serde(skip_serializing)]
    pub if_values: Vec<f64>,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
}

impl EstimateReport {
    pub fn nuisance_converged(&self) -> bool {
        self.per_fold.iter().all(|f| f.nuisance_converged)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeMode {
    /// Variance of the per-row influence difference.
    #[default]
    IfDifference,
    /// Arms treated as independent: `√(se₁² + se₀²)`.
    IndependentArms,
}

impl FromStr for SeMode {
    type Err = EstimateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "if_difference" | "if" => Ok(Self::IfDifference),
            "independent_arms" | "independent" => Ok(Self::IndependentArms),
            _ => Err(EstimateError::InvalidRequest(format!(
                "unknown se mode `{s}`"
            ))),
        }
    }
}

/// Arm difference `arm1 − arm0` for one estimator family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastReport {
    pub family: EstimatorFamily,
    #[serde(skip_serializing)]
    pub arm1: EstimateReport,
    #[serde(skip_serializing)]
    pub arm0: EstimateReport,
    pub delta: f64,
    pub se: f64,
    pub ci95: (f64, f64),
    pub se_mode: SeMode,
}

pub fn contrast(
    r1: &EstimateReport,
    r0: &EstimateReport,
    mode: SeMode,
) -> Result<ContrastReport, EstimateError> {
    let mismatch = |what: &str| Err(EstimateError::MismatchedRuns(what.to_string()));
    if r1.n != r0.n || r1.if_values.len() != r0.if_values.len() {
        return mismatch("sample sizes differ");
    }
    if r1.k != r0.k || r1.seed != r0.seed {
        return mismatch("fold plans differ");
    }
    if r1
        .per_fold
        .iter()
        .map(|f| f.n_k)
        .ne(r0.per_fold.iter().map(|f| f.n_k))
    {
        return mismatch("fold sizes differ");
    }
    if r1.request.family() != r0.request.family() {
        return mismatch("estimator families differ");
    }
    let delta = r1.point - r0.point;
    let se = match mode {
        SeMode::IfDifference => {
            let n = r1.n as f64;
            let mut sq: Vec<f64> = r1
                .if_values
                .iter()
                .zip(&r0.if_values)
                .map(|(a, b)| (a - b).powi(2))
                .collect();
            // Order-independent sum, so row permutations give identical bits.
            sq.sort_by(f64::total_cmp);
            let ss: f64 = sq.iter().sum();
            ss.sqrt() / n
        }
        SeMode::IndependentArms => (r1.se * r1.se + r0.se * r0.se).sqrt(),
    };
    Ok(ContrastReport {
        family: r1.request.family(),
        arm1: r1.clone(),
        arm0: r0.clone(),
        delta,
        se,
        ci95: (delta - Z95 * se, delta + Z95 * se),
        se_mode: mode,
    })
}

/// Nuisance predictions of one cross-fitting fold, for every dataset row.
///
/// Vectors are indexed by row and left empty when the model was not needed.
/// `lambda1` holds the unclipped fitted probability. It is clipped wherever
/// it acts as a weight, and `lambda1` and `pi1_obs` are both clipped again at
/// evaluation time, so callers may overwrite them with arbitrary values in
/// `(0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPredictions {
    pub fold: usize,
    pub eval_rows: Vec<usize>,
    pub train_rows: Vec<usize>,
    pub lambda1_scalar: f64,
    pub lambda1: Vec<f64>,
    pub pi1_obs: Vec<f64>,
    /// Indexed `[t][r]`.
    pub tau: [[Vec<f64>; 2]; 2],
    pub tau_pooled: [Vec<f64>; 2],
    pub converged: bool,
    pub separation: bool,
}

/// Nuisance configuration shared by all estimators of a run.
#[derive(Clone)]
pub struct CrossFitter {
    pub specs: NuisanceSpecs,
    pub clip: ClipPolicy,
    pub learner: Arc<dyn Learner>,
    pub se_mode: SeMode,
}

impl fmt::Debug for CrossFitter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CrossFitter")
            .field("specs", &self.specs)
            .field("clip", &self.clip)
            .field("se_mode", &self.se_mode)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossFitOutput {
    pub reports: Vec<EstimateReport>,
    pub contrasts: Vec<ContrastReport>,
}

impl CrossFitter {
    /// Built-in additive learner with the ridge from `specs`.
    pub fn new(specs: NuisanceSpecs, clip: ClipPolicy) -> Self {
        let learner = Arc::new(AdditiveLearner { ridge: specs.ridge });
        Self {
            specs,
            clip,
            learner,
            se_mode: SeMode::default(),
        }
    }

    pub fn with_learner(mut self, learner: Arc<dyn Learner>) -> Self {
        self.learner = learner;
        self
    }

    pub fn with_se_mode(mut self, mode: SeMode) -> Self {
        self.se_mode = mode;
        self
    }

    /// Fits the required nuisances on each fold's complement (on all rows
    /// when `k = 1`) and predicts them on every row. Folds run in parallel;
    /// results are returned in fold order.
    pub fn predictions(
        &self,
        d: &Dataset,
        plan: &FoldPlan,
        req: Requirements,
    ) -> Result<Vec<FoldPredictions>, EstimateError> {
        if plan.n() != d.len() {
            return Err(EstimateError::MismatchedRuns(format!(
                "fold plan covers {} rows, dataset has {}",
                plan.n(),
                d.len()
            )));
        }
        (1..=plan.k())
            .into_par_iter()
            .map(|fold| self.fold_predictions(d, plan, fold, req))
            .collect()
    }

    fn fold_predictions(
        &self,
        d: &Dataset,
        plan: &FoldPlan,
        fold: usize,
        req: Requirements,
    ) -> Result<FoldPredictions, EstimateError> {
        let mut eval_rows = plan.members(fold);
        if eval_rows.is_empty() {
            return Err(EstimateError::EmptyFold(fold));
        }
        d.sort_canonical(&mut eval_rows);
        let train_rows = if plan.k() == 1 {
            eval_rows.clone()
        } else {
            let mut rows = plan.complement(fold);
            d.sort_canonical(&mut rows);
            rows
        };
        let bundle = fit_bundle_with(
            d,
            &train_rows,
            &self.specs,
            self.clip,
            self.learner.as_ref(),
            req,
        )
        .map_err(|source| EstimateError::Nuisance { fold, source })?;
        let n = d.len();
        let predict_all = |f: &Option<Arc<dyn crate::nuisance::ProbFunction>>| -> Vec<f64> {
            match f {
                Some(m) => (0..n).map(|i| m.predict(&d.row(i).x)).collect(),
                None => Vec::new(),
            }
        };
        let lambda1 = match &bundle.lambda1_x {
            Some(m) => (0..n).map(|i| m.predict_unclipped(&d.row(i).x)).collect(),
            None => Vec::new(),
        };
        let tau = [
            [
                predict_all(&bundle.tau_t_r_x[0][0]),
                predict_all(&bundle.tau_t_r_x[0][1]),
            ],
            [
                predict_all(&bundle.tau_t_r_x[1][0]),
                predict_all(&bundle.tau_t_r_x[1][1]),
            ],
        ];
        Ok(FoldPredictions {
            fold,
            lambda1_scalar: bundle.lambda1_scalar,
            lambda1,
            pi1_obs: predict_all(&bundle.pi1_obs_x),
            tau,
            tau_pooled: [
                predict_all(&bundle.tau_t_x[0]),
                predict_all(&bundle.tau_t_x[1]),
            ],
            converged: bundle.converged(),
            separation: bundle.separation(),
            eval_rows,
            train_rows,
        })
    }

    /// Evaluates one estimator on precomputed fold predictions.
    pub fn evaluate(
        &self,
        d: &Dataset,
        plan: &FoldPlan,
        preds: &[FoldPredictions],
        request: EstimandRequest,
    ) -> Result<EstimateReport, EstimateError> {
        evaluate(d, plan, preds, request, self.clip)
    }

    pub fn estimate(
        &self,
        d: &Dataset,
        plan: &FoldPlan,
        request: EstimandRequest,
    ) -> Result<EstimateReport, EstimateError> {
        request.validate()?;
        let preds = self.predictions(d, plan, request.requirements())?;
        self.evaluate(d, plan, &preds, request)
    }

    /// Runs all requests on one shared fold plan and one set of fits, and
    /// contrasts every family requested for both arms.
    pub fn run(
        &self,
        d: &Dataset,
        plan: &FoldPlan,
        requests: &[EstimandRequest],
    ) -> Result<CrossFitOutput, EstimateError> {
        if requests.is_empty() {
            return Err(EstimateError::InvalidRequest(
                "no estimands requested".into(),
            ));
        }
        let mut req = Requirements::default();
        for r in requests {
            r.validate()?;
            req = req.union(r.requirements());
        }
        let preds = self.predictions(d, plan, req)?;
        let reports = requests
            .iter()
            .map(|&r| self.evaluate(d, plan, &preds, r))
            .collect::<Result<Vec<_>, _>>()?;
        let mut contrasts = Vec::new();
        let mut seen = Vec::new();
        for r1 in reports.iter().filter(|r| r.request.arm == 1) {
            let fam = r1.request.family();
            if seen.contains(&fam) {
                continue;
            }
            if let Some(r0) = reports
                .iter()
                .find(|r| r.request.arm == 0 && r.request.family() == fam)
            {
                contrasts.push(contrast(r1, r0, self.se_mode)?);
                seen.push(fam);
            }
        }
        Ok(CrossFitOutput { reports, contrasts })
    }
}

/// Assembles an [`EstimateReport`] from per-fold evaluations.
pub fn evaluate(
    d: &Dataset,
    plan: &FoldPlan,
    preds: &[FoldPredictions],
    request: EstimandRequest,
    clip: ClipPolicy,
) -> Result<EstimateReport, EstimateError> {
    request.validate()?;
    let n = d.len();
    let mut if_values = vec![0.0; n];
    let mut per_fold = Vec::with_capacity(preds.len());
    let mut weighted = 0.0;
    let mut total_sq = 0.0;
    for fp in preds {
        let counts = cell_counts_of(d, fp.eval_rows.iter().copied());
        for (r, t) in request.required_cells() {
            if counts.get(r, t) == 0 {
                return Err(EstimateError::DegenerateFold {
                    fold: fp.fold,
                    r,
                    t,
                });
            }
        }
        let terms =
            evaluate_fold(d, fp, request, clip).map_err(|source| EstimateError::Nuisance {
                fold: fp.fold,
                source,
            })?;
        let mut sq = 0.0;
        for (&i, &v) in fp.eval_rows.iter().zip(&terms.if_values) {
            if_values[i] = v;
            sq += v * v;
        }
        let n_k = fp.eval_rows.len();
        weighted += n_k as f64 * terms.point;
        total_sq += sq;
        per_fold.push(FoldContribution {
            fold: fp.fold,
            n_k,
            fold_point: terms.point,
            plug_in: terms.plug_in,
            fold_sq_sum: sq,
            nuisance_converged: fp.converged,
            separation: fp.separation,
        });
    }
    let point = weighted / n as f64;
    let se = total_sq.sqrt() / n as f64;
    Ok(EstimateReport {
        request,
        point,
        se,
        ci95: (point - Z95 * se, point + Z95 * se),
        per_fold,
        if_values,
        n,
        k: plan.k(),
        seed: plan.seed(),
    })
}

/// Runs `requests` with the built-in learner on a fresh balanced fold plan.
pub fn run_crossfit(
    d: &Dataset,
    requests: &[EstimandRequest],
    k: usize,
    seed: u64,
    specs: &NuisanceSpecs,
    clip: ClipPolicy,
) -> Result<CrossFitOutput, EstimateError> {
    let plan = make_folds(d.len(), k, seed, FoldMode::Balanced)?;
    CrossFitter::new(specs.clone(), clip).run(d, &plan, requests)
}

fn estimate_one(
    d: &Dataset,
    plan: &FoldPlan,
    request: EstimandRequest,
    specs: &NuisanceSpecs,
    clip: ClipPolicy,
) -> Result<EstimateReport, EstimateError> {
    CrossFitter::new(specs.clone(), clip).estimate(d, plan, request)
}

/// `μₜ` under (A1,A2): consent ignorable for the outcome given X.
pub fn estimate_mu_a1a2(
    d: &Dataset,
    plan: &FoldPlan,
    t: u8,
    specs: &NuisanceSpecs,
    clip: ClipPolicy,
) -> Result<EstimateReport, EstimateError> {
    estimate_one(
        d,
        plan,
        EstimandRequest::new(Estimand::Mu, t, AssumptionSet::A1A2)?,
        specs,
        clip,
    )
}

/// `μₜ` under (A1,A3): transport from the trial.
pub fn estimate_mu_a1a3(
    d: &Dataset,
    plan: &FoldPlan,
    t: u8,
    specs: &NuisanceSpecs,
    clip: ClipPolicy,
) -> Result<EstimateReport, EstimateError> {
    estimate_one(
        d,
        plan,
        EstimandRequest::new(Estimand::Mu, t, AssumptionSet::A1A3)?,
        specs,
        clip,
    )
}

pub fn estimate_mu_a1a2a3(
    d: &Dataset,
    plan: &FoldPlan,
    t: u8,
    specs: &NuisanceSpecs,
    clip: ClipPolicy,
) -> Result<EstimateReport, EstimateError> {
    estimate_one(
        d,
        plan,
        EstimandRequest::new(Estimand::Mu, t, AssumptionSet::A1A2A3)?,
        specs,
        clip,
    )
}

/// `νₜ` using randomization alone.
pub fn estimate_nu_a1(
    d: &Dataset,
    plan: &FoldPlan,
    t: u8,
    specs: &NuisanceSpecs,
    clip: ClipPolicy,
) -> Result<EstimateReport, EstimateError> {
    estimate_one(
        d,
        plan,
        EstimandRequest::new(Estimand::Nu, t, AssumptionSet::A1)?,
        specs,
        clip,
    )
}

pub fn estimate_nu_a1a2a3(
    d: &Dataset,
    plan: &FoldPlan,
    t: u8,
    specs: &NuisanceSpecs,
    clip: ClipPolicy,
) -> Result<EstimateReport, EstimateError> {
    estimate_one(
        d,
        plan,
        EstimandRequest::new(Estimand::Nu, t, AssumptionSet::A1A2A3)?,
        specs,
        clip,
    )
}

/// Both arms of every valid family.
pub fn all_requests() -> Vec<EstimandRequest> {
    EstimatorFamily::ALL
        .iter()
        .flat_map(|f| [f.arm(1), f.arm(0)])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_parsing() {
        assert_eq!(
            "mu:a1a2".parse::<EstimatorFamily>().unwrap(),
            EstimatorFamily::ALL[0]
        );
        assert_eq!(
            "NU:A1,A2,A3".parse::<EstimatorFamily>().unwrap(),
            EstimatorFamily::ALL[4]
        );
        assert!("nu:a1a2".parse::<EstimatorFamily>().is_err());
        assert!("mu:a1".parse::<EstimatorFamily>().is_err());
        assert!("tau:a1".parse::<EstimatorFamily>().is_err());
        for f in EstimatorFamily::ALL {
            assert_eq!(f.key().parse::<EstimatorFamily>().unwrap(), f);
        }
    }

    #[test]
    fn requests_validate_arm() {
        assert!(EstimandRequest::new(Estimand::Mu, 2, AssumptionSet::A1A2).is_err());
        assert_eq!(all_requests().len(), 10);
    }

    #[test]
    fn se_mode_parsing() {
        assert_eq!(
            "independent-arms".parse::<SeMode>().unwrap(),
            SeMode::IndependentArms
        );
        assert_eq!(
            "if_difference".parse::<SeMode>().unwrap(),
            SeMode::IfDifference
        );
        assert!("x".parse::<SeMode>().is_err());
    }
}
