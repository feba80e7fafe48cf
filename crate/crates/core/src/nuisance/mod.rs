//! Nuisance functions: consent `λ₁(x)`, OBS treatment `π₁(0,x)` and the
//! outcome regressions `τₜ(r,x)`, `τₜ(x)`, fitted on training folds through
//! a pluggable [`Learner`].

mod model;
pub mod spline;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{cell_counts_of, CovariateSchema, Dataset, OutcomeKind};

pub use model::{
    expit, fit_additive, fit_logistic_additive, irls, logit, predict_prob, ClipPolicy, Design,
    DesignEncoder, Family, FittedProbModel, IrlsFit, IrlsOptions, ModelSpec, Term, TermKind,
    DEFAULT_RIDGE, DEFAULT_SMOOTH_DF,
};
pub use spline::{spline_basis, NaturalSplineBasis};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NuisanceError {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("covariate has {distinct} distinct values; a df={df} smooth needs at least {}", df + 1)]
    DegenerateCovariate { distinct: usize, df: usize },
    #[error("penalized normal equations are numerically singular")]
    SingularDesign,
    #[error("no (R={r}, T={t}) rows available to fit a required model")]
    EmptySubgroup { r: u8, t: u8 },
    #[error("no training rows")]
    NoRows,
    #[error("binomial target outside [0, 1]")]
    NonBinaryTarget,
}

/// Which nuisance function a learner is asked to fit. The rows handed to the
/// learner are already restricted to the relevant subgroup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceTarget {
    /// `λ₁(x) = P[R=1 | X=x]` on all rows.
    Consent,
    /// `π₁(0,x) = P[T=1 | R=0, X=x]` on OBS rows.
    ObsTreatment,
    /// `τₜ(r,x) = E[Y | R=r, T=t, X=x]`.
    OutcomeByStudy { t: u8, r: u8 },
    /// `τₜ(x) = E[Y | T=t, X=x]` pooled over studies.
    OutcomePooled { t: u8 },
}

impl NuisanceTarget {
    pub fn is_outcome(self) -> bool {
        matches!(
            self,
            Self::OutcomeByStudy { .. } | Self::OutcomePooled { .. }
        )
    }

    /// Response value of `row` for this target.
    pub fn response(self, d: &Dataset, row: usize) -> f64 {
        let o = d.row(row);
        match self {
            Self::Consent => f64::from(o.r),
            Self::ObsTreatment => f64::from(o.t),
            _ => o.y,
        }
    }
}

impl fmt::Display for NuisanceTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Consent => write!(f, "lambda1(x)"),
            Self::ObsTreatment => write!(f, "pi1(0,x)"),
            Self::OutcomeByStudy { t, r } => write!(f, "tau{t}({r},x)"),
            Self::OutcomePooled { t } => write!(f, "tau{t}(x)"),
        }
    }
}

/// A fitted function of the covariates.
pub trait ProbFunction: Send + Sync + fmt::Debug {
    fn predict(&self, x: &[f64]) -> f64;

    /// Prediction before any clipping the function applies itself.
    fn predict_unclipped(&self, x: &[f64]) -> f64 {
        self.predict(x)
    }

    fn converged(&self) -> bool {
        true
    }

    fn separation(&self) -> bool {
        false
    }
}

/// Fits one nuisance function on a set of training rows.
pub trait Learner: Send + Sync {
    fn fit(
        &self,
        data: &Dataset,
        rows: &[usize],
        target: NuisanceTarget,
        spec: &ModelSpec,
        clip: ClipPolicy,
    ) -> Result<Arc<dyn ProbFunction>, NuisanceError>;
}

/// Built-in additive model wrapped with its clipping rule.
#[derive(Debug, Clone)]
pub struct AdditiveFit {
    pub model: FittedProbModel,
    clip: Option<ClipPolicy>,
}

impl ProbFunction for AdditiveFit {
    fn predict(&self, x: &[f64]) -> f64 {
        match self.clip {
            Some(c) => predict_prob(&self.model, x, c),
            None => self.model.predict_mean(x),
        }
    }

    fn predict_unclipped(&self, x: &[f64]) -> f64 {
        self.model.predict_mean(x)
    }

    fn converged(&self) -> bool {
        self.model.converged
    }

    fn separation(&self) -> bool {
        self.model.separation
    }
}

/// Additive logistic learner (Gaussian for continuous outcomes).
///
/// Outcome regressions fitted on a constant response predict that constant
/// exactly, so estimators reproduce a constant outcome without clipping error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdditiveLearner {
    pub ridge: f64,
}

impl Default for AdditiveLearner {
    fn default() -> Self {
        Self {
            ridge: DEFAULT_RIDGE,
        }
    }
}

impl Learner for AdditiveLearner {
    fn fit(
        &self,
        data: &Dataset,
        rows: &[usize],
        target: NuisanceTarget,
        spec: &ModelSpec,
        clip: ClipPolicy,
    ) -> Result<Arc<dyn ProbFunction>, NuisanceError> {
        let xs: Vec<&[f64]> = rows.iter().map(|&i| data.row(i).x.as_slice()).collect();
        let y: Vec<f64> = rows.iter().map(|&i| target.response(data, i)).collect();
        let family = if target.is_outcome() && data.outcome_kind() == OutcomeKind::Continuous {
            Family::Gaussian
        } else {
            Family::Binomial
        };
        let model = fit_additive(data.schema(), &xs, &y, spec, family, self.ridge)?;
        let exempt =
            family == Family::Gaussian || (target.is_outcome() && model.constant_target.is_some());
        Ok(Arc::new(AdditiveFit {
            model,
            clip: if exempt { None } else { Some(clip) },
        }))
    }
}

/// Learner that ignores the data and returns fixed values per target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantLearner {
    pub lambda1: f64,
    pub pi1_obs: f64,
    /// Indexed `[t][r]`.
    pub tau: [[f64; 2]; 2],
    pub tau_pooled: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantFunction(pub f64);

impl ProbFunction for ConstantFunction {
    fn predict(&self, _x: &[f64]) -> f64 {
        self.0
    }
}

impl Learner for ConstantLearner {
    fn fit(
        &self,
        _data: &Dataset,
        _rows: &[usize],
        target: NuisanceTarget,
        _spec: &ModelSpec,
        _clip: ClipPolicy,
    ) -> Result<Arc<dyn ProbFunction>, NuisanceError> {
        let v = match target {
            NuisanceTarget::Consent => self.lambda1,
            NuisanceTarget::ObsTreatment => self.pi1_obs,
            NuisanceTarget::OutcomeByStudy { t, r } => self.tau[t as usize][r as usize],
            NuisanceTarget::OutcomePooled { t } => self.tau_pooled[t as usize],
        };
        Ok(Arc::new(ConstantFunction(v)))
    }
}

/// Model specifications for each nuisance function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSpecs {
    pub lambda1: ModelSpec,
    pub pi1_obs: ModelSpec,
    /// Used for all four `τₜ(r,·)`.
    pub tau_by_study: ModelSpec,
    /// Used for both `τₜ(·)`.
    pub tau_pooled: ModelSpec,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

impl NuisanceSpecs {
    pub fn uniform(spec: ModelSpec) -> Self {
        Self {
            lambda1: spec.clone(),
            pi1_obs: spec.clone(),
            tau_by_study: spec.clone(),
            tau_pooled: spec,
            ridge: DEFAULT_RIDGE,
        }
    }

    /// Smooth continuous terms and dummy-coded categoricals everywhere.
    pub fn default_for(schema: &CovariateSchema) -> Self {
        Self::uniform(ModelSpec::default_for(schema))
    }

    pub fn validate(&self, schema: &CovariateSchema) -> Result<(), NuisanceError> {
        self.lambda1.validate(schema)?;
        self.pi1_obs.validate(schema)?;
        self.tau_by_study.validate(schema)?;
        self.tau_pooled.validate(schema)?;
        if self.ridge.is_nan() || self.ridge < 0.0 {
            return Err(NuisanceError::InvalidSpec(format!(
                "ridge must be >= 0, got {}",
                self.ridge
            )));
        }
        Ok(())
    }
}

/// Which nuisance functions a set of estimators needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Requirements {
    pub lambda1: bool,
    pub pi1_obs: bool,
    /// Indexed `[t][r]`.
    pub tau_by_study: [[bool; 2]; 2],
    pub tau_pooled: [bool; 2],
}

impl Requirements {
    pub fn all() -> Self {
        Self {
            lambda1: true,
            pi1_obs: true,
            tau_by_study: [[true; 2]; 2],
            tau_pooled: [true; 2],
        }
    }

    pub fn union(self, o: Self) -> Self {
        let mut s = self;
        s.lambda1 |= o.lambda1;
        s.pi1_obs |= o.pi1_obs;
        for t in 0..2 {
            s.tau_pooled[t] |= o.tau_pooled[t];
            for r in 0..2 {
                s.tau_by_study[t][r] |= o.tau_by_study[t][r];
            }
        }
        s
    }
}

/// Nuisance functions fitted on one training set.
#[derive(Debug, Clone)]
pub struct NuisanceBundle {
    pub lambda1_x: Option<Arc<dyn ProbFunction>>,
    pub pi1_obs_x: Option<Arc<dyn ProbFunction>>,
    /// Indexed `[t][r]`.
    pub tau_t_r_x: [[Option<Arc<dyn ProbFunction>>; 2]; 2],
    pub tau_t_x: [Option<Arc<dyn ProbFunction>>; 2],
    /// Training-set mean of `R`.
    pub lambda1_scalar: f64,
    pub pi_t1: f64,
    pub clip: ClipPolicy,
}

fn need<'a>(f: &'a Option<Arc<dyn ProbFunction>>, what: &str) -> &'a dyn ProbFunction {
    f.as_deref()
        .unwrap_or_else(|| panic!("nuisance bundle has no {what} model"))
}

impl NuisanceBundle {
    /// Known trial randomization probability of arm `t`.
    pub fn pi_trial(&self, t: u8) -> f64 {
        if t == 1 {
            self.pi_t1
        } else {
            1.0 - self.pi_t1
        }
    }

    pub fn lambda1(&self, x: &[f64]) -> f64 {
        self.clip.apply(need(&self.lambda1_x, "consent").predict(x))
    }

    /// `π̂ₜ(0,x)`, with `π̂₀(0,x) = 1 − π̂₁(0,x)`.
    pub fn pi_obs(&self, t: u8, x: &[f64]) -> f64 {
        let p1 = self
            .clip
            .apply(need(&self.pi1_obs_x, "OBS treatment").predict(x));
        if t == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    pub fn tau(&self, t: u8, r: u8, x: &[f64]) -> f64 {
        need(
            &self.tau_t_r_x[t as usize][r as usize],
            "study-specific outcome",
        )
        .predict(x)
    }

    pub fn tau_pooled(&self, t: u8, x: &[f64]) -> f64 {
        need(&self.tau_t_x[t as usize], "pooled outcome").predict(x)
    }

    /// All fitted models converged.
    pub fn converged(&self) -> bool {
        self.models().all(|m| m.converged())
    }

    pub fn separation(&self) -> bool {
        self.models().any(|m| m.separation())
    }

    fn models(&self) -> impl Iterator<Item = &dyn ProbFunction> {
        let studies = self.tau_t_r_x.iter().flatten();
        [&self.lambda1_x, &self.pi1_obs_x]
            .into_iter()
            .chain(studies)
            .chain(self.tau_t_x.iter())
            .filter_map(|m| m.as_deref())
    }
}

/// `λ̂₁(x)·π*ₜ₁ + (1−λ̂₁(x))·π̂ₜ(0,x)`, clipped.
pub fn compose_pi_t_x(b: &NuisanceBundle, t: u8, x: &[f64], clip: ClipPolicy) -> f64 {
    clip.apply(compose_pi(b.lambda1(x), b.pi_trial(t), b.pi_obs(t, x)))
}

/// Unclipped composition of the trial and OBS treatment probabilities.
#[inline]
pub fn compose_pi(lambda1: f64, pi_trial: f64, pi_obs: f64) -> f64 {
    lambda1 * pi_trial + (1.0 - lambda1) * pi_obs
}

/// Fits the required nuisance functions on `train` rows.
pub fn fit_bundle_with(
    d: &Dataset,
    train: &[usize],
    specs: &NuisanceSpecs,
    clip: ClipPolicy,
    learner: &dyn Learner,
    req: Requirements,
) -> Result<NuisanceBundle, NuisanceError> {
    if train.is_empty() {
        return Err(NuisanceError::NoRows);
    }
    let counts = cell_counts_of(d, train.iter().copied());
    let subset = |pred: &dyn Fn(u8, u8) -> bool| -> Vec<usize> {
        train
            .iter()
            .copied()
            .filter(|&i| pred(d.row(i).r, d.row(i).t))
            .collect()
    };

    let lambda1_x = if req.lambda1 {
        Some(learner.fit(d, train, NuisanceTarget::Consent, &specs.lambda1, clip)?)
    } else {
        None
    };
    let pi1_obs_x = if req.pi1_obs {
        let rows = subset(&|r, _| r == 0);
        if rows.is_empty() {
            return Err(NuisanceError::EmptySubgroup { r: 0, t: 1 });
        }
        Some(learner.fit(d, &rows, NuisanceTarget::ObsTreatment, &specs.pi1_obs, clip)?)
    } else {
        None
    };
    let mut tau_t_r_x: [[Option<Arc<dyn ProbFunction>>; 2]; 2] = Default::default();
    for t in 0..2u8 {
        for r in 0..2u8 {
            if !req.tau_by_study[t as usize][r as usize] {
                continue;
            }
            if counts.get(r, t) == 0 {
                return Err(NuisanceError::EmptySubgroup { r, t });
            }
            let rows = subset(&|rr, tt| rr == r && tt == t);
            let target = NuisanceTarget::OutcomeByStudy { t, r };
            tau_t_r_x[t as usize][r as usize] =
                Some(learner.fit(d, &rows, target, &specs.tau_by_study, clip)?);
        }
    }
    let mut tau_t_x: [Option<Arc<dyn ProbFunction>>; 2] = Default::default();
    for t in 0..2u8 {
        if !req.tau_pooled[t as usize] {
            continue;
        }
        let rows = subset(&|_, tt| tt == t);
        if rows.is_empty() {
            return Err(NuisanceError::EmptySubgroup { r: 1, t });
        }
        let target = NuisanceTarget::OutcomePooled { t };
        tau_t_x[t as usize] = Some(learner.fit(d, &rows, target, &specs.tau_pooled, clip)?);
    }
    let n_rct = counts.get(1, 0) + counts.get(1, 1);
    Ok(NuisanceBundle {
        lambda1_x,
        pi1_obs_x,
        tau_t_r_x,
        tau_t_x,
        lambda1_scalar: n_rct as f64 / train.len() as f64,
        pi_t1: d.pi_t1(),
        clip,
    })
}

/// Fits every nuisance function with the built-in additive learner.
pub fn fit_bundle(
    d: &Dataset,
    train: &[usize],
    specs: &NuisanceSpecs,
    clip: ClipPolicy,
) -> Result<NuisanceBundle, NuisanceError> {
    let learner = AdditiveLearner { ridge: specs.ridge };
    fit_bundle_with(d, train, specs, clip, &learner, Requirements::all())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CovariateEntry, Observation};

    fn schema() -> CovariateSchema {
        CovariateSchema::new(vec![CovariateEntry::continuous("z")]).unwrap()
    }

    fn obs(r: u8, t: u8, y: f64, z: f64) -> Observation {
        Observation {
            x: vec![z],
            r,
            t,
            y,
        }
    }

    fn constant_bundle(lambda1: f64, pi1_obs: f64, pi_t1: f64) -> NuisanceBundle {
        NuisanceBundle {
            lambda1_x: Some(Arc::new(ConstantFunction(lambda1))),
            pi1_obs_x: Some(Arc::new(ConstantFunction(pi1_obs))),
            tau_t_r_x: Default::default(),
            tau_t_x: Default::default(),
            lambda1_scalar: 0.5,
            pi_t1,
            clip: ClipPolicy::default(),
        }
    }

    #[test]
    fn composition_examples() {
        let clip = ClipPolicy::default();
        let b = constant_bundle(0.5, 0.654, 0.5);
        assert!((compose_pi_t_x(&b, 1, &[0.0], clip) - 0.577).abs() < 1e-12);
        let b = constant_bundle(0.0, 0.3, 0.5);
        // λ̂ is clipped to ε before composing.
        assert!((compose_pi(0.0, 0.5, b.pi_obs(0, &[0.0])) - 0.7).abs() < 1e-12);
        assert_eq!(compose_pi(1.0, 0.37, 0.9), 0.37);
    }

    #[test]
    fn composition_sums_to_one() {
        for &(l, p) in &[(0.1, 0.2), (0.5, 0.9), (0.77, 0.33)] {
            let b = constant_bundle(l, p, 0.6);
            let x = [0.0];
            let s = compose_pi(b.lambda1(&x), 0.6, b.pi_obs(1, &x))
                + compose_pi(b.lambda1(&x), 0.4, b.pi_obs(0, &x));
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_subgroup_is_named() {
        let rows = vec![
            obs(1, 1, 1.0, 0.1),
            obs(1, 0, 0.0, 0.2),
            obs(0, 0, 1.0, 0.3),
            obs(0, 0, 0.0, 0.4),
        ];
        let d = Dataset::new(schema(), rows, OutcomeKind::Binary, 0.5).unwrap();
        let specs = NuisanceSpecs::uniform(ModelSpec::intercept_only());
        let err = fit_bundle(&d, &[0, 1, 2, 3], &specs, ClipPolicy::default()).unwrap_err();
        assert_eq!(err, NuisanceError::EmptySubgroup { r: 0, t: 1 });
    }

    #[test]
    fn constant_outcome_predicts_constant() {
        let rows: Vec<Observation> = (0..40)
            .map(|i| obs((i % 2) as u8, ((i / 2) % 2) as u8, 1.0, i as f64 * 0.1))
            .collect();
        let d = Dataset::new(schema(), rows, OutcomeKind::Binary, 0.5).unwrap();
        let specs = NuisanceSpecs::default_for(d.schema());
        let train: Vec<usize> = (0..40).collect();
        let b = fit_bundle(&d, &train, &specs, ClipPolicy::default()).unwrap();
        for t in 0..2 {
            assert_eq!(b.tau_pooled(t, &[1.3]), 1.0);
            for r in 0..2 {
                assert_eq!(b.tau(t, r, &[2.0]), 1.0);
            }
        }
        assert!((b.lambda1_scalar - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ridge_free_intercept_matches_subgroup_mean() {
        let ys = [1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        let rows: Vec<Observation> = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| obs(1, 1, y, i as f64))
            .collect();
        let d = Dataset::new(schema(), rows, OutcomeKind::Binary, 0.5).unwrap();
        let learner = AdditiveLearner { ridge: 0.0 };
        let rows: Vec<usize> = (0..ys.len()).collect();
        let target = NuisanceTarget::OutcomeByStudy { t: 1, r: 1 };
        let f = learner
            .fit(
                &d,
                &rows,
                target,
                &ModelSpec::intercept_only(),
                ClipPolicy::default(),
            )
            .unwrap();
        assert!((f.predict(&[0.0]) - 5.0 / 7.0).abs() < 1e-8);
    }
}
