//! Joint test of the (A2)+(A3) restriction and positivity summaries.
//!
//! Under (A2) and (A3) the outcome is independent of study membership given
//! treatment and covariates. Within one arm, a logistic model for `Y` with a
//! linear `R` term should therefore show a null `R` coefficient. A rejection
//! cannot say which of the two assumptions failed.

use serde::Serialize;

use crate::dataset::{cell_counts, Dataset};
use crate::nuisance::{
    compose_pi, irls, ClipPolicy, Design, DesignEncoder, Family, IrlsOptions, ModelSpec,
    NuisanceBundle, NuisanceError, ProbFunction, DEFAULT_RIDGE,
};

/// Result of [`test_a2a3`] for one arm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceTestResult {
    pub arm: u8,
    /// Coefficient of `R` on the log-odds scale.
    pub log_or: f64,
    pub se: f64,
    pub or_point: f64,
    pub or_ci95: (f64, f64),
    pub converged: bool,
    pub separation: bool,
    pub n: usize,
}

impl IndependenceTestResult {
    /// Whether the 95% interval for the odds ratio excludes 1.
    pub fn rejects(&self) -> bool {
        self.or_ci95.0 > 1.0 || self.or_ci95.1 < 1.0
    }
}

/// Fits `logit P[Y=1 | R, T=arm, X] = f(X) + β·R` on the arm's rows and
/// returns `β` with its Wald interval.
pub fn test_a2a3(
    d: &Dataset,
    arm: u8,
    spec: &ModelSpec,
) -> Result<IndependenceTestResult, NuisanceError> {
    let counts = cell_counts(d);
    for r in [0, 1] {
        if counts.get(r, arm) == 0 {
            return Err(NuisanceError::EmptySubgroup { r, t: arm });
        }
    }
    let rows: Vec<usize> = (0..d.len()).filter(|&i| d.row(i).t == arm).collect();
    let xs: Vec<&[f64]> = rows.iter().map(|&i| d.row(i).x.as_slice()).collect();
    let y: Vec<f64> = rows.iter().map(|&i| d.row(i).y).collect();
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(NuisanceError::NonBinaryTarget);
    }
    let enc = DesignEncoder::fit(spec, d.schema(), &xs)?;
    let p = enc.width() + 1;
    let mut data = vec![0.0; rows.len() * p];
    for (j, &i) in rows.iter().enumerate() {
        let row = &mut data[j * p..(j + 1) * p];
        enc.encode_into(&d.row(i).x, &mut row[..p - 1]);
        row[p - 1] = f64::from(d.row(i).r);
    }
    let design = Design {
        rows: rows.len(),
        cols: p,
        data,
    };
    let mut penalize = vec![true; p];
    if enc.has_intercept() {
        penalize[0] = false;
    }
    let opts = IrlsOptions {
        ridge: DEFAULT_RIDGE,
        ..IrlsOptions::default()
    };
    let fit = irls(Family::Binomial, &design, &y, &penalize, &opts)?;
    let cov = fit
        .information
        .clone()
        .try_inverse()
        .ok_or(NuisanceError::SingularDesign)?;
    let var = cov[(p - 1, p - 1)];
    if !(var > 0.0 && var.is_finite()) {
        return Err(NuisanceError::SingularDesign);
    }
    let log_or = fit.coefficients[p - 1];
    let se = var.sqrt();
    Ok(IndependenceTestResult {
        arm,
        log_or,
        se,
        or_point: log_or.exp(),
        or_ci95: ((log_or - 1.96 * se).exp(), (log_or + 1.96 * se).exp()),
        converged: fit.converged,
        separation: fit.separation,
        n: rows.len(),
    })
}

/// Distribution of one predicted probability over the dataset rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub min: f64,
    pub max: f64,
    /// `(level, value)` pairs.
    pub quantiles: Vec<(f64, f64)>,
    /// Rows whose raw prediction fell outside `[ε, 1−ε]`.
    pub clipped: usize,
}

pub const SUMMARY_LEVELS: [f64; 7] = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];

impl DistributionSummary {
    fn from_raw(raw: &[f64], clip: ClipPolicy) -> Self {
        let clipped = raw.iter().filter(|&&p| clip.would_clip(p)).count();
        let mut v: Vec<f64> = raw.iter().map(|&p| clip.apply(p)).collect();
        v.sort_by(f64::total_cmp);
        let quantiles = SUMMARY_LEVELS
            .iter()
            .map(|&q| (q, crate::nuisance::spline::quantile_sorted(&v, q)))
            .collect();
        Self {
            min: v[0],
            max: v[v.len() - 1],
            quantiles,
            clipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityReport {
    pub epsilon: f64,
    pub lambda1: Option<DistributionSummary>,
    pub pi1_obs: Option<DistributionSummary>,
    /// Composite `π̂₁(x)`.
    pub pi1_x: Option<DistributionSummary>,
}

impl PositivityReport {
    pub fn total_clipped(&self) -> usize {
        [&self.lambda1, &self.pi1_obs, &self.pi1_x]
            .iter()
            .filter_map(|s| s.as_ref())
            .map(|s| s.clipped)
            .sum()
    }
}

/// Evaluates the bundle's consent, OBS-treatment and composite treatment
/// probabilities on every row of `d`.
pub fn positivity_report(
    d: &Dataset,
    bundle: &NuisanceBundle,
    clip: ClipPolicy,
) -> PositivityReport {
    let raw = |f: &dyn ProbFunction| -> Vec<f64> {
        d.rows().iter().map(|o| f.predict_unclipped(&o.x)).collect()
    };
    let lambda_raw = bundle
        .lambda1_x
        .as_deref()
        .filter(|_| !d.is_empty())
        .map(raw);
    let pi_raw = bundle
        .pi1_obs_x
        .as_deref()
        .filter(|_| !d.is_empty())
        .map(raw);
    let composite = match (&lambda_raw, &pi_raw) {
        (Some(l), Some(p)) => Some(
            l.iter()
                .zip(p)
                .map(|(&l, &p)| compose_pi(clip.apply(l), bundle.pi_t1, clip.apply(p)))
                .collect::<Vec<f64>>(),
        ),
        _ => None,
    };
    PositivityReport {
        epsilon: clip.epsilon,
        lambda1: lambda_raw
            .as_deref()
            .map(|v| DistributionSummary::from_raw(v, clip)),
        pi1_obs: pi_raw
            .as_deref()
            .map(|v| DistributionSummary::from_raw(v, clip)),
        pi1_x: composite
            .as_deref()
            .map(|v| DistributionSummary::from_raw(v, clip)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CovariateEntry, CovariateSchema, Observation, OutcomeKind};
    use crate::nuisance::{expit, ConstantFunction};
    use std::sync::Arc;

    fn schema() -> CovariateSchema {
        CovariateSchema::new(vec![CovariateEntry::continuous("z")]).unwrap()
    }

    fn two_by_two() -> Dataset {
        let mut rows = Vec::new();
        let mut push = |r: u8, y: f64, count: usize| {
            for _ in 0..count {
                rows.push(Observation {
                    x: vec![0.0],
                    r,
                    t: 1,
                    y,
                });
            }
        };
        push(1, 1.0, 10);
        push(1, 0.0, 90);
        push(0, 1.0, 5);
        push(0, 0.0, 95);
        Dataset::new(schema(), rows, OutcomeKind::Binary, 0.5).unwrap()
    }

    #[test]
    fn closed_form_odds_ratio() {
        let res = test_a2a3(&two_by_two(), 1, &ModelSpec::intercept_only()).unwrap();
        assert!((res.or_point - 10.0 * 95.0 / (90.0 * 5.0)).abs() < 1e-5);
        // Woolf standard error of the log odds ratio.
        let woolf = (1.0 / 10.0 + 1.0 / 90.0 + 1.0 / 5.0 + 1.0 / 95.0f64).sqrt();
        assert!((res.se - woolf).abs() < 1e-5);
        assert!(res.converged);
        assert!((res.or_ci95.0 - (res.log_or - 1.96 * res.se).exp()).abs() < 1e-12);
    }

    #[test]
    fn missing_study_in_arm() {
        let err = test_a2a3(&two_by_two(), 0, &ModelSpec::intercept_only()).unwrap_err();
        assert_eq!(err, NuisanceError::EmptySubgroup { r: 0, t: 0 });
    }

    #[derive(Debug)]
    struct Steep;

    impl ProbFunction for Steep {
        fn predict(&self, x: &[f64]) -> f64 {
            expit(if x[0] > 0.5 { 40.0 } else { 0.0 })
        }
    }

    fn bundle(lambda: Arc<dyn ProbFunction>) -> NuisanceBundle {
        NuisanceBundle {
            lambda1_x: Some(lambda),
            pi1_obs_x: Some(Arc::new(ConstantFunction(0.5))),
            tau_t_r_x: Default::default(),
            tau_t_x: Default::default(),
            lambda1_scalar: 0.5,
            pi_t1: 0.5,
            clip: ClipPolicy::default(),
        }
    }

    #[test]
    fn positivity_constant_bundle() {
        let d = two_by_two();
        let rep = positivity_report(
            &d,
            &bundle(Arc::new(ConstantFunction(0.5))),
            ClipPolicy::default(),
        );
        for s in [&rep.lambda1, &rep.pi1_obs, &rep.pi1_x] {
            let s = s.as_ref().unwrap();
            assert_eq!((s.min, s.max, s.clipped), (0.5, 0.5, 0));
        }
    }

    #[test]
    fn positivity_counts_clips() {
        let rows = vec![
            Observation {
                x: vec![0.0],
                r: 1,
                t: 1,
                y: 0.0,
            },
            Observation {
                x: vec![1.0],
                r: 0,
                t: 1,
                y: 0.0,
            },
        ];
        let d = Dataset::new(schema(), rows, OutcomeKind::Binary, 0.5).unwrap();
        let rep = positivity_report(&d, &bundle(Arc::new(Steep)), ClipPolicy::new(0.01).unwrap());
        let l = rep.lambda1.unwrap();
        assert!(l.clipped >= 1);
        assert_eq!(l.max, 0.99);
    }
}
