//! Misspecification transforms applied to fitted nuisance predictions.

use serde::Serialize;

use super::special::normal_cdf;
use super::{SimError, Study};
use crate::estimators::FoldPredictions;
use crate::nuisance::{logit, ClipPolicy};

/// `Φ(logit p; mean, variance)`.
pub fn distort_shrink(p: f64, mean: f64, variance: f64) -> f64 {
    normal_cdf(logit(p), mean, variance)
}

/// `0.7·Φ(logit p; 0, 25) + 0.3·Φ(logit p; 0.8, 0.04)`.
pub fn distort_mixture(p: f64) -> f64 {
    0.7 * distort_shrink(p, 0.0, 25.0) + 0.3 * distort_shrink(p, 0.8, 0.04)
}

/// Which fitted predictions a scenario distorts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Distortions {
    /// Mixture transform on `λ̂₁(x)`.
    pub lambda1: bool,
    /// Shrink transform on `π̂₁(0,x)`.
    pub pi1_obs: bool,
    /// Shrink transform on `τ̂ₜ(r,x)`, indexed by `r`.
    pub tau_by_study: [bool; 2],
    /// Shrink transform on `τ̂ₜ(x)`.
    pub tau_pooled: bool,
}

impl Distortions {
    /// Distortions of scenario `label` in `study`.
    pub fn for_scenario(study: Study, label: char) -> Result<Self, SimError> {
        let none = Self::default();
        let lambda = Self {
            lambda1: true,
            ..none
        };
        let pi = Self {
            pi1_obs: true,
            ..none
        };
        let tau_all = Self {
            tau_by_study: [true, true],
            tau_pooled: true,
            ..none
        };
        let or = |a: Self, b: Self| Self {
            lambda1: a.lambda1 | b.lambda1,
            pi1_obs: a.pi1_obs | b.pi1_obs,
            tau_by_study: [
                a.tau_by_study[0] | b.tau_by_study[0],
                a.tau_by_study[1] | b.tau_by_study[1],
            ],
            tau_pooled: a.tau_pooled | b.tau_pooled,
        };
        let d = match (study, label) {
            (_, 'a') => none,
            (Study::One, 'b') => pi,
            (Study::One, 'c') => Self {
                tau_by_study: [true, false],
                ..none
            },
            (Study::One, 'd') => Self {
                pi1_obs: true,
                tau_by_study: [true, false],
                ..none
            },
            (Study::Two, 'b') => lambda,
            (Study::Two, 'c') => Self {
                tau_by_study: [false, true],
                ..none
            },
            (Study::Two, 'd') => Self {
                lambda1: true,
                tau_by_study: [false, true],
                ..none
            },
            (Study::Three, 'b') => lambda,
            (Study::Three, 'c') => pi,
            (Study::Three, 'd') => tau_all,
            (Study::Three, 'e') => or(lambda, pi),
            (Study::Three, 'f') => or(lambda, tau_all),
            (Study::Three, 'g') => or(pi, tau_all),
            (Study::Three, 'h') => or(or(lambda, pi), tau_all),
            _ => {
                return Err(SimError::InvalidConfig(format!(
                    "scenario `{label}` is not defined for study {}",
                    study.number()
                )))
            }
        };
        Ok(d)
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    /// Rewrites the selected prediction vectors in place and clips them.
    pub fn apply(&self, fp: &mut FoldPredictions, clip: ClipPolicy) {
        let map = |v: &mut Vec<f64>, f: &dyn Fn(f64) -> f64| {
            v.iter_mut().for_each(|p| *p = clip.apply(f(*p)))
        };
        let shrink = |p: f64| distort_shrink(p, 0.0, 25.0);
        if self.lambda1 {
            map(&mut fp.lambda1, &|p| distort_mixture(clip.apply(p)));
        }
        if self.pi1_obs {
            map(&mut fp.pi1_obs, &shrink);
        }
        for t in 0..2 {
            for r in 0..2 {
                if self.tau_by_study[r] {
                    map(&mut fp.tau[t][r], &shrink);
                }
            }
            if self.tau_pooled {
                map(&mut fp.tau_pooled[t], &shrink);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_examples() {
        assert_eq!(distort_shrink(0.5, 0.0, 25.0), 0.5);
        assert!((distort_shrink(0.73, 0.0, 25.0) - 0.5788).abs() < 1e-3);
        assert!((distort_shrink(0.5, 0.8, 0.04) - 3.167e-5).abs() < 1e-7);
        assert!((distort_mixture(0.5) - 0.35001).abs() < 1e-4);
        assert!(distort_mixture(1.0 - 1e-12) > 0.999);
    }

    #[test]
    fn scenario_labels() {
        assert!(Distortions::for_scenario(Study::Three, 'a')
            .unwrap()
            .is_empty());
        assert!(Distortions::for_scenario(Study::One, 'e').is_err());
        assert!(Distortions::for_scenario(Study::Three, 'z').is_err());
        let h = Distortions::for_scenario(Study::Three, 'h').unwrap();
        assert!(h.lambda1 && h.pi1_obs && h.tau_pooled && h.tau_by_study == [true, true]);
    }
}
