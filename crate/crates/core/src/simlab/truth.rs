//! Synthetic stand-ins for the cohort covariates and the true nuisance
//! functions: twelve independent covariates shaped like a cardiology cohort,
//! and additive-logistic truths with smooth terms in the continuous ones.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::special::{bvn_cdf_std, latent_index, normal_cdf, solve_delta_y, std_normal_pdf, Cov2};
use super::{SimError, Study};
use crate::dataset::{CovariateEntry, CovariateSchema};
use crate::nuisance::{expit, logit};

/// Marginal law of one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CovariateLaw {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Level probabilities in schema order.
    Categorical {
        probs: Vec<f64>,
    },
}

/// Independent-components covariate sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateGenerator {
    pub schema: CovariateSchema,
    pub laws: Vec<CovariateLaw>,
}

impl CovariateGenerator {
    pub fn new(schema: CovariateSchema, laws: Vec<CovariateLaw>) -> Result<Self, SimError> {
        if laws.len() != schema.len() {
            return Err(SimError::InvalidConfig(
                "one law per covariate required".into(),
            ));
        }
        for (e, law) in schema.entries().iter().zip(&laws) {
            let ok = match law {
                CovariateLaw::Normal { sd, .. } => e.is_continuous() && *sd > 0.0,
                CovariateLaw::Categorical { probs } => {
                    probs.len() == e.n_levels()
                        && probs.iter().all(|p| *p >= 0.0)
                        && (probs.iter().sum::<f64>() - 1.0).abs() < 1e-9
                }
            };
            if !ok {
                return Err(SimError::InvalidConfig(format!(
                    "law does not match covariate `{}`",
                    e.name
                )));
            }
        }
        Ok(Self { schema, laws })
    }

    /// Twelve covariates with cohort-like margins.
    pub fn bari_like() -> Self {
        let schema = bari_schema();
        let binary = |p: f64| CovariateLaw::Categorical {
            probs: vec![1.0 - p, p],
        };
        let laws = vec![
            CovariateLaw::Normal {
                mean: 61.0,
                sd: 10.0,
            },
            binary(0.74),
            CovariateLaw::Categorical {
                probs: vec![0.17, 0.49, 0.19, 0.15],
            },
            CovariateLaw::Normal {
                mean: 130.0,
                sd: 20.0,
            },
            CovariateLaw::Normal {
                mean: 76.0,
                sd: 11.0,
            },
            binary(0.684),
            binary(0.383),
            binary(0.385),
            binary(0.522),
            CovariateLaw::Categorical {
                probs: vec![0.771, 0.181, 0.048],
            },
            binary(0.232),
            binary(0.483),
        ];
        Self::new(schema, laws).expect("built-in generator is valid")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.laws
            .iter()
            .map(|law| match law {
                CovariateLaw::Normal { mean, sd } => {
                    Normal::new(*mean, *sd).expect("sd > 0").sample(rng)
                }
                CovariateLaw::Categorical { probs } => {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut level = probs.len() - 1;
                    for (j, p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            level = j;
                            break;
                        }
                    }
                    level as f64
                }
            })
            .collect()
    }
}

/// Schema of the built-in generator.
pub fn bari_schema() -> CovariateSchema {
    let yes_no = |name: &str| CovariateEntry::categorical(name, &["no", "yes"]);
    CovariateSchema::new(vec![
        CovariateEntry::continuous("age"),
        CovariateEntry::categorical("sex", &["female", "male"]),
        CovariateEntry::categorical(
            "education",
            &[
                "less_than_high_school",
                "high_school",
                "some_college",
                "college",
            ],
        ),
        CovariateEntry::continuous("sbp"),
        CovariateEntry::continuous("dbp"),
        CovariateEntry::categorical("symptoms", &["other", "unstable_angina_mi"]),
        CovariateEntry::categorical("vessels", &["fewer_than_three", "three"]),
        yes_no("proximal_lad"),
        yes_no("prior_mi"),
        CovariateEntry::categorical("diabetes", &["no", "with_treatment", "without_treatment"]),
        yes_no("smoking"),
        yes_no("hypertension"),
    ])
    .expect("static schema is valid")
}

/// One additive term of a true log-odds function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthTerm {
    /// `linear·z + quadratic·z² + sine·sin(z)` with `z = (x − center)/scale`.
    Smooth {
        index: usize,
        center: f64,
        scale: f64,
        linear: f64,
        quadratic: f64,
        sine: f64,
    },
    /// Adds `coef` when the covariate equals `level`.
    Level {
        index: usize,
        level: usize,
        coef: f64,
    },
}

/// `expit(intercept + Σ terms)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveLogit {
    pub intercept: f64,
    pub terms: Vec<TruthTerm>,
}

impl AdditiveLogit {
    pub fn constant(p: f64) -> Self {
        Self {
            intercept: logit(p),
            terms: Vec::new(),
        }
    }

    pub fn eta(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .terms
                .iter()
                .map(|t| match *t {
                    TruthTerm::Smooth {
                        index,
                        center,
                        scale,
                        linear,
                        quadratic,
                        sine,
                    } => {
                        let z = (x[index] - center) / scale;
                        linear * z + quadratic * z * z + sine * z.sin()
                    }
                    TruthTerm::Level { index, level, coef } => {
                        if x[index] as usize == level {
                            coef
                        } else {
                            0.0
                        }
                    }
                })
                .sum::<f64>()
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        expit(self.eta(x))
    }

    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            intercept: self.intercept + delta,
            terms: self.terms.clone(),
        }
    }
}

/// True nuisance functions of a simulation study.
///
/// `outcome[t]` is the outcome law the generator targets: `τₜ(0,·)` in
/// Study 1, `τₜ(1,·)` in Study 2 and `τₜ(·)` in Study 3. The other outcome
/// regressions follow from the study design; see [`TrueNuisanceSet::induced`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueNuisanceSet {
    pub lambda1: AdditiveLogit,
    pub pi1_obs: AdditiveLogit,
    pub outcome: [AdditiveLogit; 2],
    pub pi_t1: f64,
}

/// All nuisance values at one covariate vector, as implied by the design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InducedTruth {
    pub lambda1: f64,
    /// `P[T=1 | R=0, X]`.
    pub pi1_obs: f64,
    /// `P[Yₜ=1 | R=r, X]`, indexed `[t][r]`.
    pub tau: [[f64; 2]; 2],
    /// `P[Yₜ=1 | X]`.
    pub tau_pooled: [f64; 2],
}

fn smooth(
    index: usize,
    center: f64,
    scale: f64,
    linear: f64,
    quadratic: f64,
    sine: f64,
) -> TruthTerm {
    TruthTerm::Smooth {
        index,
        center,
        scale,
        linear,
        quadratic,
        sine,
    }
}

fn level(index: usize, level: usize, coef: f64) -> TruthTerm {
    TruthTerm::Level { index, level, coef }
}

impl TrueNuisanceSet {
    /// Truths paired with [`CovariateGenerator::bari_like`]: trial share
    /// about 0.6, OBS treatment share about 0.8 driven by disease extent,
    /// and five-year outcome risk around 0.2.
    pub fn bari_like() -> Self {
        let lambda1 = AdditiveLogit {
            intercept: 0.25,
            terms: vec![
                smooth(0, 61.0, 10.0, 0.25, -0.15, 0.0),
                smooth(3, 130.0, 20.0, 0.15, 0.0, 0.2),
                level(1, 1, -0.15),
                level(2, 2, -0.2),
                level(2, 3, -0.6),
                level(6, 1, 0.35),
                level(7, 1, 0.3),
                level(8, 1, 0.1),
                level(10, 1, 0.3),
                level(11, 1, 0.1),
            ],
        };
        let pi1_obs = AdditiveLogit {
            intercept: 2.1,
            terms: vec![
                smooth(0, 61.0, 10.0, -0.3, -0.1, 0.0),
                smooth(4, 76.0, 11.0, 0.1, 0.0, 0.2),
                level(1, 1, 0.15),
                level(5, 1, 0.2),
                level(6, 1, -1.3),
                level(7, 1, -0.9),
                level(9, 1, -0.35),
                level(9, 2, -0.45),
                level(11, 1, -0.2),
            ],
        };
        let outcome = |arm_shift: f64, lad: f64| AdditiveLogit {
            intercept: -2.9 + arm_shift,
            terms: vec![
                smooth(0, 61.0, 10.0, 0.55, 0.12, 0.0),
                smooth(3, 130.0, 20.0, 0.1, 0.1, 0.0),
                smooth(4, 76.0, 11.0, -0.1, 0.0, 0.15),
                level(1, 1, 0.1),
                level(2, 3, -0.25),
                level(5, 1, 0.2),
                level(6, 1, 0.4),
                level(7, 1, lad),
                level(8, 1, 0.45),
                level(9, 1, 0.55),
                level(9, 2, 0.7),
                level(10, 1, 0.35),
                level(11, 1, 0.2),
            ],
        };
        Self {
            lambda1,
            pi1_obs,
            outcome: [outcome(0.0, 0.3), outcome(0.1, 0.15)],
            pi_t1: 0.5,
        }
    }

    /// Implied nuisance values at `x` under `study`'s design.
    pub fn induced(
        &self,
        study: Study,
        x: &[f64],
        opts: &super::GeneratorOptions,
    ) -> Result<InducedTruth, SimError> {
        let lambda1 = self.lambda1.prob(x);
        let pi_obs_design = self.pi1_obs.prob(x);
        let mut tau = [[0.0; 2]; 2];
        let mut tau_pooled = [0.0; 2];
        let pi1_obs = match study {
            Study::Two => confounded_treatment(pi_obs_design, opts.obs_treatment_confounding),
            _ => pi_obs_design,
        };
        match study {
            Study::One => {
                let dr = latent_index(lambda1)?;
                for t in 0..2 {
                    let t0 = self.outcome[t].prob(x);
                    let dy = solve_delta_y(
                        t0 * (1.0 - lambda1),
                        dr,
                        Cov2::LATENT,
                        opts.delta_y_equation,
                    )?;
                    let marg = normal_cdf(dy, 0.0, 2.0);
                    let joint = bvn_cdf_std(dy / 2f64.sqrt(), dr / 2f64.sqrt(), 0.5);
                    tau[t] = [(marg - joint) / (1.0 - lambda1), joint / lambda1];
                    tau_pooled[t] = marg;
                }
            }
            Study::Two | Study::Three => {
                for t in 0..2 {
                    let p = self.outcome[t].prob(x);
                    tau[t] = [p, p];
                    tau_pooled[t] = p;
                }
            }
        }
        Ok(InducedTruth {
            lambda1,
            pi1_obs,
            tau,
            tau_pooled,
        })
    }
}

/// `E_U[expit(logit p − c·U)]` for `U ~ N(0,1)`.
pub fn confounded_treatment(p: f64, c: f64) -> f64 {
    if c == 0.0 {
        return p;
    }
    let l = logit(p);
    // Trapezoid on a fine grid; the integrand is smooth and decays fast.
    let steps = 400;
    let h = 16.0 / steps as f64;
    (0..=steps)
        .map(|i| {
            let u = -8.0 + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            w * std_normal_pdf(u) * expit(l - c * u)
        })
        .sum::<f64>()
        * h
}
