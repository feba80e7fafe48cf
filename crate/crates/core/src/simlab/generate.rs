//! Data-generating processes of the three simulation studies.
//!
//! Latent construction: with `U ~ N(0,1)` shared, `P(R=1 | X, U) =
//! Φ(Δ_R(X) + U)` and `Δ_R = Φ⁻¹(λ₁(X); 0, 2)` give `P(R=1 | X) = λ₁(X)`.
//! Outcomes use the same device with their own index `Δ_{Yₜ}(X)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::special::{latent_index, solve_delta_y, std_normal_cdf, Cov2};
use super::truth::{CovariateGenerator, TrueNuisanceSet};
use super::{GeneratorOptions, SimError, Study};
use crate::dataset::{Dataset, Observation, OutcomeKind};
use crate::nuisance::{expit, logit};

/// Latent draws behind one simulated row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatentDraw {
    pub u: f64,
    /// `NaN` in studies where consent does not depend on `U`.
    pub delta_r: f64,
    pub delta_y: [f64; 2],
    /// Both potential outcomes.
    pub y_potential: [u8; 2],
}

/// Simulates `n` rows of `study` together with their latent draws.
pub fn generate_with_latent(
    study: Study,
    n: usize,
    truths: &TrueNuisanceSet,
    gen: &CovariateGenerator,
    opts: &GeneratorOptions,
    seed: u64,
) -> Result<(Dataset, Vec<LatentDraw>), SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n);
    for _ in 0..n {
        let x = gen.sample(&mut rng);
        let u: f64 = rng.sample(StandardNormal);
        let lambda = truths.lambda1.prob(&x);
        let (r, delta_r) = match study {
            Study::One => {
                let dr = latent_index(lambda)?;
                (bernoulli(&mut rng, std_normal_cdf(dr + u)), dr)
            }
            _ => (bernoulli(&mut rng, lambda), f64::NAN),
        };
        let p_treat = if r == 1 {
            truths.pi_t1
        } else {
            let p = truths.pi1_obs.prob(&x);
            match study {
                Study::Two => expit(logit(p) - opts.obs_treatment_confounding * u),
                _ => p,
            }
        };
        let t = bernoulli(&mut rng, p_treat);
        let mut delta_y = [0.0; 2];
        let mut y_potential = [0u8; 2];
        for (dy, outcome) in delta_y.iter_mut().zip(&truths.outcome) {
            let tau = outcome.prob(&x);
            *dy = match study {
                Study::One => solve_delta_y(
                    tau * (1.0 - lambda),
                    delta_r,
                    Cov2::LATENT,
                    opts.delta_y_equation,
                )?,
                _ => latent_index(tau)?,
            };
        }
        for arm in 0..2 {
            y_potential[arm] = bernoulli(&mut rng, std_normal_cdf(delta_y[arm] + u));
        }
        let y = f64::from(y_potential[t as usize]);
        rows.push(Observation { x, r, t, y });
        latent.push(LatentDraw {
            u,
            delta_r,
            delta_y,
            y_potential,
        });
    }
    let d = Dataset::new(gen.schema.clone(), rows, OutcomeKind::Binary, truths.pi_t1)?;
    Ok((d, latent))
}

fn bernoulli<R: Rng>(rng: &mut R, p: f64) -> u8 {
    u8::from(rng.gen::<f64>() < p)
}

pub fn generate(
    study: Study,
    n: usize,
    truths: &TrueNuisanceSet,
    gen: &CovariateGenerator,
    opts: &GeneratorOptions,
    seed: u64,
) -> Result<Dataset, SimError> {
    generate_with_latent(study, n, truths, gen, opts, seed).map(|(d, _)| d)
}

/// Study 1: (A1),(A2) hold; consent and outcomes share the confounder `U`.
pub fn gen_study1(
    n: usize,
    truths: &TrueNuisanceSet,
    gen: &CovariateGenerator,
    opts: &GeneratorOptions,
    seed: u64,
) -> Result<Dataset, SimError> {
    generate(Study::One, n, truths, gen, opts, seed)
}

/// Study 2: (A1),(A3) hold; OBS treatment choice depends on `U`.
pub fn gen_study2(
    n: usize,
    truths: &TrueNuisanceSet,
    gen: &CovariateGenerator,
    opts: &GeneratorOptions,
    seed: u64,
) -> Result<Dataset, SimError> {
    generate(Study::Two, n, truths, gen, opts, seed)
}

/// Study 3: (A1),(A2),(A3) all hold.
pub fn gen_study3(
    n: usize,
    truths: &TrueNuisanceSet,
    gen: &CovariateGenerator,
    opts: &GeneratorOptions,
    seed: u64,
) -> Result<Dataset, SimError> {
    generate(Study::Three, n, truths, gen, opts, seed)
}
