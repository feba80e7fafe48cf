//! Per-fold one-step estimates and influence values.

use super::{AssumptionSet, Estimand, EstimandRequest, FoldPredictions};
use crate::dataset::Dataset;
use crate::nuisance::{compose_pi, ClipPolicy, NuisanceError};

/// Result of evaluating one estimator on one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldTerms {
    pub point: f64,
    pub plug_in: f64,
    /// Influence values of the fold's rows, in `eval_rows` order.
    pub if_values: Vec<f64>,
}

struct Ctx<'a> {
    d: &'a Dataset,
    fp: &'a FoldPredictions,
    clip: ClipPolicy,
    t: u8,
    pi_trial: f64,
}

impl Ctx<'_> {
    fn ind(&self, i: usize) -> f64 {
        if self.d.row(i).t == self.t {
            1.0
        } else {
            0.0
        }
    }

    fn r(&self, i: usize) -> f64 {
        f64::from(self.d.row(i).r)
    }

    fn y(&self, i: usize) -> f64 {
        self.d.row(i).y
    }

    fn lambda1(&self, i: usize) -> f64 {
        self.clip.apply(self.fp.lambda1[i])
    }

    fn pi_obs(&self, i: usize) -> f64 {
        let p1 = self.clip.apply(self.fp.pi1_obs[i]);
        if self.t == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    fn pi_composite(&self, i: usize) -> f64 {
        self.clip
            .apply(compose_pi(self.lambda1(i), self.pi_trial, self.pi_obs(i)))
    }

    fn tau(&self, r: u8, i: usize) -> f64 {
        self.fp.tau[self.t as usize][r as usize][i]
    }

    fn tau_pooled(&self, i: usize) -> f64 {
        self.fp.tau_pooled[self.t as usize][i]
    }
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len() as f64;
    v.sum::<f64>() / n
}

/// AIPW-type estimators: fold mean of `φᵢ`, influence `φᵢ − point`.
fn augmented(rows: &[usize], phi_tau: impl Fn(usize) -> (f64, f64)) -> FoldTerms {
    let pairs: Vec<(f64, f64)> = rows.iter().map(|&i| phi_tau(i)).collect();
    let point = mean(pairs.iter().map(|p| p.0));
    let plug_in = mean(pairs.iter().map(|p| p.1));
    FoldTerms {
        point,
        plug_in,
        if_values: pairs.iter().map(|p| p.0 - point).collect(),
    }
}

/// Trial-mean estimators: `plug + mean_k(aᵢ − Rᵢ·plug/λ̂)`, influence
/// `aᵢ − Rᵢ·point/λ̂` with `λ̂` the training share of trial rows.
fn trial_one_step(c: &Ctx<'_>, plug_in: f64, a: impl Fn(usize) -> f64) -> FoldTerms {
    let ls = c.fp.lambda1_scalar;
    let rows = &c.fp.eval_rows;
    let av: Vec<f64> = rows.iter().map(|&i| a(i)).collect();
    let point = plug_in
        + mean(
            rows.iter()
                .zip(&av)
                .map(|(&i, &ai)| ai - c.r(i) * plug_in / ls),
        );
    let if_values = rows
        .iter()
        .zip(&av)
        .map(|(&i, &ai)| ai - c.r(i) * point / ls)
        .collect();
    FoldTerms {
        point,
        plug_in,
        if_values,
    }
}

/// Evaluates `request` on the rows of fold `fp`.
pub fn evaluate_fold(
    d: &Dataset,
    fp: &FoldPredictions,
    request: EstimandRequest,
    clip: ClipPolicy,
) -> Result<FoldTerms, NuisanceError> {
    let t = request.arm;
    let c = Ctx {
        d,
        fp,
        clip,
        t,
        pi_trial: d.pi_arm(t),
    };
    let rows = &fp.eval_rows;
    let terms = match (request.estimand, request.assumptions) {
        (Estimand::Mu, AssumptionSet::A1A2) => augmented(rows, |i| {
            let r = d.row(i).r;
            let pi = if r == 1 { c.pi_trial } else { c.pi_obs(i) };
            let w = c.ind(i) / pi;
            let tau = c.tau(r, i);
            (w * c.y(i) + (1.0 - w) * tau, tau)
        }),
        (Estimand::Mu, AssumptionSet::A1A3) => augmented(rows, |i| {
            let w = c.r(i) * c.ind(i) / (c.lambda1(i) * c.pi_trial);
            let tau = c.tau(1, i);
            (w * c.y(i) + (1.0 - w) * tau, tau)
        }),
        (Estimand::Mu, AssumptionSet::A1A2A3) => augmented(rows, |i| {
            let w = c.ind(i) / c.pi_composite(i);
            let tau = c.tau_pooled(i);
            (w * c.y(i) + (1.0 - w) * tau, tau)
        }),
        (Estimand::Nu, AssumptionSet::A1) => {
            let ls = trial_share(&c)?;
            let plug = mean(fp.train_rows.iter().map(|&i| c.r(i) * c.tau(1, i) / ls));
            trial_one_step(&c, plug, |i| {
                let w = c.ind(i) / c.pi_trial;
                c.r(i) / ls * (w * c.y(i) + (1.0 - w) * c.tau(1, i))
            })
        }
        (Estimand::Nu, AssumptionSet::A1A2A3) => {
            let ls = trial_share(&c)?;
            let plug = mean(
                fp.train_rows
                    .iter()
                    .map(|&i| fp.lambda1[i] * c.tau_pooled(i) / ls),
            );
            trial_one_step(&c, plug, |i| {
                let w = c.ind(i) * c.lambda1(i) / c.pi_composite(i);
                (w * c.y(i) + (c.r(i) - w) * c.tau_pooled(i)) / ls
            })
        }
        _ => unreachable!("request validated before evaluation"),
    };
    Ok(terms)
}

fn trial_share(c: &Ctx<'_>) -> Result<f64, NuisanceError> {
    if c.fp.lambda1_scalar > 0.0 {
        Ok(c.fp.lambda1_scalar)
    } else {
        Err(NuisanceError::EmptySubgroup { r: 1, t: c.t })
    }
}
