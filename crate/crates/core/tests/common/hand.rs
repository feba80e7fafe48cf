//! Hand evaluation of the five estimators with constant nuisances and K = 1.

use ccs_core::estimators::{AssumptionSet, Estimand, EstimandRequest};
use ccs_core::nuisance::ConstantLearner;

pub const LEARNER: ConstantLearner = ConstantLearner {
    lambda1: 0.6,
    pi1_obs: 0.7,
    tau: [[0.3, 0.35], [0.2, 0.25]],
    tau_pooled: [0.32, 0.22],
};

pub struct Hand {
    pub point: f64,
    pub ifs: Vec<f64>,
}

impl Hand {
    pub fn se(&self) -> f64 {
        self.ifs.iter().map(|v| v * v).sum::<f64>().sqrt() / self.ifs.len() as f64
    }
}

pub fn ind(a: u8, b: u8) -> f64 {
    f64::from(u8::from(a == b))
}

pub fn arm_prob(p1: f64, t: u8) -> f64 {
    if t == 1 {
        p1
    } else {
        1.0 - p1
    }
}

pub fn centered(phi: Vec<f64>) -> Hand {
    let point = phi.iter().sum::<f64>() / phi.len() as f64;
    Hand {
        point,
        ifs: phi.iter().map(|p| p - point).collect(),
    }
}

pub fn hand_mu_a1a2(rows: &[(u8, u8, f64)], l: &ConstantLearner, pi_star: f64, t: u8) -> Hand {
    centered(
        rows.iter()
            .map(|&(r, tt, y)| {
                let pi = if r == 1 {
                    arm_prob(pi_star, t)
                } else {
                    arm_prob(l.pi1_obs, t)
                };
                let i = ind(tt, t);
                i * y / pi + (1.0 - i / pi) * l.tau[t as usize][r as usize]
            })
            .collect(),
    )
}

pub fn hand_mu_a1a3(rows: &[(u8, u8, f64)], l: &ConstantLearner, pi_star: f64, t: u8) -> Hand {
    centered(
        rows.iter()
            .map(|&(r, tt, y)| {
                let w = f64::from(r) * ind(tt, t) / (l.lambda1 * arm_prob(pi_star, t));
                w * y + (1.0 - w) * l.tau[t as usize][1]
            })
            .collect(),
    )
}

pub fn composite(l: &ConstantLearner, pi_star: f64, t: u8) -> f64 {
    l.lambda1 * arm_prob(pi_star, t) + (1.0 - l.lambda1) * arm_prob(l.pi1_obs, t)
}

pub fn hand_mu_a1a2a3(rows: &[(u8, u8, f64)], l: &ConstantLearner, pi_star: f64, t: u8) -> Hand {
    let pi = composite(l, pi_star, t);
    centered(
        rows.iter()
            .map(|&(_, tt, y)| {
                let i = ind(tt, t);
                i * y / pi + (1.0 - i / pi) * l.tau_pooled[t as usize]
            })
            .collect(),
    )
}

/// One-step trial mean with K = 1: plug-in over all rows plus the mean
/// correction, influence values centred at the corrected estimate.
pub fn one_step(rows: &[(u8, u8, f64)], plug_terms: &[f64], a: &[f64]) -> Hand {
    let n = rows.len() as f64;
    let share = rows.iter().map(|r| f64::from(r.0)).sum::<f64>() / n;
    let plug = plug_terms.iter().sum::<f64>() / n;
    let corr = rows
        .iter()
        .zip(a)
        .map(|(row, ai)| ai - f64::from(row.0) * plug / share)
        .sum::<f64>()
        / n;
    let point = plug + corr;
    Hand {
        point,
        ifs: rows
            .iter()
            .zip(a)
            .map(|(row, ai)| ai - f64::from(row.0) * point / share)
            .collect(),
    }
}

pub fn hand_nu_a1(rows: &[(u8, u8, f64)], l: &ConstantLearner, pi_star: f64, t: u8) -> Hand {
    let n = rows.len() as f64;
    let share = rows.iter().map(|r| f64::from(r.0)).sum::<f64>() / n;
    let tau = l.tau[t as usize][1];
    let ps = arm_prob(pi_star, t);
    let plug: Vec<f64> = rows
        .iter()
        .map(|&(r, _, _)| f64::from(r) * tau / share)
        .collect();
    let a: Vec<f64> = rows
        .iter()
        .map(|&(r, tt, y)| {
            let i = ind(tt, t);
            f64::from(r) / share * (i * y / ps + (1.0 - i / ps) * tau)
        })
        .collect();
    one_step(rows, &plug, &a)
}

pub fn hand_nu_a1a2a3(rows: &[(u8, u8, f64)], l: &ConstantLearner, pi_star: f64, t: u8) -> Hand {
    let n = rows.len() as f64;
    let share = rows.iter().map(|r| f64::from(r.0)).sum::<f64>() / n;
    let tau = l.tau_pooled[t as usize];
    let pi = composite(l, pi_star, t);
    let plug: Vec<f64> = rows.iter().map(|_| l.lambda1 * tau / share).collect();
    let a: Vec<f64> = rows
        .iter()
        .map(|&(r, tt, y)| {
            let w = ind(tt, t) * l.lambda1 / pi;
            (w * y + (f64::from(r) - w) * tau) / share
        })
        .collect();
    one_step(rows, &plug, &a)
}

/// Hand value of `req` on `rows` with the nuisances of `l`.
pub fn hand(
    req: EstimandRequest,
    rows: &[(u8, u8, f64)],
    l: &ConstantLearner,
    pi_star: f64,
) -> Hand {
    let t = req.arm;
    match (req.estimand, req.assumptions) {
        (Estimand::Mu, AssumptionSet::A1A2) => hand_mu_a1a2(rows, l, pi_star, t),
        (Estimand::Mu, AssumptionSet::A1A3) => hand_mu_a1a3(rows, l, pi_star, t),
        (Estimand::Mu, AssumptionSet::A1A2A3) => hand_mu_a1a2a3(rows, l, pi_star, t),
        (Estimand::Nu, AssumptionSet::A1) => hand_nu_a1(rows, l, pi_star, t),
        (Estimand::Nu, _) => hand_nu_a1a2a3(rows, l, pi_star, t),
        (Estimand::Mu, AssumptionSet::A1) => unreachable!("not an estimator"),
    }
}
