//! Normal and bivariate normal distribution functions and the latent-index
//! root solver used by the Study 1 generator.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use libm::erfc;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use super::SimError;

/// `P(Z ≤ z)` for `Z ~ N(mean, variance)`.
pub fn normal_cdf(z: f64, mean: f64, variance: f64) -> f64 {
    debug_assert!(variance > 0.0);
    std_normal_cdf((z - mean) / variance.sqrt())
}

#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    if z.is_infinite() {
        return if z > 0.0 { 1.0 } else { 0.0 };
    }
    0.5 * erfc(-z / SQRT_2)
}

#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Inverse of [`normal_cdf`].
pub fn normal_quantile(p: f64, mean: f64, variance: f64) -> Result<f64, SimError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(SimError::Domain(format!(
            "normal quantile needs p in (0,1), got {p}"
        )));
    }
    if variance.is_nan() || variance <= 0.0 {
        return Err(SimError::Domain(format!(
            "variance must be positive, got {variance}"
        )));
    }
    Ok(mean + variance.sqrt() * std_normal_quantile(p))
}

/// Standard normal quantile, polished with Newton steps on the CDF.
pub fn std_normal_quantile(p: f64) -> f64 {
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..2 {
        let pdf = std_normal_pdf(x);
        if pdf < 1e-300 {
            break;
        }
        // Work in the tail closest to p to keep relative accuracy.
        let err = if p < 0.5 {
            std_normal_cdf(x) - p
        } else {
            (1.0 - p) - std_normal_cdf(-x)
        };
        x -= err / pdf;
    }
    x
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

type Rule = (Vec<f64>, Vec<f64>);

fn rules() -> &'static [Rule; 3] {
    static RULES: OnceLock<[Rule; 3]> = OnceLock::new();
    RULES.get_or_init(|| [gauss_legendre(6), gauss_legendre(12), gauss_legendre(20)])
}

/// Upper orthant `P(Z₁ > h, Z₂ > k)` for standard normals with correlation
/// `r` (Drezner–Wesolowsky with Genz's refinements).
fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let (x, w) = &rules()[if r.abs() < 0.3 {
        0
    } else if r.abs() < 0.75 {
        1
    } else {
        2
    }];
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (xi, wi) in x.iter().zip(w) {
            let sn = (asr * (xi + 1.0) / 2.0).sin();
            bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        return bvn * asr / (2.0 * two_pi) + std_normal_cdf(-h) * std_normal_cdf(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let as_ = (1.0 - r) * (1.0 + r);
        let mut a = as_.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a
            * (-(bs / as_ + hk) / 2.0).exp()
            * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp()
                * two_pi.sqrt()
                * std_normal_cdf(-b / a)
                * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for (xi, wi) in x.iter().zip(w) {
            let xs = (a * (xi + 1.0)).powi(2);
            let rs = (1.0 - xs).sqrt();
            let asr = -(bs / xs + hk) / 2.0;
            if asr > -100.0 {
                bvn += a
                    * wi
                    * asr.exp()
                    * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                        - (1.0 + c * xs * (1.0 + d * xs)));
            }
        }
        bvn = -bvn / two_pi;
    }
    if r > 0.0 {
        bvn + std_normal_cdf(-h.max(k))
    } else {
        let mut v = -bvn;
        if k > h {
            if h < 0.0 {
                v += std_normal_cdf(k) - std_normal_cdf(h);
            } else {
                v += std_normal_cdf(-h) - std_normal_cdf(-k);
            }
        }
        v.max(0.0)
    }
}

/// `P(Z₁ ≤ a, Z₂ ≤ b)` for standard normals with correlation `rho`.
pub fn bvn_cdf_std(a: f64, b: f64, rho: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return 0.0;
    }
    if a == f64::INFINITY {
        return std_normal_cdf(b);
    }
    if b == f64::INFINITY {
        return std_normal_cdf(a);
    }
    bvn_upper(-a, -b, rho).clamp(0.0, 1.0)
}

/// 2×2 covariance matrix `[[s11, s12], [s12, s22]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    pub s11: f64,
    pub s12: f64,
    pub s22: f64,
}

impl Cov2 {
    /// Variances 2 and covariance 1: two latent indices sharing one
    /// standard-normal confounder, each with independent unit noise.
    pub const LATENT: Cov2 = Cov2 {
        s11: 2.0,
        s12: 1.0,
        s22: 2.0,
    };

    pub fn new(s11: f64, s12: f64, s22: f64) -> Result<Self, SimError> {
        let c = Self { s11, s12, s22 };
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<(), SimError> {
        if self.s11 > 0.0 && self.s22 > 0.0 && self.s11 * self.s22 - self.s12 * self.s12 > 0.0 {
            Ok(())
        } else {
            Err(SimError::NotPositiveDefinite)
        }
    }

    pub fn rho(&self) -> f64 {
        self.s12 / (self.s11 * self.s22).sqrt()
    }
}

/// `P(Z₁ ≤ a, Z₂ ≤ b)` for `Z ~ N(0, sigma)`.
pub fn bvn_cdf(a: f64, b: f64, sigma: Cov2) -> Result<f64, SimError> {
    sigma.check()?;
    Ok(bvn_cdf_std(
        a / sigma.s11.sqrt(),
        b / sigma.s22.sqrt(),
        sigma.rho(),
    ))
}

/// Which joint probability the Study 1 outcome index is solved against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeltaYEquation {
    /// `P(Yₜ=1, R=0 | X) = target`, i.e. `Φ(δ;0,σ₁₁) − Φ₂(δ, Δ_R) = target`.
    /// Gives `P(Yₜ=1 | R=0, X) = τₜ(0,X)` when `target = τₜ(0,X)(1−λ₁(X))`.
    #[default]
    ObsJoint,
    /// `Φ₂(δ, Δ_R) = target`, as literally printed.
    Literal,
}

/// Solves for the outcome index `δ` given the consent index `delta_r`.
pub fn solve_delta_y(
    target: f64,
    delta_r: f64,
    sigma: Cov2,
    equation: DeltaYEquation,
) -> Result<f64, SimError> {
    sigma.check()?;
    let sd1 = sigma.s11.sqrt();
    let cond_slope = sigma.s12 / sigma.s11;
    let cond_sd = (sigma.s22 - sigma.s12 * sigma.s12 / sigma.s11).sqrt();
    let p_r = std_normal_cdf(delta_r / sigma.s22.sqrt());
    let upper = match equation {
        DeltaYEquation::ObsJoint => 1.0 - p_r,
        DeltaYEquation::Literal => p_r,
    };
    if !(target > 0.0 && target < upper) || !delta_r.is_finite() {
        return Err(SimError::NoRoot { target, upper });
    }
    // f is increasing in δ with an explicit derivative.
    let f = |d: f64| -> (f64, f64) {
        let joint = bvn_cdf_std(d / sd1, delta_r / sigma.s22.sqrt(), sigma.rho());
        let dens = std_normal_pdf(d / sd1) / sd1;
        let cond = std_normal_cdf((delta_r - cond_slope * d) / cond_sd);
        match equation {
            DeltaYEquation::ObsJoint => (
                std_normal_cdf(d / sd1) - joint - target,
                dens * (1.0 - cond),
            ),
            DeltaYEquation::Literal => (joint - target, dens * cond),
        }
    };
    let mut x = sd1 * std_normal_quantile((target / upper).clamp(1e-300, 1.0 - 1e-16));
    let (mut lo, mut hi) = (x - 1.0, x + 1.0);
    while f(lo).0 > 0.0 {
        lo -= 2.0 * (hi - lo);
        if lo < -80.0 {
            return Err(SimError::NoRoot { target, upper });
        }
    }
    while f(hi).0 < 0.0 {
        hi += 2.0 * (hi - lo);
        if hi > 80.0 {
            return Err(SimError::NoRoot { target, upper });
        }
    }
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        if fx.abs() < 1e-15 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        x = if dfx > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-14 * (1.0 + x.abs()) {
            break;
        }
    }
    let (fx, _) = f(x);
    if fx.abs() < 1e-10 {
        Ok(x)
    } else {
        Err(SimError::NoRoot { target, upper })
    }
}

/// `Φ⁻¹(λ; 0, 2)`: consent index reproducing `P(R=1|X) = λ` after
/// integrating over a shared standard-normal confounder.
pub fn latent_index(p: f64) -> Result<f64, SimError> {
    normal_quantile(p, 0.0, 2.0)
}
