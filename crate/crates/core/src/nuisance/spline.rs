//! Natural cubic spline basis with knots at training quantiles.
//!
//! Uses the truncated-power construction: with knots `ξ_1 < … < ξ_K` the
//! basis is `z, d_1 − d_{K−1}, …, d_{K−2} − d_{K−1}` where
//! `d_k(z) = ((z − ξ_k)³₊ − (z − ξ_K)³₊) / (ξ_K − ξ_k)`. That is `K − 1`
//! columns and no constant. Every column is linear beyond the boundary knots.
//! Inputs are standardized with the training mean and SD before evaluation.

use serde::Serialize;

use super::NuisanceError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaturalSplineBasis {
    center: f64,
    scale: f64,
    /// Knots on the standardized scale, strictly increasing.
    knots: Vec<f64>,
}

impl NaturalSplineBasis {
    /// Fits a `df`-column basis on `values`. Needs at least `df + 1` distinct
    /// values so the basis plus an intercept has full column rank.
    pub fn fit(values: &[f64], df: usize) -> Result<Self, NuisanceError> {
        if df < 2 {
            return Err(NuisanceError::InvalidSpec(format!(
                "spline df must be >= 2, got {df}"
            )));
        }
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < df + 1 {
            return Err(NuisanceError::DegenerateCovariate {
                distinct: distinct.len(),
                df,
            });
        }
        let n = sorted.len() as f64;
        let center = sorted.iter().sum::<f64>() / n;
        let var = sorted.iter().map(|v| (v - center).powi(2)).sum::<f64>() / n;
        let scale = var.sqrt();
        let z: Vec<f64> = sorted.iter().map(|v| (v - center) / scale).collect();

        let n_knots = df + 1;
        let mut knots: Vec<f64> = (0..n_knots)
            .map(|j| quantile_sorted(&z, j as f64 / df as f64))
            .collect();
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            // Heavy ties: place knots on the distinct values instead.
            let zd: Vec<f64> = distinct.iter().map(|v| (v - center) / scale).collect();
            knots = (0..n_knots)
                .map(|j| quantile_sorted(&zd, j as f64 / df as f64))
                .collect();
        }
        debug_assert!(knots.windows(2).all(|w| w[1] > w[0]));
        Ok(Self {
            center,
            scale,
            knots,
        })
    }

    pub fn df(&self) -> usize {
        self.knots.len() - 1
    }

    /// Knot locations on the original covariate scale.
    pub fn knots(&self) -> Vec<f64> {
        self.knots
            .iter()
            .map(|k| k * self.scale + self.center)
            .collect()
    }

    /// Writes the `df` basis values at `x` into `out`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let z = (x - self.center) / self.scale;
        let k = self.knots.len();
        let last = self.knots[k - 1];
        let d = |j: usize| -> f64 {
            let a = (z - self.knots[j]).max(0.0).powi(3);
            let b = (z - last).max(0.0).powi(3);
            (a - b) / (last - self.knots[j])
        };
        out[0] = z;
        let d_last = d(k - 2);
        for j in 0..k - 2 {
            out[j + 1] = d(j) - d_last;
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.df()];
        self.eval_into(x, &mut out);
        out
    }
}

/// Builds the `values.len() × df` basis matrix (row-major rows).
pub fn spline_basis(values: &[f64], df: usize) -> Result<Vec<Vec<f64>>, NuisanceError> {
    let basis = NaturalSplineBasis::fit(values, df)?;
    Ok(values.iter().map(|&v| basis.eval(v)).collect())
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
