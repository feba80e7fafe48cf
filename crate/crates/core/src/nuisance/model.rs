//! Additive logistic model: term specs, design encoding and the penalized
//! IRLS fitter.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::spline::NaturalSplineBasis;
use super::NuisanceError;
use crate::dataset::{CovariateKind, CovariateSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermKind {
    Linear,
    Smooth { df: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub covariate: String,
    #[serde(flatten)]
    pub kind: TermKind,
}

/// Right-hand side of an additive model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub terms: Vec<Term>,
    #[serde(default = "yes")]
    pub include_intercept: bool,
}

fn yes() -> bool {
    true
}

pub const DEFAULT_SMOOTH_DF: usize = 4;

impl ModelSpec {
    pub fn intercept_only() -> Self {
        Self {
            terms: Vec::new(),
            include_intercept: true,
        }
    }

    /// Smooth terms for continuous covariates, linear (dummy-coded) terms for
    /// categorical ones.
    pub fn default_for(schema: &CovariateSchema) -> Self {
        let terms = schema
            .entries()
            .iter()
            .map(|e| Term {
                covariate: e.name.clone(),
                kind: if e.is_continuous() {
                    TermKind::Smooth {
                        df: DEFAULT_SMOOTH_DF,
                    }
                } else {
                    TermKind::Linear
                },
            })
            .collect();
        Self {
            terms,
            include_intercept: true,
        }
    }

    /// All covariates entering linearly.
    pub fn all_linear(schema: &CovariateSchema) -> Self {
        let terms = schema
            .entries()
            .iter()
            .map(|e| Term {
                covariate: e.name.clone(),
                kind: TermKind::Linear,
            })
            .collect();
        Self {
            terms,
            include_intercept: true,
        }
    }

    pub fn validate(&self, schema: &CovariateSchema) -> Result<(), NuisanceError> {
        for term in &self.terms {
            let idx = schema.index_of(&term.covariate).ok_or_else(|| {
                NuisanceError::InvalidSpec(format!("unknown covariate `{}`", term.covariate))
            })?;
            if let TermKind::Smooth { df } = term.kind {
                if !schema.entries()[idx].is_continuous() {
                    return Err(NuisanceError::InvalidSpec(format!(
                        "smooth term on categorical covariate `{}`",
                        term.covariate
                    )));
                }
                if df < 2 {
                    return Err(NuisanceError::InvalidSpec(format!(
                        "smooth term on `{}` needs df >= 2",
                        term.covariate
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Probability floor/ceiling `[ε, 1−ε]` applied to predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipPolicy {
    pub epsilon: f64,
}

impl ClipPolicy {
    pub const DEFAULT_EPSILON: f64 = 0.01;

    pub fn new(epsilon: f64) -> Result<Self, NuisanceError> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(NuisanceError::InvalidSpec(format!(
                "epsilon must lie in (0, 0.5), got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    #[inline]
    pub fn apply(&self, p: f64) -> f64 {
        p.clamp(self.epsilon, 1.0 - self.epsilon)
    }

    #[inline]
    pub fn would_clip(&self, p: f64) -> bool {
        p < self.epsilon || p > 1.0 - self.epsilon
    }
}

impl Default for ClipPolicy {
    fn default() -> Self {
        Self {
            epsilon: Self::DEFAULT_EPSILON,
        }
    }
}

#[inline]
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
enum Encoder {
    Linear {
        index: usize,
        center: f64,
        scale: f64,
    },
    Dummies {
        index: usize,
        levels: usize,
    },
    Smooth {
        index: usize,
        basis: NaturalSplineBasis,
    },
}

impl Encoder {
    fn width(&self) -> usize {
        match self {
            Encoder::Linear { .. } => 1,
            Encoder::Dummies { levels, .. } => levels - 1,
            Encoder::Smooth { basis, .. } => basis.df(),
        }
    }
}

/// Maps covariate vectors to design rows; fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignEncoder {
    intercept: bool,
    encoders: Vec<Encoder>,
    width: usize,
}

impl DesignEncoder {
    pub fn fit(
        spec: &ModelSpec,
        schema: &CovariateSchema,
        xs: &[&[f64]],
    ) -> Result<Self, NuisanceError> {
        spec.validate(schema)?;
        let mut encoders = Vec::with_capacity(spec.terms.len());
        for term in &spec.terms {
            let index = schema.index_of(&term.covariate).expect("validated");
            let entry = &schema.entries()[index];
            let column: Vec<f64> = xs.iter().map(|x| x[index]).collect();
            let enc = match (&entry.kind, term.kind) {
                (CovariateKind::Continuous, TermKind::Linear) => {
                    let n = column.len().max(1) as f64;
                    let center = column.iter().sum::<f64>() / n;
                    let sd = (column.iter().map(|v| (v - center).powi(2)).sum::<f64>() / n).sqrt();
                    Encoder::Linear {
                        index,
                        center,
                        scale: if sd > 0.0 { sd } else { 1.0 },
                    }
                }
                (CovariateKind::Continuous, TermKind::Smooth { df }) => Encoder::Smooth {
                    index,
                    basis: NaturalSplineBasis::fit(&column, df)?,
                },
                (CovariateKind::Categorical { levels }, _) => Encoder::Dummies {
                    index,
                    levels: levels.len(),
                },
            };
            encoders.push(enc);
        }
        let width = usize::from(spec.include_intercept)
            + encoders.iter().map(Encoder::width).sum::<usize>();
        Ok(Self {
            intercept: spec.include_intercept,
            encoders,
            width,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn encode_into(&self, x: &[f64], out: &mut [f64]) {
        let mut pos = 0;
        if self.intercept {
            out[0] = 1.0;
            pos = 1;
        }
        for enc in &self.encoders {
            match enc {
                Encoder::Linear {
                    index,
                    center,
                    scale,
                } => {
                    out[pos] = (x[*index] - center) / scale;
                    pos += 1;
                }
                Encoder::Dummies { index, levels } => {
                    let level = x[*index] as usize;
                    for l in 1..*levels {
                        out[pos + l - 1] = if level == l { 1.0 } else { 0.0 };
                    }
                    pos += levels - 1;
                }
                Encoder::Smooth { index, basis } => {
                    let w = basis.df();
                    basis.eval_into(x[*index], &mut out[pos..pos + w]);
                    pos += w;
                }
            }
        }
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        self.encode_into(x, &mut out);
        out
    }

    fn smooth_knots(&self) -> Vec<Vec<f64>> {
        self.encoders
            .iter()
            .filter_map(|e| match e {
                Encoder::Smooth { basis, .. } => Some(basis.knots()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Binomial,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub ridge: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Linear-predictor magnitude treated as divergence.
    pub eta_limit: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            ridge: DEFAULT_RIDGE,
            max_iter: 100,
            tol: 1e-8,
            eta_limit: 30.0,
        }
    }
}

pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Outcome of a penalized IRLS run on a dense design.
#[derive(Debug, Clone, PartialEq)]
pub struct IrlsFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub separation: bool,
    /// Penalized log-likelihood after each accepted step (index 0 = start).
    pub objective_trace: Vec<f64>,
    /// Unpenalized information matrix `X'WX` at the final coefficients.
    pub information: DMatrix<f64>,
}

/// Dense row-major design matrix.
#[derive(Debug, Clone)]
pub struct Design {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Design {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

fn log1pexp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn penalized_objective(
    family: Family,
    design: &Design,
    y: &[f64],
    beta: &[f64],
    ridge: f64,
    penalize: &[bool],
    eta: &mut [f64],
) -> f64 {
    let mut ll = 0.0;
    for i in 0..design.rows {
        let e: f64 = design.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
        eta[i] = e;
        ll += match family {
            Family::Binomial => y[i] * e - log1pexp(e),
            Family::Gaussian => -0.5 * (y[i] - e).powi(2),
        };
    }
    let pen: f64 = beta
        .iter()
        .zip(penalize)
        .filter(|(_, &p)| p)
        .map(|(b, _)| b * b)
        .sum();
    ll - 0.5 * ridge * pen
}

/// Accumulates `X'WX` (full symmetric) and `X'z` for the given weights.
fn weighted_cross(design: &Design, w: &[f64], z: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let p = design.cols;
    let mut xtwx = vec![0.0; p * p];
    let mut xtz = vec![0.0; p];
    for i in 0..design.rows {
        let row = design.row(i);
        let wi = w[i];
        if wi == 0.0 && z[i] == 0.0 {
            continue;
        }
        for a in 0..p {
            let xa = row[a];
            if xa == 0.0 {
                continue;
            }
            xtz[a] += xa * z[i];
            let wxa = wi * xa;
            let base = a * p;
            for b in a..p {
                xtwx[base + b] += wxa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtwx[a * p + b] = xtwx[b * p + a];
        }
    }
    (DMatrix::from_row_slice(p, p, &xtwx), DVector::from_vec(xtz))
}

/// Solves the intercept score equation `sum(y - expit(eta)) = 0` with the
/// other coefficients held fixed. Used when iteration stopped early, so the
/// fitted probabilities still average to the observed rate.
fn recalibrate_intercept(y: &[f64], beta: &mut [f64], eta: &mut [f64]) {
    let target: f64 = y.iter().sum();
    let n = y.len() as f64;
    if target <= 0.0 || target >= n {
        return;
    }
    let score = |shift: f64| eta.iter().map(|e| expit(e + shift)).sum::<f64>() - target;
    // The score is increasing in the shift; bracket the root then bisect.
    let (mut lo, mut hi) = (-1.0, 1.0);
    while score(lo) > 0.0 {
        lo *= 2.0;
    }
    while score(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if score(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let shift = if score(lo).abs() <= score(hi).abs() {
        lo
    } else {
        hi
    };
    beta[0] += shift;
    for e in eta.iter_mut() {
        *e += shift;
    }
}

/// Maximizes the ridge-penalized log-likelihood by Newton/IRLS with step
/// halving, so the objective never decreases between accepted iterates.
/// `penalize[j]` selects which coefficients carry the ridge penalty.
pub fn irls(
    family: Family,
    design: &Design,
    y: &[f64],
    penalize: &[bool],
    opts: &IrlsOptions,
) -> Result<IrlsFit, NuisanceError> {
    let n = design.rows;
    let p = design.cols;
    let mut beta = vec![0.0; p];
    let mut eta = vec![0.0; n];
    let mut objective =
        penalized_objective(family, design, y, &beta, opts.ridge, penalize, &mut eta);
    let mut trace = vec![objective];
    let mut converged = false;
    let mut separation = false;
    let mut iterations = 0;
    let mut w = vec![0.0; n];
    let mut resid = vec![0.0; n];
    let mut trial = vec![0.0; p];
    let mut trial_eta = vec![0.0; n];

    while iterations < opts.max_iter {
        iterations += 1;
        for i in 0..n {
            match family {
                Family::Binomial => {
                    let mu = expit(eta[i]);
                    w[i] = mu * (1.0 - mu);
                    resid[i] = y[i] - mu;
                }
                Family::Gaussian => {
                    w[i] = 1.0;
                    resid[i] = y[i] - eta[i];
                }
            }
        }
        let (mut h, mut g) = weighted_cross(design, &w, &resid);
        for j in 0..p {
            if penalize[j] {
                h[(j, j)] += opts.ridge;
                g[j] -= opts.ridge * beta[j];
            }
        }
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => return Err(NuisanceError::SingularDesign),
        };
        if step.iter().any(|s| !s.is_finite()) {
            return Err(NuisanceError::SingularDesign);
        }
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for j in 0..p {
                trial[j] = beta[j] + scale * step[j];
            }
            let obj = penalized_objective(
                family,
                design,
                y,
                &trial,
                opts.ridge,
                penalize,
                &mut trial_eta,
            );
            if obj.is_finite() && obj >= objective - 1e-12 * objective.abs().max(1.0) {
                let max_change = (0..p)
                    .map(|j| (trial[j] - beta[j]).abs())
                    .fold(0.0, f64::max);
                beta.copy_from_slice(&trial);
                std::mem::swap(&mut eta, &mut trial_eta);
                objective = obj.max(objective);
                trace.push(objective);
                accepted = true;
                if max_change < opts.tol {
                    converged = true;
                }
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // No ascent direction left at machine precision.
            converged = true;
        }
        if converged {
            break;
        }
        if family == Family::Binomial && eta.iter().any(|e| e.abs() > opts.eta_limit) {
            separation = true;
            break;
        }
    }

    if family == Family::Binomial
        && !converged
        && p > 0
        && !penalize[0]
        && (0..n).all(|i| design.row(i)[0] == 1.0)
    {
        recalibrate_intercept(y, &mut beta, &mut eta);
    }

    let mut wfinal = vec![0.0; n];
    for i in 0..n {
        wfinal[i] = match family {
            Family::Binomial => {
                let mu = expit(eta[i]);
                mu * (1.0 - mu)
            }
            Family::Gaussian => 1.0,
        };
    }
    let zeros = vec![0.0; n];
    let (information, _) = weighted_cross(design, &wfinal, &zeros);
    Ok(IrlsFit {
        coefficients: beta,
        converged,
        iterations,
        separation,
        objective_trace: trace,
        information,
    })
}

/// A fitted additive model for a probability (or conditional mean).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedProbModel {
    pub spec: ModelSpec,
    pub family: Family,
    encoder: DesignEncoder,
    pub coefficients: Vec<f64>,
    pub basis_knots: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub separation: bool,
    pub objective_trace: Vec<f64>,
    /// Set when the training target was constant; the model then predicts
    /// that constant.
    pub constant_target: Option<f64>,
}

impl FittedProbModel {
    pub fn design_width(&self) -> usize {
        self.encoder.width()
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        if let Some(c) = self.constant_target {
            return match self.family {
                Family::Gaussian => c,
                Family::Binomial => {
                    if c >= 1.0 {
                        f64::INFINITY
                    } else if c <= 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        logit(c)
                    }
                }
            };
        }
        let mut row = vec![0.0; self.encoder.width()];
        self.encoder.encode_into(x, &mut row);
        row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }

    /// Unclipped fitted mean at `x`.
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        if let Some(c) = self.constant_target {
            return c;
        }
        let eta = self.linear_predictor(x);
        match self.family {
            Family::Binomial => expit(eta),
            Family::Gaussian => eta,
        }
    }
}

/// `expit(linear predictor)` clipped into `[ε, 1−ε]`.
pub fn predict_prob(m: &FittedProbModel, x: &[f64], clip: ClipPolicy) -> f64 {
    clip.apply(m.predict_mean(x))
}

/// Fits an additive model for `target` on the given covariate rows.
///
/// The intercept is never penalized, so with `ridge = 0` or an intercept-only
/// spec the mean fitted value equals the mean target exactly at convergence.
pub fn fit_logistic_additive(
    schema: &CovariateSchema,
    xs: &[&[f64]],
    target: &[f64],
    spec: &ModelSpec,
    ridge: f64,
) -> Result<FittedProbModel, NuisanceError> {
    fit_additive(schema, xs, target, spec, Family::Binomial, ridge)
}

pub fn fit_additive(
    schema: &CovariateSchema,
    xs: &[&[f64]],
    target: &[f64],
    spec: &ModelSpec,
    family: Family,
    ridge: f64,
) -> Result<FittedProbModel, NuisanceError> {
    if xs.is_empty() {
        return Err(NuisanceError::NoRows);
    }
    if ridge.is_nan() || ridge < 0.0 {
        return Err(NuisanceError::InvalidSpec(format!(
            "ridge must be >= 0, got {ridge}"
        )));
    }
    if family == Family::Binomial && target.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(NuisanceError::NonBinaryTarget);
    }
    let first = target[0];
    if target.iter().all(|&v| v == first) {
        let encoder = DesignEncoder::fit(spec, schema, xs).or_else(|_| {
            // A constant target needs no basis; fall back to the intercept.
            DesignEncoder::fit(&ModelSpec::intercept_only(), schema, xs)
        })?;
        let width = encoder.width();
        return Ok(FittedProbModel {
            spec: spec.clone(),
            family,
            basis_knots: encoder.smooth_knots(),
            encoder,
            coefficients: vec![0.0; width],
            converged: true,
            iterations: 0,
            separation: false,
            objective_trace: Vec::new(),
            constant_target: Some(first),
        });
    }

    let encoder = DesignEncoder::fit(spec, schema, xs)?;
    let width = encoder.width();
    if width >= xs.len() && ridge == 0.0 {
        return Err(NuisanceError::SingularDesign);
    }
    let mut data = vec![0.0; xs.len() * width];
    for (i, x) in xs.iter().enumerate() {
        encoder.encode_into(x, &mut data[i * width..(i + 1) * width]);
    }
    let design = Design {
        rows: xs.len(),
        cols: width,
        data,
    };
    let mut penalize = vec![true; width];
    if encoder.has_intercept() {
        penalize[0] = false;
    }
    let opts = IrlsOptions {
        ridge,
        ..IrlsOptions::default()
    };
    let fit = irls(family, &design, target, &penalize, &opts)?;
    if fit.separation {
        log::debug!(
            "separation detected after {} iterations; predictions will be clipped",
            fit.iterations
        );
    }
    Ok(FittedProbModel {
        spec: spec.clone(),
        family,
        basis_knots: encoder.smooth_knots(),
        encoder,
        coefficients: fit.coefficients,
        converged: fit.converged,
        iterations: fit.iterations,
        separation: fit.separation,
        objective_trace: fit.objective_trace,
        constant_target: None,
    })
}
