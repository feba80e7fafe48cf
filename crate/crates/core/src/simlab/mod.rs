//! Monte Carlo laboratory: truth functions, the three study designs,
//! misspecification scenarios and metrics tables.

pub mod distort;
pub mod generate;
pub mod monte_carlo;
pub mod special;
pub mod truth;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DataError;
use crate::estimators::EstimateError;

pub use distort::{distort_mixture, distort_shrink, Distortions};
pub use generate::{
    gen_study1, gen_study2, gen_study3, generate, generate_with_latent, LatentDraw,
};
pub use monte_carlo::{
    replicate_seed, run_monte_carlo, run_monte_carlo_multi, summarize_metrics, truth_values,
    MetricsRow, MetricsSummary, MetricsTable, ScenarioConfig, TruthValues,
};
pub use special::{
    bvn_cdf, bvn_cdf_std, normal_cdf, normal_quantile, solve_delta_y, std_normal_cdf, Cov2,
    DeltaYEquation,
};
pub use truth::{
    AdditiveLogit, CovariateGenerator, CovariateLaw, InducedTruth, TrueNuisanceSet, TruthTerm,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("no root: target {target} outside (0, {upper})")]
    NoRoot { target: f64, upper: f64 },
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("{failed} of {reps} replicates failed (limit 1%); first error: {first}")]
    TooManyFailures {
        failed: usize,
        reps: usize,
        first: String,
    },
}

/// Simulation study design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Study {
    /// (A1),(A2): shared confounder of consent and outcome.
    One,
    /// (A1),(A3): confounded treatment choice in the OBS.
    Two,
    /// (A1),(A2),(A3).
    Three,
}

impl Study {
    pub fn number(self) -> u8 {
        match self {
            Study::One => 1,
            Study::Two => 2,
            Study::Three => 3,
        }
    }

    /// Scenario labels defined for the study.
    pub fn scenarios(self) -> &'static [char] {
        match self {
            Study::Three => &['a', 'b', 'c', 'd', 'e', 'f', 'g', 'h'],
            _ => &['a', 'b', 'c', 'd'],
        }
    }
}

impl TryFrom<u8> for Study {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Study::One),
            2 => Ok(Study::Two),
            3 => Ok(Study::Three),
            _ => Err(format!("study must be 1, 2 or 3, got {v}")),
        }
    }
}

impl From<Study> for u8 {
    fn from(s: Study) -> u8 {
        s.number()
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Knobs of the data-generating processes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorOptions {
    pub delta_y_equation: DeltaYEquation,
    /// Coefficient of `U` in the Study 2 OBS treatment log-odds.
    pub obs_treatment_confounding: f64,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self {
            delta_y_equation: DeltaYEquation::ObsJoint,
            obs_treatment_confounding: 2.0,
        }
    }
}
