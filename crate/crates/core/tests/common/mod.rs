#![allow(dead_code)]

pub mod hand;
pub mod quadrature;

use std::path::Path;
use std::sync::Arc;

use ccs_core::dataset::{
    make_folds, save_csv, ColumnMap, CovariateEntry, CovariateSchema, Dataset, FoldMode, FoldPlan,
    Observation, OutcomeKind, SchemaDescriptor,
};
use ccs_core::estimators::CrossFitter;
use ccs_core::nuisance::{ClipPolicy, ConstantLearner, NuisanceSpecs};
use ccs_core::simlab::{
    generate, generate_with_latent, CovariateGenerator, GeneratorOptions, Study, TrueNuisanceSet,
};

pub fn one_covariate_schema() -> CovariateSchema {
    CovariateSchema::new(vec![CovariateEntry::continuous("age")]).unwrap()
}

/// Rows given as `(r, t, y)`; covariate is the row index.
pub fn tiny(rows: &[(u8, u8, f64)], pi_t1: f64) -> Dataset {
    let obs = rows
        .iter()
        .enumerate()
        .map(|(i, &(r, t, y))| Observation {
            x: vec![i as f64],
            r,
            t,
            y,
        })
        .collect();
    Dataset::new(one_covariate_schema(), obs, OutcomeKind::Binary, pi_t1).unwrap()
}

/// Six rows with every (r, t) cell present.
pub const SIX: [(u8, u8, f64); 6] = [
    (1, 1, 1.0),
    (1, 0, 0.0),
    (1, 1, 0.0),
    (0, 1, 1.0),
    (0, 0, 1.0),
    (0, 1, 0.0),
];

pub fn k1(n: usize) -> FoldPlan {
    make_folds(n, 1, 0, FoldMode::Balanced).unwrap()
}

pub fn constant_fitter(l: ConstantLearner) -> CrossFitter {
    let specs = NuisanceSpecs::default_for(&one_covariate_schema());
    CrossFitter::new(specs, ClipPolicy::default()).with_learner(Arc::new(l))
}

pub fn study_data(study: Study, n: usize, seed: u64) -> Dataset {
    generate(
        study,
        n,
        &TrueNuisanceSet::bari_like(),
        &CovariateGenerator::bari_like(),
        &GeneratorOptions::default(),
        seed,
    )
    .unwrap()
}

/// Writes `d` as CSV plus a schema descriptor into `dir`; returns both paths.
pub fn write_inputs(dir: &Path, d: &Dataset) -> (std::path::PathBuf, std::path::PathBuf) {
    let data = dir.join("data.csv");
    let schema = dir.join("schema.json");
    let columns = ColumnMap::default();
    save_csv(d, &columns, &data).unwrap();
    let desc = SchemaDescriptor {
        covariates: d.schema().clone(),
        columns,
        outcome: d.outcome_kind(),
    };
    std::fs::write(&schema, serde_json::to_string_pretty(&desc).unwrap()).unwrap();
    (data, schema)
}

/// Agreement of simulated frequencies with one truth function.
#[derive(Debug, Clone)]
pub struct Fidelity {
    pub target: String,
    pub strata: usize,
    pub within_3se: usize,
}

impl Fidelity {
    pub fn share(&self) -> f64 {
        self.within_3se as f64 / self.strata as f64
    }
}

/// Splits `(truth, event)` pairs into `strata` equal-count bins ordered by
/// truth and counts bins where the event rate is within 3 binomial SEs of
/// the mean truth.
fn stratified(target: &str, mut pairs: Vec<(f64, bool)>, strata: usize) -> Fidelity {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = pairs.len();
    let mut within = 0;
    for s in 0..strata {
        let bin = &pairs[s * m / strata..(s + 1) * m / strata];
        let k = bin.len() as f64;
        let expected = bin.iter().map(|p| p.0).sum::<f64>() / k;
        let observed = bin.iter().filter(|p| p.1).count() as f64 / k;
        let se = (bin.iter().map(|p| p.0 * (1.0 - p.0)).sum::<f64>()).sqrt() / k;
        if (observed - expected).abs() <= 3.0 * se {
            within += 1;
        }
    }
    Fidelity {
        target: target.to_string(),
        strata,
        within_3se: within,
    }
}

/// Generator fidelity for consent, OBS treatment and every potential
/// outcome by study, on 20 strata each.
pub fn generator_fidelity(study: Study, n: usize, seed: u64) -> Vec<Fidelity> {
    let truths = TrueNuisanceSet::bari_like();
    let opts = GeneratorOptions::default();
    let (d, latent) = generate_with_latent(
        study,
        n,
        &truths,
        &CovariateGenerator::bari_like(),
        &opts,
        seed,
    )
    .unwrap();
    let induced: Vec<_> = d
        .rows()
        .iter()
        .map(|o| truths.induced(study, &o.x, &opts).unwrap())
        .collect();
    let mut out = Vec::new();
    let pairs = d
        .rows()
        .iter()
        .zip(&induced)
        .map(|(o, t)| (t.lambda1, o.r == 1))
        .collect();
    out.push(stratified("lambda1", pairs, 20));
    let pairs = d
        .rows()
        .iter()
        .zip(&induced)
        .filter(|(o, _)| o.r == 0)
        .map(|(o, t)| (t.pi1_obs, o.t == 1))
        .collect();
    out.push(stratified("pi1_obs", pairs, 20));
    for t in 0..2 {
        for r in 0..2u8 {
            let pairs = d
                .rows()
                .iter()
                .zip(&induced)
                .zip(&latent)
                .filter(|((o, _), _)| o.r == r)
                .map(|((_, tr), l)| (tr.tau[t][r as usize], l.y_potential[t] == 1))
                .collect();
            out.push(stratified(&format!("tau{t}(r={r})"), pairs, 20));
        }
    }
    out
}
