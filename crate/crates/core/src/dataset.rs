//! Comprehensive-cohort data: covariate schema, observations, CSV I/O and
//! fold planning for cross-fitting.
//!
//! Each row carries covariates `X`, the consent indicator `R` (1 = enrolled in
//! the randomized trial, 0 = observational arm), the treatment `T` and the
//! outcome `Y`. Categorical covariates are stored as level indices inside the
//! same `f64` vector as continuous ones; the schema says which is which.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: unknown level `{value}` for column `{column}`")]
    UnknownLevel {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: field `{field}` is not binary (0/1)")]
    NonBinary { field: String, row: usize },
    #[error("row {row}: cannot parse `{value}` in column `{column}` as a number")]
    UnparseableNumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: missing value in column `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("randomization probability must lie in (0,1), got {0}")]
    InvalidProbability(f64),
    #[error("row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },
    #[error("fold count {k} invalid for {n} rows")]
    InvalidFoldCount { n: usize, k: usize },
    #[error("no rows in cell (R={r}, T={t})")]
    EmptySubgroup { r: u8, t: u8 },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("csv error: {0}")]
    Csv(String),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

impl From<csv::Error> for DataError {
    fn from(e: csv::Error) -> Self {
        DataError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateKind {
    Continuous,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateEntry {
    pub name: String,
    #[serde(flatten)]
    pub kind: CovariateKind,
}

impl CovariateEntry {
    pub fn continuous(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: CovariateKind::Continuous,
        }
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: CovariateKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, CovariateKind::Continuous)
    }

    pub fn n_levels(&self) -> usize {
        match &self.kind {
            CovariateKind::Continuous => 0,
            CovariateKind::Categorical { levels } => levels.len(),
        }
    }
}

/// Ordered description of the covariate vector `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CovariateEntry>", into = "Vec<CovariateEntry>")]
pub struct CovariateSchema {
    entries: Vec<CovariateEntry>,
}

impl CovariateSchema {
    pub fn new(entries: Vec<CovariateEntry>) -> Result<Self, DataError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.name.trim().is_empty() {
                return Err(DataError::InvalidSchema("empty covariate name".into()));
            }
            if !seen.insert(e.name.clone()) {
                return Err(DataError::InvalidSchema(format!(
                    "duplicate covariate `{}`",
                    e.name
                )));
            }
            if let CovariateKind::Categorical { levels } = &e.kind {
                if levels.len() < 2 {
                    return Err(DataError::InvalidSchema(format!(
                        "categorical `{}` needs at least 2 levels",
                        e.name
                    )));
                }
                let distinct: HashSet<_> = levels.iter().collect();
                if distinct.len() != levels.len() {
                    return Err(DataError::InvalidSchema(format!(
                        "categorical `{}` has repeated levels",
                        e.name
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[CovariateEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// Checks that a covariate vector has the right length, finite continuous
    /// values and in-range level indices.
    pub fn validate(&self, x: &[f64]) -> Result<(), String> {
        if x.len() != self.entries.len() {
            return Err(format!(
                "covariate vector has {} entries, schema has {}",
                x.len(),
                self.entries.len()
            ));
        }
        for (v, e) in x.iter().zip(&self.entries) {
            if !v.is_finite() {
                return Err(format!("covariate `{}` is not finite", e.name));
            }
            if let CovariateKind::Categorical { levels } = &e.kind {
                if v.fract() != 0.0 || *v < 0.0 || (*v as usize) >= levels.len() {
                    return Err(format!(
                        "covariate `{}` has invalid level index {v}",
                        e.name
                    ));
                }
            }
        }
        Ok(())
    }
}

impl TryFrom<Vec<CovariateEntry>> for CovariateSchema {
    type Error = DataError;
    fn try_from(entries: Vec<CovariateEntry>) -> Result<Self, Self::Error> {
        CovariateSchema::new(entries)
    }
}

impl From<CovariateSchema> for Vec<CovariateEntry> {
    fn from(s: CovariateSchema) -> Self {
        s.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    #[default]
    Binary,
    Continuous,
}

/// One subject: covariates, consent, treatment and outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    pub r: u8,
    pub t: u8,
    pub y: f64,
}

/// Immutable comprehensive-cohort dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: CovariateSchema,
    rows: Vec<Observation>,
    outcome_kind: OutcomeKind,
    pi_t1: f64,
}

impl Dataset {
    pub fn new(
        schema: CovariateSchema,
        rows: Vec<Observation>,
        outcome_kind: OutcomeKind,
        pi_t1: f64,
    ) -> Result<Self, DataError> {
        if !(pi_t1 > 0.0 && pi_t1 < 1.0) {
            return Err(DataError::InvalidProbability(pi_t1));
        }
        for (i, o) in rows.iter().enumerate() {
            let row = i + 1;
            if o.r > 1 {
                return Err(DataError::NonBinary {
                    field: "R".into(),
                    row,
                });
            }
            if o.t > 1 {
                return Err(DataError::NonBinary {
                    field: "T".into(),
                    row,
                });
            }
            if !o.y.is_finite() {
                return Err(DataError::InvalidRow {
                    row,
                    reason: "outcome is not finite".into(),
                });
            }
            if outcome_kind == OutcomeKind::Binary && o.y != 0.0 && o.y != 1.0 {
                return Err(DataError::NonBinary {
                    field: "Y".into(),
                    row,
                });
            }
            schema
                .validate(&o.x)
                .map_err(|reason| DataError::InvalidRow { row, reason })?;
        }
        Ok(Self {
            schema,
            rows,
            outcome_kind,
            pi_t1,
        })
    }

    pub fn schema(&self) -> &CovariateSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &Observation {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    /// Known randomization probability `P[T=1 | R=1]`.
    pub fn pi_t1(&self) -> f64 {
        self.pi_t1
    }

    /// Known randomization probability of arm `t` in the trial.
    pub fn pi_arm(&self, t: u8) -> f64 {
        if t == 1 {
            self.pi_t1
        } else {
            1.0 - self.pi_t1
        }
    }

    /// Sorts row indices by row content (covariates, then `R`, `T`, `Y`).
    /// Sums taken in this order do not depend on how the file was ordered.
    pub fn sort_canonical(&self, rows: &mut [usize]) {
        rows.sort_by(|&a, &b| {
            let (ra, rb) = (&self.rows[a], &self.rows[b]);
            ra.x.iter()
                .zip(&rb.x)
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ra.r.cmp(&rb.r))
                .then(ra.t.cmp(&rb.t))
                .then(ra.y.total_cmp(&rb.y))
        });
    }

    /// Copy of the dataset with rows reordered by `order` (a permutation).
    pub fn permuted(&self, order: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: order.iter().map(|&i| self.rows[i].clone()).collect(),
            outcome_kind: self.outcome_kind,
            pi_t1: self.pi_t1,
        }
    }
}

/// Counts of rows by `(R, T)`; index as `counts[r][t]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CellCounts {
    pub counts: [[usize; 2]; 2],
}

impl CellCounts {
    pub fn get(&self, r: u8, t: u8) -> usize {
        self.counts[r as usize][t as usize]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// First empty cell, if any, in the order (0,0), (0,1), (1,0), (1,1).
    pub fn first_empty(&self) -> Option<(u8, u8)> {
        for r in 0..2u8 {
            for t in 0..2u8 {
                if self.get(r, t) == 0 {
                    return Some((r, t));
                }
            }
        }
        None
    }
}

pub fn cell_counts(d: &Dataset) -> CellCounts {
    cell_counts_of(d, 0..d.len())
}

pub(crate) fn cell_counts_of(d: &Dataset, rows: impl IntoIterator<Item = usize>) -> CellCounts {
    let mut counts = [[0usize; 2]; 2];
    for i in rows {
        let o = d.row(i);
        counts[o.r as usize][o.t as usize] += 1;
    }
    CellCounts { counts }
}

/// Maps the roles R, T, Y and each covariate to CSV column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    #[serde(default = "default_r")]
    pub r: String,
    #[serde(default = "default_t")]
    pub t: String,
    #[serde(default = "default_y")]
    pub y: String,
    /// Covariate name -> CSV column; covariates not listed use their own name.
    #[serde(default)]
    pub covariates: HashMap<String, String>,
}

fn default_r() -> String {
    "R".into()
}
fn default_t() -> String {
    "T".into()
}
fn default_y() -> String {
    "Y".into()
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            r: default_r(),
            t: default_t(),
            y: default_y(),
            covariates: HashMap::new(),
        }
    }
}

impl ColumnMap {
    pub fn covariate_column<'a>(&'a self, name: &'a str) -> &'a str {
        self.covariates
            .get(name)
            .map(String::as_str)
            .unwrap_or(name)
    }
}

/// JSON schema descriptor: covariate kinds and levels, column names and
/// outcome type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDescriptor {
    pub covariates: CovariateSchema,
    #[serde(default)]
    pub columns: ColumnMap,
    #[serde(default)]
    pub outcome: OutcomeKind,
}

impl SchemaDescriptor {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let mut s = String::new();
        File::open(path.as_ref())?.read_to_string(&mut s)?;
        serde_json::from_str(&s).map_err(|e| DataError::InvalidSchema(e.to_string()))
    }
}

fn parse_binary(raw: &str, field: &str, row: usize) -> Result<u8, DataError> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        "" => Err(DataError::MissingValue {
            row,
            column: field.to_string(),
        }),
        _ => Err(DataError::NonBinary {
            field: field.to_string(),
            row,
        }),
    }
}

/// Reads a headered CSV into a [`Dataset`], keeping file row order.
/// Row numbers in errors are 1-based data rows (the header is not counted).
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &CovariateSchema,
    column_map: &ColumnMap,
    outcome_kind: OutcomeKind,
    pi_t1: f64,
) -> Result<Dataset, DataError> {
    let file = File::open(path.as_ref())?;
    read_csv(file, schema, column_map, outcome_kind, pi_t1)
}

pub fn read_csv<R: Read>(
    reader: R,
    schema: &CovariateSchema,
    column_map: &ColumnMap,
    outcome_kind: OutcomeKind,
    pi_t1: f64,
) -> Result<Dataset, DataError> {
    if !(pi_t1 > 0.0 && pi_t1 < 1.0) {
        return Err(DataError::InvalidProbability(pi_t1));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let r_col = find(&column_map.r)?;
    let t_col = find(&column_map.t)?;
    let y_col = find(&column_map.y)?;
    let cov_cols = schema
        .entries()
        .iter()
        .map(|e| find(column_map.covariate_column(&e.name)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let cell = |c: usize| rec.get(c).unwrap_or("").trim();
        let r = parse_binary(cell(r_col), "R", row)?;
        let t = parse_binary(cell(t_col), "T", row)?;
        let y_raw = cell(y_col);
        let y = match outcome_kind {
            OutcomeKind::Binary => parse_binary(y_raw, "Y", row)? as f64,
            OutcomeKind::Continuous => {
                if y_raw.is_empty() {
                    return Err(DataError::MissingValue {
                        row,
                        column: column_map.y.clone(),
                    });
                }
                y_raw
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DataError::UnparseableNumber {
                        row,
                        column: column_map.y.clone(),
                        value: y_raw.to_string(),
                    })?
            }
        };
        let mut x = Vec::with_capacity(schema.len());
        for (e, &c) in schema.entries().iter().zip(&cov_cols) {
            let raw = cell(c);
            let column = column_map.covariate_column(&e.name).to_string();
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                return Err(DataError::MissingValue { row, column });
            }
            match &e.kind {
                CovariateKind::Continuous => {
                    let v = raw
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| DataError::UnparseableNumber {
                            row,
                            column: column.clone(),
                            value: raw.to_string(),
                        })?;
                    x.push(v);
                }
                CovariateKind::Categorical { levels } => {
                    let idx = levels.iter().position(|l| l == raw).ok_or_else(|| {
                        DataError::UnknownLevel {
                            row,
                            column: column.clone(),
                            value: raw.to_string(),
                        }
                    })?;
                    x.push(idx as f64);
                }
            }
        }
        rows.push(Observation { x, r, t, y });
    }
    Dataset::new(schema.clone(), rows, outcome_kind, pi_t1)
}

/// Writes the dataset as CSV with columns `R,T,Y` followed by the covariates
/// (categoricals written as level labels). Continuous values are printed in
/// shortest round-trip form so that reading the file back is exact.
pub fn write_csv<W: Write>(
    d: &Dataset,
    column_map: &ColumnMap,
    writer: W,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        column_map.r.clone(),
        column_map.t.clone(),
        column_map.y.clone(),
    ];
    header.extend(
        d.schema()
            .entries()
            .iter()
            .map(|e| column_map.covariate_column(&e.name).to_string()),
    );
    w.write_record(&header)?;
    for o in d.rows() {
        let mut rec = vec![o.r.to_string(), o.t.to_string(), format_number(o.y)];
        for (v, e) in o.x.iter().zip(d.schema().entries()) {
            rec.push(match &e.kind {
                CovariateKind::Continuous => format_number(*v),
                CovariateKind::Categorical { levels } => levels[*v as usize].clone(),
            });
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(
    d: &Dataset,
    column_map: &ColumnMap,
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let file = File::create(path.as_ref())?;
    write_csv(d, column_map, file)
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FoldMode {
    /// Random permutation chopped into near-equal blocks.
    #[default]
    Balanced,
    /// Independent uniform fold labels.
    Multinomial,
}

/// Assignment of each row to one of `k` folds (labels `1..=k`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
    seed: u64,
    mode: FoldMode,
}

impl FoldPlan {
    /// Builds a plan from explicit labels in `1..=k`.
    pub fn from_assignment(k: usize, assignment: Vec<usize>, seed: u64) -> Result<Self, DataError> {
        if k == 0 || assignment.iter().any(|&f| f == 0 || f > k) {
            return Err(DataError::InvalidFoldCount {
                n: assignment.len(),
                k,
            });
        }
        Ok(Self {
            k,
            assignment,
            seed,
            mode: FoldMode::Balanced,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> FoldMode {
        self.mode
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Row indices belonging to fold `fold` (1-based), ascending.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Row indices outside fold `fold`, ascending.
    pub fn complement(&self, fold: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.assignment {
            s[f - 1] += 1;
        }
        s
    }

    /// Same plan with rows reordered: row `j` of the result is row `order[j]`.
    pub fn permuted(&self, order: &[usize]) -> FoldPlan {
        FoldPlan {
            k: self.k,
            assignment: order.iter().map(|&i| self.assignment[i]).collect(),
            seed: self.seed,
            mode: self.mode,
        }
    }
}

/// Random fold assignment, deterministic in `(n, k, seed, mode)`. In
/// balanced mode the first `n mod k` folds receive the extra row.
pub fn make_folds(n: usize, k: usize, seed: u64, mode: FoldMode) -> Result<FoldPlan, DataError> {
    if k < 1 || k > n {
        return Err(DataError::InvalidFoldCount { n, k });
    }
    if k == 1 {
        log::warn!("K=1: nuisances are fitted and evaluated on the same rows");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assignment = match mode {
        FoldMode::Balanced => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let base = n / k;
            let extra = n % k;
            let mut labels = vec![0; n];
            let mut pos = 0;
            for fold in 0..k {
                let size = base + usize::from(fold < extra);
                for &row in &perm[pos..pos + size] {
                    labels[row] = fold + 1;
                }
                pos += size;
            }
            labels
        }
        FoldMode::Multinomial => (0..n).map(|_| rng.gen_range(1..=k)).collect(),
    };
    Ok(FoldPlan {
        k,
        assignment,
        seed,
        mode,
    })
}
