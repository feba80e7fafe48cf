//! Command-line front end: `analyze`, `simulate` and `diagnose`.
//!
//! Exit codes: 0 on success, 2 on invalid input or configuration, 3 when
//! estimation or simulation fails at run time.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{load_csv, make_folds, DataError, Dataset, FoldMode, SchemaDescriptor};
use crate::diagnostics::{positivity_report, test_a2a3, IndependenceTestResult, PositivityReport};
use crate::estimators::{
    ContrastReport, CrossFitter, Estimand, EstimandRequest, EstimateError, EstimateReport,
    EstimatorFamily, SeMode,
};
use crate::nuisance::{
    fit_bundle_with, AdditiveLearner, ClipPolicy, NuisanceError, NuisanceSpecs, Requirements,
};
use crate::report::{percent, sig6};
use crate::simlab::monte_carlo::tables_to_csv;
use crate::simlab::{run_monte_carlo_multi, MetricsTable, ScenarioConfig, SimError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "ccs",
    version,
    about = "Cross-fitted estimators for comprehensive cohort studies"
)]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate arm means and contrasts from a CSV.
    Analyze(AnalyzeArgs),
    /// Run simulation scenarios from a JSON file.
    Simulate(SimulateArgs),
    /// Test the (A2),(A3) implication and summarize positivity.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// JSON with covariates, column names and outcome kind.
    #[arg(long)]
    pub schema: PathBuf,
    /// Trial randomization probability for arm 1.
    #[arg(long)]
    pub pi_t1: f64,
    #[arg(long, default_value_t = ClipPolicy::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// JSON nuisance model specifications.
    #[arg(long)]
    pub specs: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Estimator family such as `mu:a1a2` or `nu:a1`; repeatable. Default: all.
    #[arg(long = "estimand")]
    pub estimands: Vec<EstimatorFamily>,
    #[arg(long, default_value_t = 5)]
    pub splits: usize,
    #[arg(long, env = "CCS_SEED", default_value_t = 0)]
    pub seed: u64,
    /// `if-difference` or `independent-arms`.
    #[arg(long, default_value = "if-difference")]
    pub se_mode: SeMode,
    #[arg(long)]
    pub multinomial_folds: bool,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario JSON; `misspec` may be one label or a list.
    pub scenario: PathBuf,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::InvalidRequest(_) | EstimateError::Data(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) | SimError::Data(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// writing human-readable output to `out`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let text = pool.install(|| match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(s) => cmd_simulate(s),
        Command::Diagnose(d) => cmd_diagnose(d),
    })?;
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Runtime(e.to_string()))
}

struct Loaded {
    data: Dataset,
    specs: NuisanceSpecs,
    clip: ClipPolicy,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid {what} {}: {e}", path.display())))
}

fn load(args: &DataArgs) -> Result<Loaded, CliError> {
    let clip = ClipPolicy::new(args.epsilon).map_err(|e| CliError::Config(e.to_string()))?;
    let desc = SchemaDescriptor::from_json_file(&args.schema)?;
    let data = load_csv(
        &args.data,
        &desc.covariates,
        &desc.columns,
        desc.outcome,
        args.pi_t1,
    )?;
    let specs = match &args.specs {
        Some(p) => read_json(p, "specs")?,
        None => NuisanceSpecs::default_for(&desc.covariates),
    };
    specs
        .validate(data.schema())
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Loaded { data, specs, clip })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Full machine-readable result of `analyze`.
#[derive(Debug, Serialize)]
pub struct AnalysisOutput {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub pi_t1: f64,
    pub se_mode: SeMode,
    pub estimates: Vec<EstimateReport>,
    pub contrasts: Vec<ContrastReport>,
}

fn parameter(request: &EstimandRequest) -> String {
    match request.estimand {
        Estimand::Mu => format!("mu{}", request.arm),
        Estimand::Nu => format!("nu{}", request.arm),
    }
}

fn contrast_parameter(f: &EstimatorFamily) -> &'static str {
    match f.estimand {
        Estimand::Mu => "delta_cc",
        Estimand::Nu => "delta_rct",
    }
}

pub const ANALYSIS_CSV_HEADER: &str = "assumptions,parameter,estimate,se,ci_lower,ci_upper";

/// One row per estimate and per contrast; six significant digits.
pub fn analysis_csv(o: &AnalysisOutput) -> String {
    let mut s = String::from(ANALYSIS_CSV_HEADER);
    s.push('\n');
    let mut line = |assumptions: &str, param: &str, point: f64, se: f64, ci: (f64, f64)| {
        s.push_str(&format!(
            "\"{assumptions}\",{param},{},{},{},{}\n",
            sig6(point),
            sig6(se),
            sig6(ci.0),
            sig6(ci.1)
        ));
    };
    for r in &o.estimates {
        line(
            r.request.assumptions.label(),
            &parameter(&r.request),
            r.point,
            r.se,
            r.ci95,
        );
    }
    for c in &o.contrasts {
        line(
            c.family.assumptions.label(),
            contrast_parameter(&c.family),
            c.delta,
            c.se,
            c.ci95,
        );
    }
    s
}

fn analysis_text(o: &AnalysisOutput) -> String {
    let mut s = format!("n = {}, K = {}, seed = {}\n", o.n, o.k, o.seed);
    s.push_str(&format!(
        "{:<10} {:<10} {:>9} {:>8}  {}\n",
        "Assumptions", "Parameter", "Estimate", "SE", "95% CI"
    ));
    let mut line = |a: &str, p: &str, point: f64, se: f64, ci: (f64, f64)| {
        s.push_str(&format!(
            "{:<11} {:<10} {:>9} {:>8}  ({}, {})\n",
            a,
            p,
            percent(point),
            percent(se),
            percent(ci.0),
            percent(ci.1)
        ));
    };
    for r in &o.estimates {
        line(
            r.request.assumptions.label(),
            &parameter(&r.request),
            r.point,
            r.se,
            r.ci95,
        );
    }
    for c in &o.contrasts {
        line(
            c.family.assumptions.label(),
            contrast_parameter(&c.family),
            c.delta,
            c.se,
            c.ci95,
        );
    }
    let unconverged: Vec<String> = o
        .estimates
        .iter()
        .filter(|r| !r.nuisance_converged())
        .map(|r| r.request.label())
        .collect();
    if !unconverged.is_empty() {
        s.push_str(&format!(
            "warning: nuisance fits did not converge for {}\n",
            unconverged.join("; ")
        ));
    }
    s
}

/// Runs `analyze` without touching the file system beyond reading inputs.
pub fn analyze(args: &AnalyzeArgs) -> Result<AnalysisOutput, String> {
    analyze_inner(args).map_err(|e| e.message().to_string())
}

fn analyze_inner(args: &AnalyzeArgs) -> Result<AnalysisOutput, CliError> {
    let Loaded { data, specs, clip } = load(&args.data)?;
    let families = if args.estimands.is_empty() {
        EstimatorFamily::ALL.to_vec()
    } else {
        args.estimands.clone()
    };
    let mut requests = Vec::new();
    for f in families {
        for arm in [1, 0] {
            let r = f.arm(arm);
            if !requests.contains(&r) {
                requests.push(r);
            }
        }
    }
    if args.splits == 0 {
        return Err(CliError::Config("--splits must be at least 1".into()));
    }
    let mode = if args.multinomial_folds {
        FoldMode::Multinomial
    } else {
        FoldMode::Balanced
    };
    let plan = make_folds(data.len(), args.splits, args.seed, mode)?;
    let fitter = CrossFitter::new(specs, clip).with_se_mode(args.se_mode);
    let result = fitter.run(&data, &plan, &requests)?;
    Ok(AnalysisOutput {
        n: data.len(),
        k: args.splits,
        seed: args.seed,
        epsilon: clip.epsilon,
        pi_t1: data.pi_t1(),
        se_mode: args.se_mode,
        estimates: result.reports,
        contrasts: result.contrasts,
    })
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<String, CliError> {
    let o = analyze_inner(args)?;
    if let Some(p) = &args.out_json {
        write_file(p, &to_json(&o))?;
    }
    if let Some(p) = &args.out_csv {
        write_file(p, &analysis_csv(&o))?;
    }
    Ok(analysis_text(&o))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Labels {
    One(char),
    Many(Vec<char>),
}

/// Reads a scenario file; returns the config (with the first label) and
/// all requested labels.
pub fn read_scenario(path: &Path) -> Result<(ScenarioConfig, Vec<char>), String> {
    read_scenario_inner(path).map_err(|e| e.message().to_string())
}

fn read_scenario_inner(path: &Path) -> Result<(ScenarioConfig, Vec<char>), CliError> {
    let v: serde_json::Value = read_json(path, "scenario")?;
    scenario_from_value(v)
        .map_err(|e| CliError::Config(format!("invalid scenario {}: {e}", path.display())))
}

/// Parses scenario JSON text; `misspec` may be one label or a list.
pub fn parse_scenario(text: &str) -> Result<(ScenarioConfig, Vec<char>), String> {
    let v: serde_json::Value =
        serde_json::from_str(text).map_err(|e| format!("invalid scenario: {e}"))?;
    scenario_from_value(v)
}

fn scenario_from_value(mut v: serde_json::Value) -> Result<(ScenarioConfig, Vec<char>), String> {
    if !v.is_object() {
        return Err("scenario must be a JSON object".into());
    }
    let raw = v
        .get("misspec")
        .cloned()
        .unwrap_or(serde_json::Value::String("a".into()));
    let labels = match serde_json::from_value::<Labels>(raw) {
        Ok(Labels::One(c)) => vec![c],
        Ok(Labels::Many(cs)) if !cs.is_empty() => cs,
        _ => return Err("misspec must be a scenario label or a non-empty list of labels".into()),
    };
    v["misspec"] = serde_json::Value::String(labels[0].to_string());
    let cfg: ScenarioConfig = serde_json::from_value(v).map_err(|e| e.to_string())?;
    Ok((cfg, labels))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<String, CliError> {
    let (cfg, labels) = read_scenario_inner(&args.scenario)?;
    for &l in &labels {
        ScenarioConfig {
            misspec: l,
            ..cfg.clone()
        }
        .validate()?;
    }
    let tables = run_monte_carlo_multi(&cfg, &labels)?;
    if let Some(p) = &args.out_json {
        write_file(p, &to_json(&tables))?;
    }
    if let Some(p) = &args.out_csv {
        write_file(p, &tables_to_csv(&tables))?;
    }
    Ok(simulation_text(&tables))
}

fn simulation_text(tables: &[MetricsTable]) -> String {
    let mut s = String::new();
    for t in tables {
        s.push_str(&format!(
            "Study {} scenario ({}) n = {}, reps = {}, failed = {}\n",
            t.study, t.misspec, t.n, t.reps, t.failed_reps
        ));
        s.push_str(&format!(
            "{:<10} {:<9} {:>8} {:>8} {:>8} {:>9} {:>8}\n",
            "Parameter", "Estimator", "Bias", "Mean SE", "SD", "Coverage", "RMSE"
        ));
        for r in t.rows.iter().chain(&t.delta_rows) {
            s.push_str(&format!(
                "{:<10} {:<9} {:>8} {:>8} {:>8} {:>9} {:>8}\n",
                r.parameter,
                r.estimator,
                format!("{:.2}%", 100.0 * r.metrics.bias),
                format!("{:.2}%", 100.0 * r.metrics.mean_se),
                format!("{:.2}%", 100.0 * r.metrics.sd),
                format!("{:.2}%", 100.0 * r.metrics.coverage),
                format!("{:.2}%", 100.0 * r.metrics.rmse),
            ));
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Serialize)]
pub struct DiagnosisOutput {
    pub n: usize,
    pub independence: Vec<IndependenceTestResult>,
    pub positivity: PositivityReport,
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<DiagnosisOutput, String> {
    diagnose_inner(args).map_err(|e| e.message().to_string())
}

fn nuisance_config_error(e: NuisanceError) -> CliError {
    match e {
        NuisanceError::EmptySubgroup { .. }
        | NuisanceError::InvalidSpec(_)
        | NuisanceError::NoRows => CliError::Config(e.to_string()),
        _ => CliError::Runtime(e.to_string()),
    }
}

fn diagnose_inner(args: &DiagnoseArgs) -> Result<DiagnosisOutput, CliError> {
    let Loaded { data, specs, clip } = load(&args.data)?;
    let mut independence = Vec::with_capacity(2);
    for arm in [1, 0] {
        independence.push(test_a2a3(&data, arm, &specs.tau_pooled).map_err(nuisance_config_error)?);
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let req = Requirements {
        lambda1: true,
        pi1_obs: true,
        ..Requirements::default()
    };
    let bundle = fit_bundle_with(
        &data,
        &all,
        &specs,
        clip,
        &AdditiveLearner { ridge: specs.ridge },
        req,
    )
    .map_err(nuisance_config_error)?;
    let positivity = positivity_report(&data, &bundle, clip);
    Ok(DiagnosisOutput {
        n: data.len(),
        independence,
        positivity,
    })
}

fn diagnosis_text(o: &DiagnosisOutput) -> String {
    let mut s = format!(
        "n = {}\nY independent of R given T, X (conditional odds ratio of R):\n",
        o.n
    );
    for t in &o.independence {
        s.push_str(&format!(
            "  arm {}: OR {:.3} (95% CI {:.3}, {:.3}){}{}\n",
            t.arm,
            t.or_point,
            t.or_ci95.0,
            t.or_ci95.1,
            if t.rejects() { "  rejects at 5%" } else { "" },
            if t.converged { "" } else { "  [not converged]" },
        ));
    }
    s.push_str(&format!(
        "Positivity (epsilon = {}):\n",
        o.positivity.epsilon
    ));
    let mut dist = |name: &str, d: &Option<crate::diagnostics::DistributionSummary>| {
        if let Some(d) = d {
            s.push_str(&format!(
                "  {name:<8} min {:.4}  max {:.4}  clipped {}\n",
                d.min, d.max, d.clipped
            ));
        }
    };
    dist("lambda1", &o.positivity.lambda1);
    dist("pi1_obs", &o.positivity.pi1_obs);
    dist("pi1_x", &o.positivity.pi1_x);
    s
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<String, CliError> {
    let o = diagnose_inner(args)?;
    if let Some(p) = &args.out_json {
        write_file(p, &to_json(&o))?;
    }
    Ok(diagnosis_text(&o))
}
