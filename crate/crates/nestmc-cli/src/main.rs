//! Command-line front end for the nested Monte Carlo toolkit.
//!
//! Subcommands: `estimate`, `ci`, `budget`, `coverage`, `mm1-tables`,
//! `gen-data`. Experiments are described by a JSON config file
//! (`--config`); a few flags (`--seed`, `--out`, `--format`, `--threads`)
//! override config values. Every result embeds the full config echo and
//! the seed, so any run can be reproduced bit-identically.
//!
//! Exit codes: 0 success, 2 config validation, 3 simulation failure,
//! 4 infeasible budget.

use std::fmt::Write as _;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use nestmc::budget::{
    allocate_budget, derive_pilot_terms, BudgetPlan, DensityFamily, PilotSummary,
    DEFAULT_PILOT_M, DEFAULT_PILOT_N,
};
use nestmc::ci::{
    coverage_experiment, estimate_variance_terms, strong_ci, weak_ci, ConfidenceInterval,
    CoverageReport, ProcedureConfig, TermsMode, VarianceTerms,
};
use nestmc::models::{DataSet, MM1Model, NormalNormalModel, DEFAULT_CYCLES};
use nestmc::risk::{cvar_nested, var_nested, RiskEstimate, RiskKind};
use nestmc::rng::lane_seed;
use nestmc::special::t_quantile;
use nestmc::{simulate_nested, NestedSampleSet, SimulationCost};

const VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------------------
// CLI surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(name = "nestmc", version, about = "Nested Monte Carlo risk estimation under input uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFlags {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<String>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file for command-specific rows or the result record.
    #[arg(long)]
    out: Option<String>,
    /// Output format for --out.
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Rayon thread count (0 = default).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Nested VaR and CVaR point estimates at explicit (N, M).
    Estimate(CommonFlags),
    /// Point estimate plus confidence interval (weak or strong procedure).
    Ci(CommonFlags),
    /// Pilot experiment and CI-width budget allocation.
    Budget(CommonFlags),
    /// Coverage probability over R replications (model with analytic truth).
    Coverage(CommonFlags),
    /// Long-format VaR/CVaR tables for the Bayesian M/M/1 benchmark.
    Mm1Tables(CommonFlags),
    /// Synthesize exponential observation files at true rates.
    GenData(GenDataArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    lambda0: f64,
    #[arg(long)]
    mu0: f64,
    /// Number of observations per column.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out_x: String,
    #[arg(long)]
    out_y: String,
    #[arg(long)]
    seed: Option<u64>,
}

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct Config {
    model: Option<ModelSpec>,
    alpha: Option<f64>,
    beta: Option<f64>,
    beta_outer: Option<f64>,
    beta_inner: Option<f64>,
    n: Option<usize>,
    m: Option<usize>,
    budget: Option<BudgetBlock>,
    replications: Option<usize>,
    /// "weak" or "strong".
    procedure: Option<String>,
    /// "var", "cvar" or "both".
    target: Option<String>,
    seed: Option<u64>,
    out: Option<String>,
    format: Option<String>,
    /// mm1-tables sweep axes.
    lambda0_list: Option<Vec<f64>>,
    n_data_list: Option<Vec<usize>>,
    alpha_list: Option<Vec<f64>>,
    mu0: Option<f64>,
    /// budget: also run the main experiment at the chosen (N, M).
    run_main: Option<bool>,
    /// coverage: use the model's closed-form variance terms (the
    /// published benchmark convention) instead of per-replication
    /// estimates. Defaults to true.
    analytic_terms: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
enum ModelSpec {
    NormalNormal,
    Mm1 {
        lambda0: Option<f64>,
        mu0: Option<f64>,
        n_data: Option<usize>,
        cycles: Option<usize>,
        data_x: Option<String>,
        data_y: Option<String>,
        /// Degenerate beliefs fixed at (lambda0, mu0).
        point_mass: Option<bool>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BudgetBlock {
    cb: f64,
    #[serde(default = "one")]
    c1: f64,
    #[serde(default = "one")]
    c2: f64,
    #[serde(default = "default_gamma0")]
    gamma0: usize,
    #[serde(default = "default_pilot_n")]
    pilot_n: usize,
    #[serde(default = "default_pilot_m")]
    pilot_m: usize,
    #[serde(default = "default_family")]
    family: DensityFamily,
}

fn one() -> f64 {
    1.0
}
fn default_gamma0() -> usize {
    30
}
fn default_pilot_n() -> usize {
    DEFAULT_PILOT_N
}
fn default_pilot_m() -> usize {
    DEFAULT_PILOT_M
}
fn default_family() -> DensityFamily {
    DensityFamily::Gaussian
}

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum CliError {
    Config(String),
    Simulation(String),
    Infeasible(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Infeasible(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Simulation(m) | CliError::Infeasible(m) => m,
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

// ---------------------------------------------------------------------------
// Result record
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
struct MeanWithCi {
    mean: f64,
    half_width: f64,
}

#[derive(Debug, Serialize)]
struct ResultRecord {
    command: String,
    toolkit_version: String,
    seed: u64,
    config: Config,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    estimates: Vec<RiskEstimate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    intervals: Vec<ConfidenceInterval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variance_terms: Option<VarianceTerms>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pilot: Option<PilotSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    budget_plans: Vec<BudgetPlan>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    coverage: Vec<CoverageReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_response: Option<MeanWithCi>,
    wall_clock_secs: f64,
}

impl ResultRecord {
    fn new(command: &str, seed: u64, config: &Config) -> Self {
        Self {
            command: command.to_string(),
            toolkit_version: VERSION.to_string(),
            seed,
            config: config.clone(),
            estimates: Vec::new(),
            intervals: Vec::new(),
            variance_terms: None,
            pilot: None,
            budget_plans: Vec::new(),
            coverage: Vec::new(),
            mean_response: None,
            wall_clock_secs: 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Model dispatch
// ---------------------------------------------------------------------------

enum ModelInstance {
    NormalNormal(NormalNormalModel),
    Mm1(MM1Model),
}

/// Runs a closure generic over the concrete model type.
macro_rules! with_model {
    ($instance:expr, $model:ident => $body:expr) => {
        match $instance {
            ModelInstance::NormalNormal($model) => $body,
            ModelInstance::Mm1($model) => $body,
        }
    };
}

fn build_model(config: &Config, seed: u64) -> Result<ModelInstance, CliError> {
    let spec = match &config.model {
        Some(spec) => spec,
        None => return config_err("model: field is required"),
    };
    match spec {
        ModelSpec::NormalNormal => Ok(ModelInstance::NormalNormal(NormalNormalModel)),
        ModelSpec::Mm1 {
            lambda0,
            mu0,
            n_data,
            cycles,
            data_x,
            data_y,
            point_mass,
        } => {
            let cycles = cycles.unwrap_or(DEFAULT_CYCLES);
            if point_mass.unwrap_or(false) {
                let (l, m) = match (lambda0, mu0) {
                    (Some(l), Some(m)) => (*l, *m),
                    _ => return config_err("model.lambda0/model.mu0: required for point_mass"),
                };
                return Ok(ModelInstance::Mm1(MM1Model::point_mass(l, m, cycles)));
            }
            let data = match (data_x, data_y) {
                (Some(x), Some(y)) => {
                    let x = DataSet::load_column(x)
                        .map_err(|e| CliError::Config(format!("model.data_x: {e}")))?;
                    let y = DataSet::load_column(y)
                        .map_err(|e| CliError::Config(format!("model.data_y: {e}")))?;
                    DataSet::new(x, y)
                        .map_err(|e| CliError::Config(format!("model data: {e}")))?
                }
                (None, None) => {
                    let (l, m, n) = match (lambda0, mu0, n_data) {
                        (Some(l), Some(m), Some(n)) => (*l, *m, *n),
                        _ => {
                            return config_err(
                                "model: mm1 needs (lambda0, mu0, n_data) or (data_x, data_y)",
                            )
                        }
                    };
                    // Data synthesis gets its own seed lane, separate from
                    // the simulation lanes.
                    DataSet::synthesize(l, m, n, lane_seed(seed, u64::MAX))
                        .map_err(|e| CliError::Config(format!("model: {e}")))?
                }
                _ => return config_err("model: data_x and data_y must be given together"),
            };
            Ok(ModelInstance::Mm1(MM1Model::from_data(&data, cycles)))
        }
    }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn load_config(flags: &CommonFlags) -> Result<Config, CliError> {
    let mut config = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("--config {path}: {e}")))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de)
                .map_err(|e| CliError::Config(format!("config field `{}`: {}", e.path(), e.inner())))?
        }
        None => Config::default(),
    };
    if flags.seed.is_some() {
        config.seed = flags.seed;
    }
    if flags.out.is_some() {
        config.out = flags.out.clone();
    }
    if flags.format.is_some() {
        config.format = flags.format.clone();
    }
    if let Some(threads) = flags.threads {
        if threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .ok();
        }
    }
    Ok(config)
}

fn resolve_seed(config: &mut Config) -> u64 {
    match config.seed {
        Some(seed) => seed,
        None => {
            let seed: u64 = rand::random();
            eprintln!("no seed given; generated seed {seed}");
            config.seed = Some(seed);
            seed
        }
    }
}

fn require_alpha(config: &Config) -> Result<f64, CliError> {
    match config.alpha {
        Some(a) if a > 0.0 && a < 1.0 => Ok(a),
        Some(a) => config_err(format!("alpha: must lie in (0,1), got {a}")),
        None => config_err("alpha: field is required"),
    }
}

fn require_nm(config: &Config) -> Result<(usize, usize), CliError> {
    if config.budget.is_some() && (config.n.is_some() || config.m.is_some()) {
        return config_err("n/m and budget are mutually exclusive");
    }
    match (config.n, config.m) {
        (Some(n), Some(m)) if n >= 1 && m >= 1 => Ok((n, m)),
        _ => config_err("n, m: explicit positive sizes are required for this command"),
    }
}

/// β split: explicit (beta_outer, beta_inner) or an even split of beta.
fn beta_split(config: &Config) -> Result<(f64, f64), CliError> {
    match (config.beta_outer, config.beta_inner, config.beta) {
        (Some(o), Some(i), _) => Ok((o, i)),
        (None, None, Some(b)) => Ok((b / 2.0, b / 2.0)),
        (None, None, None) => config_err("beta (or beta_outer + beta_inner): required"),
        _ => config_err("beta_outer and beta_inner must be given together"),
    }
}

fn targets(config: &Config) -> Result<Vec<RiskKind>, CliError> {
    match config.target.as_deref() {
        None | Some("both") => Ok(vec![RiskKind::VaR, RiskKind::CVaR]),
        Some("var") => Ok(vec![RiskKind::VaR]),
        Some("cvar") => Ok(vec![RiskKind::CVaR]),
        Some(other) => config_err(format!("target: expected var|cvar|both, got {other:?}")),
    }
}

fn sim_err(e: impl std::fmt::Display) -> CliError {
    CliError::Simulation(e.to_string())
}

fn write_out(config: &Config, csv: Option<String>, record: &ResultRecord) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(record).expect("record serializes");
    println!("{json}");
    if let Some(path) = &config.out {
        let body = match (config.format.as_deref().unwrap_or("csv"), csv) {
            ("csv", Some(rows)) => rows,
            _ => json,
        };
        std::fs::write(path, body).map_err(|e| CliError::Config(format!("out {path}: {e}")))?;
    }
    Ok(())
}

fn mean_with_ci<T>(samples: &NestedSampleSet<T>) -> MeanWithCi {
    // Standard t-interval on the scenario mean of inner means (the CI
    // procedure for the mean column is otherwise unspecified).
    let means = samples.inner_mean();
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let sd = (means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    MeanWithCi {
        mean,
        half_width: t_quantile(0.975, n - 1.0) * sd / n.sqrt(),
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_estimate(flags: &CommonFlags) -> Result<ResultRecord, CliError> {
    let started = Instant::now();
    let mut config = load_config(flags)?;
    let seed = resolve_seed(&mut config);
    let alpha = require_alpha(&config)?;
    let (n, m) = require_nm(&config)?;
    let model = build_model(&config, seed)?;
    let mut record = ResultRecord::new("estimate", seed, &config);
    with_model!(&model, model => {
        let samples = simulate_nested(model, n, m, seed).map_err(sim_err)?;
        record.estimates.push(var_nested(&samples, alpha).map_err(sim_err)?);
        record.estimates.push(cvar_nested(&samples, alpha).map_err(sim_err)?);
        record.mean_response = Some(mean_with_ci(&samples));
    });
    let mut csv = String::from("kind,layer,alpha,n,m,value\n");
    for e in &record.estimates {
        writeln!(
            csv,
            "{:?},nested,{},{},{},{}",
            e.kind, e.alpha, e.n_outer, e.m_inner, e.value
        )
        .unwrap();
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    write_out(&config, Some(csv), &record)?;
    Ok(record)
}

fn cmd_ci(flags: &CommonFlags) -> Result<ResultRecord, CliError> {
    let started = Instant::now();
    let mut config = load_config(flags)?;
    let seed = resolve_seed(&mut config);
    let alpha = require_alpha(&config)?;
    let (n, m) = require_nm(&config)?;
    let kinds = targets(&config)?;
    let procedure = config.procedure.clone();
    let model = build_model(&config, seed)?;
    let mut record = ResultRecord::new("ci", seed, &config);
    with_model!(&model, model => {
        let samples = simulate_nested(model, n, m, seed).map_err(sim_err)?;
        let terms = estimate_variance_terms(&samples, alpha).map_err(sim_err)?;
        for kind in &kinds {
            let interval = match procedure.as_deref() {
                Some("weak") => {
                    let (bo, bi) = beta_split(&config)?;
                    weak_ci(&samples, alpha, bo, bi, &terms, *kind).map_err(sim_err)?
                }
                Some("strong") => {
                    let beta = config
                        .beta
                        .ok_or_else(|| CliError::Config("beta: required for strong".into()))?;
                    strong_ci(&samples, alpha, beta, &terms, *kind).map_err(sim_err)?
                }
                other => {
                    return config_err(format!("procedure: expected weak|strong, got {other:?}"))
                }
            };
            record.intervals.push(interval);
        }
        record.estimates.push(var_nested(&samples, alpha).map_err(sim_err)?);
        record.estimates.push(cvar_nested(&samples, alpha).map_err(sim_err)?);
        record.variance_terms = Some(terms);
    });
    let mut csv = String::from("procedure,target,alpha,n,m,center,lower,upper,half_width,seed\n");
    for i in &record.intervals {
        writeln!(
            csv,
            "{:?},{:?},{},{},{},{},{},{},{},{}",
            i.procedure,
            i.target,
            alpha,
            n,
            m,
            i.center,
            i.lower,
            i.upper,
            i.half_width(),
            seed
        )
        .unwrap();
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    write_out(&config, Some(csv), &record)?;
    Ok(record)
}

fn cmd_budget(flags: &CommonFlags) -> Result<ResultRecord, CliError> {
    let started = Instant::now();
    let mut config = load_config(flags)?;
    let seed = resolve_seed(&mut config);
    let alpha = require_alpha(&config)?;
    let (beta_outer, beta_inner) = beta_split(&config)?;
    let kinds = targets(&config)?;
    if config.n.is_some() || config.m.is_some() {
        return config_err("n/m and budget are mutually exclusive");
    }
    let block = match &config.budget {
        Some(b) => b.clone(),
        None => return config_err("budget: block is required"),
    };
    let cost = SimulationCost::new(block.c1, block.c2);
    let model = build_model(&config, seed)?;
    let mut record = ResultRecord::new("budget", seed, &config);
    with_model!(&model, model => {
        let pilot_samples =
            simulate_nested(model, block.pilot_n, block.pilot_m, seed).map_err(sim_err)?;
        let pilot =
            derive_pilot_terms(&pilot_samples, alpha, block.family).map_err(sim_err)?;
        for kind in &kinds {
            let plan = allocate_budget(
                &pilot,
                alpha,
                beta_outer,
                beta_inner,
                cost,
                block.cb,
                block.gamma0,
                *kind,
            )
            .map_err(|e| match e {
                nestmc::budget::BudgetError::Infeasible { .. } => {
                    CliError::Infeasible(e.to_string())
                }
                other => CliError::Simulation(other.to_string()),
            })?;
            if config.run_main.unwrap_or(false) {
                let samples =
                    simulate_nested(model, plan.n, plan.m, lane_seed(seed, 1)).map_err(sim_err)?;
                let estimate = match kind {
                    RiskKind::VaR => var_nested(&samples, alpha),
                    RiskKind::CVaR => cvar_nested(&samples, alpha),
                }
                .map_err(sim_err)?;
                record.estimates.push(estimate);
            }
            record.budget_plans.push(plan);
        }
        record.pilot = Some(pilot);
    });
    let mut csv = String::from("target,n,m,predicted_width\n");
    for plan in &record.budget_plans {
        for (n, m, width) in &plan.grid {
            writeln!(csv, "{:?},{n},{m},{width}", plan.target).unwrap();
        }
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    write_out(&config, Some(csv), &record)?;
    Ok(record)
}

fn cmd_coverage(flags: &CommonFlags) -> Result<ResultRecord, CliError> {
    let started = Instant::now();
    let mut config = load_config(flags)?;
    let seed = resolve_seed(&mut config);
    let alpha = require_alpha(&config)?;
    let (n, m) = require_nm(&config)?;
    let kinds = targets(&config)?;
    let replications = match config.replications {
        Some(r) if r >= 1 => r,
        _ => return config_err("replications: positive count required"),
    };
    let proc_config = match config.procedure.as_deref() {
        Some("weak") => {
            let (bo, bi) = beta_split(&config)?;
            ProcedureConfig::Weak {
                beta_outer: bo,
                beta_inner: bi,
            }
        }
        Some("strong") => ProcedureConfig::Strong {
            beta: config
                .beta
                .ok_or_else(|| CliError::Config("beta: required for strong".into()))?,
        },
        other => return config_err(format!("procedure: expected weak|strong, got {other:?}")),
    };
    let model = build_model(&config, seed)?;
    if matches!(model, ModelInstance::Mm1(_)) {
        return config_err(
            "coverage requires a model with analytic truth; use model normal-normal",
        );
    }
    let mut record = ResultRecord::new("coverage", seed, &config);
    with_model!(&model, model => {
        let terms_mode = if config.analytic_terms.unwrap_or(true) {
            TermsMode::Analytic
        } else {
            TermsMode::Estimated
        };
        for kind in &kinds {
            let report = coverage_experiment(
                model,
                alpha,
                proc_config,
                terms_mode,
                *kind,
                n,
                m,
                replications,
                seed,
            )
            .map_err(sim_err)?;
            record.coverage.push(report);
        }
    });
    let mut csv = format!("{}\n", CoverageReport::CSV_HEADER);
    for report in &record.coverage {
        writeln!(csv, "{}", report.csv_row()).unwrap();
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    write_out(&config, Some(csv), &record)?;
    Ok(record)
}

fn cmd_mm1_tables(flags: &CommonFlags) -> Result<ResultRecord, CliError> {
    let started = Instant::now();
    let mut config = load_config(flags)?;
    let seed = resolve_seed(&mut config);
    let (n, m) = require_nm(&config)?;
    let (beta_outer, beta_inner) = beta_split(&config)?;
    let lambda0_list = match &config.lambda0_list {
        Some(l) if !l.is_empty() => l.clone(),
        _ => return config_err("lambda0_list: non-empty list required"),
    };
    let n_data_list = match &config.n_data_list {
        Some(l) if !l.is_empty() => l.clone(),
        _ => return config_err("n_data_list: non-empty list required"),
    };
    let alpha_list = match &config.alpha_list {
        Some(l) if !l.is_empty() => l.clone(),
        _ => return config_err("alpha_list: non-empty list required"),
    };
    let mu0 = config.mu0.unwrap_or(500.0);
    let mut record = ResultRecord::new("mm1-tables", seed, &config);
    let mut csv = String::from(
        "lambda0,n_data,alpha,target,estimate,ci_lower,ci_upper,half_width,mean,mean_half_width\n",
    );
    let mut lane = 0u64;
    for &lambda0 in &lambda0_list {
        for &n_data in &n_data_list {
            lane += 1;
            let data = DataSet::synthesize(lambda0, mu0, n_data, lane_seed(seed, lane))
                .map_err(sim_err)?;
            let model = MM1Model::from_data(&data, DEFAULT_CYCLES);
            let samples =
                simulate_nested(&model, n, m, lane_seed(seed, lane | (1 << 32))).map_err(sim_err)?;
            let mean = mean_with_ci(&samples);
            for &alpha in &alpha_list {
                let terms = estimate_variance_terms(&samples, alpha).map_err(sim_err)?;
                for kind in [RiskKind::VaR, RiskKind::CVaR] {
                    let interval = weak_ci(&samples, alpha, beta_outer, beta_inner, &terms, kind)
                        .map_err(sim_err)?;
                    writeln!(
                        csv,
                        "{lambda0},{n_data},{alpha},{:?},{},{},{},{},{},{}",
                        kind,
                        interval.center,
                        interval.lower,
                        interval.upper,
                        interval.half_width(),
                        mean.mean,
                        mean.half_width
                    )
                    .unwrap();
                    record.intervals.push(interval);
                }
            }
        }
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    write_out(&config, Some(csv), &record)?;
    Ok(record)
}

fn cmd_gen_data(args: &GenDataArgs) -> Result<(), CliError> {
    if !(args.lambda0 > 0.0 && args.mu0 > 0.0) {
        return config_err("lambda0 and mu0 must be positive");
    }
    if args.n < 1 {
        return config_err("n must be at least 1");
    }
    let seed = args.seed.unwrap_or_else(|| {
        let s: u64 = rand::random();
        eprintln!("no seed given; generated seed {s}");
        s
    });
    let data =
        DataSet::synthesize(args.lambda0, args.mu0, args.n, seed).map_err(sim_err)?;
    DataSet::write_column(&args.out_x, &data.x).map_err(sim_err)?;
    DataSet::write_column(&args.out_y, &data.y).map_err(sim_err)?;
    println!(
        "wrote {} interarrival observations to {} and {} service observations to {} (seed {seed})",
        data.x.len(),
        args.out_x,
        data.y.len(),
        args.out_y
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Estimate(flags) => cmd_estimate(flags).map(Some),
        Command::Ci(flags) => cmd_ci(flags).map(Some),
        Command::Budget(flags) => cmd_budget(flags).map(Some),
        Command::Coverage(flags) => cmd_coverage(flags).map(Some),
        Command::Mm1Tables(flags) => cmd_mm1_tables(flags).map(Some),
        Command::GenData(args) => cmd_gen_data(args).map(|_| None),
    };
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
