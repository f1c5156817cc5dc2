//! Command-line front end: `simulate` runs a Monte Carlo campaign, `analyze`
//! fits estimators to a CSV panel.
//!
//! Exit codes: 0 success, 1 unexpected I/O failure, 2 configuration, schema
//! or compatibility error, 3 estimation or harness failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::crossfit::PlanParams;
use crate::data::{read_csv, SmallSample};
use crate::error::{Error, Result};
use crate::estimators::{run_analysis, AnalysisConfig, EstimateResult, EstimatorConfig, EstimatorKind};
use crate::simulation::{monte_carlo, GenConfig, MonteCarloConfig, SimulationReport};

/// Settings shared by both commands, read from a TOML file. Command-line
/// flags take precedence over file values, which take precedence over defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    /// Input CSV for `analyze`.
    pub data: Option<PathBuf>,
    pub simulation: SimulationSection,
    pub analysis: AnalysisConfig,
}

/// Monte Carlo settings of a run file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub replicates: usize,
    pub generator: GenConfig,
    pub beta11_grid: Vec<f64>,
    pub truth: Option<Vec<f64>>,
    pub reference: Option<String>,
    pub max_failure_rate: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let mc = MonteCarloConfig::default();
        Self {
            replicates: mc.replicates,
            generator: mc.generator,
            beta11_grid: mc.beta11_grid,
            truth: mc.truth,
            reference: mc.reference,
            max_failure_rate: mc.max_failure_rate,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config `{}`: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn monte_carlo(&self) -> Result<MonteCarloConfig> {
        let seed = self.seed.ok_or_else(|| Error::Config("seed required (set `seed` or pass --seed)".into()))?;
        let s = &self.simulation;
        Ok(MonteCarloConfig {
            replicates: s.replicates,
            seed,
            generator: s.generator.clone(),
            beta11_grid: s.beta11_grid.clone(),
            truth: s.truth.clone(),
            analysis: self.analysis.clone(),
            reference: s.reference.clone(),
            max_failure_rate: s.max_failure_rate,
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "mrt-excursion", version, about = "Causal excursion effects for micro-randomized trials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte Carlo campaign and write report.{json,csv,md}.
    Simulate(SimulateArgs),
    /// Fit estimators to a CSV panel and write results.{json,txt}.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Input CSV with columns id, t, a, y and optional prob, r, avail.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Estimator names, comma separated or repeated (e.g. wcls,dr_wcls).
    #[arg(long, value_delimiter = ',')]
    pub estimator: Vec<String>,
    /// Moderator formula f(S), e.g. "1 + S".
    #[arg(long)]
    pub moderator: Option<String>,
    /// Control formula g(H) for WCLS and EMEE.
    #[arg(long)]
    pub controls: Option<String>,
    /// Cross-fitting plan: kfold:K=5, timewise:r=1, block:q=15,r=3,B=100 or full.
    #[arg(long)]
    pub plan: Option<String>,
    /// Outcome learner: random_forest, linear, oracle:<column> or constant:<value>.
    #[arg(long)]
    pub learner: Option<String>,
    /// Outcome learner features; defaults to every non-oracle column plus `a`.
    #[arg(long)]
    pub features: Option<String>,
    /// Apply the Mancl–DeRouen small-sample correction.
    #[arg(long)]
    pub small_sample: bool,
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Schema(_)
        | Error::Parameter(_)
        | Error::Formula(_)
        | Error::Plan(_)
        | Error::IncompleteCoverage { .. }
        | Error::Incompatible(_)
        | Error::Config(_)
        | Error::Csv(_) => 2,
        Error::RankDeficient { .. } | Error::Convergence { .. } | Error::HorizonWeight { .. } | Error::Harness(_) => 3,
        Error::Io(_) | Error::Json(_) => 1,
    }
}

fn base_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.workers.is_some() {
        cfg.workers = common.workers;
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    Ok(cfg)
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match workers {
        Some(0) => Err(Error::Config("`workers` must be >= 1".into())),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?
            .install(f),
        None => f(),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out.clone().ok_or_else(|| Error::Config("output directory required (set `out` or pass --out)".into()))?;
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Runs the campaign and writes `report.json`, `report.csv` and `report.md`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulationReport> {
    let mc = cfg.monte_carlo()?;
    let dir = out_dir(cfg)?;
    let report = with_workers(cfg.workers, || monte_carlo(&mc))?;
    fs::write(dir.join("report.json"), report.to_json()?)?;
    fs::write(dir.join("report.csv"), report.to_csv()?)?;
    fs::write(dir.join("report.md"), report.to_markdown())?;
    Ok(report)
}

/// Fits every configured estimator and writes `results.json` and
/// `results.txt`. The first failing estimator's error is returned after the
/// successful ones are written.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<Vec<EstimateResult>> {
    let path = cfg.data.as_ref().ok_or_else(|| Error::Config("input data required (set `data` or pass --data)".into()))?;
    if !path.exists() {
        return Err(Error::Config(format!("data file `{}` does not exist", path.display())));
    }
    cfg.analysis.check()?;
    let dataset = read_csv(path)?;
    let dir = out_dir(cfg)?;
    let seed = cfg.seed.unwrap_or(0);
    let results = with_workers(cfg.workers, || run_analysis(&dataset, &cfg.analysis, seed))?;
    let mut ok = Vec::new();
    let mut first_err = None;
    for (label, r) in results {
        match r {
            Ok(est) => ok.push(est),
            Err(e) => {
                log::error!("{label}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    let tables: Vec<String> = ok.iter().map(EstimateResult::to_table).collect();
    fs::write(dir.join("results.json"), serde_json::to_string_pretty(&ok)?)?;
    fs::write(dir.join("results.txt"), tables.join("\n"))?;
    for t in &tables {
        println!("{t}");
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(ok),
    }
}

fn analyze_config(args: &AnalyzeArgs) -> Result<RunConfig> {
    let mut cfg = base_config(&args.common)?;
    if args.data.is_some() {
        cfg.data = args.data.clone();
    }
    let a = &mut cfg.analysis;
    if let Some(m) = &args.moderator {
        a.moderator = m.clone();
    }
    if let Some(c) = &args.controls {
        a.controls = c.clone();
    }
    if let Some(p) = &args.plan {
        a.plan = p.parse::<PlanParams>()?;
    }
    if args.small_sample {
        a.small_sample = SmallSample::ManclDerouen;
    }
    if !args.estimator.is_empty() {
        a.estimators = args
            .estimator
            .iter()
            .map(|name| Ok(EstimatorConfig::new(name.parse::<EstimatorKind>()?)))
            .collect::<Result<_>>()?;
    }
    for e in &mut a.estimators {
        if let Some(l) = &args.learner {
            e.outcome_learner = l.clone();
        }
        if let Some(f) = &args.features {
            e.outcome_features = f.clone();
        }
    }
    Ok(cfg)
}

/// Parses `args`, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(args) => base_config(&args.common).and_then(|mut cfg| {
            if let Some(r) = args.replicates {
                cfg.simulation.replicates = r;
            }
            let report = cmd_simulate(&cfg)?;
            println!("{}", report.to_markdown());
            Ok(())
        }),
        Command::Analyze(args) => analyze_config(args).and_then(|cfg| cmd_analyze(&cfg).map(|_| ())),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
