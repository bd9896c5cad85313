//! `bayesfp` command line: fit, predict, evaluate and simulate from a JSON config.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use bayesfp::config::{ConfigError, GridChoice, RunConfig};
use bayesfp::metrics::Metrics;
use bayesfp::pipeline::{self, PipelineError, Predictions};
use bayesfp::posterior::{PosteriorSummary, Report};
use bayesfp::simharness::{aggregate, best_posterior_trace, write_results_csv, write_trace_csv};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit status for invalid configuration or arguments.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for any other failure.
pub const EXIT_FAILURE: i32 = 1;

/// Interaction order used by `--interactions`.
pub const INTERACTION_ORDER: usize = 4;

#[derive(Debug, Parser)]
#[command(name = "bayesfp", version, about = "Bayesian fractional polynomials via GMJMCMC")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search the model space and write report.json and inclusion.txt.
    Fit(RunArgs),
    /// Predict test data from a saved report; writes predictions.csv and metrics.json.
    Predict(PredictArgs),
    /// Fit, then predict the configured test data.
    Evaluate(RunArgs),
    /// Run the simulation study; writes scenario_results.csv, scenario_summary.json and trace.csv.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Search seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Enable interaction features.
    #[arg(long)]
    pub interactions: bool,
    /// Override a config value, e.g. `--set search.q=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Report to predict from; defaults to report.json in the output directory.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Test CSV; defaults to the configured test data.
    #[arg(long)]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    Default,
    Full,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Pin the true model in every population.
    #[arg(long)]
    pub ideal: bool,
    #[arg(long, value_enum)]
    pub grid: Option<GridArg>,
}

/// Marks errors that should exit with [`EXIT_CONFIG`].
#[derive(Debug)]
struct ConfigFailure;

impl std::fmt::Display for ConfigFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("configuration error")
    }
}

impl std::error::Error for ConfigFailure {}

/// Exit status for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let config = err.chain().any(|e| {
        e.is::<ConfigFailure>()
            || e.is::<ConfigError>()
            || matches!(e.downcast_ref::<PipelineError>(), Some(PipelineError::Config(_)))
    });
    if config {
        EXIT_CONFIG
    } else {
        EXIT_FAILURE
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config, &args.overrides)?;
    if let Some(seed) = args.seed {
        cfg.search.seed = seed;
        if let Some(sim) = &mut cfg.simulation {
            sim.seed = seed;
        }
    }
    if let Some(c) = args.chains {
        cfg.search.n_chains = c;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if args.interactions {
        cfg.search.enable_interactions(INTERACTION_ORDER);
    }
    Ok(cfg)
}

fn validated(cfg: RunConfig) -> Result<RunConfig> {
    cfg.validate()?;
    Ok(cfg)
}

/// Files collected in memory and written together at the end.
#[derive(Default)]
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    fn json<T: serde::Serialize>(&mut self, path: PathBuf, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(path, bytes);
        Ok(())
    }

    /// Writes every file; on failure removes the ones already written.
    fn commit(self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written: Vec<&Path> = Vec::new();
        for (path, bytes) in &self.files {
            if let Err(e) = fs::write(path, bytes) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                let _ = fs::remove_file(path);
                return Err(e).with_context(|| format!("writing {}", path.display()));
            }
            written.push(path);
        }
        for (path, _) in &self.files {
            log::info!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn predictions_bytes(p: &Predictions) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    p.write_csv(&mut buf)?;
    Ok(buf)
}

fn add_predictions(out: &mut Outputs, dir: &Path, p: &Predictions, m: &Metrics) -> Result<()> {
    out.add(dir.join("predictions.csv"), predictions_bytes(p)?);
    out.json(dir.join("metrics.json"), m)
}

fn add_report(out: &mut Outputs, dir: &Path, report: &Report) -> Result<()> {
    out.json(dir.join("report.json"), report)?;
    out.add(dir.join("inclusion.txt"), report.inclusion_table().into_bytes());
    Ok(())
}

fn cmd_fit(args: &RunArgs, with_test: bool) -> Result<()> {
    let cfg = validated(load_config(args)?)?;
    let data = pipeline::load_train_test(&cfg)?;
    if with_test && data.test.is_none() {
        return Err(PipelineError::NoTestData.into());
    }
    let train = Arc::new(data.train);
    let outcome = pipeline::fit(train.clone(), &cfg.search)?;
    let report = outcome.summary.to_report(&train, outcome.n_visited);
    let mut out = Outputs::default();
    add_report(&mut out, &cfg.output_dir, &report)?;
    if let Some(test) = &data.test {
        if with_test {
            let (p, m) = pipeline::evaluate(&outcome.summary, &train, test, cfg.prediction_mode)?;
            add_predictions(&mut out, &cfg.output_dir, &p, &m)?;
        }
    }
    out.commit(&cfg.output_dir)
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let cfg = validated(load_config(&args.run)?)?;
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("report.json"));
    let text = fs::read_to_string(&report_path).with_context(|| format!("reading {}", report_path.display()))?;
    let report: Report = serde_json::from_str(&text).with_context(|| format!("parsing {}", report_path.display()))?;
    let summary = PosteriorSummary::from_report(&report)?;
    let data = pipeline::load_train_test(&cfg)?;
    if data.train.response_name() != report.response || data.train.family() != report.family {
        bail!(
            "report was fitted for {} ({:?}), config declares {} ({:?})",
            report.response,
            report.family,
            data.train.response_name(),
            data.train.family()
        );
    }
    let reference = report.reference_columns();
    let test = match &args.test {
        Some(path) => {
            let d = cfg.data.as_ref().ok_or(PipelineError::Missing("data"))?;
            bayesfp::data::load_csv(path, &d.schema, &d.response)?
        }
        None => data.test.ok_or(PipelineError::NoTestData)?,
    };
    let test = test.align_to(&reference).context("test data does not match the report")?;
    let train = data.train.align_to(&reference).context("training data does not match the report")?;
    let (p, m) = pipeline::evaluate(&summary, &train, &test, cfg.prediction_mode)?;
    let mut out = Outputs::default();
    add_predictions(&mut out, &cfg.output_dir, &p, &m)?;
    out.commit(&cfg.output_dir)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg = load_config(&args.run)?;
    let Some(sim) = cfg.simulation.as_mut() else {
        return Err(ConfigFailure).context("config has no `simulation` section");
    };
    if args.ideal {
        sim.ideal = true;
    }
    if let Some(g) = args.grid {
        sim.grid = match g {
            GridArg::Default => GridChoice::Default,
            GridArg::Full => GridChoice::Full,
        };
    }
    let cfg = validated(cfg)?;
    let results = pipeline::simulate(&cfg)?;
    let dir = &cfg.output_dir;
    let mut out = Outputs::default();
    let mut buf = Vec::new();
    write_results_csv(&results, &mut buf)?;
    out.add(dir.join("scenario_results.csv"), buf);
    out.json(dir.join("scenario_summary.json"), &aggregate(&results))?;
    let mut buf = Vec::new();
    write_trace_csv(&best_posterior_trace(&results), &mut buf)?;
    out.add(dir.join("trace.csv"), buf);
    out.commit(dir)
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a, false),
        Command::Evaluate(a) => cmd_fit(a, true),
        Command::Predict(a) => cmd_predict(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}
