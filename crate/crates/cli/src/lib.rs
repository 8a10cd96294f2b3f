//! `lobbench`: builds datasets from order book sources, trains the baseline,
//! combines prediction files into ensembles, scores everything, backtests the
//! signals and times inference. All outputs go to one run directory with a
//! checksum manifest.

pub mod commands;
pub mod config;
pub mod error;
pub mod latency;
pub mod run_dir;
pub mod source;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{exit, CliError};

use config::{parse_list, Theta};
use error::Result;
use run_dir::RunDir;

/// Environment variable with the worker thread count.
pub const WORKERS_ENV: &str = "LOBBENCH_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "lobbench",
    version,
    about = "Limit order book trend prediction experiments"
)]
pub struct Cli {
    /// TOML run configuration; flags below override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Comma-separated horizons, e.g. `1,5,10`.
    #[arg(long, global = true)]
    pub horizons: Option<String>,
    /// Labelling threshold or `auto`.
    #[arg(long, global = true)]
    pub theta: Option<String>,
    #[arg(long, global = true)]
    pub history: Option<usize>,
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long, global = true)]
    pub seeds: Option<String>,
    #[arg(long, global = true)]
    pub capital: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write one dataset file per horizon and the build report.
    BuildDataset,
    /// Train the baseline MLP for every horizon and seed.
    Train,
    /// Write baseline predictions on the test split.
    Predict,
    /// Combine available predictions into MAJORITY and METALOB.
    Ensemble,
    /// Score every prediction file and render the table.
    Evaluate,
    /// Simulate the long-only strategy on the test days.
    Backtest,
    /// Time single-observation and batched inference.
    Latency,
    /// Re-render the table from the stored metrics.
    Report,
    /// Train, predict, ensemble and evaluate on existing datasets.
    Experiment,
    /// Every step from dataset building to latency.
    Run,
}

impl Cli {
    /// The config file (or defaults) with flag overrides applied.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.run_dir {
            c.run_dir = d.clone();
        }
        if let Some(h) = &self.horizons {
            c.horizons = parse_list(h)?;
        }
        if let Some(t) = &self.theta {
            c.theta = Theta::parse(t)?;
        }
        if let Some(h) = self.history {
            c.history = h;
        }
        if let Some(s) = self.stride {
            c.stride = s;
        }
        if let Some(s) = &self.seeds {
            c.seeds = parse_list(s)?;
        }
        if let Some(x) = self.capital {
            c.capital = x;
        }
        if let Some(e) = self.epochs {
            c.train.epochs = e;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Runs one command and refreshes the manifest. Returns a one-line summary.
pub fn execute(command: Command, config: &RunConfig) -> Result<String> {
    use commands::*;
    let summary = match command {
        Command::BuildDataset => {
            let r = cmd_build_dataset(config)?;
            format!("built {} dataset file(s)", r.horizons.len())
        }
        Command::Train => format!("trained {} model(s)", cmd_train(config)?.len()),
        Command::Predict => format!("wrote {} prediction file(s)", cmd_predict(config)?.len()),
        Command::Ensemble => {
            let r = cmd_ensemble(config)?;
            let done = r.cells.iter().filter(|c| c.skipped.is_none()).count();
            format!("built ensembles for {done} of {} cell(s)", r.cells.len())
        }
        Command::Evaluate => evaluate_summary(&cmd_evaluate(config)?),
        Command::Backtest => format!("ran {} backtest(s)", cmd_backtest(config)?.runs.len()),
        Command::Latency => format!("timed {} model(s)", cmd_latency(config)?.len()),
        Command::Report => format!("table has {} row(s)", cmd_report(config)?.len()),
        Command::Experiment => evaluate_summary(&cmd_run_experiment(config)?),
        Command::Run => {
            cmd_build_dataset(config)?;
            let m = cmd_run_experiment(config)?;
            if matches!(config.source, config::SourceConfig::Fi2010 { .. }) {
                eprintln!("note: backtest skipped, FI-2010 carries no event prices");
            } else {
                cmd_backtest(config)?;
            }
            cmd_latency(config)?;
            evaluate_summary(&m)
        }
    };
    RunDir::new(&config.run_dir).write_manifest()?;
    Ok(summary)
}

fn evaluate_summary(m: &commands::MetricsReport) -> String {
    let mut s = format!("scored {} prediction file(s)", m.cells.len());
    if !m.missing.is_empty() {
        s.push_str(&format!("; missing or unusable: {}", m.missing.join(", ")));
    }
    s
}

fn init_workers() -> Result<()> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("{WORKERS_ENV} must be a positive integer")))?;
    // a second initialization (e.g. repeated in-process calls) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::CONFIG
            } else {
                exit::OK
            };
        }
    };
    let result = init_workers()
        .and_then(|_| cli.resolve_config())
        .and_then(|c| execute(cli.command, &c));
    match result {
        Ok(summary) => {
            println!("{summary}");
            exit::OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
