//! The `trixlab` command-line tool: train, evaluate, report and analyze.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

pub use error::{CliError, CliResult};

pub const THREADS_ENV: &str = "TRIXLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "trixlab", version, about = "Fairness-aware adversarial training lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a run directory.
    Train(TrainArgs),
    /// Class-wise clean and PGD accuracy of a saved model.
    Eval(EvalArgs),
    /// Fairness statistics from class-accuracy tables or run directories.
    Report(ReportArgs),
    /// Feature-space and weight-complexity analyses.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Run directory; defaults to `runs/<run id>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dotted-key config overrides, e.g. `--train.lambda 0.5`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    pub overrides: Vec<String>,
}

/// Where the model and dataset come from.
#[derive(Debug, clap::Args)]
pub struct ModelSource {
    /// Run directory holding `model.json` and `config.json`.
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Run config whose `test` (or `data`) section supplies the dataset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use only the first N samples.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Single radius, `n/d` or `n` meaning `n/255`.
    #[arg(long, conflicts_with = "eps_sweep")]
    pub eps: Option<String>,
    /// `start:end:step` numerators over 255, inclusive.
    #[arg(long)]
    pub eps_sweep: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Step size as a rational; defaults to a tenth of the radius.
    #[arg(long)]
    pub step_size: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// Per-class CSV (`class,clean_acc,robust_acc`), run directory, or
    /// summary CSV (`name,clean_avg,clean_worst,robust_avg,robust_worst`).
    pub input: PathBuf,
    /// Baseline: a per-class CSV or run directory, or for summary input the
    /// row name to compare against.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Output file or directory for `metrics.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Analysis {
    Pca,
    Coverage,
    OvoOva,
}

#[derive(Debug, clap::Args)]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    pub which: Analysis,
    #[command(flatten)]
    pub source: ModelSource,
    /// Project features of PGD adversaries instead of clean inputs.
    #[arg(long)]
    pub attack: bool,
    #[arg(long, default_value_t = 10_000)]
    pub bins: usize,
    /// Components for `pca`, classes for `ovo-ova`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    #[arg(long, default_value_t = 1.0)]
    pub spacing: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; `pca.csv` / `coverage.csv` / stdout by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Caps the global rayon pool at `TRIXLAB_THREADS` when set.
pub fn configure_threads() -> CliResult<()> {
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Input(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Train(args) => commands::cmd_train(&args).map(|dir| println!("{}", dir.display())),
        Command::Eval(args) => commands::cmd_eval(&args),
        Command::Report(args) => commands::cmd_report(&args),
        Command::Analyze(args) => commands::cmd_analyze(&args),
    }
}
