//! Command-line front end: `generate`, `train`, `evaluate` and `explain`.
//!
//! Settings resolve as built-in profile, then `--config` file, then flags.
//! Every command writes the resolved settings next to its outputs.
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use config::{Profile, RunConfig};

use crate::model::ModelKind;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub(crate) fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "icu-senn", version, about = "Self-explaining ICU mortality model")]
pub struct Cli {
    /// Plain-text key=value settings file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for generation, initialization, shuffling and bootstrap.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort file.
    Generate(GenerateArgs),
    /// Train a model and write its best checkpoint.
    Train(TrainArgs),
    /// Discrimination metrics with bootstrap CIs for one or two checkpoints.
    Evaluate(EvaluateArgs),
    /// Per-hour concepts, relevance scores and predictions of one stay.
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub prevalence: Option<f64>,
    /// Output file, relative to the output directory.
    #[arg(long, default_value = "cohort.csv")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Senn,
    Baseline,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Senn => ModelKind::Senn,
            KindArg::Baseline => ModelKind::Baseline,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long, value_enum, default_value = "senn")]
    pub model: KindArg,
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Second checkpoint for a paired comparison.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub resamples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub patient: u64,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| {
        runtime(format!("cannot create {}: {e}", cli.out_dir.display()))
    })?;
    let file = match &cli.config {
        Some(path) => Some(
            std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?,
        ),
        None => None,
    };
    let cfg = RunConfig::resolve(&cli, file.as_deref())?;
    match &cli.command {
        Command::Generate(a) => commands::generate(&cfg, &cli.out_dir, a),
        Command::Train(a) => commands::train(&cfg, &cli.out_dir, a),
        Command::Evaluate(a) => commands::evaluate(&cfg, &cli.out_dir, a),
        Command::Explain(a) => commands::explain(&cfg, &cli.out_dir, a),
    }
}

/// Parses arguments, runs and maps the outcome to an exit code.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
