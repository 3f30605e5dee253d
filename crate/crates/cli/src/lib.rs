//! Command-line front end: config-driven IS² experiments.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use is2::Is2Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Is2Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "is2", version, about = "Importance sampling squared experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Tuning profile written by `tune`.
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Estimate log-likelihoods at proposal draws described by this config.
    #[arg(long, conflicts_with = "input")]
    pub config: Option<PathBuf>,
    /// CSV whose first column holds log-likelihood estimates.
    #[arg(long, required_unless_present = "config")]
    pub input: Option<PathBuf>,
    /// Split the input sample into consecutive batches of this size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvidenceArgs {
    /// Output directory of the first run.
    pub first: PathBuf,
    /// Output directory of the second run.
    pub second: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate γ̄² and the cost model, and derive the optimal σ².
    Tune(CommonArgs),
    /// Run IS² and write draws and a posterior summary.
    Run(CommonArgs),
    /// Log Bayes factor between two runs.
    Evidence(EvidenceArgs),
    /// Run an independent-proposal PMMH chain.
    Pmmh(CommonArgs),
    /// Replicated IS² versus PMMH comparison.
    Compare(CommonArgs),
    /// Normality diagnostics of log-likelihood estimates.
    Diagnose(DiagnoseArgs),
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let exec = commands::configure_threads(cli.threads)?;
    match cli.command {
        Command::Tune(a) => commands::tune(&a, exec),
        Command::Run(a) => commands::run(&a, exec),
        Command::Evidence(a) => commands::evidence(&a),
        Command::Pmmh(a) => commands::pmmh(&a, exec),
        Command::Compare(a) => commands::compare(&a, exec),
        Command::Diagnose(a) => commands::diagnose(&a, exec),
    }
}
