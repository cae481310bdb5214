//! Command-line front end: dataset ingestion, configuration, pipeline
//! execution, and machine-readable reporting.
//!
//! Exit codes: 0 on success, 2 for input or configuration errors, 3 for
//! numerical failures.

mod commands;
mod config;
mod csvio;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "eknockoff",
    version,
    about = "Controlled feature selection with Gaussian knockoffs and error-based importance statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the selection pipeline on a CSV dataset and write a report
    Select(SelectArgs),
    /// Run seeded synthetic benchmark experiments from a config file
    Simulate(SimulateArgs),
    /// Write a knockoff copy of a CSV dataset
    Knockoffs(KnockoffsArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Default)]
pub struct SharedArgs {
    /// Master seed; all random streams derive from it
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML configuration file; command-line flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output base path (extensions are added per file)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker-thread cap; never changes results
    #[arg(long)]
    pub threads: Option<usize>,
    /// Selection method: fdr, kfwer, fdp, or lcd-fdr
    #[arg(long)]
    pub method: Option<String>,
    /// Target FDR / FDP level
    #[arg(long)]
    pub q: Option<f64>,
    /// Target error probability for the stepdown procedures
    #[arg(long)]
    pub alpha: Option<f64>,
    /// False-discovery count for k-FWER control
    #[arg(long)]
    pub k: Option<usize>,
    /// Training-split size
    #[arg(long)]
    pub n1: Option<usize>,
    /// Covariance source: "estimated" or "known:<csv path>"
    #[arg(long)]
    pub covariance: Option<String>,
    /// Predictor: "lasso-cv", "lasso:<lambda>", or "krr:<ridge>"
    #[arg(long)]
    pub predictor: Option<String>,
    /// Tie handling for the error statistic: "randomized" or "strict"
    #[arg(long = "tie-rule")]
    pub tie_rule: Option<String>,
    /// Use upper-tail p-values instead of two-sided ones
    #[arg(long = "one-sided")]
    pub one_sided: bool,
    /// Shortcut for --tie-rule strict with one-sided p-values disabled
    #[arg(long = "paper-literal")]
    pub paper_literal: bool,
}

#[derive(Args)]
struct SelectArgs {
    /// Input dataset: CSV with a header row
    data: PathBuf,
    /// Name of the response column
    #[arg(long)]
    response: Option<String>,
    #[command(flatten)]
    shared: SharedArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML configuration file (same as --config)
    config_path: Option<PathBuf>,
    #[command(flatten)]
    shared: SharedArgs,
}

#[derive(Args)]
struct KnockoffsArgs {
    /// Input dataset: CSV with a header row; every column is a feature
    data: PathBuf,
    /// Optional response column to exclude from the features
    #[arg(long)]
    response: Option<String>,
    #[command(flatten)]
    shared: SharedArgs,
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<eknockoff::Error>() {
        Some(
            eknockoff::Error::Numerical(_)
            | eknockoff::Error::Construction(_)
            | eknockoff::Error::Internal(_),
        ) => 3,
        _ => 2,
    }
}

fn configure_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        // a failure means a pool already exists, which is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Select(args) => {
            configure_threads(args.shared.threads);
            commands::select(&args.data, args.response.as_deref(), &args.shared)
        }
        Command::Simulate(args) => {
            configure_threads(args.shared.threads);
            commands::simulate(args.config_path.as_deref(), &args.shared)
        }
        Command::Knockoffs(args) => {
            configure_threads(args.shared.threads);
            commands::knockoffs(&args.data, args.response.as_deref(), &args.shared)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
