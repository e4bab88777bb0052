//! `avacc`: experiment harness for the unified averaged/accelerated recursion.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit status 2.
const EXIT_CONFIG: u8 = 2;
/// Exit status 3.
const EXIT_DIVERGED: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical divergence: {0}")]
    Diverged(String),
    #[error(transparent)]
    Core(#[from] avacc_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use avacc_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Diverged(_) => EXIT_DIVERGED,
            CliError::Core(E::Diverged { .. } | E::NonFiniteGradient { .. }) => EXIT_DIVERGED,
            CliError::Core(
                E::InvalidParameter(_)
                | E::DimensionMismatch { .. }
                | E::NonPositiveEigenvalue { .. }
                | E::NonOrthogonalBasis { .. }
                | E::MissingNoiseStatistics { .. }
                | E::RegimeMismatch(_),
            ) => EXIT_CONFIG,
            _ => 1,
        }
    }
}

/// Options shared by every subcommand.
#[derive(Debug, clap::Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configured one.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value_os_t = commands::default_out())]
    pub out: PathBuf,
    /// Number of replications; overrides the configured one.
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Replace the horizon by the current step in horizon-dependent schedules.
    #[arg(long, global = true)]
    pub anytime: bool,
}

#[derive(Debug, Parser)]
#[command(
    name = "avacc",
    version,
    about = "Averaged and accelerated gradient recursions on quadratics"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured algorithms and write mean/stderr curves per algorithm.
    Run,
    /// Classify the roots over an (αh, βh) grid.
    StabilityMap(commands::MapArgs),
    /// Compare exact expected excess with a theorem's bound over a step-size grid.
    BoundsCheck(commands::BoundsArgs),
    /// Evaluate the adversarial lower-bound constructions.
    LowerBound(commands::LowerArgs),
    /// Run the unified method against the averaged, accelerated and stochastic accelerated baselines.
    Compare,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run => commands::run(&cli.common),
        Command::StabilityMap(a) => commands::stability(&cli.common, a),
        Command::BoundsCheck(a) => commands::bounds(&cli.common, a),
        Command::LowerBound(a) => commands::lower(&cli.common, a),
        Command::Compare => commands::compare_cmd(&cli.common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
