mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use graphflow::error::Error;

#[derive(Debug, Parser)]
#[command(name = "graphflow", version, about = "Upwind interaction dynamics and transport quasi-metrics on graphs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// JSON config; keys missing from the file keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override a config key, e.g. --set epsilon=0.5 or --set run.dt=0.02.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the upwind interaction dynamics on a point cloud.
    Simulate,
    /// Quasi-metric between every ordered pair of measures on a small graph.
    Distance,
    /// De Giorgi functional, chain-rule residual and upper-gradient check.
    Degiorgi,
    /// Sampling stability study against the largest-n run.
    Converge,
    /// Local limit against the finite-volume reference.
    Locallimit,
    /// Closed-form two-point distances in both directions.
    Twopoint(commands::TwoPointArgs),
    /// Numeric checks of the weight assumptions.
    Assumptions,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    NotConverged(String),
}

impl CliError {
    pub fn validation(msg: String) -> Self {
        Self::Validation(msg)
    }

    fn code(&self) -> u8 {
        match self {
            Self::Validation(_) => 2,
            Self::NotConverged(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Validation(m) | Self::NotConverged(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NotConverged(_) | Error::StepRejected { .. } => Self::NotConverged(e.to_string()),
            other => Self::Validation(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate => commands::simulate(&cli.common),
        Command::Distance => commands::distance(&cli.common),
        Command::Degiorgi => commands::degiorgi(&cli.common),
        Command::Converge => commands::converge(&cli.common),
        Command::Locallimit => commands::locallimit(&cli.common),
        Command::Twopoint(args) => commands::twopoint(args, &cli.common),
        Command::Assumptions => commands::assumptions(&cli.common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
