//! `qpq`: seeded experiments for the quantum private query simulator.
//!
//! Exit codes: 0 success, 2 configuration error, 3 protocol abort,
//! 4 bound or correctness violation, 1 anything else (I/O).

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qpq_core::{ConfigError, QpqError};

use crate::settings::{Overrides, Settings, SettingsError};

#[derive(Debug, Parser)]
#[command(name = "qpq", version, about = "Device-independent quantum private query simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Establish keys and answer private queries end to end.
    Run {
        /// Write the per-round transcript as JSON lines.
        #[arg(long, value_name = "PATH")]
        transcript: Option<PathBuf>,
    },
    /// Run both CHSH sub-tests.
    Chsh,
    /// Run a dishonest-party strategy against its bound.
    Attack,
    /// Print the closed-form leakage figures.
    Bounds,
    /// Tabulate retrieval curves and leakage rates over θ as CSV.
    Sweep {
        /// Point count for a uniform grid, or a comma-separated list of angles.
        #[arg(long, value_name = "SPEC")]
        grid: Option<String>,
        /// Add Monte-Carlo columns next to the analytic ones.
        #[arg(long)]
        empirical: bool,
    },
}

fn is_config_error(err: &anyhow::Error) -> bool {
    if err.downcast_ref::<SettingsError>().is_some() || err.downcast_ref::<ConfigError>().is_some() {
        return true;
    }
    matches!(
        err.downcast_ref::<QpqError>(),
        Some(
            QpqError::Config(_)
                | QpqError::Domain(_)
                | QpqError::ContractViolation(_)
                | QpqError::EntropySaturated(_)
        )
    )
}

fn run(cli: &Cli) -> anyhow::Result<i32> {
    let grid = match &cli.command {
        Command::Sweep { grid, .. } => grid.as_deref(),
        _ => None,
    };
    let settings = Settings::resolve(&cli.flags, grid)?;
    let out = cli.flags.out.as_deref();
    let status = match &cli.command {
        Command::Run { transcript } => commands::cmd_run(&settings, out, transcript.as_deref())?,
        Command::Chsh => commands::cmd_chsh(&settings, out)?,
        Command::Attack => commands::cmd_attack(&settings, out)?,
        Command::Bounds => commands::cmd_bounds(&settings, out)?,
        Command::Sweep { empirical, .. } => commands::cmd_sweep(&settings, out, *empirical)?,
    };
    Ok(status.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_config_error(&err) {
                ExitCode::from(2)
            } else if matches!(
                err.downcast_ref::<QpqError>(),
                Some(QpqError::Abort(_) | QpqError::RetriesExhausted { .. })
            ) {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
