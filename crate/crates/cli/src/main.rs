mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunArgs;

/// Exit status for bad arguments or configuration.
const EXIT_USAGE: u8 = 64;
/// Exit status for any other failure (unreadable case, IO, numerical).
const EXIT_FAILURE: u8 = 65;

/// Transient stability simulation and individual-machine equal-area
/// assessment.
///
/// `assess` exits with 0 (stable), 1 (unstable), 2 (undecided) or
/// 3 (critical-stable). Errors exit with 64 (usage) or 65 (other).
#[derive(Debug, Parser)]
#[command(name = "imeac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    args: RunArgs,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Simulate a fault and write the trajectory and a summary
    Simulate,
    /// Simulate, find critical machines and their events, and judge the system
    Assess,
    /// Bisect the critical clearing time of one or more fault buses
    Cct,
    /// Write Kimbark curves for selected machines
    ExportKimbark,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let args = match cli.args.with_config() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match cli.command {
        Command::Simulate => commands::simulate(&args),
        Command::Assess => commands::assess(&args),
        Command::Cct => commands::cct(&args),
        Command::ExportKimbark => commands::export_kimbark(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<config::UsageError>().is_some();
            ExitCode::from(if usage { EXIT_USAGE } else { EXIT_FAILURE })
        }
    }
}
