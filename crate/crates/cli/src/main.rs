//! `evalscale`: runs, sweeps, urn simulations, dataset exports and reports.
//!
//! Exit codes: 0 success, 1 failure while running, 2 setup error, 3 aborted
//! run or corrupt input, 130 interrupted.

mod export;
mod overrides;
mod report;
mod run;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_SETUP: u8 = 2;
pub const EXIT_ABORTED: u8 = 3;
pub const EXIT_INTERRUPTED: u8 = 130;

/// Tags an error raised after setup succeeded.
#[derive(Debug)]
pub struct RuntimeFailure;

impl std::fmt::Display for RuntimeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("run failed")
    }
}

#[derive(Parser)]
#[command(name = "evalscale", version, about = "Evaluation-driven test-time search")]
struct Cli {
    /// Log verbosity on stderr (repeat for more). `RUST_LOG` wins when set.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a search (with restarts if configured) on one task.
    Run(run::RunArgs),
    /// Run one search per grid point.
    Sweep(run::SweepArgs),
    /// Simulate the refinement urn and write allocation curves.
    Simulate(simulate::SimulateArgs),
    /// Build a weighted training dataset from event logs.
    Export(export::ExportArgs),
    /// Summarize an event log.
    Report(report::ReportArgs),
}

/// Options shared by `run` and `sweep`.
#[derive(Args, Clone)]
pub struct SearchArgs {
    /// Task file (JSON).
    #[arg(long)]
    pub task: PathBuf,
    /// Run configuration file (JSON); defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` applied after the file and the environment, e.g. `C=4` or
    /// `retry.attempts=5`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replay generator output from a JSONL script, or `synthetic` for
    /// seeded random numbers.
    #[arg(long, value_name = "SCRIPT")]
    pub mock_generator: Option<String>,
    /// Score with a JSON mock script instead of the task's evaluator, or
    /// `parse` to read each solution as its own score.
    #[arg(long, value_name = "SCRIPT")]
    pub mock_evaluator: Option<String>,
    #[arg(long)]
    pub restarts: Option<u32>,
    /// Record latencies and wall times in the event log.
    #[arg(long)]
    pub log_timings: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    let result: Result<u8> = match cli.command {
        Command::Run(a) => run::cmd_run(a),
        Command::Sweep(a) => run::cmd_sweep(a),
        Command::Simulate(a) => simulate::cmd_simulate(a),
        Command::Export(a) => export::cmd_export(a),
        Command::Report(a) => report::cmd_report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<RuntimeFailure>().is_some() {
                ExitCode::from(EXIT_RUNTIME)
            } else {
                ExitCode::from(EXIT_SETUP)
            }
        }
    }
}
