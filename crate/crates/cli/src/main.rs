//! `maxreg` — command-line harness for the maximal-regularity laboratory:
//! hypothesis checks, evolution solves, operator-norm benchmarks, kernel
//! sweeps, the singular-coefficient dichotomy, and cross-run reports, all
//! driven by a single JSON configuration document and persisted to an
//! append-only run store.
//!
//! Exit codes: 0 success, 1 hypothesis violation or runtime failure,
//! 2 malformed configuration or usage error.

mod commands;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Failure modes mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    /// exit 2: malformed configuration or invalid invocation
    Usage(String),
    /// exit 1: violated hypothesis, runtime failure, unknown run id
    Failure(String),
}

impl CliError {
    fn report(self) -> ExitCode {
        match self {
            CliError::Usage(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
            CliError::Failure(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(1)
            }
        }
    }
}

#[derive(Parser)]
#[command(
    name = "maxreg",
    version,
    about = "Numerical laboratory for maximal Lp-regularity of non-autonomous parabolic problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify declared hypotheses: form bounds, coercivity, sector angles,
    /// resolvent differences, Dini integrals
    Check(RunArgs),
    /// Solve u' + A(t)u = f, u(0) = u0; emit solution tables and the
    /// a-priori report
    Solve(RunArgs),
    /// Benchmark the operator-valued multiplier engine on the family's
    /// resolvent symbol
    #[command(name = "pdo-bench")]
    PdoBench(RunArgs),
    /// Kernel-difference integrals I1, I2 over random time pairs
    Hormander(RunArgs),
    /// Refinement dichotomy for the singular scalar coefficient
    Counterexample(RunArgs),
    /// Cross-run summary tables (mu vs norm with fitted slope, refinement
    /// vs a-priori ratio, p vs norms)
    Report(ReportArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// JSON experiment configuration
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override the configuration's seed
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Run-store directory
    #[arg(long, value_name = "DIR", default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Run ids to summarize (empty list produces empty tables)
    run_ids: Vec<String>,
    /// Run-store directory
    #[arg(long, value_name = "DIR", default_value = "runs")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Check(args) => commands::dispatch("check", args, commands::check::run),
        Command::Solve(args) => commands::dispatch("solve", args, commands::solve::run),
        Command::PdoBench(args) => commands::dispatch("pdo-bench", args, commands::pdo::run),
        Command::Hormander(args) => {
            commands::dispatch("hormander", args, commands::hormander::run)
        }
        Command::Counterexample(args) => {
            commands::dispatch("counterexample", args, commands::counterexample::run)
        }
        Command::Report(args) => commands::report::run(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => err.report(),
    }
}
