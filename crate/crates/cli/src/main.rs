use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

/// Economic dispatch with separable losses: solver and distributed simulator.
///
/// Exit status: 0 ok, 1 invalid input, 2 infeasible instance.
/// Log verbosity follows the EDP_LOG environment variable (error, warn, info, debug).
#[derive(Debug, Parser)]
#[command(name = "edp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate an instance and print its feasibility slacks.
    Check { instance: PathBuf },
    /// Solve an instance centrally and verify the optimality conditions.
    Solve {
        instance: PathBuf,
        /// Tolerance on the aggregate dual gradient.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Tolerance of the optimality-condition checks.
        #[arg(long, default_value_t = 1e-7)]
        kkt_tol: f64,
    },
    /// Run a scenario and optionally write its trace.
    Simulate {
        scenario: PathBuf,
        /// Trace CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print convergence and divergence diagnostics.
        #[arg(long)]
        summary: bool,
        /// Override the scenario's coupling gain.
        #[arg(long)]
        gain: Option<f64>,
        /// Override the scenario's default sampling time.
        #[arg(long)]
        sampling: Option<f64>,
    },
    /// Run a scenario over a grid of gains and sampling times in parallel.
    Sweep {
        scenario: PathBuf,
        /// Comma-separated coupling gains.
        #[arg(long, value_delimiter = ',', required = true)]
        gain: Vec<f64>,
        /// Comma-separated sampling times; defaults to the scenario's.
        #[arg(long, value_delimiter = ',')]
        sampling: Vec<f64>,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EDP_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Check { instance } => commands::check(&instance),
        Command::Solve { instance, tol, kkt_tol } => commands::solve(&instance, tol, kkt_tol),
        Command::Simulate {
            scenario,
            out,
            summary,
            gain,
            sampling,
        } => commands::simulate(&scenario, out.as_deref(), summary, gain, sampling),
        Command::Sweep {
            scenario,
            gain,
            sampling,
            jobs,
        } => commands::sweep(&scenario, &gain, &sampling, jobs),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            commands::exit_code_for(&e)
        }
    }
}
