//! `clmm`: simulate, fit, evaluate, and lift closed-loop Markov-modulated
//! Markov chains from the command line, plus canned experiment re-runs.
//! Every command is deterministic given its inputs and seed and leaves a
//! manifest with digests of everything it read and wrote.

mod args;
mod commands;
mod error;
mod fit;
mod manifest;
mod repro;

use clap::Parser;

use crate::error::{CliError, CliResult};

fn main() {
    let cli = args::Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("clmm: error[{}]: {}", e.code(), e);
        std::process::exit(1);
    }
}

fn run(cli: args::Cli) -> CliResult<()> {
    init_thread_pool()?;
    match cli.command {
        args::Command::Simulate(a) => commands::simulate(&a),
        args::Command::Estimate(a) => commands::estimate(&a),
        args::Command::Evaluate(a) => commands::evaluate(&a),
        args::Command::Lift(a) => commands::lift(&a),
        args::Command::Repro(a) => repro::run(&a),
    }
}

/// `CLMM_THREADS` caps the worker pool; unset means the machine default.
/// Results never depend on the pool size, only wall time does.
fn init_thread_pool() -> CliResult<()> {
    match std::env::var("CLMM_THREADS") {
        Ok(raw) => {
            let threads: usize = raw.parse().map_err(|_| {
                CliError::Usage(format!(
                    "CLMM_THREADS must be a positive integer, got {raw:?}"
                ))
            })?;
            if threads == 0 {
                return Err(CliError::Usage(
                    "CLMM_THREADS must be a positive integer, got 0".into(),
                ));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| CliError::Usage(format!("worker pool: {e}")))
        }
        Err(_) => Ok(()),
    }
}
