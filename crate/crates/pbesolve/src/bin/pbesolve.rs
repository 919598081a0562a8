//! `pbesolve <command> --config <path> [--out <dir>] [--seed N] [--threads N]`
//!
//! Commands: surface, mesh, solve, verify, convergence, energy.
//! Exit codes: 0 success, 1 input/configuration error, 2 solver failure.

use clap::Parser;
use pbesolve::cli::{parse_config, run, Command};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "pbesolve",
    about = "Nonlinear Poisson-Boltzmann electrostatics on 2-D finite element meshes"
)]
struct Cli {
    /// surface | mesh | solve | verify | convergence | energy
    command: String,
    /// Path to the run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (falls back to PBESOLVE_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn real_main(cli: Cli) -> i32 {
    let command = match Command::parse(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let threads = cli.threads.or_else(|| {
        std::env::var("PBESOLVE_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("warning: thread pool already initialized: {e}");
        }
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return 1;
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match run(command, &cfg, &cli.out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn main() {
    std::process::exit(real_main(Cli::parse()));
}
