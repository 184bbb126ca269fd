//! Batch front end for the `kylebridge` library.
//!
//! Exit status: 0 on success, 1 when a validation or solver check fails, 2 on a
//! configuration error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "kylebridge", version, about = "Schrödinger-bridge Kyle equilibria: kernels, solvers, simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`; default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed (overrides `sim.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Subcommand)]
enum Command {
    /// Conservation and Chapman-Kolmogorov residuals of the configured kernel.
    ValidateKernel,
    /// Solve the Schrödinger system and write potentials and coupling.
    Sinkhorn,
    /// Simulate a path ensemble and write summaries.
    Simulate,
    /// Solve across a decreasing list of eps.
    Sweep,
    /// Summarise the result files in the output directory.
    Report,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let cfg = match (&cli.config, cli.command) {
        (Some(p), _) => Some(RunConfig::load(p)?),
        (None, Command::Report) => None,
        (None, _) => return Err(CliError::Config("--config is required".into())),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    match (cli.command, cfg) {
        (Command::Report, _) => commands::report(&out),
        (Command::ValidateKernel, Some(c)) => commands::validate_kernel(&c, &out),
        (Command::Sinkhorn, Some(c)) => commands::sinkhorn(&c, &out),
        (Command::Simulate, Some(c)) => commands::simulate_cmd(&c, &out, cli.seed),
        (Command::Sweep, Some(c)) => commands::sweep(&c, &out, cli.seed),
        (_, None) => unreachable!("config checked above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
