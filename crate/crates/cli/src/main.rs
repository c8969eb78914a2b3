//! `mtsearch`: capacity, bounds, simulation, phase curves, trajectory dumps
//! and property checks for non-adaptive noisy search of a moving target.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mtsearch", version, about)]
struct Cli {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value by dotted path, e.g. `design.m=4`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Capacity of the query-dependent channel and its maximizers.
    Capacity,
    /// Achievability, converse and second-order bounds.
    Bounds,
    /// Monte Carlo sweep of the excess-resolution probability.
    Simulate,
    /// Phase-transition curves.
    Phase {
        /// Comma-separated lengths, overriding `phase.n`.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<u32>>,
        /// Use the printed `d` factor instead of `2d`.
        #[arg(long)]
        printed_form: bool,
    },
    /// First-slot trajectory set as CSV.
    Trajectories,
    /// Property checks; exits with 3 when any check fails.
    Verify,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let mut overrides = cli.overrides.clone();
    if let Command::Phase { n, printed_form } = &cli.command {
        if let Some(n) = n {
            overrides.push(format!(
                "phase.n={}",
                serde_json::to_string(n).expect("list serializes")
            ));
        }
        if *printed_form {
            overrides.push("phase.printed_form=true".into());
        }
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let mut ctx = Context::new(cfg, cli.out)?;
    let path = match cli.command {
        Command::Capacity => commands::run_capacity(&mut ctx)?,
        Command::Bounds => commands::run_bounds(&mut ctx)?,
        Command::Simulate => commands::run_simulate(&mut ctx)?,
        Command::Phase { .. } => commands::run_phase(&mut ctx)?,
        Command::Trajectories => commands::run_trajectories(&mut ctx)?,
        Command::Verify => {
            let (path, failed) = commands::run_verify(&mut ctx)?;
            eprintln!("wrote {}", path.display());
            if failed > 0 {
                return Err(CliError::Verify(failed));
            }
            return Ok(());
        }
    };
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
