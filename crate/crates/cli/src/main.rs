//! Command-line harness around the swimmer simulator: single runs, grid
//! sweeps, tilt-stability batteries, direction-reversal scenarios,
//! flow-field captures, and a physics validation suite.

mod config;
mod error;
mod output;
mod runner;
mod scenarios;
mod sweep;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, Result};

#[derive(Parser)]
#[command(name = "magswim", version, about = "Magnetically driven soft-sheet swimmers in Stokes flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Flat dotted-key configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for grid points; single runs ignore it.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Continue a sweep from its existing CSV instead of starting over.
    #[arg(long)]
    resume: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation: trajectory CSV, summary, optional snapshots.
    Simulate(RunArgs),
    /// Run a two-axis grid: CSV plus SVG heatmap, resumable.
    Sweep(RunArgs),
    /// Per-cycle response to initial tilts about one axis.
    Stability(RunArgs),
    /// Forward phase, then the design's reversal protocol.
    Bidir(RunArgs),
    /// Velocity field on a plane plus flow-rate traces over one cycle.
    Flowfield(RunArgs),
    /// Run the built-in physics checks.
    Validate,
}

fn read_config(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::io(&format!("reading config {}", path.display()), e))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let text = read_config(&args.config)?;
            let spec = config::parse_run(&text)?;
            runner::simulate(&spec, &text, &args.out)
        }
        Command::Sweep(args) => {
            let text = read_config(&args.config)?;
            let spec = config::parse_sweep(&text)?;
            sweep::sweep(&spec, &text, &args.out, args.workers, args.resume)
        }
        Command::Stability(args) => {
            let text = read_config(&args.config)?;
            let spec = config::parse_stability(&text)?;
            scenarios::stability(&spec, &text, &args.out, args.workers)
        }
        Command::Bidir(args) => {
            let text = read_config(&args.config)?;
            let spec = config::parse_run(&text)?;
            scenarios::bidir(&spec, &text, &args.out)
        }
        Command::Flowfield(args) => {
            let text = read_config(&args.config)?;
            let spec = config::parse_flowfield(&text)?;
            scenarios::flowfield(&spec, &text, &args.out)
        }
        Command::Validate => scenarios::validate(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
