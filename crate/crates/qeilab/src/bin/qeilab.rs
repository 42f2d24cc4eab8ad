//! Thin command-line front end over the experiment runners.
//!
//! Exit codes: 0 all checks pass, 1 a theorem check failed, 2 usage or
//! configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qeilab::config::ExperimentConfig;
use qeilab::run::{exit_code_for, run_pointwise, run_qei, run_scan, run_schur, EXIT_USAGE};

#[derive(Debug, Args)]
struct CommonOpts {
    /// Experiment configuration file (.cfg, TOML syntax).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed of the deterministic state family.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Resolution multiplier applied to the grid and mode cutoffs.
    #[arg(long, default_value_t = 1)]
    refine: u32,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Verify the smeared energy inequality over a state sweep.
    Qei(CommonOpts),
    /// Verify the pointwise field bound for a coherent amplitude family.
    Pointwise(CommonOpts),
    /// Run spectral decay and wavefront cone diagnostics.
    Scan(CommonOpts),
    /// Run the entrywise-product positivity battery.
    Schur(CommonOpts),
}

#[derive(Debug, Parser)]
#[command(name = "qeilab", version, about = "Energy-bound verification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    type Runner = fn(&ExperimentConfig, &str, &std::path::Path, u64, u32) -> qeilab::Result<i32>;
    let cli = Cli::parse();
    let (runner, opts): (Runner, &CommonOpts) = match &cli.command {
        Command::Qei(o) => (run_qei, o),
        Command::Pointwise(o) => (run_pointwise, o),
        Command::Scan(o) => (run_scan, o),
        Command::Schur(o) => (run_schur, o),
    };
    let text = match std::fs::read_to_string(&opts.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read config {}: {e}", opts.config.display());
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    match runner(&cfg, &text, &opts.out, opts.seed, opts.refine) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
