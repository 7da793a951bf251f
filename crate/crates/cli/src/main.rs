use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use oam_thermo_cli::{run_subcommand, CliError, ExperimentConfig, Subcommand};

/// Simulate, reconstruct and analyse OAM-shifting thermodynamic processes.
#[derive(Debug, Parser)]
#[command(name = "oam-thermo", version)]
struct Args {
    #[arg(value_enum)]
    command: Subcommand,
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config `outputs`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress the list of written files.
    #[arg(long)]
    quiet: bool,
}

fn run(args: &Args) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.outputs.clone());
    run_subcommand(args.command, &cfg, &out, args.quiet)?;
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
