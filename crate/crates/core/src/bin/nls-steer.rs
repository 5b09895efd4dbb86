use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nls_steer::runner::{exit_code, run, Subcommand};

/// Spectral NLS simulation and control synthesis.
#[derive(Parser)]
#[command(name = "nls-steer", version)]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// Run config (JSON); for `replay`, a manifest or a run directory.
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: out/<subcommand>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to NLS_STEER_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out.unwrap_or_else(|| PathBuf::from("out").join(cli.subcommand.name()));
    match run(cli.subcommand, &cli.config, &out, cli.workers) {
        Ok(m) => {
            eprintln!("{}: wrote {} files to {}", m.subcommand, m.files.len() + 1, out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
