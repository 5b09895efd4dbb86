//! The config-driven pipeline behind `nls-steer`: plan a chain, synthesize
//! controls, simulate them from the written CSVs, then replay the
//! synthesis manifest.
//!
//!     cargo run --release --example cli_pipeline
//!
//! Artifacts go to `out/` at the workspace root, where the sample configs
//! in `configs/` expect them.

use std::path::PathBuf;

use nls_steer::runner::{run, Subcommand};

fn main() -> nls_steer::Result<()> {
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let out = configs.join("../out");
    for (cmd, cfg) in [
        (Subcommand::Plan, "plan.json"),
        (Subcommand::Synthesize, "synthesize.json"),
        (Subcommand::Simulate, "simulate.json"),
    ] {
        let m = run(cmd, &configs.join(cfg), &out.join(cmd.name()), None)?;
        println!("{}: {} files, config sha256 {}", m.subcommand, m.files.len(), &m.config_sha256[..12]);
    }
    let again = run(Subcommand::Replay, &out.join("synthesize"), &out.join("replay"), Some(1))?;
    println!("replay of {} reproduced {} files", again.subcommand, again.files.len());
    Ok(())
}
