//! Config-driven runs behind the `nls-steer` binary.
//!
//! Every run reads one JSON config, writes its artifacts into an output
//! directory and finishes with `manifest.json`, which embeds the config
//! and hashes every artifact. `replay` re-runs a manifest and compares.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

pub use commands::{Outputs, ProgramFile, ProgramMode};
pub use config::RunConfig;
pub use manifest::{FileEntry, Manifest, MANIFEST};

use crate::error::{Error, Result};
use crate::field::SIGN_CONVENTION;

/// Environment variable giving the worker count when `--workers` is absent.
pub const WORKERS_ENV: &str = "NLS_STEER_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Saturate,
    Plan,
    Synthesize,
    Simulate,
    Steer,
    Relaxnorm,
    Sweep,
    /// Re-run the config embedded in a manifest and compare artifacts.
    Replay,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Saturate => "saturate",
            Subcommand::Plan => "plan",
            Subcommand::Synthesize => "synthesize",
            Subcommand::Simulate => "simulate",
            Subcommand::Steer => "steer",
            Subcommand::Relaxnorm => "relaxnorm",
            Subcommand::Sweep => "sweep",
            Subcommand::Replay => "replay",
        }
    }

    fn parse(name: &str) -> Option<Subcommand> {
        <Subcommand as clap::ValueEnum>::from_str(name, false).ok()
    }
}

/// Process exit code for an error: 2 for configuration and input
/// problems, 3 for numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::BlowupDetected { .. }
        | Error::ContractionFailure { .. }
        | Error::BootAllocation(_)
        | Error::FrameConditioning(_)
        | Error::ReplayMismatch(_) => 3,
        _ => 2,
    }
}

/// `--workers`, else `NLS_STEER_WORKERS`, else rayon's default.
pub fn resolve_workers(cli: Option<usize>) -> Result<Option<usize>> {
    let n = match cli {
        Some(n) => Some(n),
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("{WORKERS_ENV}={v:?} is not a worker count")))?,
            ),
            _ => None,
        },
    };
    if n == Some(0) {
        return Err(Error::Config("worker count must be at least 1".into()));
    }
    Ok(n)
}

/// Runs `cmd` with the config at `config` and writes into `out`.
pub fn run(cmd: Subcommand, config: &Path, out: &Path, workers: Option<usize>) -> Result<Manifest> {
    let workers = resolve_workers(workers)?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = workers {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?
    };
    pool.install(|| match cmd {
        Subcommand::Replay => replay(config, out),
        _ => {
            let bytes = std::fs::read(config)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", config.display())))?;
            let root = config.parent().map(Path::to_path_buf).unwrap_or_default();
            execute(cmd, &bytes, &root, out)
        }
    })
}

fn execute(cmd: Subcommand, bytes: &[u8], root: &Path, out: &Path) -> Result<Manifest> {
    let started = manifest::unix_now();
    let cfg = RunConfig::from_slice(bytes)?;
    let mut outputs = Outputs::new(out.to_path_buf())?;
    match cmd {
        Subcommand::Saturate => commands::saturate(&cfg, &mut outputs)?,
        Subcommand::Plan => commands::plan(&cfg, &mut outputs)?,
        Subcommand::Synthesize => commands::synthesize(&cfg, root, &mut outputs)?,
        Subcommand::Simulate => commands::simulate(&cfg, root, &mut outputs)?,
        Subcommand::Steer => commands::steer(&cfg, root, &mut outputs)?,
        Subcommand::Relaxnorm => commands::relaxnorm(&cfg, root, &mut outputs)?,
        Subcommand::Sweep => commands::sweep(&cfg, root, &mut outputs)?,
        Subcommand::Replay => unreachable!("replay is dispatched separately"),
    }
    let files = manifest::index_files(out, &outputs.files)?;
    let root = if root.as_os_str().is_empty() { PathBuf::from(".") } else { root.to_path_buf() };
    let m = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: cmd.name().into(),
        config_sha256: manifest::sha256_hex(bytes),
        config: serde_json::from_slice(bytes)?,
        config_dir: std::fs::canonicalize(&root).unwrap_or(root),
        sign_convention: SIGN_CONVENTION.into(),
        discretization: cfg.discretization.clone(),
        eps_ladder: outputs.eps_ladder,
        chain: outputs.chain,
        started_unix: started,
        finished_unix: manifest::unix_now(),
        files,
    };
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    std::fs::write(out.join(MANIFEST), text)?;
    Ok(m)
}

/// Re-runs the config embedded in the manifest at `path` (or in
/// `path/manifest.json`) into `out` and fails when any artifact differs.
fn replay(path: &Path, out: &Path) -> Result<Manifest> {
    let path = if path.is_dir() { path.join(MANIFEST) } else { path.to_path_buf() };
    let recorded = Manifest::read(&path).map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
    let cmd = Subcommand::parse(&recorded.subcommand)
        .filter(|c| *c != Subcommand::Replay)
        .ok_or_else(|| Error::Config(format!("manifest names unknown subcommand {:?}", recorded.subcommand)))?;
    let bytes = serde_json::to_vec(&recorded.config)?;
    let fresh = execute(cmd, &bytes, &recorded.config_dir, out)?;
    let diff = recorded.differences(&fresh);
    if !diff.is_empty() {
        return Err(Error::ReplayMismatch(diff.join("; ")));
    }
    Ok(fresh)
}
