//! Run manifests: what was run, with which inputs, and what came out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Discretization;
use crate::error::Result;
use crate::lattice::ExtensionChain;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub subcommand: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    /// Directory relative paths in the config resolve against.
    pub config_dir: PathBuf,
    pub sign_convention: String,
    pub discretization: Option<Discretization>,
    pub eps_ladder: Vec<f64>,
    pub chain: Option<ExtensionChain>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Hashes the given files, sorted by relative path.
pub fn index_files(out: &Path, files: &[PathBuf]) -> Result<Vec<FileEntry>> {
    let mut entries = Vec::with_capacity(files.len());
    for f in files {
        let bytes = std::fs::read(f)?;
        let rel = f.strip_prefix(out).unwrap_or(f);
        entries.push(FileEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    entries.dedup_by(|a, b| a.path == b.path);
    Ok(entries)
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Files whose hashes differ from `other`, plus files missing on either side.
    pub fn differences(&self, other: &Manifest) -> Vec<String> {
        let mut out = Vec::new();
        for f in &self.files {
            match other.files.iter().find(|g| g.path == f.path) {
                Some(g) if g.sha256 == f.sha256 => {}
                Some(_) => out.push(format!("{} changed", f.path)),
                None => out.push(format!("{} missing", f.path)),
            }
        }
        for g in &other.files {
            if !self.files.iter().any(|f| f.path == g.path) {
                out.push(format!("{} unexpected", g.path));
            }
        }
        out
    }
}
