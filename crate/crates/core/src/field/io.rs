//! Flat binary snapshots (little-endian `f64` pairs in row-major mode
//! order) with JSON headers.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ModeBox, SpectralState, SIGN_CONVENTION};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub dim: usize,
    pub cutoff: usize,
    pub s: f64,
    pub time: f64,
    pub sign_convention: String,
    pub layout: String,
}

const LAYOUT: &str = "row-major modes, first coordinate slowest, k from -M to M; little-endian f64 (re, im) pairs";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub time: f64,
    /// Byte offset of the block in the binary file.
    pub offset: u64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryIndex {
    pub dim: usize,
    pub cutoff: usize,
    pub s: f64,
    pub sign_convention: String,
    pub layout: String,
    pub binary: String,
    pub snapshots: Vec<TrajectoryEntry>,
}

fn encode(coeffs: &[Complex64], out: &mut Vec<u8>) {
    out.reserve(coeffs.len() * 16);
    for c in coeffs {
        out.extend_from_slice(&c.re.to_le_bytes());
        out.extend_from_slice(&c.im.to_le_bytes());
    }
}

fn decode(bytes: &[u8]) -> Vec<Complex64> {
    bytes
        .chunks_exact(16)
        .map(|b| {
            let re = f64::from_le_bytes(b[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(b[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect()
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut p = stem.as_os_str().to_owned();
    p.push(".");
    p.push(ext);
    PathBuf::from(p)
}

/// Writes `<stem>.bin` and `<stem>.json`; returns both paths.
pub fn write_snapshot(stem: &Path, u: &SpectralState) -> Result<(PathBuf, PathBuf)> {
    let bin = with_ext(stem, "bin");
    let json = with_ext(stem, "json");
    let mut bytes = Vec::new();
    encode(&u.coeffs, &mut bytes);
    fs::write(&bin, bytes)?;
    let header = SnapshotHeader {
        dim: u.space.dim,
        cutoff: u.space.cutoff,
        s: u.s,
        time: u.time,
        sign_convention: SIGN_CONVENTION.into(),
        layout: LAYOUT.into(),
    };
    fs::write(&json, serde_json::to_string_pretty(&header)?)?;
    Ok((bin, json))
}

pub fn read_snapshot(stem: &Path) -> Result<SpectralState> {
    let header: SnapshotHeader = serde_json::from_slice(&fs::read(with_ext(stem, "json"))?)?;
    check_convention(&header.sign_convention)?;
    let space = ModeBox::new(header.dim, header.cutoff);
    let coeffs = decode(&fs::read(with_ext(stem, "bin"))?);
    SpectralState::from_coeffs(space, header.s, header.time, coeffs)
}

fn check_convention(found: &str) -> Result<()> {
    if found != SIGN_CONVENTION {
        return Err(Error::Config(format!(
            "snapshot uses sign convention {found:?}, expected {SIGN_CONVENTION:?}"
        )));
    }
    Ok(())
}

/// Writes all snapshots as consecutive blocks of `<stem>.bin` indexed by `<stem>.json`.
pub fn write_trajectory(stem: &Path, states: &[SpectralState]) -> Result<(PathBuf, PathBuf)> {
    let first = states.first().ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let bin = with_ext(stem, "bin");
    let json = with_ext(stem, "json");
    let mut bytes = Vec::new();
    let mut entries = Vec::with_capacity(states.len());
    for u in states {
        first.check_space(u)?;
        entries.push(TrajectoryEntry { time: u.time, offset: bytes.len() as u64, count: u.coeffs.len() });
        encode(&u.coeffs, &mut bytes);
    }
    fs::write(&bin, bytes)?;
    let index = TrajectoryIndex {
        dim: first.space.dim,
        cutoff: first.space.cutoff,
        s: first.s,
        sign_convention: SIGN_CONVENTION.into(),
        layout: LAYOUT.into(),
        binary: bin.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        snapshots: entries,
    };
    fs::write(&json, serde_json::to_string_pretty(&index)?)?;
    Ok((bin, json))
}

pub fn read_trajectory(stem: &Path) -> Result<Vec<SpectralState>> {
    let index: TrajectoryIndex = serde_json::from_slice(&fs::read(with_ext(stem, "json"))?)?;
    check_convention(&index.sign_convention)?;
    let bytes = fs::read(with_ext(stem, "bin"))?;
    let space = ModeBox::new(index.dim, index.cutoff);
    index
        .snapshots
        .iter()
        .map(|e| {
            let start = e.offset as usize;
            let end = start + 16 * e.count;
            let block = bytes
                .get(start..end)
                .ok_or_else(|| Error::InvalidArgument("trajectory index points past the data".into()))?;
            SpectralState::from_coeffs(space, index.s, e.time, decode(block))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut u = SpectralState::random_smooth(ModeBox::new(2, 3), 1.1, 5, 0.7, 2.0);
        u.time = 0.25;
        write_snapshot(&dir.path().join("u"), &u).unwrap();
        assert_eq!(read_snapshot(&dir.path().join("u")).unwrap(), u);
    }

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sp = ModeBox::new(1, 4);
        let states: Vec<_> = (0..3)
            .map(|i| {
                let mut u = SpectralState::random_smooth(sp, 1.0, i, 1.0, 2.0);
                u.time = i as f64 * 0.1;
                u
            })
            .collect();
        write_trajectory(&dir.path().join("traj"), &states).unwrap();
        assert_eq!(read_trajectory(&dir.path().join("traj")).unwrap(), states);
    }
}
