//! Canonical binary dataset files and a CSV export for inspection.
//!
//! Layout (little-endian): magic `NSSD`, version `u32`, trajectory count
//! `u64`, then per trajectory `theta f64`, `dt f64`, `length u64`,
//! `x0 2×f64` and `length×2 f64` outputs, row-major.

use std::fmt::Write as _;
use std::path::Path;

use super::{SystemParams, Trajectory};
use crate::error::{Error, Result};
use crate::provenance::{read_trailer, write_trailer, ConfigDigest, Reader};

const MAGIC: &[u8; 4] = b"NSSD";
pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset(trajectories: &[Trajectory], digest: Option<ConfigDigest>) -> Vec<u8> {
    let points: usize = trajectories.iter().map(Trajectory::len).sum();
    let mut buf = Vec::with_capacity(16 + trajectories.len() * 40 + points * 16);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(trajectories.len() as u64).to_le_bytes());
    for t in trajectories {
        buf.extend_from_slice(&t.params.theta.to_le_bytes());
        buf.extend_from_slice(&t.params.dt.to_le_bytes());
        buf.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for v in t.params.x0 {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for y in &t.outputs {
            buf.extend_from_slice(&y[0].to_le_bytes());
            buf.extend_from_slice(&y[1].to_le_bytes());
        }
    }
    write_trailer(&mut buf, digest);
    buf
}

pub fn read_dataset(bytes: &[u8]) -> Result<(Vec<Trajectory>, Option<ConfigDigest>)> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a dataset file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {version} (expected {DATASET_VERSION})"
        )));
    }
    let count = r.usize()?;
    let mut trajectories = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let theta = r.f64()?;
        let dt = r.f64()?;
        let len = r.usize()?;
        if len == 0 {
            return Err(Error::Format("empty trajectory".into()));
        }
        let x0 = [r.f64()?, r.f64()?];
        let mut outputs = Vec::with_capacity(len.min(1 << 24));
        for _ in 0..len {
            outputs.push([r.f64()?, r.f64()?]);
        }
        trajectories.push(Trajectory {
            params: SystemParams {
                theta,
                x0,
                t_final: (len - 1) as f64 * dt,
                dt,
            },
            outputs,
        });
    }
    let digest = read_trailer(r.rest())?;
    Ok((trajectories, digest))
}

pub fn save_dataset(path: &Path, trajectories: &[Trajectory], digest: Option<ConfigDigest>) -> Result<()> {
    std::fs::write(path, write_dataset(trajectories, digest))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<Trajectory>> {
    let bytes = std::fs::read(path)?;
    Ok(read_dataset(&bytes)?.0)
}

/// CSV with columns `traj_id,t,x1,x2,theta`.
pub fn write_dataset_csv(trajectories: &[Trajectory], digest: Option<ConfigDigest>) -> String {
    let mut out = String::new();
    if let Some(d) = digest {
        out.push_str(&d.comment_line());
    }
    out.push_str("traj_id,t,x1,x2,theta\n");
    for (id, t) in trajectories.iter().enumerate() {
        for (k, y) in t.outputs.iter().enumerate() {
            let _ = writeln!(out, "{id},{},{},{},{}", k as f64 * t.params.dt, y[0], y[1], t.params.theta);
        }
    }
    out
}
