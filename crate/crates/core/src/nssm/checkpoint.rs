//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `NSSM`, version `u32`; architecture block
//! `history u64`, `horizon u64`, `n_y u64`, `n_z u64`, hidden count `u64`
//! and one `u64` per hidden width; parameter count `u64`; then per
//! parameter a `u32` name length, the UTF-8 name, `u32` rank, `u64` dims
//! and the `f64` data.

use std::path::Path;

use super::{ArchitectureSpec, NeuralSsm};
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::provenance::{read_trailer, write_trailer, ConfigDigest, Reader};

const MAGIC: &[u8; 4] = b"NSSM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(model: &NeuralSsm, digest: Option<ConfigDigest>) -> Vec<u8> {
    let spec = model.spec();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [spec.history, spec.horizon, spec.n_y, spec.n_z, spec.hidden.len()] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for &w in &spec.hidden {
        buf.extend_from_slice(&(w as u64).to_le_bytes());
    }
    buf.extend_from_slice(&(model.params().len() as u64).to_le_bytes());
    for p in model.params() {
        buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        buf.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
        for &d in p.value.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_trailer(&mut buf, digest);
    buf
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<(NeuralSsm, Option<ConfigDigest>)> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let history = r.usize()?;
    let horizon = r.usize()?;
    let n_y = r.usize()?;
    let n_z = r.usize()?;
    let n_hidden = r.usize()?;
    let hidden = (0..n_hidden).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let spec = ArchitectureSpec {
        history,
        horizon,
        n_y,
        n_z,
        hidden,
    };
    spec.validate()?;
    let layout = spec.layout();
    let count = r.usize()?;
    if count != layout.len() {
        return Err(Error::Format(format!(
            "checkpoint has {count} parameters, architecture needs {}",
            layout.len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for (name, _, shape) in &layout {
        let len = r.u32()? as usize;
        let got = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        if got != name {
            return Err(Error::Format(format!("expected parameter {name}, found {got}")));
        }
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        if &dims != shape {
            return Err(Error::Format(format!("{name}: shape {dims:?}, expected {shape:?}")));
        }
        let n: usize = dims.iter().product();
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        tensors.push(Tensor::new(dims, data).map_err(|e| Error::Format(format!("{name}: {e}")))?);
    }
    let digest = read_trailer(r.rest())?;
    Ok((NeuralSsm::from_tensors(&spec, tensors)?, digest))
}

pub fn save_checkpoint(path: &Path, model: &NeuralSsm, digest: Option<ConfigDigest>) -> Result<()> {
    std::fs::write(path, write_checkpoint(model, digest))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<NeuralSsm> {
    let bytes = std::fs::read(path)?;
    Ok(read_checkpoint(&bytes)?.0)
}
