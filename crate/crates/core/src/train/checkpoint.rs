//! Binary checkpoint format.
//!
//! ```text
//! b"PGDLCKPT" | version: u32 LE | header_len: u32 LE | header (JSON) | blob
//! ```
//! The blob holds `3 · values` little-endian f64: parameters, Adam first
//! moments, Adam second moments, each flattened in layout order. The header
//! records the SHA-256 of the blob.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AdamState, TrainConfig, TrainState};
use crate::diffcore::Array;
use crate::error::{Error, Result};
use crate::model::ModelParams;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PGDLCKPT";

/// A training run's resumable state plus the configuration that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub state: TrainState,
    /// Free-form run information (dataset identity, seeds), stored verbatim.
    pub metadata: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: TrainConfig,
    metadata: serde_json::Value,
    epoch: u32,
    step: u64,
    adam_t: u64,
    values: usize,
    sha256: String,
}

fn flat(arrays: &[Array]) -> impl Iterator<Item = f64> + '_ {
    arrays.iter().flat_map(|a| a.data().iter().copied())
}

/// Writes `ckpt` to `path` through a temporary sibling file.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let s = &ckpt.state;
    let values = s.params.value_count();
    let mut blob = Vec::with_capacity(3 * values * 8);
    for v in s.params.flatten().into_iter().chain(flat(&s.adam.m)).chain(flat(&s.adam.v)) {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    if blob.len() != 3 * values * 8 {
        return Err(Error::Shape("optimizer state does not match parameter layout".into()));
    }
    let header = Header {
        config: ckpt.config.clone(),
        metadata: ckpt.metadata.clone(),
        epoch: s.epoch,
        step: s.step,
        adam_t: s.adam.t,
        values,
        sha256: hex::encode(Sha256::digest(&blob)),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::InvalidArgument(format!("checkpoint header: {e}")))?;
    let mut bytes = Vec::with_capacity(16 + header.len() + blob.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header);
    bytes.extend_from_slice(&blob);

    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |d: &str| Error::corrupt(path, d);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing checkpoint magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version { path: path.into(), found: version, expected: CHECKPOINT_VERSION });
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let header_bytes = bytes.get(16..16 + header_len).ok_or_else(|| corrupt("truncated header"))?;
    let header: Header =
        serde_json::from_slice(header_bytes).map_err(|e| Error::corrupt(path, format!("bad header: {e}")))?;
    let blob = &bytes[16 + header_len..];
    if blob.len() != 3 * header.values * 8 {
        return Err(Error::corrupt(path, format!("blob is {} bytes, expected {}", blob.len(), 3 * header.values * 8)));
    }
    if hex::encode(Sha256::digest(blob)) != header.sha256 {
        return Err(corrupt("blob checksum mismatch"));
    }
    let values: Vec<f64> = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(corrupt("non-finite value"));
    }
    let n = header.values;
    let model = header.config.model.clone();
    let params = ModelParams::from_flat(model.clone(), &values[..n]).map_err(|e| Error::corrupt(path, e.to_string()))?;
    let moments = |range: &[f64]| -> Result<Vec<Array>> {
        Ok(ModelParams::from_flat(model.clone(), range)?.tensors().to_vec())
    };
    let adam = AdamState { t: header.adam_t, m: moments(&values[n..2 * n])?, v: moments(&values[2 * n..])? };
    Ok(Checkpoint {
        config: header.config,
        state: TrainState { params, adam, epoch: header.epoch, step: header.step },
        metadata: header.metadata,
    })
}
