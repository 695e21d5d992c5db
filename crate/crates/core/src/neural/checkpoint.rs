//! Model checkpoint files.
//!
//! Layout: the 8-byte magic `ADIDSCK1`, a little-endian u32 header length,
//! the UTF-8 JSON header, then the parameter blob of little-endian f32
//! values. The header records every array's byte offset and length within
//! the blob, and the blob's SHA-256.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::arch::{Architecture, HeadKind};
use super::params::{ModelParams, ARRAY_NAMES};

pub const MAGIC: &[u8; 8] = b"ADIDSCK1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub architecture: Architecture,
    pub classes: Vec<String>,
    pub head: HeadKind,
    pub seed: u64,
    pub arrays: Vec<ArrayEntry>,
    pub blob_sha256: String,
    /// Open-set head state (thresholds, Weibull models, centroids).
    #[serde(default)]
    pub open_set: serde_json::Value,
}

pub fn blob_hash(params: &ModelParams) -> String {
    hex::encode(Sha256::digest(params.to_le_bytes()))
}

pub fn encode(params: &ModelParams, classes: &[String], open_set: serde_json::Value) -> Result<(Vec<u8>, String)> {
    if classes.len() != params.arch.classes {
        return Err(Error::Shape {
            expected: format!("{} class names", params.arch.classes),
            actual: format!("{}", classes.len()),
        });
    }
    let blob = params.to_le_bytes();
    let hash = hex::encode(Sha256::digest(&blob));
    let mut offset = 0;
    let arrays = ARRAY_NAMES
        .iter()
        .zip(params.arrays())
        .map(|(name, a)| {
            let e = ArrayEntry {
                name: name.to_string(),
                offset,
                len: a.len() * 4,
            };
            offset += e.len;
            e
        })
        .collect();
    let header = CheckpointHeader {
        version: VERSION,
        architecture: params.arch,
        classes: classes.to_vec(),
        head: params.arch.head,
        seed: params.rng_seed,
        arrays,
        blob_sha256: hash.clone(),
        open_set,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + json.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    Ok((out, hash))
}

pub fn decode(bytes: &[u8]) -> Result<(ModelParams, CheckpointHeader)> {
    let bad = |reason: &str| Error::Malformed {
        location: "checkpoint".into(),
        reason: reason.into(),
    };
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let header_bytes = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(header_bytes).map_err(|e| bad(&format!("bad header: {e}")))?;
    if header.version != VERSION {
        return Err(bad(&format!("unsupported version {}", header.version)));
    }
    header.architecture.validate()?;
    let blob = &bytes[12 + hlen..];
    if hex::encode(Sha256::digest(blob)) != header.blob_sha256 {
        return Err(bad("blob hash mismatch"));
    }
    let mut params = ModelParams::zeros(header.architecture);
    params.rng_seed = header.seed;
    if header.arrays.len() != ARRAY_NAMES.len() {
        return Err(bad("wrong array count"));
    }
    for (entry, (name, array)) in header.arrays.iter().zip(ARRAY_NAMES.iter().zip(params.arrays_mut())) {
        if entry.name != *name || entry.len != array.len() * 4 {
            return Err(bad(&format!("array `{}` does not match architecture", entry.name)));
        }
        let raw = blob
            .get(entry.offset..entry.offset + entry.len)
            .ok_or_else(|| bad("array outside blob"))?;
        for (v, chunk) in array.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
    }
    if header.classes.len() != header.architecture.classes {
        return Err(bad("class list does not match architecture"));
    }
    Ok((params, header))
}

/// Writes a checkpoint and returns its blob hash.
pub fn write_checkpoint(path: &Path, params: &ModelParams, classes: &[String], open_set: serde_json::Value) -> Result<String> {
    let (bytes, hash) = encode(params, classes, open_set)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(hash)
}

pub fn read_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
