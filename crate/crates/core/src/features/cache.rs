//! Binary feature cache.
//!
//! Layout (little-endian): magic `FTRS`, version `u16`, rows `u32`,
//! dim `u32`, then `rows * dim` row-major `f32` values. A JSON sidecar at
//! `<file>.json` records the registry version.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::FeatureSequence;
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"FTRS";
pub const CACHE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheSidecar {
    pub registry_version: String,
    pub speaker_id: String,
    pub rows: usize,
    pub dim: usize,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn write_cache(path: &Path, seq: &FeatureSequence, registry_version: &str) -> Result<()> {
    let rows = u32::try_from(seq.rows).map_err(|_| Error::Shape("too many rows".into()))?;
    let dim = u32::try_from(seq.dim).map_err(|_| Error::Shape("too many columns".into()))?;
    let mut bytes = Vec::with_capacity(HEADER_LEN + seq.data.len() * 4);
    bytes.extend_from_slice(CACHE_MAGIC);
    bytes.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    bytes.extend_from_slice(&rows.to_le_bytes());
    bytes.extend_from_slice(&dim.to_le_bytes());
    for &v in &seq.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;

    let sidecar = CacheSidecar {
        registry_version: registry_version.to_string(),
        speaker_id: seq.speaker_id.clone(),
        rows: seq.rows,
        dim: seq.dim,
    };
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&side, e))
}

pub fn read_sidecar(path: &Path) -> Result<CacheSidecar> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_cache(path: &Path, speaker_id: &str) -> Result<FeatureSequence> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < HEADER_LEN || &bytes[..4] != CACHE_MAGIC {
        return Err(bad("not a feature cache (bad magic)"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CACHE_VERSION {
        return Err(bad(&format!("unsupported cache version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != rows * dim * 4 {
        return Err(bad(&format!(
            "payload is {} bytes, header declares {rows}x{dim} f32",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    FeatureSequence::new(speaker_id, rows, dim, data)
}
