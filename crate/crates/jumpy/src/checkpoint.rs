//! Checkpoints: a JSON manifest listing each parameter array's name,
//! shape and byte offset, plus a little-endian IEEE-754 float64 blob.
//! The manifest carries a content hash of the blob and an open `extra`
//! field for model metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{atomic_write, hex_digest};
use crate::error::{JumpyError, Result};
use crate::nn::{ParamSet, RealMatrix};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub arrays: Vec<ArrayEntry>,
    pub blob_sha256: String,
    #[serde(default)]
    pub extra: serde_json::Value,
}

pub const FORMAT: &str = "jumpy-ckpt-v1";

fn blob_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

pub fn save(manifest_path: &Path, params: &ParamSet, extra: serde_json::Value) -> Result<()> {
    let mut blob = Vec::with_capacity(params.scalar_count() * 8);
    let mut arrays = Vec::with_capacity(params.len());
    for (_, name, m) in params.iter() {
        arrays.push(ArrayEntry {
            name: name.to_string(),
            rows: m.rows,
            cols: m.cols,
            offset: blob.len(),
        });
        for v in &m.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.to_string(),
        arrays,
        blob_sha256: hex_digest(&blob),
        extra,
    };
    // blob first; the manifest is the commit point
    atomic_write(&blob_path(manifest_path), &blob)?;
    let json = serde_json::to_vec_pretty(&manifest)?;
    atomic_write(manifest_path, &json)?;
    Ok(())
}

pub fn load(manifest_path: &Path) -> Result<(ParamSet, serde_json::Value)> {
    let storage = |msg: String| JumpyError::Storage {
        path: manifest_path.display().to_string(),
        msg,
    };
    let json = std::fs::read(manifest_path).map_err(|e| storage(e.to_string()))?;
    let manifest: Manifest = serde_json::from_slice(&json)?;
    if manifest.format != FORMAT {
        return Err(storage(format!("unknown checkpoint format {}", manifest.format)));
    }
    let blob = std::fs::read(blob_path(manifest_path)).map_err(|e| storage(e.to_string()))?;
    if hex_digest(&blob) != manifest.blob_sha256 {
        return Err(storage("blob hash mismatch".into()));
    }
    let mut params = ParamSet::new();
    for entry in &manifest.arrays {
        let n = entry.rows * entry.cols;
        let end = entry.offset + n * 8;
        if end > blob.len() {
            return Err(storage(format!("array {} out of blob bounds", entry.name)));
        }
        let data: Vec<f64> = blob[entry.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push(
            entry.name.clone(),
            RealMatrix::from_vec(entry.rows, entry.cols, data)?,
        );
    }
    Ok((params, manifest.extra))
}

/// Hash of the serialized checkpoint blob for determinism checks.
pub fn params_hash(params: &ParamSet) -> String {
    let mut blob = Vec::with_capacity(params.scalar_count() * 8);
    for (_, _, m) in params.iter() {
        for v in &m.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    hex_digest(&blob)
}
