//! The `.wstore` container format.
//!
//! Layout, bit-exact:
//!
//! ```text
//! bytes 0..8    little-endian u64: manifest length N
//! bytes 8..8+N  UTF-8 JSON manifest
//! bytes 8+N..   blob: little-endian f32 values, row-major, entries tightly
//!               packed in manifest order
//! ```
//!
//! Manifest schema (offsets are relative to blob start):
//!
//! ```json
//! {"entries":[{"name":"w","shape":[2,2],"dtype":"f32","role":"other",
//!              "offset":0,"nbytes":16}],
//!  "metadata":{}}
//! ```
//!
//! Metadata is an ordered string map; unknown keys round-trip untouched.
//! Non-finite values are accepted on load (compression operations reject
//! them separately).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_name, Role, StoreError, Tensor, WeightStore};

const HEADER_LEN: usize = 8;

#[derive(Serialize, Deserialize)]
struct Manifest {
    entries: Vec<ManifestEntry>,
    metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    role: String,
    offset: u64,
    nbytes: u64,
}

/// Serialize a store to its byte representation.
pub fn encode_store(store: &WeightStore) -> Result<Vec<u8>, StoreError> {
    let mut entries = Vec::with_capacity(store.len());
    let mut offset = 0u64;
    for e in store.entries() {
        validate_name(&e.name)?;
        let nbytes = 4 * e.tensor.numel() as u64;
        entries.push(ManifestEntry {
            name: e.name.clone(),
            shape: e.tensor.shape().to_vec(),
            dtype: "f32".to_string(),
            role: e.role.as_str().to_string(),
            offset,
            nbytes,
        });
        offset += nbytes;
    }
    let manifest = Manifest {
        entries,
        metadata: store.metadata().clone(),
    };
    let manifest_json =
        serde_json::to_vec(&manifest).map_err(|e| StoreError::InvalidManifest(e.to_string()))?;

    let blob_len = offset as usize;
    let mut bytes = Vec::with_capacity(HEADER_LEN + manifest_json.len() + blob_len);
    bytes.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&manifest_json);
    for e in store.entries() {
        for v in e.tensor.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(bytes)
}

/// Parse a store from its byte representation.
pub fn decode_store(bytes: &[u8]) -> Result<WeightStore, StoreError> {
    if bytes.len() < HEADER_LEN {
        return Err(StoreError::TruncatedHeader(bytes.len()));
    }
    let manifest_len = u64::from_le_bytes(bytes[..HEADER_LEN].try_into().unwrap());
    let avail = (bytes.len() - HEADER_LEN) as u64;
    if manifest_len > avail {
        return Err(StoreError::TruncatedManifest {
            expected: manifest_len,
            actual: avail,
        });
    }
    let manifest_end = HEADER_LEN + manifest_len as usize;
    let manifest: Manifest = serde_json::from_slice(&bytes[HEADER_LEN..manifest_end])
        .map_err(|e| StoreError::MalformedManifest(e.to_string()))?;

    let blob = &bytes[manifest_end..];
    let mut expected_offset = 0u64;
    let mut store = WeightStore::new();
    *store.metadata_mut() = manifest.metadata;

    for m in &manifest.entries {
        if m.dtype != "f32" {
            return Err(StoreError::UnsupportedDtype(m.dtype.clone()));
        }
        Role::parse(&m.role)?;
        if m.shape.is_empty() || m.shape.contains(&0) {
            return Err(StoreError::InvalidManifest(format!(
                "entry {:?} has invalid shape {:?}",
                m.name, m.shape
            )));
        }
        let numel: usize = m.shape.iter().product();
        let nbytes = 4 * numel as u64;
        if m.nbytes != nbytes {
            return Err(StoreError::InvalidManifest(format!(
                "entry {:?}: shape {:?} implies {nbytes} bytes, manifest says {}",
                m.name, m.shape, m.nbytes
            )));
        }
        if m.offset != expected_offset {
            return Err(StoreError::InvalidManifest(format!(
                "entry {:?}: offset {} breaks tight packing (expected {expected_offset})",
                m.name, m.offset
            )));
        }
        expected_offset += nbytes;
    }

    if (blob.len() as u64) < expected_offset {
        return Err(StoreError::TruncatedBlob {
            expected: expected_offset,
            actual: blob.len() as u64,
        });
    }
    if (blob.len() as u64) > expected_offset {
        return Err(StoreError::BlobLengthMismatch {
            expected: expected_offset,
            actual: blob.len() as u64,
        });
    }

    for m in &manifest.entries {
        let start = m.offset as usize;
        let end = start + m.nbytes as usize;
        let data: Vec<f32> = blob[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(m.shape.clone(), data)?;
        store.push(m.name.clone(), tensor, Role::parse(&m.role)?)?;
    }
    Ok(store)
}

/// Write a store to `path`; returns total bytes written (the weight-size
/// metric).
pub fn save_store(store: &WeightStore, path: impl AsRef<Path>) -> Result<u64, StoreError> {
    let bytes = encode_store(store)?;
    fs::write(path, &bytes)?;
    Ok(bytes.len() as u64)
}

/// Read a store from `path`.
pub fn load_store(path: impl AsRef<Path>) -> Result<WeightStore, StoreError> {
    let bytes = fs::read(path)?;
    decode_store(&bytes)
}
