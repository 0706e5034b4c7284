//! Dense tensors and the named-tensor container.
//!
//! A [`WeightStore`] is an ordered collection of named [`Tensor`]s with role
//! tags and a free-form string metadata map. Stores serialize to the
//! `.wstore` container format (see [`format`]): an 8-byte little-endian
//! manifest length, a JSON manifest, then a tightly packed blob of
//! little-endian f32 values. The serialized byte count is the "weight size"
//! metric reported by the compression pipeline.

mod format;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{decode_store, encode_store, load_store, save_store};

/// Errors from tensor construction, store mutation, and the container format.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("invalid tensor name {0:?}: {1}")]
    InvalidName(String, &'static str),
    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),
    #[error("conv-weight tensor {name:?} must be rank 4, got rank {rank}")]
    ConvWeightRank { name: String, rank: usize },
    #[error("truncated header: file is {0} bytes, need at least 8")]
    TruncatedHeader(usize),
    #[error("truncated manifest: header promises {expected} bytes, {actual} available")]
    TruncatedManifest { expected: u64, actual: u64 },
    #[error("malformed manifest JSON: {0}")]
    MalformedManifest(String),
    #[error("unsupported dtype {0:?}: only \"f32\" is supported")]
    UnsupportedDtype(String),
    #[error("unknown role tag {0:?}")]
    UnknownRole(String),
    #[error("truncated blob: manifest promises {expected} bytes, {actual} present")]
    TruncatedBlob { expected: u64, actual: u64 },
    #[error("blob length mismatch: manifest promises {expected} bytes, {actual} present")]
    BlobLengthMismatch { expected: u64, actual: u64 },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense rank-N array of f32 values, row-major.
///
/// Invariants enforced at construction: every shape entry is >= 1, rank is
/// >= 1, and `data.len()` equals the product of the shape entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, StoreError> {
        if shape.is_empty() {
            return Err(StoreError::InvalidTensor("rank must be >= 1".into()));
        }
        if shape.contains(&0) {
            return Err(StoreError::InvalidTensor(format!(
                "shape {shape:?} has a zero dimension"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(StoreError::InvalidTensor(format!(
                "shape {shape:?} implies {numel} elements, data has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self, StoreError> {
        let numel: usize = shape.iter().product();
        Self::new(shape, vec![0.0; numel])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// True when every element is finite (no NaN, no infinities).
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bitwise equality: distinguishes -0.0 from +0.0 and compares NaN
    /// payloads, unlike `==`.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// What a tensor is for. Stored in the container manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    ConvWeight,
    Bias,
    Other,
    SvdFactor,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::ConvWeight => "conv-weight",
            Role::Bias => "bias",
            Role::Other => "other",
            Role::SvdFactor => "svd-factor",
        }
    }

    pub fn parse(s: &str) -> Result<Self, StoreError> {
        match s {
            "conv-weight" => Ok(Role::ConvWeight),
            "bias" => Ok(Role::Bias),
            "other" => Ok(Role::Other),
            "svd-factor" => Ok(Role::SvdFactor),
            _ => Err(StoreError::UnknownRole(s.to_string())),
        }
    }
}

/// One named tensor in a store.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub tensor: Tensor,
    pub role: Role,
}

/// Ordered, uniquely named tensor collection with string metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    entries: Vec<Entry>,
    metadata: BTreeMap<String, String>,
}

fn validate_name(name: &str) -> Result<(), StoreError> {
    if name.is_empty() {
        return Err(StoreError::InvalidName(name.to_string(), "empty"));
    }
    if name.chars().any(|c| c.is_control()) {
        return Err(StoreError::InvalidName(
            name.to_string(),
            "contains control characters",
        ));
    }
    Ok(())
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a tensor. Rejects duplicate or malformed names; conv-weight
    /// entries must be rank 4 ([out, in, kh, kw]).
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor, role: Role) -> Result<(), StoreError> {
        let name = name.into();
        validate_name(&name)?;
        if self.entries.iter().any(|e| e.name == name) {
            return Err(StoreError::DuplicateName(name));
        }
        if role == Role::ConvWeight && tensor.rank() != 4 {
            return Err(StoreError::ConvWeightRank {
                name,
                rank: tensor.rank(),
            });
        }
        self.entries.push(Entry { name, tensor, role });
        Ok(())
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn remove(&mut self, name: &str) -> Option<Entry> {
        let idx = self.entries.iter().position(|e| e.name == name)?;
        Some(self.entries.remove(idx))
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.metadata
    }

    /// Total element count across all entries.
    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.numel()).sum()
    }

    /// Bitwise equality of entries and metadata (see [`Tensor::bit_eq`]).
    pub fn bit_eq(&self, other: &WeightStore) -> bool {
        self.metadata == other.metadata
            && self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                a.name == b.name && a.role == b.role && a.tensor.bit_eq(&b.tensor)
            })
    }
}

/// Filters store entries by role and/or name substring.
///
/// The default selects conv-weight tensors only, which is what the
/// compression operations act on unless told otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roles: Option<Vec<Role>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_contains: Option<String>,
}

impl Selector {
    pub fn conv_weights() -> Self {
        Selector {
            roles: Some(vec![Role::ConvWeight]),
            name_contains: None,
        }
    }

    /// Matches every entry.
    pub fn any() -> Self {
        Selector {
            roles: None,
            name_contains: None,
        }
    }

    pub fn matches(&self, name: &str, role: Role) -> bool {
        if let Some(roles) = &self.roles {
            if !roles.contains(&role) {
                return false;
            }
        }
        if let Some(sub) = &self.name_contains {
            if !name.contains(sub.as_str()) {
                return false;
            }
        }
        true
    }
}

impl Default for Selector {
    fn default() -> Self {
        Selector::conv_weights()
    }
}

/// Exact per-tensor statistics.
///
/// `nonzero` counts elements whose bit pattern is neither +0.0 nor -0.0.
/// `l1_sum` accumulates |x| over finite elements in f64; non-finite elements
/// are excluded from the sum and min/max and counted in `nonfinite`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TensorStats {
    pub elements: usize,
    pub nonzero: usize,
    pub l1_sum: f64,
    pub min: f32,
    pub max: f32,
    pub nonfinite: usize,
}

pub fn tensor_stats(t: &Tensor) -> TensorStats {
    let mut nonzero = 0usize;
    let mut nonfinite = 0usize;
    let mut l1 = 0.0f64;
    let mut min = f32::INFINITY;
    let mut max = f32::NEG_INFINITY;
    for &v in t.data() {
        if (v.to_bits() & 0x7fff_ffff) != 0 {
            nonzero += 1;
        }
        if v.is_finite() {
            l1 += f64::from(v.abs());
            min = min.min(v);
            max = max.max(v);
        } else {
            nonfinite += 1;
        }
    }
    TensorStats {
        elements: t.numel(),
        nonzero,
        l1_sum: l1,
        min,
        max,
        nonfinite,
    }
}
