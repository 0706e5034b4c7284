//! Compression orchestration over a weight store.
//!
//! The supported operation order is prune first, then SVD per selected conv
//! layer. Factorized layers either serialize as `.u`/`.s`/`.v` entry triples
//! (realizing the parameter savings) or as their dense reconstruction
//! (size unchanged; useful for accuracy-only comparisons). Every run
//! produces a [`CompressionReport`] with exact parameter accounting:
//! original `O*I*K^2` versus factored `R*(I*K^2 + 1 + O)`.

mod config;
mod report;

pub use config::{CompressionConfig, PruneSettings, SvdSettings};
pub use report::{CompressionReport, LayerPrune, LayerReport, LayerSvd, ReportTotals};

use thiserror::Error;

use crate::lowrank::{
    reconstruct, reshape_for_svd, truncated_svd, Matrix, RankPolicy, ReshapeMode, SvdError,
    SvdFactors,
};
use crate::prune::{prune_store, PruneError};
use crate::weightstore::{
    encode_store, tensor_stats, Role, StoreError, Tensor, WeightStore,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("tensor must be rank 4 ([out, in, kh, kw]), got rank {0}")]
    NotRank4(usize),
    #[error("tensor contains non-finite values")]
    NonFinite,
    #[error("factors inconsistent with conv shape {shape:?}: {detail}")]
    FactorMismatch { shape: [usize; 4], detail: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("selector matched no tensors (empty selection)")]
    EmptySelection,
    #[error("store already contains an entry named {0:?}")]
    NameCollision(String),
    #[error("no factored entry group named {0:?} in store")]
    MissingFactors(String),
    #[error("missing or malformed original-shape metadata for {0:?}")]
    BadOrigShape(String),
    #[error("layer {name:?}: {source}")]
    Layer {
        name: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Svd(#[from] SvdError),
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl PipelineError {
    fn for_layer(name: &str) -> impl FnOnce(PipelineError) -> PipelineError + '_ {
        move |source| PipelineError::Layer {
            name: name.to_string(),
            source: Box::new(source),
        }
    }

    /// True when the root cause is a numerical-algorithm failure rather
    /// than bad input data.
    pub fn is_numeric(&self) -> bool {
        match self {
            PipelineError::Svd(SvdError::NonConvergence { .. }) => true,
            PipelineError::Layer { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

/// Truncated-SVD factors of one conv layer under the `[I*K^2, O]` reshape:
/// `u: [I*K^2, R]`, `s: [R]`, `v: [O, R]`, plus the original tensor shape.
#[derive(Debug, Clone)]
pub struct FactorizedConv {
    factors: SvdFactors,
    orig_shape: [usize; 4],
}

impl FactorizedConv {
    pub fn new(factors: SvdFactors, orig_shape: [usize; 4]) -> Result<Self, PipelineError> {
        let [o, i, kh, kw] = orig_shape;
        let ik2 = i * kh * kw;
        if factors.u().rows() != ik2 || factors.v().rows() != o {
            return Err(PipelineError::FactorMismatch {
                shape: orig_shape,
                detail: format!(
                    "u is {}x{}, v is {}x{}; expected u rows {ik2} and v rows {o}",
                    factors.u().rows(),
                    factors.u().cols(),
                    factors.v().rows(),
                    factors.v().cols()
                ),
            });
        }
        Ok(Self {
            factors,
            orig_shape,
        })
    }

    pub fn factors(&self) -> &SvdFactors {
        &self.factors
    }

    pub fn u(&self) -> &Matrix {
        self.factors.u()
    }

    pub fn s(&self) -> &[f32] {
        self.factors.s()
    }

    pub fn v(&self) -> &Matrix {
        self.factors.v()
    }

    pub fn rank(&self) -> usize {
        self.factors.rank()
    }

    pub fn orig_shape(&self) -> [usize; 4] {
        self.orig_shape
    }
}

/// Reshape a rank-4 weight tensor to the `[I*K^2, O]` matrix.
fn conv_to_matrix(w: &Tensor) -> Result<Matrix, PipelineError> {
    let shape = conv_shape(w)?;
    let [o, i, kh, kw] = shape;
    let ik2 = i * kh * kw;
    let data = w.data();
    // Row-major [O, I, Kh, Kw] flattens to [O, I*K^2]; the matrix is its
    // transpose.
    Ok(Matrix::from_fn(ik2, o, |r, c| data[c * ik2 + r]))
}

fn conv_shape(w: &Tensor) -> Result<[usize; 4], PipelineError> {
    if w.rank() != 4 {
        return Err(PipelineError::NotRank4(w.rank()));
    }
    let s = w.shape();
    Ok([s[0], s[1], s[2], s[3]])
}

/// Factorize a conv weight tensor: `[I*K^2, O]` reshape, then truncated SVD
/// at the rank the policy selects.
pub fn compress_conv(w: &Tensor, policy: RankPolicy) -> Result<FactorizedConv, PipelineError> {
    let shape = conv_shape(w)?;
    if !w.is_finite() {
        return Err(PipelineError::NonFinite);
    }
    let m = conv_to_matrix(w)?;
    let factors = truncated_svd(&m, policy)?;
    FactorizedConv::new(factors, shape)
}

/// Reconstruct the dense weight tensor from factors: `U * diag(s) * V^T`,
/// then the inverse reshape back to `[O, I, Kh, Kw]`.
pub fn decompress_conv(f: &FactorizedConv) -> Tensor {
    let [o, i, kh, kw] = f.orig_shape;
    let ik2 = i * kh * kw;
    let m = reconstruct(&f.factors);
    let mut data = vec![0.0f32; o * ik2];
    for r in 0..ik2 {
        for c in 0..o {
            data[c * ik2 + r] = m.get(r, c);
        }
    }
    Tensor::new(vec![o, i, kh, kw], data).expect("factor shapes are validated")
}

/// `(original, factored)` parameter counts: `O*I*K^2` and
/// `R*(I*K^2 + 1 + O)`. The factored count is exactly the number of stored
/// elements of U, S, and V.
pub fn param_counts(f: &FactorizedConv) -> (usize, usize) {
    let [o, i, kh, kw] = f.orig_shape;
    let ik2 = i * kh * kw;
    let r = f.rank();
    (o * ik2, r * (ik2 + 1 + o))
}

/// Reserved entry-name suffixes for factored layers.
pub const FACTOR_SUFFIXES: [&str; 3] = [".u", ".s", ".v"];

/// Store-metadata key holding the original conv shape of a factored layer.
pub fn orig_shape_key(base: &str) -> String {
    format!("origshape:{base}")
}

fn format_shape(shape: [usize; 4]) -> String {
    format!("{},{},{},{}", shape[0], shape[1], shape[2], shape[3])
}

fn parse_shape(s: &str) -> Option<[usize; 4]> {
    let mut parts = s.split(',').map(|p| p.trim().parse::<usize>().ok());
    let shape = [parts.next()??, parts.next()??, parts.next()??, parts.next()??];
    if parts.next().is_some() || shape.contains(&0) {
        return None;
    }
    Some(shape)
}

/// Add `base.u`, `base.s`, `base.v` entries plus the original-shape
/// metadata so the layer can be rebuilt from the file alone.
pub fn push_factorized(
    store: &mut WeightStore,
    base: &str,
    f: &FactorizedConv,
) -> Result<(), PipelineError> {
    for suffix in FACTOR_SUFFIXES {
        let name = format!("{base}{suffix}");
        if store.contains(&name) {
            return Err(PipelineError::NameCollision(name));
        }
    }
    let r = f.rank();
    let u = Tensor::new(vec![f.u().rows(), r], f.u().data().to_vec())?;
    let s = Tensor::new(vec![r], f.s().to_vec())?;
    let v = Tensor::new(vec![f.v().rows(), r], f.v().data().to_vec())?;
    store.push(format!("{base}.u"), u, Role::SvdFactor)?;
    store.push(format!("{base}.s"), s, Role::SvdFactor)?;
    store.push(format!("{base}.v"), v, Role::SvdFactor)?;
    store
        .metadata_mut()
        .insert(orig_shape_key(base), format_shape(f.orig_shape));
    Ok(())
}

/// Rebuild a [`FactorizedConv`] from a store's `base.u`/`base.s`/`base.v`
/// entries and original-shape metadata.
pub fn read_factorized(store: &WeightStore, base: &str) -> Result<FactorizedConv, PipelineError> {
    let fetch = |suffix: &str| {
        store
            .get(&format!("{base}{suffix}"))
            .ok_or_else(|| PipelineError::MissingFactors(base.to_string()))
    };
    let ue = fetch(".u")?;
    let se = fetch(".s")?;
    let ve = fetch(".v")?;
    let shape_str = store
        .metadata()
        .get(&orig_shape_key(base))
        .ok_or_else(|| PipelineError::BadOrigShape(base.to_string()))?;
    let orig_shape =
        parse_shape(shape_str).ok_or_else(|| PipelineError::BadOrigShape(base.to_string()))?;

    let to_matrix = |t: &Tensor| -> Result<Matrix, PipelineError> {
        if t.rank() != 2 {
            return Err(PipelineError::FactorMismatch {
                shape: orig_shape,
                detail: format!("factor entry has rank {}", t.rank()),
            });
        }
        Ok(Matrix::new(t.shape()[0], t.shape()[1], t.data().to_vec())?)
    };
    let u = to_matrix(&ue.tensor)?;
    let v = to_matrix(&ve.tensor)?;
    let s = se.tensor.data().to_vec();
    let factors = SvdFactors::new(u, s, v)?;
    FactorizedConv::new(factors, orig_shape)
}

/// Base names of the factored entry groups in a store, in entry order.
pub fn factored_groups(store: &WeightStore) -> Vec<String> {
    let mut bases = Vec::new();
    for e in store.entries() {
        if e.role == Role::SvdFactor {
            if let Some(base) = e.name.strip_suffix(".u") {
                bases.push(base.to_string());
            }
        }
    }
    bases
}

/// Run the configured compression over a store.
///
/// Stages run in a fixed order: prune (if configured), then SVD per
/// selected conv layer (if configured). Entry order, metadata, and report
/// layout are deterministic; identical inputs produce bitwise identical
/// outputs.
pub fn run_pipeline(
    store: &WeightStore,
    config: &CompressionConfig,
) -> Result<(WeightStore, CompressionReport), PipelineError> {
    let resolved = config.validate()?;
    let selector = &resolved.selector;

    let selected_names: Vec<String> = store
        .entries()
        .iter()
        .filter(|e| selector.matches(&e.name, e.role))
        .map(|e| e.name.clone())
        .collect();
    if selected_names.is_empty() {
        return Err(PipelineError::EmptySelection);
    }

    let bytes_before = encode_store(store)?.len() as u64;

    // Stage 1: prune.
    let (work, prune_report) = match &resolved.prune {
        Some(p) => {
            let (s, r) = prune_store(store, p.fraction, p.scope, selector)?;
            (s, Some(r))
        }
        None => (store.clone(), None),
    };

    // Stage 2: SVD over selected conv layers.
    let mut out = WeightStore::new();
    *out.metadata_mut() = work.metadata().clone();
    let mut layers = Vec::new();

    for e in work.entries() {
        let selected = selector.matches(&e.name, e.role);
        let is_conv = e.role == Role::ConvWeight && e.tensor.rank() == 4;
        let prune_row = prune_report.as_ref().and_then(|r| {
            r.per_tensor
                .iter()
                .find(|row| row.name == e.name)
                .map(|row| LayerPrune {
                    zeroed: row.zeroed,
                    threshold_magnitude: row.threshold_magnitude,
                })
        });

        if !is_conv {
            // Not a factorization candidate; passes through (pruned or not).
            out.push(e.name.clone(), e.tensor.clone(), e.role)?;
            if selected {
                layers.push(LayerReport {
                    name: e.name.clone(),
                    shape: e.tensor.shape().to_vec(),
                    orig_params: e.tensor.numel(),
                    skipped: None,
                    prune: prune_row,
                    svd: None,
                });
            }
            continue;
        }

        let mut row = LayerReport {
            name: e.name.clone(),
            shape: e.tensor.shape().to_vec(),
            orig_params: e.tensor.numel(),
            skipped: None,
            prune: prune_row,
            svd: None,
        };

        if !selected {
            // Compression candidates the selector excluded stay visible.
            row.skipped = Some("selector".to_string());
        }
        let svd_settings = match (&resolved.svd, selected) {
            (Some(s), true) => Some(s),
            _ => None,
        };

        match svd_settings {
            None => {
                out.push(e.name.clone(), e.tensor.clone(), e.role)?;
            }
            Some(_) if e.tensor.numel() < resolved.min_elements => {
                row.skipped = Some("min-elements".to_string());
                out.push(e.name.clone(), e.tensor.clone(), e.role)?;
            }
            Some(svd) => {
                let wrap = PipelineError::for_layer(&e.name);
                match svd.mode {
                    ReshapeMode::Table1 => {
                        let f = compress_conv(&e.tensor, svd.policy).map_err(wrap)?;
                        let recon = decompress_conv(&f);
                        let (_, factored_params) = param_counts(&f);
                        row.svd = Some(svd_row(
                            &e.tensor,
                            &recon,
                            f.rank(),
                            factored_params,
                            svd.mode,
                        ));
                        if resolved.store_factored {
                            push_factorized(&mut out, &e.name, &f)
                                .map_err(PipelineError::for_layer(&e.name))?;
                        } else {
                            out.push(e.name.clone(), recon, e.role)?;
                        }
                    }
                    ReshapeMode::NearSquare => {
                        // Validated: near-square always stores dense.
                        let recon = near_square_roundtrip(&e.tensor, svd.policy)
                            .map_err(wrap)?;
                        row.svd = Some(svd_row(
                            &e.tensor,
                            &recon.tensor,
                            recon.rank,
                            recon.factored_params,
                            svd.mode,
                        ));
                        out.push(e.name.clone(), recon.tensor, e.role)?;
                    }
                }
            }
        }
        layers.push(row);
    }

    let bytes_after = encode_store(&out)?.len() as u64;
    let report = report::assemble(
        config.clone(),
        &resolved,
        prune_report,
        layers,
        bytes_before,
        bytes_after,
    );
    Ok((out, report))
}

struct NearSquareOutcome {
    tensor: Tensor,
    rank: usize,
    factored_params: usize,
}

fn near_square_roundtrip(
    w: &Tensor,
    policy: RankPolicy,
) -> Result<NearSquareOutcome, PipelineError> {
    if !w.is_finite() {
        return Err(PipelineError::NonFinite);
    }
    let shape = conv_shape(w)?;
    let (rows, cols) = reshape_for_svd(shape, ReshapeMode::NearSquare);
    let m = Matrix::new(rows, cols, w.data().to_vec())?;
    let f = truncated_svd(&m, policy)?;
    let recon = reconstruct(&f);
    let tensor = Tensor::new(w.shape().to_vec(), recon.data().to_vec())?;
    Ok(NearSquareOutcome {
        tensor,
        rank: f.rank(),
        factored_params: f.rank() * (rows + 1 + cols),
    })
}

fn svd_row(
    orig: &Tensor,
    recon: &Tensor,
    rank: usize,
    factored_params: usize,
    mode: ReshapeMode,
) -> LayerSvd {
    let mut err = 0.0f64;
    for (a, b) in orig.data().iter().zip(recon.data()) {
        let d = f64::from(*a) - f64::from(*b);
        err += d * d;
    }
    let stats = tensor_stats(recon);
    LayerSvd {
        realized_rank: rank,
        factored_params,
        recon_frobenius_error: err.sqrt(),
        post_nonzero_fraction: stats.nonzero as f64 / stats.elements as f64,
        mode,
    }
}
