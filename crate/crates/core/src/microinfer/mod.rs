//! Desk-scale convolution execution and benchmarking.
//!
//! Dense convolution runs as im2col + one GEMM. Factored convolution runs
//! the same im2col plus two thin GEMMs from the SVD factors:
//!
//! ```text
//! out = (V * diag(s)) * (U^T * col)    [O,R] x [R,P] after [R,IK2] x [IK2,P]
//! ```
//!
//! with `diag(s)` folded into `V` once per layer. Both paths share one GEMM
//! kernel so timing differences isolate the rank, and both carry an
//! analytic FLOP model: changes of a couple hundredths of a frame per
//! second disappear into scheduler noise at desk scale, so the FLOP counts
//! are reported next to the wall-clock numbers.

mod gemm;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{read_factorized, FactorizedConv, PipelineError};
use crate::weightstore::{Tensor, WeightStore};

#[derive(Debug, Error)]
pub enum InferError {
    #[error("layer {index}: {source}")]
    AtLayer {
        index: usize,
        #[source]
        source: Box<InferError>,
    },
    #[error("feature map shape {channels}x{height}x{width} does not match data length {len}")]
    ShapeMismatch {
        channels: usize,
        height: usize,
        width: usize,
        len: usize,
    },
    #[error("channel mismatch: input has {input}, weight expects {expected}")]
    ChannelMismatch { input: usize, expected: usize },
    #[error("non-positive output dims: input {h}x{w}, kernel {kh}x{kw}, stride {stride}, pad {pad}")]
    NonPositiveOutput {
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    },
    #[error("weight {0:?} not found in store")]
    MissingWeight(String),
    #[error("weight {name:?} must be rank 4, got rank {rank}")]
    BadWeightRank { name: String, rank: usize },
    #[error("bias {name:?} must have shape [{expected}], got {shape:?}")]
    BadBias {
        name: String,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("benchmark needs runs >= 3 and warmup >= 1, got runs {runs}, warmup {warmup}")]
    BadBenchArgs { runs: usize, warmup: usize },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// `[C, H, W]` feature map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self, InferError> {
        if channels * height * width != data.len() || data.is_empty() {
            return Err(InferError::ShapeMismatch {
                channels,
                height,
                width,
                len: data.len(),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

fn one() -> usize {
    1
}

/// One step of a sequential toy network. Conv layers reference weight
/// names in a store; factored convs reference the `.u`/`.s`/`.v` group by
/// its base name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    ConvDense {
        weight: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bias: Option<String>,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
    },
    ConvFactored {
        weight: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bias: Option<String>,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
    },
    LeakyRelu { alpha: f32 },
    Maxpool { size: usize, stride: usize },
}

impl LayerSpec {
    fn validate(&self) -> Result<(), InferError> {
        match self {
            LayerSpec::ConvDense { stride, .. } | LayerSpec::ConvFactored { stride, .. } => {
                if *stride == 0 {
                    return Err(InferError::InvalidLayer("stride must be >= 1".into()));
                }
            }
            LayerSpec::LeakyRelu { alpha } => {
                // alpha = 1 degenerates to identity, which is allowed.
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(InferError::InvalidLayer(format!(
                        "leaky-relu alpha {alpha} outside (0, 1]"
                    )));
                }
            }
            LayerSpec::Maxpool { size, stride } => {
                if *size == 0 || *stride == 0 {
                    return Err(InferError::InvalidLayer(
                        "maxpool size and stride must be >= 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn out_dim(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

fn conv_dims(
    x: &FeatureMap,
    in_channels: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize), InferError> {
    if x.channels != in_channels {
        return Err(InferError::ChannelMismatch {
            input: x.channels,
            expected: in_channels,
        });
    }
    match (
        out_dim(x.height, kh, stride, pad),
        out_dim(x.width, kw, stride, pad),
    ) {
        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok((oh, ow)),
        _ => Err(InferError::NonPositiveOutput {
            h: x.height,
            w: x.width,
            kh,
            kw,
            stride,
            pad,
        }),
    }
}

fn check_bias(bias: Option<&Tensor>, out_channels: usize) -> Result<(), InferError> {
    if let Some(b) = bias {
        if b.shape() != [out_channels] {
            return Err(InferError::BadBias {
                name: String::new(),
                expected: out_channels,
                shape: b.shape().to_vec(),
            });
        }
    }
    Ok(())
}

fn add_bias(out: &mut [f32], bias: Option<&Tensor>, out_channels: usize, positions: usize) {
    if let Some(b) = bias {
        for (o, &bv) in b.data().iter().enumerate().take(out_channels) {
            for v in &mut out[o * positions..(o + 1) * positions] {
                *v += bv;
            }
        }
    }
}

/// Dense convolution: im2col then `[O, I*K^2] x [I*K^2, P]`.
pub fn conv2d_dense(
    x: &FeatureMap,
    w: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<FeatureMap, InferError> {
    if w.rank() != 4 {
        return Err(InferError::BadWeightRank {
            name: String::new(),
            rank: w.rank(),
        });
    }
    let (o, i, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let (oh, ow) = conv_dims(x, i, kh, kw, stride, pad)?;
    check_bias(bias, o)?;
    let p = oh * ow;
    let col = gemm::im2col(&x.data, i, x.height, x.width, kh, kw, stride, pad, oh, ow);
    // Row-major [O, I, Kh, Kw] is already the [O, I*K^2] weight matrix.
    let mut out = gemm::matmul(w.data(), &col, o, i * kh * kw, p);
    add_bias(&mut out, bias, o, p);
    FeatureMap::new(o, oh, ow, out)
}

/// Factored convolution: the same im2col, then two thin GEMMs
/// `U^T * col` and `(V * diag(s)) * tmp`. Numerically matches
/// [`conv2d_dense`] on the reconstructed dense weight.
pub fn conv2d_factored(
    x: &FeatureMap,
    f: &FactorizedConv,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<FeatureMap, InferError> {
    let [o, i, kh, kw] = f.orig_shape();
    let (oh, ow) = conv_dims(x, i, kh, kw, stride, pad)?;
    check_bias(bias, o)?;
    let p = oh * ow;
    let r = f.rank();
    let ik2 = i * kh * kw;

    let col = gemm::im2col(&x.data, i, x.height, x.width, kh, kw, stride, pad, oh, ow);
    let ut = gemm::transpose(f.u().data(), ik2, r);
    let tmp = gemm::matmul(&ut, &col, r, ik2, p);
    // Fold the diagonal into V once per layer.
    let mut vs = f.v().data().to_vec();
    for row in vs.chunks_exact_mut(r) {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= f.s()[j];
        }
    }
    let mut out = gemm::matmul(&vs, &tmp, o, r, p);
    add_bias(&mut out, bias, o, p);
    FeatureMap::new(o, oh, ow, out)
}

/// `y = x` for `x >= 0`, else `alpha * x`.
pub fn leaky_relu(x: &FeatureMap, alpha: f32) -> FeatureMap {
    let data = x
        .data
        .iter()
        .map(|&v| if v >= 0.0 { v } else { alpha * v })
        .collect();
    FeatureMap {
        channels: x.channels,
        height: x.height,
        width: x.width,
        data,
    }
}

/// Window max, no padding.
pub fn maxpool(x: &FeatureMap, size: usize, stride: usize) -> Result<FeatureMap, InferError> {
    let (oh, ow) = match (out_dim(x.height, size, stride, 0), out_dim(x.width, size, stride, 0)) {
        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => (oh, ow),
        _ => {
            return Err(InferError::NonPositiveOutput {
                h: x.height,
                w: x.width,
                kh: size,
                kw: size,
                stride,
                pad: 0,
            })
        }
    };
    let mut data = Vec::with_capacity(x.channels * oh * ow);
    for c in 0..x.channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f32::NEG_INFINITY;
                for ky in 0..size {
                    for kx in 0..size {
                        m = m.max(x.get(c, oy * stride + ky, ox * stride + kx));
                    }
                }
                data.push(m);
            }
        }
    }
    FeatureMap::new(x.channels, oh, ow, data)
}

fn lookup<'a>(store: &'a WeightStore, name: &str) -> Result<&'a Tensor, InferError> {
    store
        .get(name)
        .map(|e| &e.tensor)
        .ok_or_else(|| InferError::MissingWeight(name.to_string()))
}

fn lookup_bias<'a>(
    store: &'a WeightStore,
    name: &Option<String>,
) -> Result<Option<&'a Tensor>, InferError> {
    match name {
        Some(n) => Ok(Some(lookup(store, n)?)),
        None => Ok(None),
    }
}

fn at_layer(index: usize) -> impl Fn(InferError) -> InferError {
    move |source| InferError::AtLayer {
        index,
        source: Box::new(source),
    }
}

/// Apply the layers in sequence. An empty list is the identity.
pub fn forward(
    layers: &[LayerSpec],
    store: &WeightStore,
    x: FeatureMap,
) -> Result<FeatureMap, InferError> {
    let mut cur = x;
    for (index, layer) in layers.iter().enumerate() {
        let wrap = at_layer(index);
        layer.validate().map_err(&wrap)?;
        cur = match layer {
            LayerSpec::ConvDense {
                weight,
                bias,
                stride,
                pad,
            } => {
                let w = lookup(store, weight).map_err(&wrap)?;
                let b = lookup_bias(store, bias).map_err(&wrap)?;
                conv2d_dense(&cur, w, b, *stride, *pad).map_err(&wrap)?
            }
            LayerSpec::ConvFactored {
                weight,
                bias,
                stride,
                pad,
            } => {
                let f = read_factorized(store, weight)
                    .map_err(InferError::Pipeline)
                    .map_err(&wrap)?;
                let b = lookup_bias(store, bias).map_err(&wrap)?;
                conv2d_factored(&cur, &f, b, *stride, *pad).map_err(&wrap)?
            }
            LayerSpec::LeakyRelu { alpha } => leaky_relu(&cur, *alpha),
            LayerSpec::Maxpool { size, stride } => maxpool(&cur, *size, *stride).map_err(&wrap)?,
        };
    }
    Ok(cur)
}

/// Dense conv cost: `2 * P * I*K^2 * O` FLOPs (multiply + add per MAC).
pub fn flops_conv_dense(positions: usize, ik2: usize, out_channels: usize) -> u64 {
    2 * positions as u64 * ik2 as u64 * out_channels as u64
}

/// Factored conv cost: `2 * P * (I*K^2 * R + R * O)`, plus `P * R` for the
/// diagonal scaling when it is not folded into V.
pub fn flops_conv_factored(
    positions: usize,
    ik2: usize,
    out_channels: usize,
    rank: usize,
    fold_diag: bool,
) -> u64 {
    let p = positions as u64;
    let gemms = 2 * p * (ik2 as u64 * rank as u64 + rank as u64 * out_channels as u64);
    if fold_diag {
        gemms
    } else {
        gemms + p * rank as u64
    }
}

/// Per-layer shape and FLOP plan, computed without executing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerPlan {
    pub index: usize,
    pub kind: String,
    pub output_shape: [usize; 3],
    /// Analytic conv cost; zero for activations and pooling.
    pub flops: u64,
}

/// Walk the shape chain and cost every layer.
pub fn plan_layers(
    layers: &[LayerSpec],
    store: &WeightStore,
    input_shape: (usize, usize, usize),
) -> Result<Vec<LayerPlan>, InferError> {
    let (mut c, mut h, mut w) = input_shape;
    let mut plans = Vec::with_capacity(layers.len());
    for (index, layer) in layers.iter().enumerate() {
        let wrap = at_layer(index);
        layer.validate().map_err(&wrap)?;
        let probe = FeatureMap::filled(c, h, w, 0.0);
        let (kind, flops) = match layer {
            LayerSpec::ConvDense {
                weight,
                stride,
                pad,
                ..
            } => {
                let wt = lookup(store, weight).map_err(&wrap)?;
                if wt.rank() != 4 {
                    return Err(wrap(InferError::BadWeightRank {
                        name: weight.clone(),
                        rank: wt.rank(),
                    }));
                }
                let (o, i, kh, kw) = (wt.shape()[0], wt.shape()[1], wt.shape()[2], wt.shape()[3]);
                let (oh, ow) = conv_dims(&probe, i, kh, kw, *stride, *pad).map_err(&wrap)?;
                c = o;
                h = oh;
                w = ow;
                ("conv-dense", flops_conv_dense(oh * ow, i * kh * kw, o))
            }
            LayerSpec::ConvFactored {
                weight,
                stride,
                pad,
                ..
            } => {
                let f = read_factorized(store, weight)
                    .map_err(InferError::Pipeline)
                    .map_err(&wrap)?;
                let [o, i, kh, kw] = f.orig_shape();
                let (oh, ow) = conv_dims(&probe, i, kh, kw, *stride, *pad).map_err(&wrap)?;
                c = o;
                h = oh;
                w = ow;
                (
                    "conv-factored",
                    flops_conv_factored(oh * ow, i * kh * kw, o, f.rank(), true),
                )
            }
            LayerSpec::LeakyRelu { .. } => ("leaky-relu", 0),
            LayerSpec::Maxpool { size, stride } => {
                let pooled = maxpool(&probe, *size, *stride).map_err(&wrap)?;
                h = pooled.height;
                w = pooled.width;
                ("maxpool", 0)
            }
        };
        plans.push(LayerPlan {
            index,
            kind: kind.to_string(),
            output_shape: [c, h, w],
            flops,
        });
    }
    Ok(plans)
}

/// Wall-clock benchmark result. Timing is single-threaded wall clock,
/// median-of-runs; `flops_estimate` is the analytic conv cost, which is
/// deterministic where the times are not.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub runs: usize,
    pub warmup: usize,
    pub times_s: Vec<f64>,
    pub median_s: f64,
    pub mean_s: f64,
    pub min_s: f64,
    pub fps: f64,
    pub flops_estimate: u64,
    /// The factored path folds diag(s) into V, removing the `P*R` term
    /// from its cost.
    pub diag_folded: bool,
}

/// Deterministic pseudo-random input so runs are reproducible
/// (splitmix64 over the flat index, mapped to [-0.5, 0.5]).
pub fn bench_input(channels: usize, height: usize, width: usize) -> FeatureMap {
    let n = channels * height * width;
    let data = (0..n as u64)
        .map(|i| {
            let mut z = i.wrapping_add(0x9e3779b97f4a7c15);
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^= z >> 31;
            (z >> 40) as f32 / (1u64 << 24) as f32 - 0.5
        })
        .collect();
    FeatureMap {
        channels,
        height,
        width,
        data,
    }
}

/// Run `warmup` untimed passes, then `runs` timed passes of the network.
pub fn benchmark(
    layers: &[LayerSpec],
    store: &WeightStore,
    input_shape: (usize, usize, usize),
    runs: usize,
    warmup: usize,
) -> Result<BenchResult, InferError> {
    if runs < 3 || warmup < 1 {
        return Err(InferError::BadBenchArgs { runs, warmup });
    }
    let plans = plan_layers(layers, store, input_shape)?;
    let flops_estimate = plans.iter().map(|p| p.flops).sum();
    let input = bench_input(input_shape.0, input_shape.1, input_shape.2);

    for _ in 0..warmup {
        forward(layers, store, input.clone())?;
    }
    let mut times = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        let out = forward(layers, store, input.clone())?;
        times.push(start.elapsed().as_secs_f64());
        std::hint::black_box(&out);
    }

    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;

    Ok(BenchResult {
        runs,
        warmup,
        min_s: sorted[0],
        median_s: median,
        mean_s: mean,
        fps: 1.0 / median,
        times_s: times,
        flops_estimate,
        diag_folded: true,
    })
}
