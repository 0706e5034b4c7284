//! Compression toolkit for convolutional network weights.
//!
//! The pieces, bottom to top:
//!
//! - [`weightstore`] — dense f32 tensors, a named-tensor container with a
//!   bit-exact binary file format (`.wstore`), and per-tensor statistics.
//! - [`lowrank`] — from-scratch singular value decomposition (one-sided
//!   Jacobi), rank-truncation policies, and the conv-tensor reshape rules.
//! - [`prune`] — L1 magnitude pruning: zero the fraction of elements with
//!   the smallest absolute values, per tensor or globally.
//! - [`pipeline`] — compression orchestration over a whole store: prune,
//!   then factorize selected conv layers, with exact parameter accounting.
//! - [`microinfer`] — desk-scale convolution execution (im2col + GEMM),
//!   dense and factored paths, plus a wall-clock/FLOP benchmark harness.
//! - [`evalkit`] — detection-quality evaluation: IoU, greedy matching,
//!   precision-recall curves, per-class AP, and mAP@50.

pub mod evalkit;
pub mod lowrank;
pub mod microinfer;
pub mod pipeline;
pub mod prune;
pub mod weightstore;

pub use lowrank::{Matrix, RankPolicy, ReshapeMode, SvdFactors};
pub use pipeline::{CompressionConfig, CompressionReport, FactorizedConv};
pub use weightstore::{Role, Selector, Tensor, TensorStats, WeightStore};
