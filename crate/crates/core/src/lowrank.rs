//! Singular value decomposition and rank truncation, from scratch.
//!
//! The decomposition is a one-sided Jacobi SVD run on the taller
//! orientation of the input: rotations orthogonalize column pairs until
//! every pair of columns is numerically orthogonal, at which point column
//! norms are the singular values. All iteration happens in f64; factors are
//! stored as f32 ([`Matrix`]).
//!
//! Conv weight tensors reach the SVD through [`reshape_for_svd`]: either the
//! `[I*K*K, O]` layout that makes the factored convolution executable as two
//! GEMMs, or the near-square factorization of the element count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Guard: refuse decompositions whose short side exceeds this.
pub const MAX_SVD_DIM: usize = 4096;

/// Relative column-orthogonality threshold for Jacobi convergence.
const JACOBI_TOL: f64 = 1e-10;

/// Sweep cap; exceeding it is reported as non-convergence.
const MAX_SWEEPS: usize = 60;

#[derive(Debug, Error)]
pub enum SvdError {
    #[error("matrix {rows}x{cols} does not match data length {len}")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },
    #[error("matrix dimensions must be >= 1")]
    EmptyMatrix,
    #[error("matrix contains non-finite values")]
    NonFinite,
    #[error("matrix short side {0} exceeds the supported maximum {MAX_SVD_DIM}")]
    TooLarge(usize),
    #[error("jacobi sweeps did not converge after {sweeps} sweeps")]
    NonConvergence { sweeps: usize },
    #[error("rank must be >= 1")]
    ZeroRank,
    #[error("requested rank {k} exceeds min(m, n) = {max}")]
    RankOutOfRange { k: usize, max: usize },
    #[error("energy fraction {0} outside (0, 1]")]
    BadEnergyFraction(f64),
    #[error("inconsistent factors: {0}")]
    FactorShape(String),
}

/// Dense row-major f32 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, SvdError> {
        if rows == 0 || cols == 0 {
            return Err(SvdError::EmptyMatrix);
        }
        if rows * cols != data.len() {
            return Err(SvdError::ShapeMismatch {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }
}

/// Thin SVD factors: `A ~ U * diag(s) * V^T` with `U: m x k`, `V: n x k`.
///
/// Construction enforces: `s` non-increasing and non-negative, `k >= 1`,
/// and consistent factor shapes.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    u: Matrix,
    s: Vec<f32>,
    v: Matrix,
}

impl SvdFactors {
    pub fn new(u: Matrix, s: Vec<f32>, v: Matrix) -> Result<Self, SvdError> {
        let k = s.len();
        if k == 0 {
            return Err(SvdError::ZeroRank);
        }
        if u.cols() != k || v.cols() != k {
            return Err(SvdError::FactorShape(format!(
                "u is {}x{}, v is {}x{}, s has length {k}",
                u.rows(),
                u.cols(),
                v.rows(),
                v.cols()
            )));
        }
        if k > u.rows().min(v.rows()) {
            return Err(SvdError::RankOutOfRange {
                k,
                max: u.rows().min(v.rows()),
            });
        }
        if s.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(SvdError::FactorShape(
                "singular values must be finite and non-negative".into(),
            ));
        }
        if s.windows(2).any(|w| w[0] < w[1]) {
            return Err(SvdError::FactorShape(
                "singular values must be non-increasing".into(),
            ));
        }
        Ok(Self { u, s, v })
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn s(&self) -> &[f32] {
        &self.s
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// Keep only the leading `k` singular triples.
    pub fn truncate(&self, k: usize) -> Result<SvdFactors, SvdError> {
        if k == 0 {
            return Err(SvdError::ZeroRank);
        }
        if k > self.rank() {
            return Err(SvdError::RankOutOfRange { k, max: self.rank() });
        }
        let take_cols = |m: &Matrix| {
            Matrix::from_fn(m.rows(), k, |i, j| m.get(i, j))
        };
        SvdFactors::new(take_cols(&self.u), self.s[..k].to_vec(), take_cols(&self.v))
    }
}

/// How many singular values to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum RankPolicy {
    /// Exactly `k`; exceeding min(m, n) is an error, never a silent clamp.
    Fixed { k: usize },
    /// Smallest rank whose cumulative squared-singular-value share reaches
    /// `fraction` of the total.
    Energy { fraction: f64 },
    /// Keep everything.
    Full,
}

impl RankPolicy {
    pub fn fixed(k: usize) -> Self {
        RankPolicy::Fixed { k }
    }

    pub fn energy(fraction: f64) -> Self {
        RankPolicy::Energy { fraction }
    }

    /// Resolve the policy against a full spectrum (non-increasing).
    pub fn resolve(&self, s: &[f32]) -> Result<usize, SvdError> {
        match *self {
            RankPolicy::Fixed { k } => {
                if k == 0 {
                    Err(SvdError::ZeroRank)
                } else if k > s.len() {
                    Err(SvdError::RankOutOfRange { k, max: s.len() })
                } else {
                    Ok(k)
                }
            }
            RankPolicy::Energy { fraction } => energy_rank(s, fraction),
            RankPolicy::Full => Ok(s.len()),
        }
    }
}

/// Smallest `k` with cumulative sigma^2 energy >= `fraction` of the total.
///
/// A zero spectrum has no energy to capture; rank 1 is returned so the
/// result is always a valid rank.
pub fn energy_rank(s: &[f32], fraction: f64) -> Result<usize, SvdError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SvdError::BadEnergyFraction(fraction));
    }
    let squares: Vec<f64> = s.iter().map(|&x| f64::from(x) * f64::from(x)).collect();
    let mut cum = Vec::with_capacity(squares.len());
    let mut acc = 0.0;
    for sq in &squares {
        acc += sq;
        cum.push(acc);
    }
    let total = acc;
    if total == 0.0 {
        return Ok(1);
    }
    for (i, c) in cum.iter().enumerate() {
        if *c >= fraction * total {
            return Ok(i + 1);
        }
    }
    Ok(s.len())
}

/// Full SVD of `a`: `k = min(m, n)` singular triples, singular values
/// non-increasing, factor columns orthonormal.
///
/// Deterministic: the largest-magnitude entry of each `U` column is forced
/// non-negative (earliest index on ties).
pub fn full_svd(a: &Matrix) -> Result<SvdFactors, SvdError> {
    if !a.is_finite() {
        return Err(SvdError::NonFinite);
    }
    let (m, n) = (a.rows(), a.cols());
    let short = m.min(n);
    if short > MAX_SVD_DIM {
        return Err(SvdError::TooLarge(short));
    }

    let (mut u_cols, mut sigma, mut v_cols, um, vn) = if m >= n {
        let (u, s, v) = jacobi_tall(m, n, a.data())?;
        (u, s, v, m, n)
    } else {
        // Work on the transpose; left/right factors swap on the way back.
        let at = a.transpose();
        let (u, s, v) = jacobi_tall(n, m, at.data())?;
        (v, s, u, m, n)
    };
    let k = short;

    // Sign convention on U columns, mirrored into V to keep the product.
    for col in 0..k {
        let uc = &u_cols[col * um..(col + 1) * um];
        let mut best = 0usize;
        for (i, &x) in uc.iter().enumerate() {
            if x.abs() > uc[best].abs() {
                best = i;
            }
        }
        if uc[best] < 0.0 {
            for x in &mut u_cols[col * um..(col + 1) * um] {
                *x = -*x;
            }
            for x in &mut v_cols[col * vn..(col + 1) * vn] {
                *x = -*x;
            }
        }
    }

    let u = Matrix::from_fn(um, k, |i, j| u_cols[j * um + i] as f32);
    let v = Matrix::from_fn(vn, k, |i, j| v_cols[j * vn + i] as f32);
    let s: Vec<f32> = sigma.drain(..).map(|x| x as f32).collect();
    SvdFactors::new(u, s, v)
}

/// One-sided Jacobi on a tall matrix (`m >= n`), f64 throughout.
///
/// Returns `(u, sigma, v)` with `u` column-major `m x n`, `v` column-major
/// `n x n`, `sigma` non-increasing. Columns whose norm falls at the
/// rounding floor are reported as exactly zero and their `u` columns are
/// completed from canonical basis vectors, so `u` is orthonormal for every
/// input, including rank-deficient and all-zero matrices.
/// Column-major left factor, singular values, column-major right factor.
type JacobiFactors = (Vec<f64>, Vec<f64>, Vec<f64>);

fn jacobi_tall(m: usize, n: usize, a_row_major: &[f32]) -> Result<JacobiFactors, SvdError> {
    // Column-major work copy.
    let mut w = vec![0.0f64; m * n];
    for i in 0..m {
        for j in 0..n {
            w[j * m + i] = f64::from(a_row_major[i * n + j]);
        }
    }
    let mut v = vec![0.0f64; n * n];
    for j in 0..n {
        v[j * n + j] = 1.0;
    }

    let norm_f: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    // Columns whose norm falls to the rounding floor of the whole matrix
    // are numerically zero; pairs touching them must not rotate, or the
    // noise directions keep re-correlating and the sweep never settles.
    let dead = (norm_f * f64::EPSILON).powi(2);
    if norm_f > 0.0 {
        let mut converged = false;
        for _sweep in 0..MAX_SWEEPS {
            let mut rotated = 0usize;
            for p in 0..n.saturating_sub(1) {
                for q in p + 1..n {
                    let (wp, wq) = col_pair(&mut w, m, p, q);
                    let mut app = 0.0;
                    let mut aqq = 0.0;
                    let mut apq = 0.0;
                    for i in 0..m {
                        app += wp[i] * wp[i];
                        aqq += wq[i] * wq[i];
                        apq += wp[i] * wq[i];
                    }
                    if app <= dead || aqq <= dead {
                        continue;
                    }
                    if apq.abs() <= JACOBI_TOL * (app * aqq).sqrt() {
                        continue;
                    }
                    rotated += 1;
                    // Rotation angle that zeroes the Gram off-diagonal.
                    let tau = (aqq - app) / (2.0 * apq);
                    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for i in 0..m {
                        let xp = wp[i];
                        let xq = wq[i];
                        wp[i] = c * xp - s * xq;
                        wq[i] = s * xp + c * xq;
                    }
                    let (vp, vq) = col_pair(&mut v, n, p, q);
                    for i in 0..n {
                        let xp = vp[i];
                        let xq = vq[i];
                        vp[i] = c * xp - s * xq;
                        vq[i] = s * xp + c * xq;
                    }
                }
            }
            if rotated == 0 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SvdError::NonConvergence { sweeps: MAX_SWEEPS });
        }
    }

    // Column norms are the singular values; order them descending with a
    // deterministic index tie-break.
    let mut norms: Vec<f64> = (0..n)
        .map(|j| w[j * m..(j + 1) * m].iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    // Norms at the rounding floor are genuine zeros of the f32 input.
    let cutoff = norm_f * f64::EPSILON * (m.max(n) as f64);
    for nm in &mut norms {
        if *nm <= cutoff {
            *nm = 0.0;
        }
    }

    let mut u = vec![0.0f64; m * n];
    let mut sigma = vec![0.0f64; n];
    let mut v_out = vec![0.0f64; n * n];
    let mut null_cols = Vec::new();
    for (out, &src) in order.iter().enumerate() {
        sigma[out] = norms[src];
        v_out[out * n..(out + 1) * n].copy_from_slice(&v[src * n..(src + 1) * n]);
        if norms[src] > 0.0 {
            let inv = 1.0 / norms[src];
            for i in 0..m {
                u[out * m + i] = w[src * m + i] * inv;
            }
        } else {
            null_cols.push(out);
        }
    }
    for col in null_cols {
        complete_basis_column(&mut u, m, col);
    }

    Ok((u, sigma, v_out))
}

/// Mutable views of two distinct columns of a column-major matrix.
fn col_pair(data: &mut [f64], len: usize, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (head, tail) = data.split_at_mut(q * len);
    (&mut head[p * len..(p + 1) * len], &mut tail[..len])
}

/// Fill column `col` of the column-major `m x n` basis `u` with a unit
/// vector orthogonal to all other nonzero columns, derived from the
/// canonical basis vector with the largest residual (ties to the earliest
/// index). Two orthogonalization passes keep it orthonormal in f64.
fn complete_basis_column(u: &mut [f64], m: usize, col: usize) {
    let n = u.len() / m;
    let built: Vec<usize> = (0..n)
        .filter(|&j| j != col && u[j * m..(j + 1) * m].iter().any(|&x| x != 0.0))
        .collect();

    let mut best_q = 0;
    let mut best_res = -1.0;
    for q in 0..m {
        let mut res = 1.0;
        for &j in &built {
            let proj = u[j * m + q];
            res -= proj * proj;
        }
        if res > best_res + 1e-12 {
            best_res = res;
            best_q = q;
        }
    }

    let mut cand = vec![0.0f64; m];
    cand[best_q] = 1.0;
    for _ in 0..2 {
        for &j in &built {
            let dot: f64 = (0..m).map(|i| cand[i] * u[j * m + i]).sum();
            for i in 0..m {
                cand[i] -= dot * u[j * m + i];
            }
        }
    }
    let norm: f64 = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
    for i in 0..m {
        u[col * m + i] = cand[i] / norm;
    }
}

/// Full SVD, then keep the rank the policy selects.
pub fn truncated_svd(a: &Matrix, policy: RankPolicy) -> Result<SvdFactors, SvdError> {
    let full = full_svd(a)?;
    let k = policy.resolve(full.s())?;
    full.truncate(k)
}

/// `U * diag(s) * V^T`, accumulated in f64, returned as f32.
pub fn reconstruct(f: &SvdFactors) -> Matrix {
    let (m, n, k) = (f.u().rows(), f.v().rows(), f.rank());
    let u = f.u().data();
    let v = f.v().data();
    let s = f.s();
    Matrix::from_fn(m, n, |i, j| {
        let mut acc = 0.0f64;
        for r in 0..k {
            acc += f64::from(u[i * k + r]) * f64::from(s[r]) * f64::from(v[j * k + r]);
        }
        acc as f32
    })
}

/// How a conv weight tensor becomes a 2-D matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReshapeMode {
    /// `[I*K*K, O]`: the layout under which the factored convolution runs
    /// as two GEMMs. The default.
    #[default]
    Table1,
    /// Rows = largest divisor of the element count not exceeding its
    /// integer square root; as square as an exact factorization allows.
    NearSquare,
}

/// Matrix dimensions for a conv shape `[O, I, Kh, Kw]` under `mode`.
/// Both modes preserve the element count exactly.
pub fn reshape_for_svd(conv_shape: [usize; 4], mode: ReshapeMode) -> (usize, usize) {
    let [o, i, kh, kw] = conv_shape;
    match mode {
        ReshapeMode::Table1 => (i * kh * kw, o),
        ReshapeMode::NearSquare => near_square_dims(o * i * kh * kw),
    }
}

/// Largest divisor of `numel` at most `isqrt(numel)`, paired with its
/// cofactor. Primes land on `(1, numel)`.
pub fn near_square_dims(numel: usize) -> (usize, usize) {
    debug_assert!(numel >= 1);
    let root = numel.isqrt();
    for d in (1..=root).rev() {
        if numel.is_multiple_of(d) {
            return (d, numel / d);
        }
    }
    (1, numel)
}
