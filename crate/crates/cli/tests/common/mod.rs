//! Shared helpers and independent oracles for the CLI test targets.
//! Each oracle re-implements its protocol from scratch; none shares code
//! with the library paths under test.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slimconv::evalkit::{Detection, GroundTruth};
use slimconv::lowrank::Matrix;
use slimconv::weightstore::{Role, Tensor, WeightStore};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_slimconv")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f32> = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let numel: usize = shape.iter().product();
    let data: Vec<f32> = (0..numel).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape, data).unwrap()
}

/// Random store with mixed roles, shapes, and metadata.
pub fn random_store(rng: &mut ChaCha8Rng) -> WeightStore {
    let mut store = WeightStore::new();
    let n = rng.random_range(0..8);
    for i in 0..n {
        let (shape, role) = if rng.random_bool(0.5) {
            let o = rng.random_range(1..6);
            let ic = rng.random_range(1..4);
            let k = rng.random_range(1..4);
            (vec![o, ic, k, k], Role::ConvWeight)
        } else {
            (vec![rng.random_range(1..30)], if rng.random_bool(0.5) { Role::Bias } else { Role::Other })
        };
        let mut t = random_tensor(rng, shape);
        // Sprinkle exact and negative zeros; round trips must hold bitwise.
        if t.numel() > 2 && rng.random_bool(0.5) {
            let mut data = t.data().to_vec();
            data[0] = 0.0;
            data[1] = -0.0;
            t = Tensor::new(t.shape().to_vec(), data).unwrap();
        }
        store.push(format!("t{i}"), t, role).unwrap();
    }
    if rng.random_bool(0.5) {
        store
            .metadata_mut()
            .insert("note".into(), format!("seeded-{n}"));
    }
    store
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.data()
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

pub fn frobenius_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

/// Oracle: singular values via classical two-sided Jacobi eigenvalue
/// iteration on the Gram matrix A^T A.
pub fn gram_singular_values(a: &Matrix) -> Vec<f64> {
    let (m, n) = (a.rows(), a.cols());
    let mut g = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for r in 0..m {
                acc += f64::from(a.get(r, i)) * f64::from(a.get(r, j));
            }
            g[i * n + j] = acc;
        }
    }
    let norm: f64 = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let stop = (1e-14 * norm.max(1e-300)).powi(2);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += g[p * n + q] * g[p * n + q];
            }
        }
        if off * 2.0 <= stop {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let gpq = g[p * n + q];
                if gpq == 0.0 {
                    continue;
                }
                let theta = (g[q * n + q] - g[p * n + p]) / (2.0 * gpq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..n {
                    let grp = g[r * n + p];
                    let grq = g[r * n + q];
                    g[r * n + p] = c * grp - s * grq;
                    g[r * n + q] = s * grp + c * grq;
                }
                for cc in 0..n {
                    let gpc = g[p * n + cc];
                    let gqc = g[q * n + cc];
                    g[p * n + cc] = c * gpc - s * gqc;
                    g[q * n + cc] = s * gpc + c * gqc;
                }
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| g[i * n + i].max(0.0).sqrt()).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig.truncate(m.min(n));
    eig
}

/// Oracle: the full detection-evaluation protocol, brute force.
pub mod brute_map {
    use super::{Detection, GroundTruth};

    fn corners(cx: f64, cy: f64, w: f64, h: f64) -> (f64, f64, f64, f64) {
        (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    fn iou(a: &Detection, g: &GroundTruth) -> f64 {
        let (ax1, ay1, ax2, ay2) = corners(a.bbox.cx, a.bbox.cy, a.bbox.w, a.bbox.h);
        let (bx1, by1, bx2, by2) = corners(g.bbox.cx, g.bbox.cy, g.bbox.w, g.bbox.h);
        let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
        let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
        let inter = iw * ih;
        let ua = (ax2 - ax1) * (ay2 - ay1);
        let ub = (bx2 - bx1) * (by2 - by1);
        inter / (ua + ub - inter)
    }

    fn confidence_order(dets: &[&Detection]) -> Vec<usize> {
        let mut remaining: Vec<usize> = (0..dets.len()).collect();
        let mut order = Vec::with_capacity(dets.len());
        while !remaining.is_empty() {
            let mut best = 0;
            for i in 1..remaining.len() {
                if dets[remaining[i]].confidence > dets[remaining[best]].confidence {
                    best = i;
                }
            }
            order.push(remaining.remove(best));
        }
        order
    }

    pub fn class_ap(dets: &[&Detection], gts: &[&GroundTruth], thresh: f64) -> f64 {
        let order = confidence_order(dets);
        let mut taken = vec![false; gts.len()];
        let mut flags = Vec::new();
        for &di in &order {
            let mut best_gt = usize::MAX;
            let mut best_iou = -1.0;
            for (gi, g) in gts.iter().enumerate() {
                if taken[gi] || g.image_id != dets[di].image_id {
                    continue;
                }
                let v = iou(dets[di], g);
                if v >= thresh && v > best_iou {
                    best_iou = v;
                    best_gt = gi;
                }
            }
            if best_gt != usize::MAX {
                taken[best_gt] = true;
                flags.push(true);
            } else {
                flags.push(false);
            }
        }

        let n = flags.len();
        if n == 0 || gts.is_empty() {
            return 0.0;
        }
        let mut recalls = Vec::with_capacity(n);
        let mut precisions = Vec::with_capacity(n);
        let mut tp = 0.0f64;
        for (i, &f) in flags.iter().enumerate() {
            if f {
                tp += 1.0;
            }
            recalls.push(tp / gts.len() as f64);
            precisions.push(tp / (i + 1) as f64);
        }
        let envelope_at = |r: f64| -> f64 {
            let mut best: f64 = 0.0;
            for i in 0..n {
                if recalls[i] >= r {
                    best = best.max(precisions[i]);
                }
            }
            best
        };
        let mut ap = 0.0;
        let mut prev = 0.0;
        for i in 0..n {
            let r = recalls[i];
            if r > prev {
                ap += (r - prev) * envelope_at(r);
                prev = r;
            }
        }
        ap
    }

    pub fn map50(dets: &[Detection], gts: &[GroundTruth], thresh: f64) -> f64 {
        let mut classes: Vec<usize> = gts.iter().map(|g| g.class_id).collect();
        classes.sort_unstable();
        classes.dedup();
        if classes.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for &c in &classes {
            let cd: Vec<&Detection> = dets.iter().filter(|d| d.class_id == c).collect();
            let cg: Vec<&GroundTruth> = gts.iter().filter(|g| g.class_id == c).collect();
            total += class_ap(&cd, &cg, thresh);
        }
        total / classes.len() as f64
    }
}
