//! Property suite for the SVD: oracle parity, Eckart-Young, optimality,
//! orthogonality, and scale equivariance on seeded random matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slimconv::lowrank::{
    energy_rank, full_svd, reconstruct, truncated_svd, Matrix, RankPolicy, SvdFactors,
};

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f32> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

fn frobenius(m: &Matrix) -> f64 {
    m.data()
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

fn frobenius_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Independent oracle: eigenvalues of the Gram matrix A^T A by classical
/// two-sided Jacobi on the symmetric matrix. Singular values are the
/// square roots. Shares no code with the one-sided path under test.
fn gram_singular_values(a: &Matrix) -> Vec<f64> {
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
                // G <- J^T G J, rotating columns then rows p and q.
                for r in 0..n {
                    let grp = g[r * n + p];
                    let grq = g[r * n + q];
                    g[r * n + p] = c * grp - s * grq;
                    g[r * n + q] = s * grp + c * grq;
                }
                for cidx in 0..n {
                    let gpc = g[p * n + cidx];
                    let gqc = g[q * n + cidx];
                    g[p * n + cidx] = c * gpc - s * gqc;
                    g[q * n + cidx] = s * gpc + c * gqc;
                }
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| g[i * n + i].max(0.0).sqrt()).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig.truncate(m.min(n));
    eig
}

fn tail_energy(s: &[f32], k: usize) -> f64 {
    s[k..]
        .iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn singular_values_match_gram_eigen_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..40 {
        let rows = rng.random_range(2..=48);
        let cols = rng.random_range(2..=48);
        let a = random_matrix(&mut rng, rows, cols);
        let f = full_svd(&a).unwrap();
        let oracle = gram_singular_values(&a);
        assert_eq!(f.s().len(), oracle.len());
        let sigma_max = oracle[0].max(1e-30);
        for (i, (&got, &want)) in f.s().iter().zip(&oracle).enumerate() {
            let denom = want.max(1e-9 * sigma_max);
            let rel = (f64::from(got) - want).abs() / denom;
            assert!(
                rel <= 1e-5,
                "trial {trial} {rows}x{cols} sigma[{i}]: {got} vs oracle {want} (rel {rel:.2e})"
            );
        }
    }
}

#[test]
fn example_16x9_against_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(16 * 9);
    let a = random_matrix(&mut rng, 16, 9);
    let f = full_svd(&a).unwrap();
    let oracle = gram_singular_values(&a);
    for (&got, &want) in f.s().iter().zip(&oracle) {
        assert!((f64::from(got) - want).abs() <= 1e-5 * want.max(1e-12));
    }
}

#[test]
fn eckart_young_identity_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let rows = rng.random_range(4..=40);
        let cols = rng.random_range(4..=40);
        let a = random_matrix(&mut rng, rows, cols);
        let full = full_svd(&a).unwrap();
        let min_dim = rows.min(cols);
        for k in [1, (min_dim / 2).max(1), min_dim.saturating_sub(1).max(1)] {
            let t = truncated_svd(&a, RankPolicy::fixed(k)).unwrap();
            let err = frobenius_diff(&a, &reconstruct(&t));
            let expect = tail_energy(full.s(), k);
            let denom = expect.max(1e-7 * frobenius(&a)).max(1e-12);
            assert!(
                (err - expect).abs() / denom <= 1e-4,
                "{rows}x{cols} k={k}: err {err} vs spectrum tail {expect}"
            );
        }
    }
}

#[test]
fn truncation_beats_random_rank_k_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = random_matrix(&mut rng, 14, 10);
    let k = 3;
    let best = truncated_svd(&a, RankPolicy::fixed(k)).unwrap();
    let opt_err = frobenius_diff(&a, &reconstruct(&best));
    for _ in 0..120 {
        let p = random_matrix(&mut rng, 14, k);
        let q = random_matrix(&mut rng, k, 10);
        let b = Matrix::from_fn(14, 10, |i, j| {
            let mut acc = 0.0f64;
            for r in 0..k {
                acc += f64::from(p.get(i, r)) * f64::from(q.get(r, j));
            }
            acc as f32
        });
        let b_err = frobenius_diff(&a, &b);
        assert!(
            opt_err <= b_err + 1e-6,
            "a random rank-{k} matrix beat the truncation: {opt_err} > {b_err}"
        );
    }
}

fn orthonormality_defect(m: &Matrix) -> f64 {
    let k = m.cols();
    let mut worst = 0.0f64;
    for a in 0..k {
        for b in 0..k {
            let mut dot = 0.0f64;
            for i in 0..m.rows() {
                dot += f64::from(m.get(i, a)) * f64::from(m.get(i, b));
            }
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

#[test]
fn factors_are_orthonormal_for_every_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let check = |f: &SvdFactors, what: &str| {
        assert!(
            orthonormality_defect(f.u()) <= 1e-5,
            "{what}: U defect too large"
        );
        assert!(
            orthonormality_defect(f.v()) <= 1e-5,
            "{what}: V defect too large"
        );
    };
    for trial in 0..25 {
        let rows = rng.random_range(2..=32);
        let cols = rng.random_range(2..=32);
        let a = random_matrix(&mut rng, rows, cols);
        check(&full_svd(&a).unwrap(), &format!("random {trial}"));
    }
    // Structured cases: rank deficient and zero.
    let rank1 = Matrix::from_fn(9, 6, |i, j| (i as f32 + 1.0) * (j as f32 - 2.5));
    check(&full_svd(&rank1).unwrap(), "rank-1");
    check(&full_svd(&Matrix::zeros(7, 5)).unwrap(), "zero");
}

#[test]
fn scale_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for &c in &[3.7f32, 0.04, 191.0] {
        let a = random_matrix(&mut rng, 18, 12);
        let scaled = Matrix::new(18, 12, a.data().iter().map(|&v| c * v).collect()).unwrap();
        let k = 5;
        let ra = reconstruct(&truncated_svd(&a, RankPolicy::fixed(k)).unwrap());
        let rs = reconstruct(&truncated_svd(&scaled, RankPolicy::fixed(k)).unwrap());
        let scale_ref = frobenius(&rs).max(1e-12);
        let mut diff = 0.0f64;
        for (x, y) in ra.data().iter().zip(rs.data()) {
            diff += (f64::from(c) * f64::from(*x) - f64::from(*y)).powi(2);
        }
        assert!(
            diff.sqrt() / scale_ref <= 1e-5,
            "scaling by {c} moved the truncation: {}",
            diff.sqrt() / scale_ref
        );
    }
}

#[test]
fn energy_rank_monotone_on_random_spectra() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..50 {
        let n = rng.random_range(1..=20);
        let mut s: Vec<f32> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let mut prev = 0;
        for step in 1..=20 {
            let fraction = step as f64 / 20.0;
            let k = energy_rank(&s, fraction).unwrap();
            assert!(k >= prev);
            prev = k;
        }
    }
}
