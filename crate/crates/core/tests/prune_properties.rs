//! Pruning properties against a full-sort oracle: exact zero counts,
//! correct magnitude selection, idempotence, and permutation behavior.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slimconv::prune::{prune_l1, prune_store, PruneScope};
use slimconv::weightstore::{Role, Selector, Tensor, WeightStore};

fn random_tensor(rng: &mut ChaCha8Rng, n: usize, with_ties: bool) -> Tensor {
    let data: Vec<f32> = (0..n)
        .map(|_| {
            let v: f32 = rng.random_range(-2.0..2.0);
            if with_ties {
                // Quantize so repeated magnitudes are common.
                (v * 4.0).round() / 4.0
            } else {
                v
            }
        })
        .collect();
    Tensor::new(vec![n], data).unwrap()
}

/// Oracle: sort all magnitudes; the survivors must each be at least as
/// large as every pruned magnitude.
fn check_selection(original: &[f32], pruned: &[f32], zeroed_target: usize) {
    let zeroed: Vec<usize> = (0..original.len())
        .filter(|&i| pruned[i] == 0.0 && original[i] != 0.0)
        .collect();
    let reused_zeros = original.iter().filter(|&&v| v == 0.0).count();
    assert_eq!(zeroed.len() + reused_zeros.min(zeroed_target), zeroed_target.min(original.len()));

    let max_pruned = zeroed
        .iter()
        .map(|&i| original[i].abs())
        .fold(0.0f32, f32::max);
    for i in 0..original.len() {
        if pruned[i] != 0.0 {
            assert!(
                pruned[i].abs() >= max_pruned,
                "survivor |{}| < pruned |{max_pruned}|",
                pruned[i]
            );
        }
    }
}

#[test]
fn exact_count_and_selection_on_random_tensors() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..100 {
        let n = rng.random_range(1..400);
        let with_ties = trial % 2 == 0;
        let t = random_tensor(&mut rng, n, with_ties);
        let fraction = rng.random_range(0.0..=1.0);
        let (p, row) = prune_l1(&t, fraction).unwrap();
        let expected = (fraction * n as f64).floor() as usize;
        assert_eq!(row.zeroed, expected, "trial {trial}");
        let zeros = p.data().iter().filter(|&&v| v.to_bits() == 0).count();
        assert!(zeros >= expected);
        check_selection(t.data(), p.data(), expected);
    }
}

#[test]
fn paper_fraction_on_1000_elements() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let t = random_tensor(&mut rng, 1000, true);
    let (p, row) = prune_l1(&t, 0.3).unwrap();
    assert_eq!(row.zeroed, 300);
    check_selection(t.data(), p.data(), 300);
}

#[test]
fn global_scope_totals_and_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..20 {
        let mut store = WeightStore::new();
        let mut total = 0usize;
        let count = rng.random_range(2..6);
        for i in 0..count {
            let n = rng.random_range(1..120);
            total += n;
            store
                .push(format!("t{i}"), random_tensor(&mut rng, n, true), Role::Other)
                .unwrap();
        }
        let fraction = rng.random_range(0.0..1.0);
        let (out, report) =
            prune_store(&store, fraction, PruneScope::Global, &Selector::any()).unwrap();
        assert_eq!(report.total_zeroed, (fraction * total as f64).floor() as usize);

        // Oracle: pool every element, sort by magnitude; every survivor
        // anywhere must be >= every pruned element anywhere.
        let mut pooled_pruned_max = 0.0f32;
        for (e_in, e_out) in store.entries().iter().zip(out.entries()) {
            for (a, b) in e_in.tensor.data().iter().zip(e_out.tensor.data()) {
                if *b == 0.0 && *a != 0.0 {
                    pooled_pruned_max = pooled_pruned_max.max(a.abs());
                }
            }
        }
        for e in out.entries() {
            for &v in e.tensor.data() {
                if v != 0.0 {
                    assert!(v.abs() >= pooled_pruned_max);
                }
            }
        }
    }
}

#[test]
fn per_tensor_prune_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..30 {
        let n = rng.random_range(1..200);
        let t = random_tensor(&mut rng, n, true);
        let fraction = rng.random_range(0.0..1.0);
        let (once, _) = prune_l1(&t, fraction).unwrap();
        let (twice, _) = prune_l1(&once, fraction).unwrap();
        assert!(once.bit_eq(&twice));
    }
}

#[test]
fn distinct_magnitudes_commute_with_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for _ in 0..30 {
        let n = rng.random_range(2..100);
        // Strictly distinct magnitudes by construction.
        let mut magnitudes: Vec<f32> = (0..n).map(|i| 0.5 + i as f32).collect();
        magnitudes.shuffle(&mut rng);
        let data: Vec<f32> = magnitudes
            .iter()
            .map(|&m| if rng.random_bool(0.5) { m } else { -m })
            .collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);

        let t = Tensor::new(vec![n], data.clone()).unwrap();
        let permuted: Vec<f32> = perm.iter().map(|&i| data[i]).collect();
        let tp = Tensor::new(vec![n], permuted).unwrap();

        let fraction = rng.random_range(0.0..1.0);
        let (a, _) = prune_l1(&t, fraction).unwrap();
        let (b, _) = prune_l1(&tp, fraction).unwrap();
        for (out_idx, &src) in perm.iter().enumerate() {
            assert_eq!(b.data()[out_idx].to_bits(), a.data()[src].to_bits());
        }
    }
}
