//! Decomposition and pruning throughput at typical conv-layer shapes.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use slimconv::lowrank::{full_svd, Matrix};
use slimconv::prune::prune_l1;
use slimconv_bench::random_conv;

fn svd_shapes(c: &mut Criterion) {
    let mut group = c.benchmark_group("full_svd");
    group.sample_size(10);
    for &(rows, cols) in &[(144usize, 32usize), (576, 256), (128, 96)] {
        let t = random_conv(rows as u64 * 31 + cols as u64, [rows, cols, 1, 1]);
        let m = Matrix::new(rows, cols, t.data().to_vec()).unwrap();
        group.bench_function(format!("{rows}x{cols}"), |b| {
            b.iter(|| black_box(full_svd(black_box(&m)).unwrap()))
        });
    }
    group.finish();
}

fn prune_throughput(c: &mut Criterion) {
    let mut group = c.benchmark_group("prune_l1");
    group.sample_size(20);
    for &n in &[10_000usize, 1_000_000] {
        let t = random_conv(n as u64, [n, 1, 1, 1]);
        group.bench_function(format!("{n}_elements"), |b| {
            b.iter(|| black_box(prune_l1(black_box(&t), 0.3).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, svd_shapes, prune_throughput);
criterion_main!(benches);
