//! Shared helpers for the criterion benchmarks.

use slimconv::weightstore::Tensor;

/// Deterministic pseudo-random conv weight tensor.
pub fn random_conv(seed: u64, shape: [usize; 4]) -> Tensor {
    let numel: usize = shape.iter().product();
    let mut state = seed | 1;
    let data: Vec<f32> = (0..numel)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as f32 / u32::MAX as f32) - 0.5
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}
