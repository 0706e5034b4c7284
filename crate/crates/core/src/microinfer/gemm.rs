//! Matrix multiply and patch unrolling for the convolution paths.
//!
//! One GEMM kernel serves both the dense and factored paths so timing
//! comparisons isolate rank, not kernel quality. Each output element
//! accumulates in f64 and rounds once to f32.

/// Row-major `[m, k] * [k, n] -> [m, n]`.
pub(crate) fn matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0f32; m * n];
    let mut acc = vec![0.0f64; n];
    for i in 0..m {
        acc.fill(0.0);
        for (kk, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            let aik = f64::from(aik);
            let brow = &b[kk * n..(kk + 1) * n];
            for (j, &bv) in brow.iter().enumerate() {
                acc[j] += aik * f64::from(bv);
            }
        }
        for (j, &v) in acc.iter().enumerate() {
            out[i * n + j] = v as f32;
        }
    }
    out
}

pub(crate) fn transpose(a: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Unroll `[C, H, W]` input patches into the `[C*Kh*Kw, P]` column matrix
/// (P = output positions), zero padding outside the image.
#[allow(clippy::too_many_arguments)]
pub(crate) fn im2col(
    input: &[f32],
    channels: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f32> {
    let p = out_h * out_w;
    let mut col = vec![0.0f32; channels * kh * kw * p];
    for c in 0..channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..out_h {
                    let iy = oy * stride + ky;
                    if iy < pad || iy >= h + pad {
                        continue;
                    }
                    let iy = iy - pad;
                    for ox in 0..out_w {
                        let ix = ox * stride + kx;
                        if ix < pad || ix >= w + pad {
                            continue;
                        }
                        dst[oy * out_w + ox] = plane[iy * w + (ix - pad)];
                    }
                }
            }
        }
    }
    col
}
