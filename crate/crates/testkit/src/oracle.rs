//! Naive reference computations: direct transcriptions of the defining
//! formulas with no shortcuts.

use std::f64::consts::PI;

/// Zero-padded 2D cross-correlation. The input is `[N, C_in, H, W]` row-major
/// and the kernel `[C_out, C_in, k, k]`; returns `(data, [N, C_out, H', W'])`.
///
/// Unlike the engine, this materializes the padded buffer first, so indexing
/// never needs bounds checks: a structurally different path to contrast
/// against.
pub fn conv2d_naive(
    input: &[f64],
    in_shape: [usize; 4],
    kernel: &[f64],
    k_shape: [usize; 4],
    stride: usize,
    padding: usize,
) -> (Vec<f64>, [usize; 4]) {
    let [n, cin, h, w] = in_shape;
    let [cout, kcin, k, kw] = k_shape;
    assert_eq!(cin, kcin, "channel mismatch");
    assert_eq!(k, kw, "kernel must be square");

    let ph = h + 2 * padding;
    let pw = w + 2 * padding;
    let mut padded = vec![0.0; n * cin * ph * pw];
    for b in 0..n {
        for c in 0..cin {
            for y in 0..h {
                for x in 0..w {
                    padded[((b * cin + c) * ph + y + padding) * pw + x + padding] =
                        input[((b * cin + c) * h + y) * w + x];
                }
            }
        }
    }

    let oh = (ph - k) / stride + 1;
    let ow = (pw - k) / stride + 1;
    let mut out = vec![0.0; n * cout * oh * ow];
    for b in 0..n {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let pv = padded
                                    [((b * cin + ci) * ph + oy * stride + ky) * pw + ox * stride + kx];
                                let kv = kernel[((co * cin + ci) * k + ky) * k + kx];
                                acc += pv * kv;
                            }
                        }
                    }
                    out[((b * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (out, [n, cout, oh, ow])
}

/// Unnormalized forward DFT: `X[k] = Σ_n x[n]·e^{-j·2πkn/N}`.
pub fn dft1d_naive(re: &[f64], im: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = re.len();
    assert_eq!(n, im.len());
    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    for k in 0..n {
        for t in 0..n {
            let angle = -2.0 * PI * (k as f64) * (t as f64) / (n as f64);
            let (s, c) = angle.sin_cos();
            out_re[k] += re[t] * c - im[t] * s;
            out_im[k] += re[t] * s + im[t] * c;
        }
    }
    (out_re, out_im)
}

/// Inverse DFT with the 1/N convention: `x[n] = (1/N)·Σ_k X[k]·e^{+j·2πkn/N}`.
pub fn idft1d_naive(re: &[f64], im: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = re.len();
    assert_eq!(n, im.len());
    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    for t in 0..n {
        for k in 0..n {
            let angle = 2.0 * PI * (k as f64) * (t as f64) / (n as f64);
            let (s, c) = angle.sin_cos();
            out_re[t] += re[k] * c - im[k] * s;
            out_im[t] += re[k] * s + im[k] * c;
        }
    }
    let scale = 1.0 / n as f64;
    for v in &mut out_re {
        *v *= scale;
    }
    for v in &mut out_im {
        *v *= scale;
    }
    (out_re, out_im)
}

/// 2D DFT of an `rows × cols` grid by the direct double sum
/// `X[u,v] = Σ_m Σ_n x[m,n]·e^{-j·2π(um/M + vn/N)}`.
pub fn dft2d_naive(re: &[f64], im: &[f64], rows: usize, cols: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(re.len(), rows * cols);
    assert_eq!(im.len(), rows * cols);
    let mut out_re = vec![0.0; rows * cols];
    let mut out_im = vec![0.0; rows * cols];
    for u in 0..rows {
        for v in 0..cols {
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            for m in 0..rows {
                for n in 0..cols {
                    let angle = -2.0
                        * PI
                        * ((u as f64) * (m as f64) / (rows as f64)
                            + (v as f64) * (n as f64) / (cols as f64));
                    let (s, c) = angle.sin_cos();
                    let xr = re[m * cols + n];
                    let xi = im[m * cols + n];
                    acc_re += xr * c - xi * s;
                    acc_im += xr * s + xi * c;
                }
            }
            out_re[u * cols + v] = acc_re;
            out_im[u * cols + v] = acc_im;
        }
    }
    (out_re, out_im)
}

/// Unnormalized DCT-II of a `k × k` tile:
/// `f[u,v] = Σ_i Σ_j x[i,j]·cos(πu(i+½)/k)·cos(πv(j+½)/k)`.
pub fn dct2d_naive(x: &[f64], k: usize) -> Vec<f64> {
    assert_eq!(x.len(), k * k);
    let mut out = vec![0.0; k * k];
    for u in 0..k {
        for v in 0..k {
            let mut acc = 0.0;
            for i in 0..k {
                for j in 0..k {
                    let ci = (PI * u as f64 * (i as f64 + 0.5) / k as f64).cos();
                    let cj = (PI * v as f64 * (j as f64 + 0.5) / k as f64).cos();
                    acc += x[i * k + j] * ci * cj;
                }
            }
            out[u * k + v] = acc;
        }
    }
    out
}
