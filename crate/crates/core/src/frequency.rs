//! Discrete Fourier and cosine transforms plus spectrum utilities.
//!
//! Conventions, kept throughout:
//! - Forward DFT is unnormalized, `X[k] = Σ_n x[n]·e^{−j·2πkn/N}`; the
//!   inverse carries the full `1/N`. Parseval then reads
//!   `Σ|X|² = N·Σ|x|²`.
//! - The DCT-II basis is unnormalized,
//!   `B^{i,j}_{u,v} = cos(πu(i+½)/H)·cos(πv(j+½)/W)`, so the DC coefficient
//!   of a transform equals `mean(x)·H·W` with no extra factor.
//! - Centered spectra put the DC bin at `(⌊H/2⌋, ⌊W/2⌋)`; on even extents
//!   the quadrant swap is an involution.
//!
//! Transforms are evaluated by the direct summation in `f64` regardless of
//! the tensor scalar type; the extents involved are small enough that
//! correctness is worth far more than an FFT.

use std::f64::consts::PI;
use std::fmt;

use crate::scalar::{cast, Scalar};
use crate::tensor::{Tensor, TensorError};

/// Errors from transform input validation and band selection.
#[derive(Debug, Clone, PartialEq)]
pub enum FrequencyError {
    /// Operation requires a different rank (e.g. 1D transform of a 2D buffer).
    RankMismatch { context: &'static str, expected: usize, got: usize },
    /// Real/imaginary storage does not match the declared shape.
    LengthMismatch { expected: usize, got: usize },
    /// A shape extent of zero was supplied.
    ZeroExtent { shape: Vec<usize> },
    /// Band energies are defined on centered spectra only.
    NotCentered,
    /// The requested band selects no bins.
    EmptyBand { band: Band, height: usize, width: usize },
    /// DCT kernel size must be at least 1.
    InvalidKernelSize { k: usize },
    /// Spectrum magnitudes must be nonnegative.
    NegativeMagnitude { value: f64 },
    Tensor(TensorError),
}

impl fmt::Display for FrequencyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrequencyError::RankMismatch { context, expected, got } => {
                write!(f, "{context}: expected rank {expected}, got {got}")
            }
            FrequencyError::LengthMismatch { expected, got } => {
                write!(f, "component length {got} does not match shape product {expected}")
            }
            FrequencyError::ZeroExtent { shape } => {
                write!(f, "shape {shape:?} contains a zero extent")
            }
            FrequencyError::NotCentered => {
                write!(f, "band energy requires a centered spectrum")
            }
            FrequencyError::EmptyBand { band, height, width } => {
                write!(f, "band {band:?} selects no bins on a {height}x{width} spectrum")
            }
            FrequencyError::InvalidKernelSize { k } => {
                write!(f, "DCT kernel size must be >= 1, got {k}")
            }
            FrequencyError::NegativeMagnitude { value } => {
                write!(f, "spectrum magnitudes must be nonnegative, got {value}")
            }
            FrequencyError::Tensor(e) => write!(f, "tensor operation failed: {e}"),
        }
    }
}

impl std::error::Error for FrequencyError {}

impl From<TensorError> for FrequencyError {
    fn from(e: TensorError) -> Self {
        FrequencyError::Tensor(e)
    }
}

/// Angular frequency of bin `k` for a length-`n` axis: `ω_k = 2πk/n`.
pub fn angular_frequency(k: usize, n: usize) -> f64 {
    2.0 * PI * k as f64 / n as f64
}

/// Paired real/imaginary planes in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexBuffer<S: Scalar> {
    shape: Vec<usize>,
    re: Vec<S>,
    im: Vec<S>,
}

impl<S: Scalar> ComplexBuffer<S> {
    pub fn from_parts(shape: impl Into<Vec<usize>>, re: Vec<S>, im: Vec<S>) -> Result<Self, FrequencyError> {
        let shape = shape.into();
        if shape.iter().any(|&e| e == 0) {
            return Err(FrequencyError::ZeroExtent { shape });
        }
        let expected: usize = shape.iter().product();
        if re.len() != expected {
            return Err(FrequencyError::LengthMismatch { expected, got: re.len() });
        }
        if im.len() != expected {
            return Err(FrequencyError::LengthMismatch { expected, got: im.len() });
        }
        Ok(ComplexBuffer { shape, re, im })
    }

    /// Purely real buffer (imaginary plane all zeros).
    pub fn from_real(shape: impl Into<Vec<usize>>, re: Vec<S>) -> Result<Self, FrequencyError> {
        let im = vec![S::zero(); re.len()];
        Self::from_parts(shape, re, im)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.re.len()
    }

    pub fn re(&self) -> &[S] {
        &self.re
    }

    pub fn im(&self) -> &[S] {
        &self.im
    }

    /// Sum of squared magnitudes, accumulated in f64.
    pub fn energy(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| {
                let (r, i) = (r.to_f64().unwrap(), i.to_f64().unwrap());
                r * r + i * i
            })
            .sum()
    }
}

fn dft_line(re: &[f64], im: &[f64], inverse: bool) -> (Vec<f64>, Vec<f64>) {
    let n = re.len();
    let sign = if inverse { 2.0 } else { -2.0 };
    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    for k in 0..n {
        let mut acc_re = 0.0;
        let mut acc_im = 0.0;
        for t in 0..n {
            let angle = sign * PI * ((k * t) % n) as f64 / n as f64;
            let (s, c) = angle.sin_cos();
            acc_re += re[t] * c - im[t] * s;
            acc_im += re[t] * s + im[t] * c;
        }
        out_re[k] = acc_re;
        out_im[k] = acc_im;
    }
    if inverse {
        let scale = 1.0 / n as f64;
        for v in &mut out_re {
            *v *= scale;
        }
        for v in &mut out_im {
            *v *= scale;
        }
    }
    (out_re, out_im)
}

fn to_f64<S: Scalar>(xs: &[S]) -> Vec<f64> {
    xs.iter().map(|x| x.to_f64().unwrap()).collect()
}

fn to_scalar<S: Scalar>(xs: Vec<f64>) -> Vec<S> {
    xs.into_iter().map(cast::<S>).collect()
}

/// Forward DFT of a length-N sequence: `X[k] = Σ_n x[n]·e^{−j·2πkn/N}`.
pub fn dft1d<S: Scalar>(x: &ComplexBuffer<S>) -> Result<ComplexBuffer<S>, FrequencyError> {
    if x.shape.len() != 1 {
        return Err(FrequencyError::RankMismatch { context: "dft1d", expected: 1, got: x.shape.len() });
    }
    let (re, im) = dft_line(&to_f64(&x.re), &to_f64(&x.im), false);
    ComplexBuffer::from_parts(x.shape.clone(), to_scalar(re), to_scalar(im))
}

/// Inverse DFT with the 1/N factor: `x[n] = (1/N)·Σ_k X[k]·e^{+j·2πkn/N}`.
pub fn idft1d<S: Scalar>(x: &ComplexBuffer<S>) -> Result<ComplexBuffer<S>, FrequencyError> {
    if x.shape.len() != 1 {
        return Err(FrequencyError::RankMismatch { context: "idft1d", expected: 1, got: x.shape.len() });
    }
    let (re, im) = dft_line(&to_f64(&x.re), &to_f64(&x.im), true);
    ComplexBuffer::from_parts(x.shape.clone(), to_scalar(re), to_scalar(im))
}

/// 2D DFT of a real `[M, N]` grid, computed as 1D transforms over every row
/// and then every column:
/// `X[u,v] = Σ_m Σ_n x[m,n]·e^{−j·2π(um/M + vn/N)}`.
pub fn dft2d<S: Scalar>(x: &Tensor<S>) -> Result<ComplexBuffer<S>, FrequencyError> {
    if x.rank() != 2 {
        return Err(FrequencyError::RankMismatch { context: "dft2d", expected: 2, got: x.rank() });
    }
    let (rows, cols) = (x.shape()[0], x.shape()[1]);
    let mut re = to_f64(x.data());
    let mut im = vec![0.0; re.len()];

    // Rows first.
    for r in 0..rows {
        let (lr, li) = dft_line(&re[r * cols..(r + 1) * cols], &im[r * cols..(r + 1) * cols], false);
        re[r * cols..(r + 1) * cols].copy_from_slice(&lr);
        im[r * cols..(r + 1) * cols].copy_from_slice(&li);
    }
    // Then columns.
    for c in 0..cols {
        let col_re: Vec<f64> = (0..rows).map(|r| re[r * cols + c]).collect();
        let col_im: Vec<f64> = (0..rows).map(|r| im[r * cols + c]).collect();
        let (lr, li) = dft_line(&col_re, &col_im, false);
        for r in 0..rows {
            re[r * cols + c] = lr[r];
            im[r * cols + c] = li[r];
        }
    }
    ComplexBuffer::from_parts(vec![rows, cols], to_scalar(re), to_scalar(im))
}

/// Fixed DCT-II filter bank: channel `u·k + v` holds the basis pattern
/// `B^{i,j}_{u,v}` over a `k × k` window. Weights are constants, never
/// trained.
#[derive(Debug, Clone)]
pub struct DctBasis<S: Scalar> {
    k: usize,
    weights: Tensor<S>,
}

impl<S: Scalar> DctBasis<S> {
    pub fn kernel_size(&self) -> usize {
        self.k
    }

    /// Number of frequency channels, `k²`.
    pub fn channels(&self) -> usize {
        self.k * self.k
    }

    /// Filter bank shaped `[k², 1, k, k]`, suitable as depthwise-style
    /// convolution weights.
    pub fn weights(&self) -> &Tensor<S> {
        &self.weights
    }
}

/// Build the `k²`-channel DCT-II basis:
/// `weights[u·k+v][0][i][j] = cos(πu(i+½)/k)·cos(πv(j+½)/k)`.
pub fn dct_basis<S: Scalar>(k: usize) -> Result<DctBasis<S>, FrequencyError> {
    if k == 0 {
        return Err(FrequencyError::InvalidKernelSize { k });
    }
    let mut data = Vec::with_capacity(k * k * k * k);
    for u in 0..k {
        for v in 0..k {
            for i in 0..k {
                for j in 0..k {
                    let ci = (PI * u as f64 * (i as f64 + 0.5) / k as f64).cos();
                    let cj = (PI * v as f64 * (j as f64 + 0.5) / k as f64).cos();
                    data.push(cast::<S>(ci * cj));
                }
            }
        }
    }
    let weights = Tensor::from_vec(vec![k * k, 1, k, k], data)?;
    Ok(DctBasis { k, weights })
}

/// Unnormalized 2D DCT-II of an `[H, W]` grid by direct summation:
/// `f[u,v] = Σ_i Σ_j x[i,j]·cos(πu(i+½)/H)·cos(πv(j+½)/W)`.
pub fn dct2d<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>, FrequencyError> {
    if x.rank() != 2 {
        return Err(FrequencyError::RankMismatch { context: "dct2d", expected: 2, got: x.rank() });
    }
    let (h, w) = (x.shape()[0], x.shape()[1]);
    let xs = to_f64(x.data());
    let mut out = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let mut acc = 0.0;
            for i in 0..h {
                for j in 0..w {
                    let ci = (PI * u as f64 * (i as f64 + 0.5) / h as f64).cos();
                    let cj = (PI * v as f64 * (j as f64 + 0.5) / w as f64).cos();
                    acc += xs[i * w + j] * ci * cj;
                }
            }
            out.push(cast::<S>(acc));
        }
    }
    Ok(Tensor::from_vec(vec![h, w], out)?)
}

/// Magnitude spectrum of a 2D transform. `centered` records whether the DC
/// bin has been moved to `(⌊H/2⌋, ⌊W/2⌋)`.
#[derive(Debug, Clone)]
pub struct Spectrum<S: Scalar> {
    magnitudes: Tensor<S>,
    centered: bool,
}

impl<S: Scalar> Spectrum<S> {
    /// Wrap precomputed magnitudes. Rejects negative entries.
    pub fn from_magnitudes(magnitudes: Tensor<S>, centered: bool) -> Result<Self, FrequencyError> {
        if magnitudes.rank() != 2 {
            return Err(FrequencyError::RankMismatch {
                context: "spectrum magnitudes",
                expected: 2,
                got: magnitudes.rank(),
            });
        }
        if let Some(&bad) = magnitudes.data().iter().find(|&&v| v < S::zero()) {
            return Err(FrequencyError::NegativeMagnitude { value: bad.to_f64().unwrap() });
        }
        Ok(Spectrum { magnitudes, centered })
    }

    pub fn magnitudes(&self) -> &Tensor<S> {
        &self.magnitudes
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn height(&self) -> usize {
        self.magnitudes.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.magnitudes.shape()[1]
    }

    /// Total spectral energy: sum of squared magnitudes, in f64.
    pub fn total_energy(&self) -> f64 {
        self.magnitudes
            .data()
            .iter()
            .map(|&m| {
                let m = m.to_f64().unwrap();
                m * m
            })
            .sum()
    }
}

/// Magnitudes of a raw 2D transform with quadrants swapped so the DC bin
/// lands at `(⌊H/2⌋, ⌊W/2⌋)`.
pub fn center_spectrum<S: Scalar>(raw: &ComplexBuffer<S>) -> Result<Spectrum<S>, FrequencyError> {
    if raw.shape.len() != 2 {
        return Err(FrequencyError::RankMismatch { context: "center_spectrum", expected: 2, got: raw.shape.len() });
    }
    let (h, w) = (raw.shape[0], raw.shape[1]);
    let (ch, cw) = (h / 2, w / 2);
    let mut mags = vec![S::zero(); h * w];
    for u in 0..h {
        for v in 0..w {
            let r = raw.re[u * w + v].to_f64().unwrap();
            let i = raw.im[u * w + v].to_f64().unwrap();
            let m = cast::<S>((r * r + i * i).sqrt());
            mags[((u + ch) % h) * w + ((v + cw) % w)] = m;
        }
    }
    Ok(Spectrum { magnitudes: Tensor::from_vec(vec![h, w], mags)?, centered: true })
}

/// A set of bins on a centered spectrum.
///
/// `HorizontalAxis` keeps rows within `halfwidth` of the center row (where
/// the energy of column-to-column variation concentrates); `VerticalAxis`
/// keeps columns within `halfwidth` of the center column; `Radial` keeps
/// bins whose Euclidean distance from the center lies in `[r_lo, r_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Band {
    HorizontalAxis { halfwidth: usize },
    VerticalAxis { halfwidth: usize },
    Radial { r_lo: f64, r_hi: f64 },
}

impl Band {
    fn contains(&self, u: usize, v: usize, ch: usize, cw: usize) -> bool {
        match *self {
            Band::HorizontalAxis { halfwidth } => u.abs_diff(ch) <= halfwidth,
            Band::VerticalAxis { halfwidth } => v.abs_diff(cw) <= halfwidth,
            Band::Radial { r_lo, r_hi } => {
                let du = u as f64 - ch as f64;
                let dv = v as f64 - cw as f64;
                let d = (du * du + dv * dv).sqrt();
                r_lo <= d && d <= r_hi
            }
        }
    }
}

/// Fraction of total spectral energy (squared magnitudes) inside `band`.
/// Returns 0 for an all-zero spectrum; a band selecting no bins is an error.
pub fn band_energy<S: Scalar>(spec: &Spectrum<S>, band: Band) -> Result<f64, FrequencyError> {
    if !spec.centered {
        return Err(FrequencyError::NotCentered);
    }
    let (h, w) = (spec.height(), spec.width());
    let (ch, cw) = (h / 2, w / 2);
    let mut inside = 0.0;
    let mut total = 0.0;
    let mut bins = 0usize;
    for u in 0..h {
        for v in 0..w {
            let m = spec.magnitudes.data()[u * w + v].to_f64().unwrap();
            let e = m * m;
            total += e;
            if band.contains(u, v, ch, cw) {
                inside += e;
                bins += 1;
            }
        }
    }
    if bins == 0 {
        return Err(FrequencyError::EmptyBand { band, height: h, width: w });
    }
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(inside / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_of_constant_is_dc_only() {
        let c = 2.5f64;
        let x = ComplexBuffer::from_real(vec![8], vec![c; 8]).unwrap();
        let spec = dft1d(&x).unwrap();
        assert!((spec.re()[0] - 8.0 * c).abs() < 1e-12);
        assert!(spec.im()[0].abs() < 1e-12);
        for k in 1..8 {
            assert!(spec.re()[k].abs() < 1e-12, "bin {k}");
            assert!(spec.im()[k].abs() < 1e-12, "bin {k}");
        }
    }

    #[test]
    fn dft_of_impulse_is_flat() {
        let mut data = vec![0.0f64; 6];
        data[0] = 1.0;
        let x = ComplexBuffer::from_real(vec![6], data).unwrap();
        let spec = dft1d(&x).unwrap();
        for k in 0..6 {
            assert!((spec.re()[k] - 1.0).abs() < 1e-12);
            assert!(spec.im()[k].abs() < 1e-12);
        }
    }

    #[test]
    fn idft_of_dc_bin_is_constant_ones() {
        let mut re = vec![0.0f64; 5];
        re[0] = 5.0;
        let spec = ComplexBuffer::from_parts(vec![5], re, vec![0.0f64; 5]).unwrap();
        let x = idft1d(&spec).unwrap();
        for n in 0..5 {
            assert!((x.re()[n] - 1.0).abs() < 1e-12);
            assert!(x.im()[n].abs() < 1e-12);
        }
    }

    #[test]
    fn dft2d_constant_concentrates_at_origin() {
        let x = Tensor::full(vec![4, 6], 3.0f64);
        let spec = dft2d(&x).unwrap();
        assert!((spec.re()[0] - 4.0 * 6.0 * 3.0).abs() < 1e-10);
        let rest: f64 = spec.re()[1..].iter().map(|v| v.abs()).sum::<f64>()
            + spec.im()[1..].iter().map(|v| v.abs()).sum::<f64>();
        assert!(rest < 1e-9, "residual {rest}");
    }

    #[test]
    fn dct_basis_k1_is_unit() {
        let b = dct_basis::<f64>(1).unwrap();
        assert_eq!(b.weights().shape(), &[1, 1, 1, 1]);
        assert_eq!(b.weights().data(), &[1.0]);
    }

    #[test]
    fn dct_basis_dc_channel_is_all_ones() {
        for k in [1usize, 3, 4, 7] {
            let b = dct_basis::<f64>(k).unwrap();
            let channel0 = &b.weights().data()[..k * k];
            assert!(channel0.iter().all(|&v| (v - 1.0).abs() < 1e-15), "k = {k}");
        }
    }

    #[test]
    fn dct_basis_channel_count_grows_quadratically() {
        // Kernel size 3 → 9 channels, 5 → 25, 7 → 49.
        for (k, channels) in [(3usize, 9usize), (5, 25), (7, 49)] {
            let b = dct_basis::<f64>(k).unwrap();
            assert_eq!(b.channels(), channels);
            assert_eq!(b.weights().shape(), &[channels, 1, k, k]);
        }
    }

    #[test]
    fn dct_basis_rejects_zero() {
        assert!(matches!(dct_basis::<f64>(0).unwrap_err(), FrequencyError::InvalidKernelSize { k: 0 }));
    }

    #[test]
    fn dct2d_dc_is_plain_sum() {
        let x = Tensor::<f64>::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let f = dct2d(&x).unwrap();
        assert!((f.data()[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn centering_moves_dc_to_middle() {
        let x = Tensor::full(vec![4, 4], 1.0f64);
        let spec = center_spectrum(&dft2d(&x).unwrap()).unwrap();
        assert!(spec.is_centered());
        for u in 0..4 {
            for v in 0..4 {
                let m = spec.magnitudes().at(&[u, v]);
                if (u, v) == (2, 2) {
                    assert!((m - 16.0).abs() < 1e-10);
                } else {
                    assert!(m.abs() < 1e-9, "bin ({u},{v}) = {m}");
                }
            }
        }
    }

    #[test]
    fn centering_is_involution_on_even_extents() {
        let (h, w) = (4usize, 6usize);
        let map = |u: usize, v: usize| (((u + h / 2) % h), ((v + w / 2) % w));
        for u in 0..h {
            for v in 0..w {
                let (u1, v1) = map(u, v);
                assert_eq!(map(u1, v1), (u, v));
            }
        }
    }

    #[test]
    fn full_extent_band_captures_everything() {
        let mags = Tensor::<f64>::from_vec(vec![3, 3], vec![1.0, 0.5, 0.25, 2.0, 0.0, 1.5, 3.0, 0.75, 0.1]).unwrap();
        let spec = Spectrum::from_magnitudes(mags, true).unwrap();
        let f = band_energy(&spec, Band::HorizontalAxis { halfwidth: 3 }).unwrap();
        assert!((f - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_spectrum_band_fraction_is_zero() {
        let spec = Spectrum::from_magnitudes(Tensor::<f64>::zeros(vec![4, 4]), true).unwrap();
        assert_eq!(band_energy(&spec, Band::VerticalAxis { halfwidth: 1 }).unwrap(), 0.0);
    }

    #[test]
    fn uncentered_spectrum_is_rejected() {
        let spec = Spectrum::from_magnitudes(Tensor::<f64>::ones(vec![4, 4]), false).unwrap();
        assert!(matches!(
            band_energy(&spec, Band::HorizontalAxis { halfwidth: 0 }).unwrap_err(),
            FrequencyError::NotCentered
        ));
    }

    #[test]
    fn empty_radial_band_is_an_error() {
        let spec = Spectrum::from_magnitudes(Tensor::<f64>::ones(vec![4, 4]), true).unwrap();
        assert!(matches!(
            band_energy(&spec, Band::Radial { r_lo: 100.0, r_hi: 200.0 }).unwrap_err(),
            FrequencyError::EmptyBand { .. }
        ));
    }

    #[test]
    fn negative_magnitudes_are_rejected() {
        let mags = Tensor::<f64>::from_vec(vec![1, 2], vec![1.0, -0.5]).unwrap();
        assert!(matches!(
            Spectrum::from_magnitudes(mags, true).unwrap_err(),
            FrequencyError::NegativeMagnitude { .. }
        ));
    }

    #[test]
    fn angular_frequency_convention() {
        assert!((angular_frequency(0, 8) - 0.0).abs() < 1e-15);
        assert!((angular_frequency(2, 8) - PI / 2.0).abs() < 1e-15);
    }
}
