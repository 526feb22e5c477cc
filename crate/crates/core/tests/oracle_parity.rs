//! Engine outputs against independently written naive references: the
//! convolution path and every transform, plus the algebraic identities the
//! transforms must satisfy (roundtrip, Parseval, conjugate symmetry).

use fsta_core::frequency::{dct2d, dft1d, dft2d, idft1d, ComplexBuffer};
use fsta_core::tensor::conv2d;
use fsta_core::Tensor;
use fsta_testkit::oracle;
use fsta_testkit::{assert_close, rng};
use rand::Rng;

#[test]
fn conv2d_matches_naive_reference_across_configurations() {
    let mut r = rng(101);
    // (N, Cin, H, W, Cout, k, stride, padding)
    let configs = [
        (1, 1, 5, 5, 1, 3, 1, 0),
        (2, 3, 6, 6, 4, 3, 1, 1),
        (1, 2, 7, 5, 3, 3, 2, 1),
        (2, 1, 8, 8, 2, 5, 1, 2),
        (1, 4, 4, 4, 4, 1, 1, 0),
        (1, 2, 9, 9, 3, 3, 3, 1),
    ];
    for (n, cin, h, w, cout, k, stride, padding) in configs {
        let input = Tensor::<f64>::rand_uniform(vec![n, cin, h, w], -1.0, 1.0, &mut r);
        let kernel = Tensor::<f64>::rand_uniform(vec![cout, cin, k, k], -1.0, 1.0, &mut r);
        let got = conv2d(&input, &kernel, stride, padding).unwrap();
        let (want, want_shape) = oracle::conv2d_naive(
            &input.data(),
            [n, cin, h, w],
            &kernel.data(),
            [cout, cin, k, k],
            stride,
            padding,
        );
        assert_eq!(got.shape(), &want_shape);
        assert_close(
            &got.data().iter().copied().collect::<Vec<f64>>(),
            &want,
            1e-12,
            &format!("conv2d {n}x{cin}x{h}x{w} k{k} s{stride} p{padding}"),
        );
    }
}

#[test]
fn dft_and_inverse_match_naive_reference_on_random_lines() {
    let mut r = rng(202);
    for len in [1usize, 2, 3, 4, 7, 8, 16, 31] {
        let re: Vec<f64> = (0..len).map(|_| r.random_range(-1.0..1.0)).collect();
        let im: Vec<f64> = (0..len).map(|_| r.random_range(-1.0..1.0)).collect();
        let buf = ComplexBuffer::from_parts(vec![len], re.clone(), im.clone()).unwrap();

        let fwd = dft1d(&buf).unwrap();
        let (wre, wim) = oracle::dft1d_naive(&re, &im);
        assert_close(fwd.re(), &wre, 1e-10, &format!("dft1d re len {len}"));
        assert_close(fwd.im(), &wim, 1e-10, &format!("dft1d im len {len}"));

        let inv = idft1d(&fwd).unwrap();
        let (ire, iim) = oracle::idft1d_naive(fwd.re(), fwd.im());
        assert_close(inv.re(), &ire, 1e-10, &format!("idft1d re len {len}"));
        assert_close(inv.im(), &iim, 1e-10, &format!("idft1d im len {len}"));

        // Roundtrip recovers the input.
        assert_close(inv.re(), &re, 1e-10, &format!("roundtrip re len {len}"));
        assert_close(inv.im(), &im, 1e-10, &format!("roundtrip im len {len}"));
    }
}

#[test]
fn dft2d_matches_naive_reference() {
    let mut r = rng(303);
    for (h, w) in [(1usize, 1usize), (2, 2), (3, 5), (4, 4), (8, 6), (7, 7)] {
        let data: Vec<f64> = (0..h * w).map(|_| r.random_range(-2.0..2.0)).collect();
        let x = Tensor::<f64>::from_vec(vec![h, w], data.clone()).unwrap();
        let got = dft2d(&x).unwrap();
        let (wre, wim) = oracle::dft2d_naive(&data, &vec![0.0; h * w], h, w);
        assert_close(got.re(), &wre, 1e-10, &format!("dft2d re {h}x{w}"));
        assert_close(got.im(), &wim, 1e-10, &format!("dft2d im {h}x{w}"));
    }
}

#[test]
fn parseval_holds_on_fifty_random_inputs() {
    let mut r = rng(404);
    for case in 0..50 {
        let h = r.random_range(1..=8);
        let w = r.random_range(1..=8);
        let data: Vec<f64> = (0..h * w).map(|_| r.random_range(-1.0..1.0)).collect();
        let x = Tensor::<f64>::from_vec(vec![h, w], data.clone()).unwrap();
        let transformed = dft2d(&x).unwrap();
        // Unnormalized forward transform: Σ|X|² = H·W·Σ|x|².
        let spatial: f64 = data.iter().map(|v| v * v).sum();
        let spectral = transformed.energy();
        let expected = (h * w) as f64 * spatial;
        let denom = expected.abs().max(1.0);
        assert!(
            ((spectral - expected) / denom).abs() < 1e-10,
            "case {case}: {spectral} vs {expected}"
        );
    }
}

#[test]
fn real_input_spectra_are_conjugate_symmetric() {
    let mut r = rng(505);
    for case in 0..50 {
        let h = r.random_range(1..=8);
        let w = r.random_range(1..=8);
        let data: Vec<f64> = (0..h * w).map(|_| r.random_range(-1.0..1.0)).collect();
        let x = Tensor::<f64>::from_vec(vec![h, w], data).unwrap();
        let f = dft2d(&x).unwrap();
        // X[u, v] = conj(X[(H−u) mod H, (W−v) mod W]) for real inputs.
        for u in 0..h {
            for v in 0..w {
                let mu = (h - u) % h;
                let mv = (w - v) % w;
                let re_a = f.re()[u * w + v];
                let im_a = f.im()[u * w + v];
                let re_b = f.re()[mu * w + mv];
                let im_b = f.im()[mu * w + mv];
                assert!(
                    (re_a - re_b).abs() < 1e-10 && (im_a + im_b).abs() < 1e-10,
                    "case {case}: bin ({u},{v}) vs ({mu},{mv})"
                );
            }
        }
    }
}

#[test]
fn dct2d_matches_naive_reference() {
    let mut r = rng(606);
    for k in [1usize, 2, 3, 5, 7] {
        let data: Vec<f64> = (0..k * k).map(|_| r.random_range(-1.0..1.0)).collect();
        let x = Tensor::<f64>::from_vec(vec![k, k], data.clone()).unwrap();
        let got = dct2d(&x).unwrap();
        let want = oracle::dct2d_naive(&data, k);
        assert_close(
            &got.data().iter().copied().collect::<Vec<f64>>(),
            &want,
            1e-10,
            &format!("dct2d {k}x{k}"),
        );
    }
}

#[test]
fn linear_layer_matches_explicit_matrix_multiplication() {
    let mut r = rng(707);
    let (n, din, dout) = (3usize, 5usize, 4usize);
    let x = Tensor::<f64>::rand_uniform(vec![n, din], -1.0, 1.0, &mut r);
    let w = Tensor::<f64>::rand_uniform(vec![dout, din], -1.0, 1.0, &mut r);
    let b = Tensor::<f64>::rand_uniform(vec![dout], -1.0, 1.0, &mut r);
    let got = fsta_core::tensor::linear(&x, &w, &b).unwrap();
    for row in 0..n {
        for o in 0..dout {
            let mut acc = b.data()[o];
            for i in 0..din {
                acc += x.data()[row * din + i] * w.data()[o * din + i];
            }
            let v = got.data()[row * dout + o];
            assert!((v - acc).abs() < 1e-12, "({row},{o}): {v} vs {acc}");
        }
    }
}
