//! Release acceptance checks: one test per shipped guarantee, each printing
//! a single `criterion N: PASS — …` line (run with `--nocapture` to see them
//! all). Every tolerance and runtime budget is pinned in the test body; a
//! check that exceeds its budget fails even if its assertions hold.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use fsta_cli::commands::cmd_train;
use fsta_cli::config::{
    parse_config_str, serialize_config, Cifar10Options, DatasetDescriptor, GratingsOptions,
    Orientation, OptimizerName, TwoclassOptions,
};
use fsta_cli::container::{decode, encode, read_container, write_container, Container, Payload};
use fsta_cli::data::{
    gen_gratings, load_cifar10_binary, Split, CIFAR_BATCH_BYTES, CIFAR_RECORDS_PER_BATCH,
    CIFAR_RECORD_BYTES,
};
use fsta_cli::RunConfig;
use fsta_core::analysis::{compare_runs, energy, EnergyModel, FiringStats, OpCounts};
use fsta_core::frequency::{band_energy, center_spectrum, dct2d, dct_basis, dft1d, dft2d, idft1d, Band, ComplexBuffer};
use fsta_core::fsta::{FstaModule, FusionMode, SpatialAttention, TemporalAttention};
use fsta_core::model::{batch_norm, BatchNormState};
use fsta_core::neuron::{lif_sequence_from_rest, lif_step, FiringMode, LifParams, LifState};
use fsta_core::tensor::{conv2d, linear, stack};
use fsta_core::train::{Optimizer, OptimizerKind};
use fsta_core::Tensor;
use fsta_testkit::gradcheck::check_gradients;
use fsta_testkit::{oracle, rng};

/// Early-return with a formatted failure message.
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

/// Run one check, print its verdict line, enforce its runtime budget.
fn criterion(
    number: usize,
    what: &str,
    budget: Duration,
    body: impl FnOnce() -> Result<String, String>,
) {
    let start = Instant::now();
    let result = body();
    let elapsed = start.elapsed();
    match result {
        Ok(detail) => {
            if elapsed > budget {
                println!(
                    "criterion {number}: FAIL — {what}: exceeded the {budget:?} budget ({elapsed:.2?})"
                );
                panic!("criterion {number} exceeded its runtime budget: {elapsed:.2?} > {budget:?}");
            }
            let sep = if detail.is_empty() { "" } else { "; " };
            println!("criterion {number}: PASS — {what}{sep}{detail} [{elapsed:.2?}]");
        }
        Err(message) => {
            println!("criterion {number}: FAIL — {what}: {message}");
            panic!("criterion {number} failed: {message}");
        }
    }
}

fn msg<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn uniform(shape: Vec<usize>, lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::rand_uniform(shape, lo, hi, &mut r)
}

/// Contract to a scalar against a fixed random probe so the cotangents
/// reaching the op under test are non-uniform.
fn probe(y: &Tensor<f64>, seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    let weights = Tensor::rand_uniform(y.shape().to_vec(), -2.0, 2.0, &mut r);
    y.mul(&weights).unwrap().sum_all()
}

/// Fresh scratch directory under the system temp root (absolute, so the
/// report-root environment override never applies).
fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fsta-acceptance-{tag}-{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).expect("create scratch dir");
    dir
}

// ---------------------------------------------------------------------------
// 1. Energy arithmetic
// ---------------------------------------------------------------------------

#[test]
fn c01_energy_model_reproduces_published_rows() {
    criterion(
        1,
        "0.9 pJ/AC + 4.6 pJ/MAC prices all three published (ACs, MACs) rows within 1%",
        Duration::from_millis(250),
        || {
            let model = EnergyModel::default();
            ensure!(model.e_ac == 0.9e-12 && model.e_mac == 4.6e-12, "unexpected default constants");
            let rows: [(f64, f64, f64); 3] = [
                (260.05e6, 67.26e6, 0.54e-3),
                (2.14e9, 582.87e6, 4.60e-3),
                (2.45e9, 1.05e9, 7.03e-3),
            ];
            let mut shown = Vec::new();
            for (acs, macs, expected) in rows {
                let counts = OpCounts {
                    acs,
                    macs,
                    params_trainable: 0,
                    params_frozen: 0,
                    flops: None,
                };
                let joules = energy(&counts, &model);
                let rel = (joules - expected).abs() / expected;
                ensure!(
                    rel <= 0.01,
                    "({acs:.4e} ACs, {macs:.4e} MACs) → {joules:.6e} J vs {expected:.6e} J: rel err {rel:.4}"
                );
                shown.push(format!("{:.3}", joules * 1e3));
            }
            Ok(format!("computed {} mJ vs 0.54/4.60/7.03", shown.join("/")))
        },
    );
}

// ---------------------------------------------------------------------------
// 2. DC coefficient = global average pool identity
// ---------------------------------------------------------------------------

#[test]
fn c02_dct_dc_coefficient_equals_gap_times_area() {
    criterion(
        2,
        "f00 = GAP·H·W on 100 random maps with extents in [1,16], rel err ≤ 1e-12",
        Duration::from_secs(1),
        || {
            let mut r = rng(202);
            let mut worst = 0.0f64;
            for i in 0..100 {
                use rand::Rng;
                let h = r.random_range(1..=16usize);
                let w = r.random_range(1..=16usize);
                let x = uniform(vec![h, w], 0.25, 1.75, 1000 + i);
                let f00 = dct2d(&x).map_err(msg)?.data()[0];
                let gap_area = x.mean_all().item() * (h * w) as f64;
                let rel = (f00 - gap_area).abs() / f00.abs();
                ensure!(
                    rel <= 1e-12,
                    "map {i} ({h}×{w}): f00 {f00} vs GAP·H·W {gap_area}, rel err {rel:e}"
                );
                worst = worst.max(rel);
            }
            Ok(format!("worst rel err {worst:.2e}"))
        },
    );
}

// ---------------------------------------------------------------------------
// 3. Filter-bank channel counts and spatial-extent preservation
// ---------------------------------------------------------------------------

#[test]
fn c03_basis_channels_and_spatial_shape_preservation() {
    criterion(
        3,
        "dct_basis(k) has k² channels for k ∈ {3,5,7} and spatial attention preserves H×W",
        Duration::from_secs(1),
        || {
            for k in [3usize, 5, 7] {
                let basis = dct_basis::<f64>(k).map_err(msg)?;
                ensure!(
                    basis.channels() == k * k,
                    "k={k}: expected {} channels, got {}",
                    k * k,
                    basis.channels()
                );
                ensure!(
                    basis.weights().shape() == [k * k, 1, k, k],
                    "k={k}: bank shape {:?}",
                    basis.weights().shape()
                );

                let sa = SpatialAttention::<f64>::new(k, &mut rng(300 + k as u64)).map_err(msg)?;
                ensure!(sa.padding() == (k - 1) / 2, "k={k}: padding {}", sa.padding());
                let x = uniform(vec![2, 3, 9, 11], -1.0, 1.0, 310 + k as u64);
                let y = sa.forward(&x).map_err(msg)?;
                ensure!(
                    y.shape() == x.shape(),
                    "k={k}: output shape {:?} vs input {:?}",
                    y.shape(),
                    x.shape()
                );
            }
            Ok("channel counts 9/25/49".into())
        },
    );
}

// ---------------------------------------------------------------------------
// 4. Transform oracles and spectral invariants
// ---------------------------------------------------------------------------

#[test]
fn c04_transforms_match_naive_oracles_and_invariants_hold() {
    criterion(
        4,
        "DFTs match naive oracles (≤ 1e-10) with Parseval and conjugate symmetry on 50 inputs",
        Duration::from_secs(10),
        || {
            const TOL: f64 = 1e-10;
            // 1-D forward vs oracle, and inverse roundtrip, across lengths.
            for (i, n) in [1usize, 2, 3, 4, 7, 8, 16, 31].into_iter().enumerate() {
                let re = uniform(vec![n], -1.0, 1.0, 400 + i as u64).data().to_vec();
                let im = uniform(vec![n], -1.0, 1.0, 420 + i as u64).data().to_vec();
                let x = ComplexBuffer::from_parts(vec![n], re.clone(), im.clone()).map_err(msg)?;
                let got = dft1d(&x).map_err(msg)?;
                let (oracle_re, oracle_im) = oracle::dft1d_naive(&re, &im);
                for j in 0..n {
                    ensure!(
                        (got.re()[j] - oracle_re[j]).abs() <= TOL
                            && (got.im()[j] - oracle_im[j]).abs() <= TOL,
                        "dft1d n={n} bin {j} disagrees with the oracle"
                    );
                }
                let back = idft1d(&got).map_err(msg)?;
                for j in 0..n {
                    ensure!(
                        (back.re()[j] - re[j]).abs() <= TOL && (back.im()[j] - im[j]).abs() <= TOL,
                        "idft1d∘dft1d n={n} element {j} did not roundtrip"
                    );
                }
            }

            // 2-D forward vs oracle on mixed rectangular shapes.
            for (i, (h, w)) in [(1usize, 1usize), (2, 3), (4, 4), (5, 7), (8, 8)].into_iter().enumerate() {
                let x = uniform(vec![h, w], -1.0, 1.0, 440 + i as u64);
                let got = dft2d(&x).map_err(msg)?;
                let zeros = vec![0.0; h * w];
                let (oracle_re, oracle_im) = oracle::dft2d_naive(x.data(), &zeros, h, w);
                for j in 0..h * w {
                    ensure!(
                        (got.re()[j] - oracle_re[j]).abs() <= TOL
                            && (got.im()[j] - oracle_im[j]).abs() <= TOL,
                        "dft2d {h}×{w} bin {j} disagrees with the oracle"
                    );
                }
            }

            // Parseval and conjugate symmetry on 50 random real inputs.
            let mut r = rng(450);
            for i in 0..50 {
                use rand::Rng;
                let h = r.random_range(1..=12usize);
                let w = r.random_range(1..=12usize);
                let x = uniform(vec![h, w], -1.0, 1.0, 460 + i);
                let transformed = dft2d(&x).map_err(msg)?;

                let sum_sq: f64 = x.data().iter().map(|&v| v * v).sum();
                let expected = (h * w) as f64 * sum_sq;
                ensure!(
                    (transformed.energy() - expected).abs() <= TOL * (1.0 + expected),
                    "Parseval violated on {h}×{w}: Σ|X|² = {} vs H·W·Σx² = {expected}",
                    transformed.energy()
                );

                for u in 0..h {
                    for v in 0..w {
                        let mirror = ((h - u) % h) * w + ((w - v) % w);
                        let j = u * w + v;
                        ensure!(
                            (transformed.re()[j] - transformed.re()[mirror]).abs() <= TOL
                                && (transformed.im()[j] + transformed.im()[mirror]).abs() <= TOL,
                            "conjugate symmetry violated at ({u},{v}) on a {h}×{w} real input"
                        );
                    }
                }
            }
            Ok("lengths 1–31, 5 2-D shapes, 50 random invariant inputs".into())
        },
    );
}

// ---------------------------------------------------------------------------
// 5. Gradient checks for every differentiable operation
// ---------------------------------------------------------------------------

#[test]
fn c05_gradients_match_finite_differences() {
    criterion(
        5,
        "analytic gradients of every differentiable op within 1e-4 of central differences",
        Duration::from_secs(60),
        || {
            const EPS: f64 = 1e-5;
            const TOL: f64 = 1e-4;

            // Elementwise algebra with broadcasting, scaling, the sigmoid,
            // and the shape ops, fused into one composite graph.
            let a = uniform(vec![2, 3], -1.0, 1.0, 500);
            let b = uniform(vec![2, 3], -1.0, 1.0, 501);
            let row = uniform(vec![3], -1.0, 1.0, 502);
            check_gradients(
                |p| {
                    let mixed = p[0].add(&p[1]).unwrap().mul(&p[0].sub(&p[1]).unwrap()).unwrap();
                    let gated = mixed.scale(-0.75).sigmoid().mul(&p[2]).unwrap();
                    let shaped = stack(&[gated.clone(), gated])
                        .unwrap()
                        .select(1)
                        .unwrap()
                        .reshape(vec![3, 2])
                        .unwrap();
                    probe(&shaped, 510)
                },
                &[a, b, row],
                EPS,
                TOL,
            )?;

            // Reductions: full and per-axis sums, means and maxima.
            let c = uniform(vec![2, 3, 4], -1.0, 1.0, 520);
            check_gradients(
                |p| {
                    probe(&p[0].sum_axes(&[1], true).unwrap(), 521)
                        .add(&probe(&p[0].mean_axes(&[0, 2], false).unwrap(), 522))
                        .unwrap()
                        .add(&probe(&p[0].max_axes(&[2], false).unwrap(), 523))
                        .unwrap()
                        .add(&p[0].mean_all())
                        .unwrap()
                        .add(&p[0].sum_all().scale(0.25))
                        .unwrap()
                },
                &[c],
                EPS,
                TOL,
            )?;

            // Convolution (stride 2, padding 1) and the linear layer.
            let img = uniform(vec![1, 2, 5, 5], -1.0, 1.0, 530);
            let kernel = uniform(vec![3, 2, 3, 3], -1.0, 1.0, 531);
            check_gradients(
                |p| probe(&conv2d(&p[0], &p[1], 2, 1).unwrap(), 532),
                &[img, kernel],
                EPS,
                TOL,
            )?;
            let x = uniform(vec![3, 4], -1.0, 1.0, 540);
            let w = uniform(vec![2, 4], -1.0, 1.0, 541);
            let bias = uniform(vec![2], -1.0, 1.0, 542);
            check_gradients(|p| probe(&linear(&p[0], &p[1], &p[2]).unwrap(), 543), &[x, w, bias], EPS, TOL)?;

            // Batch normalization in training mode.
            let bn_x = uniform(vec![2, 3, 2, 2], -1.0, 1.0, 550);
            let bn_scale = uniform(vec![3], 0.5, 1.5, 551);
            let bn_shift = uniform(vec![3], -1.0, 1.0, 552);
            check_gradients(
                |p| {
                    let mut state = BatchNormState::new(3);
                    state.scale = p[1].clone();
                    state.shift = p[2].clone();
                    probe(&batch_norm(&p[0], &mut state, true).unwrap(), 553)
                },
                &[bn_x, bn_scale, bn_shift],
                EPS,
                TOL,
            )?;

            // The neuron, fired in its smoothed mode: the binary step has no
            // finite-difference-checkable derivative, while the smoothed
            // forward's true derivative is exactly the surrogate. The reset
            // stays in the graph for the same reason.
            let lif = LifParams {
                mode: FiringMode::Smoothed,
                detach_reset: false,
                ..LifParams::default()
            };
            let drive = uniform(vec![3, 2, 2], -1.5, 1.5, 560);
            check_gradients(
                |p| probe(&lif_sequence_from_rest(&lif, &p[0]).unwrap(), 561),
                &[drive],
                EPS,
                TOL,
            )?;

            // Spatial attention: input and both trainable tensors.
            let sa = SpatialAttention::<f64>::new(3, &mut rng(570)).map_err(msg)?;
            let sa_x = uniform(vec![2, 2, 4, 4], -1.0, 1.0, 571);
            check_gradients(
                |p| {
                    let mut m = sa.clone();
                    m.compress_weight = p[1].clone();
                    m.compress_bias = p[2].clone();
                    probe(&m.forward(&p[0]).unwrap(), 572)
                },
                &[sa_x, sa.compress_weight.clone(), sa.compress_bias.clone()],
                EPS,
                TOL,
            )?;

            // Temporal attention: input and all four trainable tensors.
            let ta = TemporalAttention::<f64>::new(2, &mut rng(580)).map_err(msg)?;
            let ta_x = uniform(vec![2, 2, 3, 3], -1.0, 1.0, 581);
            let mut ta_params = vec![ta_x];
            ta_params.extend(ta.parameters());
            check_gradients(
                |p| {
                    let mut m = ta.clone();
                    for (slot, tensor) in m.parameters_mut().into_iter().zip(&p[1..]) {
                        *slot = tensor.clone();
                    }
                    probe(&m.forward(&p[0]).unwrap(), 582)
                },
                &ta_params,
                EPS,
                TOL,
            )?;

            // The fused module: every trainable parameter in both modes.
            for mode in [FusionMode::Serial, FusionMode::Parallel] {
                let module = FstaModule::<f64>::new(3, 2, mode, &mut rng(590)).map_err(msg)?;
                let fx = uniform(vec![2, 2, 4, 4], -1.0, 1.0, 591);
                let mut params = vec![fx];
                params.extend(module.parameters());
                check_gradients(
                    |p| {
                        let mut m = module.clone();
                        for (slot, tensor) in m.parameters_mut().into_iter().zip(&p[1..]) {
                            *slot = tensor.clone();
                        }
                        probe(&m.forward(&p[0]).unwrap(), 592)
                    },
                    &params,
                    EPS,
                    TOL,
                )?;
            }

            Ok("elementwise, reductions, shape ops, conv, linear, BN, neuron, SA, TA, fused module".into())
        },
    );
}

// ---------------------------------------------------------------------------
// 6. Hand-derived neuron traces
// ---------------------------------------------------------------------------

#[test]
fn c06_lif_hand_traces_reproduce_exactly() {
    criterion(
        6,
        "three hand-derived neuron traces reproduce exactly",
        Duration::from_secs(1),
        || {
            let p = LifParams::default();

            // From rest, I = 3: V = 0 + (3 − 0)/2 = 1.5 ≥ 1 → spike, reset to 0.
            let state = LifState { h: Tensor::from_vec(vec![1], vec![0.0]).map_err(msg)? };
            let drive = Tensor::from_vec(vec![1], vec![3.0]).map_err(msg)?;
            let (s, next) = lif_step(&p, &state, &drive).map_err(msg)?;
            ensure!(s.data() == [1.0], "charge case: spike output {:?}", s.data());
            ensure!(next.h.data() == [0.0], "charge case: post-reset membrane {:?}", next.h.data());

            // H = 0.8, no input: V = 0.8 − 0.8/2 = 0.4, below threshold.
            let state = LifState { h: Tensor::from_vec(vec![1], vec![0.8]).map_err(msg)? };
            let (s, next) = lif_step(&p, &state, &Tensor::zeros(vec![1])).map_err(msg)?;
            ensure!(s.data() == [0.0], "leak case: spike output {:?}", s.data());
            ensure!(next.h.data() == [0.4], "leak case: membrane {:?}", next.h.data());

            // Constant I = 1 from rest: V_t = 1 − 2^(−t) approaches but never
            // reaches the unit threshold; every intermediate value is dyadic,
            // so the recurrence must be bit-exact.
            let mut state = LifState::<f64>::init(vec![1], &p);
            let one = Tensor::from_vec(vec![1], vec![1.0]).map_err(msg)?;
            for t in 1..=8i32 {
                let (s, next) = lif_step(&p, &state, &one).map_err(msg)?;
                ensure!(s.data() == [0.0], "geometric case fired at step {t}");
                let expected = 1.0 - 0.5f64.powi(t);
                ensure!(
                    next.h.data() == [expected],
                    "geometric case step {t}: membrane {:?} vs {expected}",
                    next.h.data()
                );
                state = next;
            }
            let eight = Tensor::from_vec(vec![8, 1], vec![1.0; 8]).map_err(msg)?;
            let spikes = lif_sequence_from_rest(&p, &eight).map_err(msg)?;
            ensure!(spikes.data() == [0.0; 8], "geometric case: sequence runner fired");

            Ok("charge/reset, leak, and geometric-approach traces are bit-exact".into())
        },
    );
}

// ---------------------------------------------------------------------------
// 7. Attention-module structure
// ---------------------------------------------------------------------------

#[test]
fn c07_attention_module_structural_properties() {
    criterion(
        7,
        "attention preserves shape and sparsity, gates stay in (0,1), branch projection and basis freeze hold",
        Duration::from_secs(30),
        || {
            // Shape preservation in both modes and for both kernel sizes.
            for (k, mode) in [(3usize, FusionMode::Serial), (7, FusionMode::Parallel)] {
                let m = FstaModule::<f64>::new(k, 4, mode, &mut rng(700)).map_err(msg)?;
                let x = uniform(vec![4, 2, 8, 8], -1.0, 1.0, 701);
                let y = m.forward(&x).map_err(msg)?;
                ensure!(y.shape() == x.shape(), "k={k}: shape {:?} vs {:?}", y.shape(), x.shape());
            }

            // Sparsity-pattern preservation on binary inputs: the module only
            // rescales events, so zeros stay exactly zero and events stay
            // nonzero.
            for mode in [FusionMode::Serial, FusionMode::Parallel] {
                let m = FstaModule::<f64>::new(3, 4, mode, &mut rng(710)).map_err(msg)?;
                let u = uniform(vec![4, 2, 6, 6], 0.0, 1.0, 711);
                let bits: Vec<f64> =
                    u.data().iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
                let x = Tensor::from_vec(vec![4, 2, 6, 6], bits).map_err(msg)?;
                let y = m.forward(&x).map_err(msg)?;
                for (i, (&xi, &yi)) in x.data().iter().zip(y.data().iter()).enumerate() {
                    if xi == 0.0 {
                        ensure!(yi == 0.0, "{mode:?}: zero input spawned output {yi} at {i}");
                    } else {
                        ensure!(yi > 0.0, "{mode:?}: event at {i} was annihilated ({yi})");
                    }
                }
            }

            // Both gate families are strictly inside (0, 1).
            let m = FstaModule::<f64>::new(3, 4, FusionMode::Serial, &mut rng(720)).map_err(msg)?;
            let x = uniform(vec![4, 3, 6, 6], -1.0, 1.0, 721);
            let (_, trace) = m.forward_traced(&x).map_err(msg)?;
            for &wv in trace.freq_w.data().iter() {
                ensure!(0.0 < wv && wv < 1.0, "spatial gate {wv} escaped (0,1)");
            }
            for &wv in trace.t_w.data().iter() {
                ensure!(0.0 < wv && wv < 1.0, "temporal gate {wv} escaped (0,1)");
            }

            // Branch projection: zeroing the spatial scale and opening the
            // temporal one reduces the module to the temporal branch exactly.
            let mut projected = m.clone();
            projected.scale_t = Tensor::scalar(1.0);
            projected.scale_s = Tensor::scalar(0.0);
            let got = projected.forward(&x).map_err(msg)?;
            let want = projected.ta.forward(&x).map_err(msg)?;
            ensure!(
                got.data() == want.data(),
                "scale_s = 0 did not reduce the module to its temporal branch"
            );

            // The fixed filter bank never moves: run 100 real optimizer steps
            // over the module's trainable parameters and require the basis
            // bytes to be untouched while training visibly moved the rest.
            let mut trained = FstaModule::<f64>::new(3, 2, FusionMode::Serial, &mut rng(730)).map_err(msg)?;
            let frozen: Vec<f64> = trained.sa.dct().weights().data().to_vec();
            let before: Vec<f64> = trained.sa.compress_weight.data().to_vec();
            let input = uniform(vec![2, 2, 5, 5], -1.0, 1.0, 731);
            let mut optimizer = Optimizer::new(OptimizerKind::Sgd { momentum: 0.9 }, 0.0);
            for _ in 0..100 {
                let out = trained.forward(&input).map_err(msg)?;
                let loss = probe(&out, 732);
                let grads = loss.backward().map_err(msg)?;
                optimizer.step(trained.parameters_mut(), &grads, 0.05, None).map_err(msg)?;
            }
            ensure!(
                trained.sa.dct().weights().data() == frozen.as_slice(),
                "the fixed filter bank drifted under optimization"
            );
            ensure!(
                trained.sa.compress_weight.data() != before.as_slice(),
                "optimizer steps left the trainable weights untouched"
            );

            Ok("100 optimizer steps left the filter bank bit-identical".into())
        },
    );
}

// ---------------------------------------------------------------------------
// 8. Toy training: attention matches accuracy and fires less
// ---------------------------------------------------------------------------

/// Sum spike and slot counts per layer across seeds, then divide once.
fn pool_firing(runs: &[FiringStats]) -> FiringStats {
    let mut layers = runs[0].layers.clone();
    for run in &runs[1..] {
        for (acc, layer) in layers.iter_mut().zip(&run.layers) {
            acc.spikes += layer.spikes;
            acc.slots += layer.slots;
        }
    }
    for layer in layers.iter_mut() {
        layer.rate = layer.spikes as f64 / layer.slots as f64;
    }
    let total_spikes: u64 = layers.iter().map(|l| l.spikes).sum();
    let total_slots: u64 = layers.iter().map(|l| l.slots).sum();
    FiringStats {
        layers,
        total_spikes,
        total_slots,
        network_rate: total_spikes as f64 / total_slots as f64,
    }
}

#[test]
fn c08_attention_training_matches_accuracy_with_fewer_spikes() {
    criterion(
        8,
        "across 3 seeds the attention net matches test accuracy and fires strictly less",
        Duration::from_secs(600),
        || {
            let dir = scratch("training");
            let mut base_acc = Vec::new();
            let mut fsta_acc = Vec::new();
            let mut base_firing = Vec::new();
            let mut fsta_firing = Vec::new();

            for seed in [0u64, 1, 2] {
                for with_attention in [false, true] {
                    let arm = if with_attention { "attention" } else { "baseline" };
                    let mut cfg = RunConfig::default();
                    cfg.seed = seed;
                    cfg.out = dir.join(format!("{arm}-seed{seed}"));
                    cfg.network.timesteps = Some(4);
                    cfg.fsta.enabled = with_attention;
                    cfg.fsta.kernel = 3;
                    // Gate the final spiking stage: the attention then feeds the
                    // classifier directly, which is where it buys accuracy
                    // without inflating upstream spike counts.
                    cfg.fsta.placement = vec![3];
                    cfg.train.epochs = 3;
                    cfg.train.optimizer.kind = OptimizerName::Adam;
                    cfg.train.lr = 2e-3;
                    cfg.dataset =
                        Some(DatasetDescriptor::SyntheticTwoclass(TwoclassOptions::default()));

                    let outcome = cmd_train(&cfg).map_err(msg)?;
                    if with_attention {
                        fsta_acc.push(outcome.final_test.accuracy);
                        fsta_firing.push(outcome.firing);
                    } else {
                        base_acc.push(outcome.final_test.accuracy);
                        base_firing.push(outcome.firing);
                    }
                }
            }

            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let base_mean_acc = mean(&base_acc);
            let fsta_mean_acc = mean(&fsta_acc);
            let base_rate =
                mean(&base_firing.iter().map(|f| f.network_rate).collect::<Vec<_>>());
            let fsta_rate =
                mean(&fsta_firing.iter().map(|f| f.network_rate).collect::<Vec<_>>());

            let report =
                compare_runs(&pool_firing(&base_firing), &pool_firing(&fsta_firing)).map_err(msg)?;
            let reduction = report
                .network_reduction
                .ok_or_else(|| "baseline network rate was zero".to_string())?;

            ensure!(
                fsta_mean_acc >= base_mean_acc,
                "mean test accuracy dropped: attention {fsta_mean_acc:.4} vs baseline {base_mean_acc:.4}"
            );
            ensure!(
                fsta_rate < base_rate,
                "mean network firing did not drop: attention {fsta_rate:.4} vs baseline {base_rate:.4}"
            );
            ensure!(
                reduction > 0.0,
                "pooled comparison reported a non-positive reduction ({reduction:.4})"
            );

            std::fs::remove_dir_all(&dir).ok();
            Ok(format!(
                "test acc {fsta_mean_acc:.3} vs {base_mean_acc:.3}, firing {fsta_rate:.4} vs {base_rate:.4} ({:.1}% reduction)",
                reduction * 100.0
            ))
        },
    );
}

// ---------------------------------------------------------------------------
// 9. Orientation separation in the spectrum analyzer
// ---------------------------------------------------------------------------

/// First image of a noise-free single-orientation grating set, as an [H, W]
/// probability map.
fn grating_map(orientation: Orientation) -> Result<Tensor<f64>, String> {
    let options = GratingsOptions {
        orientations: vec![orientation],
        noise: 0.0,
        ..GratingsOptions::default()
    };
    let set = gen_gratings(&options, Split::Test);
    let (h, w) = (options.height, options.width);
    Tensor::from_vec(vec![h, w], set.images.data()[..h * w].to_vec()).map_err(msg)
}

#[test]
fn c09_grating_orientation_concentrates_spectral_energy() {
    criterion(
        9,
        "gratings put ≥ 99% of spectral energy in their orientation band; mixed maps split",
        Duration::from_secs(10),
        || {
            let horizontal_band = Band::HorizontalAxis { halfwidth: 0 };
            let vertical_band = Band::VerticalAxis { halfwidth: 0 };
            let fractions = |map: &Tensor<f64>| -> Result<(f64, f64), String> {
                let spectrum = center_spectrum(&dft2d(map).map_err(msg)?).map_err(msg)?;
                Ok((
                    band_energy(&spectrum, horizontal_band).map_err(msg)?,
                    band_energy(&spectrum, vertical_band).map_err(msg)?,
                ))
            };

            let (h_frac, _) = fractions(&grating_map(Orientation::Vertical)?)?;
            ensure!(h_frac >= 0.99, "vertical grating: horizontal-axis fraction {h_frac:.4}");

            let (_, v_frac) = fractions(&grating_map(Orientation::Horizontal)?)?;
            ensure!(v_frac >= 0.99, "horizontal grating: vertical-axis fraction {v_frac:.4}");

            let (mh, mv) = fractions(&grating_map(Orientation::Mixed)?)?;
            for (band, frac) in [("horizontal", mh), ("vertical", mv)] {
                ensure!(
                    (1.0 / 3.0..0.99).contains(&frac),
                    "mixed grating: {band}-axis fraction {frac:.4} is not a split"
                );
            }

            Ok(format!(
                "vertical {h_frac:.4}, horizontal {v_frac:.4}, mixed {mh:.3}/{mv:.3}"
            ))
        },
    );
}

// ---------------------------------------------------------------------------
// 10. Serialization and ingestion
// ---------------------------------------------------------------------------

#[test]
fn c10_serialization_and_ingestion_contracts() {
    criterion(
        10,
        "container roundtrips bit-exactly, batch sizes are validated, config reaches a fixpoint",
        Duration::from_secs(5),
        || {
            let dir = scratch("serialization");

            // Bit-exact container roundtrip, including awkward floats.
            let mut values =
                uniform(vec![2, 3, 2, 2], -10.0, 10.0, 1000).data().to_vec();
            values[0] = 0.0;
            values[1] = -0.0;
            values[2] = f64::MIN_POSITIVE;
            values[3] = -1.0e300;
            let tensor = Tensor::from_vec(vec![2, 3, 2, 2], values).map_err(msg)?;
            let container = Container::from_tensor(&tensor);
            let bytes = encode(&container).map_err(msg)?;
            let decoded = decode(&bytes).map_err(msg)?;
            let restored = decoded.to_tensor();
            ensure!(restored.shape() == tensor.shape(), "container shape changed");
            for (a, b) in tensor.data().iter().zip(restored.data().iter()) {
                ensure!(a.to_bits() == b.to_bits(), "payload bits changed: {a} vs {b}");
            }
            let path = dir.join("roundtrip.fsta");
            write_container(&path, &container).map_err(msg)?;
            let reread = read_container(&path).map_err(msg)?;
            ensure!(encode(&reread).map_err(msg)? == bytes, "file roundtrip changed the bytes");

            for payload in [
                Payload::F32(vec![1.0f32, -2.5, 0.0]),
                Payload::Binary(vec![1, 0, 1]),
            ] {
                let c = Container::new(vec![3], payload).map_err(msg)?;
                let b = encode(&c).map_err(msg)?;
                ensure!(
                    encode(&decode(&b).map_err(msg)?).map_err(msg)? == b,
                    "non-f64 payload did not roundtrip"
                );
            }

            // Image-batch ingestion: the published record and batch sizes are
            // enforced exactly.
            ensure!(CIFAR_RECORD_BYTES == 3073, "record bytes {CIFAR_RECORD_BYTES}");
            ensure!(
                CIFAR_BATCH_BYTES == 30_730_000
                    && CIFAR_BATCH_BYTES == CIFAR_RECORD_BYTES * CIFAR_RECORDS_PER_BATCH,
                "batch bytes {CIFAR_BATCH_BYTES}"
            );
            let mut batch = vec![0u8; CIFAR_BATCH_BYTES];
            for (i, record) in batch.chunks_mut(CIFAR_RECORD_BYTES).enumerate() {
                record[0] = (i % 10) as u8;
                for (j, px) in record[1..].iter_mut().enumerate() {
                    *px = ((i * 31 + j * 7) % 256) as u8;
                }
            }
            let batch_path = dir.join("test_batch.bin");
            std::fs::write(&batch_path, &batch).map_err(msg)?;
            let options = Cifar10Options {
                dir: dir.clone(),
                mean: Some([0.5; 3]),
                std: Some([0.25; 3]),
            };
            let loaded = load_cifar10_binary(&options, Split::Test).map_err(msg)?;
            ensure!(
                loaded.images.shape() == [CIFAR_RECORDS_PER_BATCH, 3, 32, 32],
                "loaded shape {:?}",
                loaded.images.shape()
            );
            ensure!(loaded.labels.len() == CIFAR_RECORDS_PER_BATCH, "label count");
            std::fs::write(&batch_path, &batch[..CIFAR_BATCH_BYTES - 1]).map_err(msg)?;
            ensure!(
                load_cifar10_binary(&options, Split::Test).is_err(),
                "a truncated batch file was accepted"
            );

            // Config documents reach a parse → serialize → parse fixpoint.
            let text = r#"
seed = 7
out = "runs/fixpoint"

[network]
catalog = "snn-tiny"
timesteps = 4

[fsta]
enabled = true
kernel = 3
mode = "serial"
placement = [0, 1]

[train]
epochs = 2
batch_size = 16
lr = 0.05

[train.optimizer]
kind = "adam"

[dataset.synthetic_twoclass]
train_samples = 32
test_samples = 16

[energy]
samples = 4
"#;
            let first = parse_config_str(text).map_err(msg)?;
            let serialized = serialize_config(&first).map_err(msg)?;
            let second = parse_config_str(&serialized).map_err(msg)?;
            ensure!(first == second, "config did not reach a fixpoint:\n{serialized}");

            std::fs::remove_dir_all(&dir).ok();
            Ok("f64/f32/binary payloads, 3073/30,730,000-byte layout, config fixpoint".into())
        },
    );
}
