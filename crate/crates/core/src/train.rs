//! Surrogate-gradient training: rate-coded and per-timestep cross-entropy
//! losses, SGD-with-momentum and Adam parameter updates, a cosine learning
//! rate schedule, epoch loops with seeded shuffling and optional
//! flip-and-crop augmentation, and checkpoint capture/restore.
//!
//! Reproducibility contract: the shuffle/augmentation stream for epoch `e`
//! is derived from `(seed, e)` alone, so a run resumed from a checkpoint at
//! any epoch boundary replays exactly the same batches as an uninterrupted
//! run. The checkpoint therefore records the base seed and the epoch count
//! rather than an opaque generator state.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{build_network, BatchNormState, Layer, ModelError, Network, NetworkSpec};
use crate::scalar::{cast, Scalar};
use crate::tensor::{stack, BackwardRule, Gradients, Tensor, TensorError};

/// Errors from loss evaluation, optimization, and the epoch loop.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    /// A label is not a valid class index.
    LabelOutOfRange { position: usize, label: usize, classes: usize },
    /// Image count and label count disagree.
    LengthMismatch { images: usize, labels: usize },
    EmptyDataset,
    /// Batch size must be positive.
    ZeroBatchSize,
    /// Optimizer was stepped with a different parameter list than before.
    ParameterCountChanged { expected: usize, got: usize },
    /// A checkpoint does not line up with the network built from its spec.
    CheckpointShape { what: String },
    /// Checkpoint file could not be read, written, or parsed.
    CheckpointIo { message: String },
    Model(ModelError),
    Tensor(TensorError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::LabelOutOfRange { position, label, classes } => {
                write!(f, "label {label} at position {position} outside 0..{classes}")
            }
            TrainError::LengthMismatch { images, labels } => {
                write!(f, "{images} images but {labels} labels")
            }
            TrainError::EmptyDataset => write!(f, "dataset is empty"),
            TrainError::ZeroBatchSize => write!(f, "batch size must be positive"),
            TrainError::ParameterCountChanged { expected, got } => {
                write!(f, "optimizer saw {expected} parameters before, now {got}")
            }
            TrainError::CheckpointShape { what } => write!(f, "checkpoint mismatch: {what}"),
            TrainError::CheckpointIo { message } => write!(f, "checkpoint i/o: {message}"),
            TrainError::Model(e) => write!(f, "{e}"),
            TrainError::Tensor(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for TrainError {}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Tensor(e)
    }
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean cross-entropy over `[N, K]` logits with integer labels, computed via
/// the log-sum-exp form; gradient is `(softmax − onehot) / N`.
struct CrossEntropyRule<S: Scalar> {
    /// Softmax probabilities, row-major `[N, K]`.
    probs: Vec<S>,
    labels: Vec<usize>,
    classes: usize,
}

impl<S: Scalar> BackwardRule<S> for CrossEntropyRule<S> {
    fn name(&self) -> &'static str {
        "cross_entropy_mean"
    }

    fn backward(&self, grad: &Tensor<S>, inputs: &[Tensor<S>], _output: &Tensor<S>) -> Vec<Option<Tensor<S>>> {
        if !inputs[0].requires_grad() {
            return vec![None];
        }
        let g = grad.data()[0];
        let n = self.labels.len();
        let inv_n = cast::<S>(1.0 / n as f64);
        let mut d = self.probs.clone();
        for (row, &label) in self.labels.iter().enumerate() {
            d[row * self.classes + label] -= S::one();
        }
        for v in &mut d {
            *v *= g * inv_n;
        }
        vec![Some(Tensor::leaf(inputs[0].shape().to_vec(), d, false))]
    }
}

fn check_labels(labels: &[usize], n: usize, classes: usize) -> Result<(), TrainError> {
    if labels.len() != n {
        return Err(TrainError::LengthMismatch { images: n, labels: labels.len() });
    }
    for (position, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(TrainError::LabelOutOfRange { position, label, classes });
        }
    }
    Ok(())
}

/// Mean cross-entropy of `[N, K]` logits against integer labels.
pub fn cross_entropy_mean<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> Result<Tensor<S>, TrainError> {
    if logits.rank() != 2 {
        return Err(TrainError::Tensor(TensorError::RankMismatch {
            context: "cross_entropy_mean logits",
            expected: 2,
            got: logits.rank(),
        }));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    check_labels(labels, n, k)?;

    let z = logits.data();
    let mut probs = vec![S::zero(); n * k];
    let mut total = 0.0f64;
    for row in 0..n {
        let r = &z[row * k..(row + 1) * k];
        let m = r.iter().cloned().fold(S::neg_infinity(), S::max);
        let mut denom = 0.0f64;
        for &v in r {
            denom += (v - m).to_f64().unwrap().exp();
        }
        for (j, &v) in r.iter().enumerate() {
            probs[row * k + j] = cast::<S>((v - m).to_f64().unwrap().exp() / denom);
        }
        // loss_row = log Σ exp(z − m) + m − z_y
        total += denom.ln() + m.to_f64().unwrap() - r[labels[row]].to_f64().unwrap();
    }
    let loss = cast::<S>(total / n as f64);
    let rule = CrossEntropyRule { probs, labels: labels.to_vec(), classes: k };
    Ok(Tensor::from_op(vec![], vec![loss], Box::new(rule), vec![logits.clone()]))
}

/// Rate-coded loss: cross-entropy of the time-averaged logits.
/// `logits` is `[T, N, K]`. Uniform logits give `ln(K)`.
pub fn loss_rate_ce<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> Result<Tensor<S>, TrainError> {
    if logits.rank() != 3 {
        return Err(TrainError::Tensor(TensorError::RankMismatch {
            context: "loss_rate_ce logits",
            expected: 3,
            got: logits.rank(),
        }));
    }
    let mean = logits.mean_axes(&[0], false)?;
    cross_entropy_mean(&mean, labels)
}

/// Per-timestep loss: the mean over timesteps of each step's cross-entropy.
/// Penalizes every step's logits instead of only their average.
pub fn loss_timestep_ce<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> Result<Tensor<S>, TrainError> {
    if logits.rank() != 3 {
        return Err(TrainError::Tensor(TensorError::RankMismatch {
            context: "loss_timestep_ce logits",
            expected: 3,
            got: logits.rank(),
        }));
    }
    let t = logits.shape()[0];
    let mut acc: Option<Tensor<S>> = None;
    for ti in 0..t {
        let step = cross_entropy_mean(&logits.select(ti)?, labels)?;
        acc = Some(match acc {
            Some(a) => a.add(&step)?,
            None => step,
        });
    }
    Ok(acc.expect("timesteps >= 1").scale(cast::<S>(1.0 / t as f64)))
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

/// Which update rule the optimizer applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// v ← momentum·v + g;  p ← p − lr·(v + weight_decay·p)
    Sgd { momentum: f64 },
    /// Bias-corrected Adam; weight decay enters the update term like SGD's.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Sgd { momentum: 0.9 }
    }
}

/// Serializable optimizer buffers for checkpointing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct OptimizerState {
    pub step_count: u64,
    /// Momentum / first-moment buffers, one per parameter.
    pub velocity: Vec<Vec<f64>>,
    /// Second-moment buffers (Adam only; empty for SGD).
    pub second: Vec<Vec<f64>>,
}

/// Stateful optimizer. Buffers are kept in f64 regardless of the network's
/// scalar type and are sized lazily on the first step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub weight_decay: f64,
    state: OptimizerState,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, weight_decay: f64) -> Self {
        Optimizer { kind, weight_decay, state: OptimizerState::default() }
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn with_state(kind: OptimizerKind, weight_decay: f64, state: OptimizerState) -> Self {
        Optimizer { kind, weight_decay, state }
    }

    /// Apply one update to every parameter that received a gradient.
    /// `clip` bounds the global L2 norm of the gradient vector.
    pub fn step<S: Scalar>(
        &mut self,
        params: Vec<&mut Tensor<S>>,
        grads: &Gradients<S>,
        lr: f64,
        clip: Option<f64>,
    ) -> Result<(), TrainError> {
        if self.state.velocity.is_empty() {
            self.state.velocity = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            if matches!(self.kind, OptimizerKind::Adam { .. }) {
                self.state.second = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            }
        } else if self.state.velocity.len() != params.len() {
            return Err(TrainError::ParameterCountChanged {
                expected: self.state.velocity.len(),
                got: params.len(),
            });
        }
        self.state.step_count += 1;

        // Global gradient norm for clipping.
        let scale_g = match clip {
            Some(max_norm) => {
                let mut sq = 0.0f64;
                for p in params.iter() {
                    if let Some(g) = grads.get(p) {
                        for &v in g.data().iter() {
                            let v = v.to_f64().unwrap();
                            sq += v * v;
                        }
                    }
                }
                let norm = sq.sqrt();
                if norm > max_norm { max_norm / norm } else { 1.0 }
            }
            None => 1.0,
        };

        for (i, p) in params.into_iter().enumerate() {
            let Some(g) = grads.get(p) else { continue };
            let gd = g.data();
            let pd = p.data();
            let mut out = Vec::with_capacity(pd.len());
            match self.kind {
                OptimizerKind::Sgd { momentum } => {
                    let vel = &mut self.state.velocity[i];
                    for j in 0..pd.len() {
                        let gj = gd[j].to_f64().unwrap() * scale_g;
                        vel[j] = momentum * vel[j] + gj;
                        let pj = pd[j].to_f64().unwrap();
                        out.push(cast::<S>(pj - lr * (vel[j] + self.weight_decay * pj)));
                    }
                }
                OptimizerKind::Adam { beta1, beta2, epsilon } => {
                    let t = self.state.step_count as i32;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let m = &mut self.state.velocity[i];
                    let v = &mut self.state.second[i];
                    for j in 0..pd.len() {
                        let gj = gd[j].to_f64().unwrap() * scale_g;
                        m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                        let mhat = m[j] / c1;
                        let vhat = v[j] / c2;
                        let pj = pd[j].to_f64().unwrap();
                        out.push(cast::<S>(pj - lr * (mhat / (vhat.sqrt() + epsilon) + self.weight_decay * pj)));
                    }
                }
            }
            *p = Tensor::from_vec(p.shape().to_vec(), out)?.with_grad();
        }
        Ok(())
    }
}

/// Cosine-decayed learning rate for a zero-based epoch index.
pub fn lr_for_epoch(base_lr: f64, epoch: usize, total_epochs: usize, cosine: bool) -> f64 {
    if !cosine || total_epochs <= 1 {
        return base_lr;
    }
    let frac = epoch as f64 / total_epochs as f64;
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

// ---------------------------------------------------------------------------
// Config, metrics, epoch loop
// ---------------------------------------------------------------------------

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub cosine_lr: bool,
    pub grad_clip: Option<f64>,
    /// Use the per-timestep loss instead of the rate-coded loss.
    pub timestep_loss: bool,
    /// Random horizontal flips and 4-pixel-pad crops on each batch.
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1,
            batch_size: 32,
            lr: 0.1,
            weight_decay: 5e-4,
            optimizer: OptimizerKind::default(),
            cosine_lr: true,
            grad_clip: None,
            timestep_loss: false,
            augment: false,
            seed: 0,
        }
    }
}

/// Averages accumulated over one pass through a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: f64,
    /// Spikes per neuron-timestep slot across all spiking stages.
    pub firing_rate: f64,
    pub samples: usize,
}

/// Deterministic per-epoch stream: depends only on `(seed, epoch)`, so
/// resumed runs replay identical batches.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mixed = seed ^ (epoch as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(0xD1B5_4A32_D192_ED03);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Random horizontal flips and zero-pad-then-crop shifts, per sample.
/// `pad = 0` still applies flips. Purely a data transform: the result is a
/// leaf tensor.
pub fn augment_flip_crop<S: Scalar, R: Rng>(
    images: &Tensor<S>,
    pad: usize,
    rng: &mut R,
) -> Result<Tensor<S>, TrainError> {
    if images.rank() != 4 {
        return Err(TrainError::Tensor(TensorError::RankMismatch {
            context: "augment_flip_crop images",
            expected: 4,
            got: images.rank(),
        }));
    }
    let (n, c, h, w) = (images.shape()[0], images.shape()[1], images.shape()[2], images.shape()[3]);
    let src = images.data();
    let mut out = vec![S::zero(); src.len()];
    for s in 0..n {
        let flip = rng.random_bool(0.5);
        let dy = rng.random_range(0..=2 * pad) as isize - pad as isize;
        let dx = rng.random_range(0..=2 * pad) as isize - pad as isize;
        for ci in 0..c {
            let base = (s * c + ci) * h * w;
            for y in 0..h {
                let sy = y as isize + dy;
                if sy < 0 || sy >= h as isize {
                    continue; // zero padding
                }
                for x in 0..w {
                    let sx = x as isize + dx;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let src_x = if flip { w - 1 - sx as usize } else { sx as usize };
                    out[base + y * w + x] = src[base + sy as usize * w + src_x];
                }
            }
        }
    }
    Ok(Tensor::from_vec(images.shape().to_vec(), out).map_err(TrainError::Tensor)?)
}

/// Predicted class per sample from `[T, N, K]` logits: argmax of the
/// time-averaged row, first index on ties.
pub fn predictions<S: Scalar>(logits: &Tensor<S>) -> Result<Vec<usize>, TrainError> {
    let mean = logits.mean_axes(&[0], false)?;
    let (n, k) = (mean.shape()[0], mean.shape()[1]);
    let d = mean.data();
    let mut preds = Vec::with_capacity(n);
    for row in 0..n {
        let r = &d[row * k..(row + 1) * k];
        let mut best = 0usize;
        for j in 1..k {
            if r[j] > r[best] {
                best = j;
            }
        }
        preds.push(best);
    }
    Ok(preds)
}

/// Stack the selected rows of an `[M, ...]` tensor into a batch.
pub fn gather_batch<S: Scalar>(images: &Tensor<S>, indices: &[usize]) -> Result<Tensor<S>, TrainError> {
    let mut rows = Vec::with_capacity(indices.len());
    for &i in indices {
        rows.push(images.select(i)?);
    }
    Ok(stack(&rows)?)
}

/// Spike and slot totals from a traced forward pass.
fn spike_totals<S: Scalar>(trace: &crate::model::ForwardTrace<S>) -> (u64, u64) {
    let mut spikes = 0u64;
    let mut slots = 0u64;
    for layer in &trace.layers {
        slots += layer.spikes.numel() as u64;
        spikes += layer.spikes.data().iter().filter(|&&v| v != S::zero()).count() as u64;
    }
    (spikes, slots)
}

fn loss_for<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
    timestep_loss: bool,
) -> Result<Tensor<S>, TrainError> {
    if timestep_loss {
        loss_timestep_ce(logits, labels)
    } else {
        loss_rate_ce(logits, labels)
    }
}

/// One optimization pass over the whole dataset. Returns averaged metrics.
pub fn train_epoch<S: Scalar>(
    net: &mut Network<S>,
    optimizer: &mut Optimizer,
    images: &Tensor<S>,
    labels: &[usize],
    config: &TrainConfig,
    epoch: usize,
) -> Result<Metrics, TrainError> {
    let n = images.shape()[0];
    if n == 0 {
        return Err(TrainError::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(TrainError::ZeroBatchSize);
    }
    if labels.len() != n {
        return Err(TrainError::LengthMismatch { images: n, labels: labels.len() });
    }

    let mut rng = epoch_rng(config.seed, epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let lr = lr_for_epoch(config.lr, epoch, config.epochs, config.cosine_lr);

    let mut total_loss = 0.0f64;
    let mut correct = 0usize;
    let mut spikes = 0u64;
    let mut slots = 0u64;

    for chunk in order.chunks(config.batch_size) {
        let mut batch = gather_batch(images, chunk)?;
        if config.augment {
            batch = augment_flip_crop(&batch, 4, &mut rng)?;
        }
        let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();

        let (logits, trace) = net.forward_train(&batch, true)?;
        let loss = loss_for(&logits, &batch_labels, config.timestep_loss)?;
        let grads = loss.backward()?;
        optimizer.step(net.parameters_mut(), &grads, lr, config.grad_clip)?;

        total_loss += loss.item().to_f64().unwrap() * chunk.len() as f64;
        let preds = predictions(&logits)?;
        correct += preds.iter().zip(&batch_labels).filter(|(p, l)| p == l).count();
        let trace = trace.expect("trace requested");
        let (s, sl) = spike_totals(&trace);
        spikes += s;
        slots += sl;
    }

    Ok(Metrics {
        loss: total_loss / n as f64,
        accuracy: correct as f64 / n as f64,
        firing_rate: if slots == 0 { 0.0 } else { spikes as f64 / slots as f64 },
        samples: n,
    })
}

/// Loss, accuracy, and firing rate on held-out data. Uses running-statistics
/// normalization and leaves the network untouched.
pub fn evaluate<S: Scalar>(
    net: &Network<S>,
    images: &Tensor<S>,
    labels: &[usize],
    batch_size: usize,
) -> Result<Metrics, TrainError> {
    let n = images.shape()[0];
    if n == 0 {
        return Err(TrainError::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(TrainError::ZeroBatchSize);
    }
    if labels.len() != n {
        return Err(TrainError::LengthMismatch { images: n, labels: labels.len() });
    }
    let mut total_loss = 0.0f64;
    let mut correct = 0usize;
    let mut spikes = 0u64;
    let mut slots = 0u64;
    let order: Vec<usize> = (0..n).collect();
    for chunk in order.chunks(batch_size) {
        let batch = gather_batch(images, chunk)?;
        let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        let (logits, trace) = net.forward(&batch, true)?;
        let loss = loss_rate_ce(&logits, &batch_labels)?;
        total_loss += loss.item().to_f64().unwrap() * chunk.len() as f64;
        let preds = predictions(&logits)?;
        correct += preds.iter().zip(&batch_labels).filter(|(p, l)| p == l).count();
        let (s, sl) = spike_totals(&trace.expect("trace requested"));
        spikes += s;
        slots += sl;
    }
    Ok(Metrics {
        loss: total_loss / n as f64,
        accuracy: correct as f64 / n as f64,
        firing_rate: if slots == 0 { 0.0 } else { spikes as f64 / slots as f64 },
        samples: n,
    })
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// One tensor's data, precision-widened to f64 for storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorPayload {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Batch-norm running statistics for one normalization site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Everything needed to resume training at an epoch boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    /// Epochs completed so far.
    pub epoch: usize,
    /// Base seed of the shuffle/augmentation stream; together with `epoch`
    /// this is the full generator state (streams are derived per epoch).
    pub seed: u64,
    pub params: Vec<TensorPayload>,
    pub bn_running: Vec<RunningStats>,
    pub optimizer: OptimizerState,
}

fn bn_states<S: Scalar>(net: &Network<S>) -> Vec<&BatchNormState<S>> {
    let mut states = Vec::new();
    for layer in &net.layers {
        match layer {
            Layer::ConvBnLif { bn, .. } => states.push(bn),
            Layer::Residual { bn1, bn2, projection, .. } => {
                states.push(bn1);
                states.push(bn2);
                if let Some((_, bn)) = projection {
                    states.push(bn);
                }
            }
            _ => {}
        }
    }
    states
}

fn bn_states_mut<S: Scalar>(net: &mut Network<S>) -> Vec<&mut BatchNormState<S>> {
    let mut states = Vec::new();
    for layer in &mut net.layers {
        match layer {
            Layer::ConvBnLif { bn, .. } => states.push(bn),
            Layer::Residual { bn1, bn2, projection, .. } => {
                states.push(bn1);
                states.push(bn2);
                if let Some((_, bn)) = projection {
                    states.push(bn);
                }
            }
            _ => {}
        }
    }
    states
}

/// Snapshot a network and optimizer into a serializable checkpoint.
pub fn capture_checkpoint<S: Scalar>(
    net: &Network<S>,
    optimizer: &Optimizer,
    epoch: usize,
    seed: u64,
) -> Checkpoint {
    let params = net
        .parameters()
        .iter()
        .map(|p| TensorPayload {
            shape: p.shape().to_vec(),
            data: p.data().iter().map(|v| v.to_f64().unwrap()).collect(),
        })
        .collect();
    let bn_running = bn_states(net)
        .into_iter()
        .map(|bn| RunningStats { mean: bn.running_mean.clone(), var: bn.running_var.clone() })
        .collect();
    Checkpoint {
        spec: net.spec().clone(),
        epoch,
        seed,
        params,
        bn_running,
        optimizer: optimizer.state().clone(),
    }
}

/// Rebuild a network from a checkpoint, overwriting freshly initialized
/// parameters and batch-norm statistics with the stored values.
pub fn restore_network<S: Scalar>(checkpoint: &Checkpoint) -> Result<Network<S>, TrainError> {
    let mut net = build_network::<S>(&checkpoint.spec, checkpoint.seed)?;
    {
        let params = net.parameters_mut();
        if params.len() != checkpoint.params.len() {
            return Err(TrainError::CheckpointShape {
                what: format!(
                    "network has {} parameter tensors, checkpoint has {}",
                    params.len(),
                    checkpoint.params.len()
                ),
            });
        }
        for (p, payload) in params.into_iter().zip(&checkpoint.params) {
            if p.shape() != payload.shape.as_slice() {
                return Err(TrainError::CheckpointShape {
                    what: format!("parameter shape {:?} vs stored {:?}", p.shape(), payload.shape),
                });
            }
            let data: Vec<S> = payload.data.iter().map(|&v| cast::<S>(v)).collect();
            *p = Tensor::from_vec(payload.shape.clone(), data)?.with_grad();
        }
    }
    {
        let states = bn_states_mut(&mut net);
        if states.len() != checkpoint.bn_running.len() {
            return Err(TrainError::CheckpointShape {
                what: format!(
                    "network has {} batch-norm sites, checkpoint has {}",
                    states.len(),
                    checkpoint.bn_running.len()
                ),
            });
        }
        for (bn, stored) in states.into_iter().zip(&checkpoint.bn_running) {
            if bn.running_mean.len() != stored.mean.len() {
                return Err(TrainError::CheckpointShape {
                    what: format!(
                        "batch-norm width {} vs stored {}",
                        bn.running_mean.len(),
                        stored.mean.len()
                    ),
                });
            }
            bn.running_mean = stored.mean.clone();
            bn.running_var = stored.var.clone();
        }
    }
    Ok(net)
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), TrainError> {
    let json = serde_json::to_string(checkpoint)
        .map_err(|e| TrainError::CheckpointIo { message: e.to_string() })?;
    std::fs::write(path, json).map_err(|e| TrainError::CheckpointIo { message: e.to_string() })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let json = std::fs::read_to_string(path)
        .map_err(|e| TrainError::CheckpointIo { message: e.to_string() })?;
    serde_json::from_str(&json).map_err(|e| TrainError::CheckpointIo { message: e.to_string() })
}
