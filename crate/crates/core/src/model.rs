//! Spiking network construction: conv/BN/LIF blocks, residual stages with
//! membrane shortcuts, attention insertion points, and spike-trace capture.
//!
//! Networks run on a time-major carrier `[T, N, C, H, W]`. The static input
//! is presented identically at every timestep (direct analog encoding);
//! convolutions and batch norm fold `(T, N)` into one batch axis, and LIF
//! layers thread membrane state across the time axis, starting from rest on
//! every forward call.
//!
//! Residual blocks use a membrane shortcut by default: the block input is
//! added to the pre-activation drive of the final LIF, so block outputs stay
//! binary. A spike-add variant (outputs in {0, 1, 2}) is available behind a
//! flag for comparison.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fsta::{FstaError, FstaModule, FusionMode};
use crate::neuron::{lif_sequence_from_rest, LifParams, NeuronError};
use crate::scalar::{cast, Scalar};
use crate::tensor::{conv2d, linear, stack, BackwardRule, Tensor, TensorError};

/// Errors from network validation, construction, and forward passes.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    /// A network needs at least one layer.
    EmptyLayerList,
    /// Shape arithmetic failed while validating the layer chain.
    Build { layer_index: usize, layer: String, message: String },
    /// Forward input does not match the spec's input shape.
    InputShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    /// An attention insertion index does not name a spiking stage.
    PlacementOutOfRange { index: usize, stages: usize },
    /// Batch norm state sized for a different channel count.
    ChannelMismatch { expected: usize, got: usize },
    Neuron(NeuronError),
    Fsta(FstaError),
    Tensor(TensorError),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::EmptyLayerList => write!(f, "network has no layers"),
            ModelError::Build { layer_index, layer, message } => {
                write!(f, "layer {layer_index} ({layer}): {message}")
            }
            ModelError::InputShapeMismatch { expected, got } => {
                write!(f, "input shape {got:?} does not match spec {expected:?}")
            }
            ModelError::PlacementOutOfRange { index, stages } => {
                write!(f, "placement index {index} out of range: network has {stages} spiking stages")
            }
            ModelError::ChannelMismatch { expected, got } => {
                write!(f, "batch norm sized for {expected} channels, input has {got}")
            }
            ModelError::Neuron(e) => write!(f, "{e}"),
            ModelError::Fsta(e) => write!(f, "{e}"),
            ModelError::Tensor(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ModelError {}

impl From<NeuronError> for ModelError {
    fn from(e: NeuronError) -> Self {
        ModelError::Neuron(e)
    }
}

impl From<FstaError> for ModelError {
    fn from(e: FstaError) -> Self {
        ModelError::Fsta(e)
    }
}

impl From<TensorError> for ModelError {
    fn from(e: TensorError) -> Self {
        ModelError::Tensor(e)
    }
}

/// How a residual block joins its shortcut to the main path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShortcutKind {
    /// Add the shortcut to the membrane drive of the final LIF (binary
    /// outputs preserved).
    #[default]
    Membrane,
    /// Add the shortcut to the final spike output (values may reach 2).
    SpikeAdd,
}

/// One stage of a network, declaratively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    /// Convolution → batch norm → LIF. `padding` defaults to `kernel / 2`.
    ConvBnLif {
        channels: usize,
        kernel: usize,
        stride: usize,
        #[serde(default)]
        padding: Option<usize>,
    },
    /// Two 3×3 conv/BN stages with a shortcut; projection (1×1 conv + BN)
    /// appears automatically when the channel count or stride changes.
    ResidualBlock {
        channels: usize,
        #[serde(default = "default_stride")]
        stride: usize,
        #[serde(default)]
        shortcut: ShortcutKind,
    },
    /// Global average pooling over the spatial extent.
    AvgPool,
    /// Collapse (C, H, W) into one feature axis.
    Flatten,
    /// Affine map to class logits; no LIF afterwards (logits stay real).
    Classifier { classes: usize },
    /// Frequency-based spatial-temporal attention unit.
    Fsta { kernel: usize, mode: FusionMode },
}

fn default_stride() -> usize {
    1
}

impl LayerSpec {
    /// Stages whose output is a binary spike train.
    pub fn is_spiking(&self) -> bool {
        matches!(self, LayerSpec::ConvBnLif { .. } | LayerSpec::ResidualBlock { .. })
    }

    /// Short name used in layer identifiers (`layer{i}_{kind}`).
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::ConvBnLif { .. } => "conv",
            LayerSpec::ResidualBlock { .. } => "res",
            LayerSpec::AvgPool => "avgpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Classifier { .. } => "classifier",
            LayerSpec::Fsta { .. } => "fsta",
        }
    }
}

/// Input extent of a network, channels first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

/// Declarative description of a network; serializable, hashable, buildable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub name: String,
    pub input: InputShape,
    pub timesteps: usize,
    #[serde(default)]
    pub lif: LifParams,
    pub layers: Vec<LayerSpec>,
    /// Spiking-stage indices that received attention units via
    /// [`insert_fsta`]; informational.
    #[serde(default)]
    pub fsta_placement: Vec<usize>,
}

/// Shape of the carrier between layers (ignoring the time and batch axes).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeInfo {
    Spatial { channels: usize, height: usize, width: usize },
    Flat { features: usize },
}

impl ShapeInfo {
    pub fn feature_count(&self) -> usize {
        match *self {
            ShapeInfo::Spatial { channels, height, width } => channels * height * width,
            ShapeInfo::Flat { features } => features,
        }
    }
}

/// Input and output extents of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub input: ShapeInfo,
    pub output: ShapeInfo,
}

impl NetworkSpec {
    /// Walk the chain and check that every layer's shape arithmetic closes.
    /// Returns the output feature count of the final layer.
    pub fn validate(&self) -> Result<usize, ModelError> {
        let chain = self.shape_chain()?;
        Ok(chain.last().expect("nonempty").output.feature_count())
    }

    /// Per-layer input/output extents, validating the whole chain.
    pub fn shape_chain(&self) -> Result<Vec<LayerShape>, ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::EmptyLayerList);
        }
        if self.timesteps == 0 {
            return Err(ModelError::Build {
                layer_index: 0,
                layer: "network".into(),
                message: "timesteps must be at least 1".into(),
            });
        }
        self.lif.validate()?;
        let mut state = ShapeInfo::Spatial {
            channels: self.input.channels,
            height: self.input.height,
            width: self.input.width,
        };
        if self.input.channels == 0 || self.input.height == 0 || self.input.width == 0 {
            return Err(ModelError::Build {
                layer_index: 0,
                layer: "input".into(),
                message: "input extents must be positive".into(),
            });
        }
        let mut chain = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let fail = |message: String| ModelError::Build {
                layer_index: i,
                layer: format!("layer{i}_{}", layer.kind_name()),
                message,
            };
            let input = state;
            state = match (*layer).clone() {
                LayerSpec::ConvBnLif { channels, kernel, stride, padding } => {
                    let ShapeInfo::Spatial { channels: _, height: h, width: w } = state else {
                        return Err(fail("convolution requires a spatial input".into()));
                    };
                    if channels == 0 || kernel == 0 {
                        return Err(fail("channels and kernel must be positive".into()));
                    }
                    if stride == 0 {
                        return Err(fail("stride must be positive".into()));
                    }
                    let pad = padding.unwrap_or(kernel / 2);
                    if kernel > h + 2 * pad || kernel > w + 2 * pad {
                        return Err(fail(format!(
                            "kernel {kernel} exceeds padded extent {}x{}",
                            h + 2 * pad,
                            w + 2 * pad
                        )));
                    }
                    let oh = (h + 2 * pad - kernel) / stride + 1;
                    let ow = (w + 2 * pad - kernel) / stride + 1;
                    ShapeInfo::Spatial { channels, height: oh, width: ow }
                }
                LayerSpec::ResidualBlock { channels, stride, .. } => {
                    let ShapeInfo::Spatial { channels: _, height: h, width: w } = state else {
                        return Err(fail("residual block requires a spatial input".into()));
                    };
                    if channels == 0 || stride == 0 {
                        return Err(fail("channels and stride must be positive".into()));
                    }
                    if 3 > h + 2 || 3 > w + 2 {
                        return Err(fail(format!("3x3 block needs extent >= 1, got {h}x{w}")));
                    }
                    let oh = (h + 2 - 3) / stride + 1;
                    let ow = (w + 2 - 3) / stride + 1;
                    ShapeInfo::Spatial { channels, height: oh, width: ow }
                }
                LayerSpec::AvgPool => {
                    let ShapeInfo::Spatial { channels, .. } = state else {
                        return Err(fail("average pooling requires a spatial input".into()));
                    };
                    ShapeInfo::Spatial { channels, height: 1, width: 1 }
                }
                LayerSpec::Flatten => {
                    let ShapeInfo::Spatial { channels, height, width } = state else {
                        return Err(fail("flatten requires a spatial input".into()));
                    };
                    ShapeInfo::Flat { features: channels * height * width }
                }
                LayerSpec::Classifier { classes } => {
                    let ShapeInfo::Flat { .. } = state else {
                        return Err(fail("classifier requires a flattened input".into()));
                    };
                    if classes == 0 {
                        return Err(fail("class count must be positive".into()));
                    }
                    ShapeInfo::Flat { features: classes }
                }
                LayerSpec::Fsta { kernel, mode: _ } => {
                    let ShapeInfo::Spatial { .. } = state else {
                        return Err(fail("attention requires a spatial input".into()));
                    };
                    if kernel == 0 || kernel % 2 == 0 {
                        return Err(fail(format!("attention kernel must be odd and positive, got {kernel}")));
                    }
                    state
                }
            };
            chain.push(LayerShape { input, output: state });
        }
        Ok(chain)
    }

    /// Indices (into `layers`) of spiking stages, in order.
    pub fn spiking_stage_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_spiking())
            .map(|(i, _)| i)
            .collect()
    }
}

/// New spec with an attention unit appended after the spiking activation of
/// each named stage. `placement` holds spiking-stage ordinals (0 = first
/// spiking layer). The original spec is untouched.
pub fn insert_fsta(
    spec: &NetworkSpec,
    placement: &[usize],
    kernel: usize,
    mode: FusionMode,
) -> Result<NetworkSpec, ModelError> {
    let stages = spec.spiking_stage_indices();
    let mut chosen: Vec<usize> = Vec::new();
    for &p in placement {
        if p >= stages.len() {
            return Err(ModelError::PlacementOutOfRange { index: p, stages: stages.len() });
        }
        chosen.push(stages[p]);
    }
    chosen.sort_unstable();
    chosen.dedup();

    let mut out = spec.clone();
    // Insert from the back so earlier indices stay valid.
    for &layer_index in chosen.iter().rev() {
        out.layers.insert(layer_index + 1, LayerSpec::Fsta { kernel, mode });
    }
    let mut placement = placement.to_vec();
    placement.sort_unstable();
    placement.dedup();
    out.fsta_placement = placement;
    out.validate()?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

/// Per-channel affine normalization state. Training normalizes by batch
/// statistics over `(N, H, W)` and updates the running estimates; inference
/// uses the running estimates. Running statistics use the biased variance,
/// matching the normalization itself.
#[derive(Debug, Clone)]
pub struct BatchNormState<S: Scalar> {
    /// Trainable per-channel scale, `[C]`.
    pub scale: Tensor<S>,
    /// Trainable per-channel shift, `[C]`.
    pub shift: Tensor<S>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl<S: Scalar> BatchNormState<S> {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            scale: Tensor::ones(vec![channels]).with_grad(),
            shift: Tensor::zeros(vec![channels]).with_grad(),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.numel()
    }
}

struct BatchNormRule<S: Scalar> {
    xhat: Vec<S>,
    inv_std: Vec<S>,
    channels: usize,
    per_channel: usize,
}

impl<S: Scalar> BackwardRule<S> for BatchNormRule<S> {
    fn name(&self) -> &'static str {
        "batch_norm"
    }

    fn backward(&self, grad: &Tensor<S>, inputs: &[Tensor<S>], _output: &Tensor<S>) -> Vec<Option<Tensor<S>>> {
        let x = &inputs[0];
        let scale = &inputs[1];
        let (b, c) = (x.shape()[0], self.channels);
        let (h, w) = (x.shape()[2], x.shape()[3]);
        let g = grad.data();
        let m = cast::<S>(self.per_channel as f64);

        // Per-channel sums of g and g·x̂.
        let mut sum_g = vec![S::zero(); c];
        let mut sum_gx = vec![S::zero(); c];
        let mut idx = 0usize;
        for _n in 0..b {
            for ci in 0..c {
                for _ in 0..h * w {
                    sum_g[ci] += g[idx];
                    sum_gx[ci] += g[idx] * self.xhat[idx];
                    idx += 1;
                }
            }
        }

        let dx = inputs[0].requires_grad().then(|| {
            let mut d = vec![S::zero(); x.numel()];
            let mut idx = 0usize;
            for _n in 0..b {
                for ci in 0..c {
                    let k = scale.data()[ci] * self.inv_std[ci];
                    let mg = sum_g[ci] / m;
                    let mgx = sum_gx[ci] / m;
                    for _ in 0..h * w {
                        d[idx] = k * (g[idx] - mg - self.xhat[idx] * mgx);
                        idx += 1;
                    }
                }
            }
            Tensor::leaf(x.shape().to_vec(), d, false)
        });
        let dscale = inputs[1]
            .requires_grad()
            .then(|| Tensor::leaf(vec![c], sum_gx.clone(), false));
        let dshift = inputs[2]
            .requires_grad()
            .then(|| Tensor::leaf(vec![c], sum_g.clone(), false));
        vec![dx, dscale, dshift]
    }
}

/// Batch normalization over `[B, C, H, W]`. In training mode the batch
/// statistics are used and the running estimates updated in place;
/// differentiable with respect to the input, scale, and shift. In inference
/// mode the running estimates are used.
pub fn batch_norm<S: Scalar>(
    x: &Tensor<S>,
    state: &mut BatchNormState<S>,
    training: bool,
) -> Result<Tensor<S>, ModelError> {
    if x.rank() != 4 {
        return Err(ModelError::Tensor(TensorError::RankMismatch {
            context: "batch_norm input",
            expected: 4,
            got: x.rank(),
        }));
    }
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    if c != state.channels() {
        return Err(ModelError::ChannelMismatch { expected: state.channels(), got: c });
    }
    let per_channel = b * h * w;

    if training {
        // Batch statistics in f64 for stability.
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        let xs = x.data();
        let mut idx = 0usize;
        for _n in 0..b {
            for ci in 0..c {
                for _ in 0..h * w {
                    mean[ci] += xs[idx].to_f64().unwrap();
                    idx += 1;
                }
            }
        }
        for mc in &mut mean {
            *mc /= per_channel as f64;
        }
        let mut idx = 0usize;
        for _n in 0..b {
            for ci in 0..c {
                for _ in 0..h * w {
                    let d = xs[idx].to_f64().unwrap() - mean[ci];
                    var[ci] += d * d;
                    idx += 1;
                }
            }
        }
        for vc in &mut var {
            *vc /= per_channel as f64;
        }

        let inv_std: Vec<S> = var.iter().map(|&v| cast::<S>(1.0 / (v + state.epsilon).sqrt())).collect();
        let mean_s: Vec<S> = mean.iter().map(|&v| cast::<S>(v)).collect();

        let mut xhat = vec![S::zero(); x.numel()];
        let mut out = vec![S::zero(); x.numel()];
        let scale = state.scale.data();
        let shift = state.shift.data();
        let mut idx = 0usize;
        for _n in 0..b {
            for ci in 0..c {
                for _ in 0..h * w {
                    let xh = (xs[idx] - mean_s[ci]) * inv_std[ci];
                    xhat[idx] = xh;
                    out[idx] = scale[ci] * xh + shift[ci];
                    idx += 1;
                }
            }
        }

        for ci in 0..c {
            state.running_mean[ci] = (1.0 - state.momentum) * state.running_mean[ci] + state.momentum * mean[ci];
            state.running_var[ci] = (1.0 - state.momentum) * state.running_var[ci] + state.momentum * var[ci];
        }

        let rule = BatchNormRule { xhat, inv_std, channels: c, per_channel };
        Ok(Tensor::from_op(
            x.shape().to_vec(),
            out,
            Box::new(rule),
            vec![x.clone(), state.scale.clone(), state.shift.clone()],
        ))
    } else {
        // Normalize by the running estimates through ordinary tensor ops.
        let inv: Vec<S> = state
            .running_var
            .iter()
            .map(|&v| cast::<S>(1.0 / (v + state.epsilon).sqrt()))
            .collect();
        let mean: Vec<S> = state.running_mean.iter().map(|&v| cast::<S>(v)).collect();
        let mean_t = Tensor::from_vec(vec![c, 1, 1], mean)?;
        let inv_t = Tensor::from_vec(vec![c, 1, 1], inv)?;
        let scale_t = state.scale.reshape(vec![c, 1, 1])?;
        let shift_t = state.shift.reshape(vec![c, 1, 1])?;
        Ok(x.sub(&mean_t)?.mul(&inv_t)?.mul(&scale_t)?.add(&shift_t)?)
    }
}

// ---------------------------------------------------------------------------
// Built network
// ---------------------------------------------------------------------------

/// Executable layer with its parameters.
#[derive(Debug, Clone)]
pub enum Layer<S: Scalar> {
    ConvBnLif {
        name: String,
        weight: Tensor<S>,
        bn: BatchNormState<S>,
        stride: usize,
        padding: usize,
    },
    Residual {
        name: String,
        conv1: Tensor<S>,
        bn1: BatchNormState<S>,
        conv2: Tensor<S>,
        bn2: BatchNormState<S>,
        /// 1×1 conv + BN on the shortcut when shape changes.
        projection: Option<(Tensor<S>, BatchNormState<S>)>,
        stride: usize,
        shortcut: ShortcutKind,
    },
    AvgPool { name: String },
    Flatten { name: String },
    Classifier { name: String, weight: Tensor<S>, bias: Tensor<S> },
    Fsta { name: String, module: FstaModule<S> },
}

impl<S: Scalar> Layer<S> {
    pub fn name(&self) -> &str {
        match self {
            Layer::ConvBnLif { name, .. }
            | Layer::Residual { name, .. }
            | Layer::AvgPool { name }
            | Layer::Flatten { name }
            | Layer::Classifier { name, .. }
            | Layer::Fsta { name, .. } => name,
        }
    }

    pub fn is_spiking(&self) -> bool {
        matches!(self, Layer::ConvBnLif { .. } | Layer::Residual { .. })
    }
}

/// Spike outputs of one spiking stage, `[T, N, C, H, W]`, detached from the
/// autodiff graph.
#[derive(Debug, Clone)]
pub struct LayerTrace<S: Scalar> {
    pub name: String,
    pub spikes: Tensor<S>,
}

/// Everything recorded during a traced forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<S: Scalar> {
    pub layers: Vec<LayerTrace<S>>,
    /// Per-timestep logits `[T, N, classes]`, detached.
    pub logits: Tensor<S>,
}

/// An executable spiking network.
#[derive(Debug, Clone)]
pub struct Network<S: Scalar> {
    spec: NetworkSpec,
    pub layers: Vec<Layer<S>>,
}

/// He-style fan-in normal initialization for convolution kernels.
fn conv_init<S: Scalar, R: Rng>(cout: usize, cin: usize, k: usize, rng: &mut R) -> Tensor<S> {
    let fan_in = (cin * k * k) as f64;
    let std = (2.0 / fan_in).sqrt();
    Tensor::rand_normal(vec![cout, cin, k, k], 0.0, std, rng).with_grad()
}

/// Build an executable network from a validated spec, deterministically for
/// a given seed.
pub fn build_network<S: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<Network<S>, ModelError> {
    let chain = spec.shape_chain()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(spec.layers.len());

    for (i, layer) in spec.layers.iter().enumerate() {
        let name = format!("layer{i}_{}", layer.kind_name());
        match (*layer).clone() {
            LayerSpec::ConvBnLif { channels, kernel, stride, padding } => {
                let ShapeInfo::Spatial { channels: c, .. } = chain[i].input else {
                    unreachable!("validated")
                };
                layers.push(Layer::ConvBnLif {
                    name,
                    weight: conv_init(channels, c, kernel, &mut rng),
                    bn: BatchNormState::new(channels),
                    stride,
                    padding: padding.unwrap_or(kernel / 2),
                });
            }
            LayerSpec::ResidualBlock { channels, stride, shortcut } => {
                let ShapeInfo::Spatial { channels: c, .. } = chain[i].input else {
                    unreachable!("validated")
                };
                let projection = if c != channels || stride != 1 {
                    Some((conv_init(channels, c, 1, &mut rng), BatchNormState::new(channels)))
                } else {
                    None
                };
                layers.push(Layer::Residual {
                    name,
                    conv1: conv_init(channels, c, 3, &mut rng),
                    bn1: BatchNormState::new(channels),
                    conv2: conv_init(channels, channels, 3, &mut rng),
                    bn2: BatchNormState::new(channels),
                    projection,
                    stride,
                    shortcut,
                });
            }
            LayerSpec::AvgPool => layers.push(Layer::AvgPool { name }),
            LayerSpec::Flatten => layers.push(Layer::Flatten { name }),
            LayerSpec::Classifier { classes } => {
                let ShapeInfo::Flat { features: d } = chain[i].input else {
                    unreachable!("validated")
                };
                let bound = 1.0 / (d as f64).sqrt();
                layers.push(Layer::Classifier {
                    name,
                    weight: Tensor::rand_uniform(vec![classes, d], -bound, bound, &mut rng).with_grad(),
                    bias: Tensor::zeros(vec![classes]).with_grad(),
                });
            }
            LayerSpec::Fsta { kernel, mode } => {
                layers.push(Layer::Fsta {
                    name,
                    module: FstaModule::new(kernel, spec.timesteps, mode, &mut rng)?,
                });
            }
        }
    }

    Ok(Network { spec: spec.clone(), layers })
}

/// Fold the time axis into the batch axis: `[T, N, ...] → [T·N, ...]`.
fn fold_time<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
    let mut shape = x.shape().to_vec();
    let t = shape.remove(0);
    shape[0] *= t;
    x.reshape(shape)
}

/// Undo [`fold_time`].
fn unfold_time<S: Scalar>(x: &Tensor<S>, t: usize) -> Result<Tensor<S>, TensorError> {
    let mut shape = x.shape().to_vec();
    shape[0] /= t;
    let mut out = vec![t];
    out.extend(shape);
    x.reshape(out)
}

/// Pull one sample out of a `[T, N, ...]` carrier as `[T, ...]`.
fn split_sample<S: Scalar>(x: &Tensor<S>, n: usize) -> Result<Tensor<S>, TensorError> {
    let t = x.shape()[0];
    let mut steps = Vec::with_capacity(t);
    for ti in 0..t {
        steps.push(x.select(ti)?.select(n)?);
    }
    stack(&steps)
}

impl<S: Scalar> Network<S> {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn timesteps(&self) -> usize {
        self.spec.timesteps
    }

    /// Trainable tensors in a stable order.
    pub fn parameters(&self) -> Vec<Tensor<S>> {
        let mut params = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::ConvBnLif { weight, bn, .. } => {
                    params.push(weight.clone());
                    params.push(bn.scale.clone());
                    params.push(bn.shift.clone());
                }
                Layer::Residual { conv1, bn1, conv2, bn2, projection, .. } => {
                    params.push(conv1.clone());
                    params.push(bn1.scale.clone());
                    params.push(bn1.shift.clone());
                    params.push(conv2.clone());
                    params.push(bn2.scale.clone());
                    params.push(bn2.shift.clone());
                    if let Some((w, bn)) = projection {
                        params.push(w.clone());
                        params.push(bn.scale.clone());
                        params.push(bn.shift.clone());
                    }
                }
                Layer::Classifier { weight, bias, .. } => {
                    params.push(weight.clone());
                    params.push(bias.clone());
                }
                Layer::Fsta { module, .. } => params.extend(module.parameters()),
                Layer::AvgPool { .. } | Layer::Flatten { .. } => {}
            }
        }
        params
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut params: Vec<&mut Tensor<S>> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::ConvBnLif { weight, bn, .. } => {
                    params.push(weight);
                    params.push(&mut bn.scale);
                    params.push(&mut bn.shift);
                }
                Layer::Residual { conv1, bn1, conv2, bn2, projection, .. } => {
                    params.push(conv1);
                    params.push(&mut bn1.scale);
                    params.push(&mut bn1.shift);
                    params.push(conv2);
                    params.push(&mut bn2.scale);
                    params.push(&mut bn2.shift);
                    if let Some((w, bn)) = projection {
                        params.push(w);
                        params.push(&mut bn.scale);
                        params.push(&mut bn.shift);
                    }
                }
                Layer::Classifier { weight, bias, .. } => {
                    params.push(weight);
                    params.push(bias);
                }
                Layer::Fsta { module, .. } => params.extend(module.parameters_mut()),
                Layer::AvgPool { .. } | Layer::Flatten { .. } => {}
            }
        }
        params
    }

    /// Total trainable scalar parameter count.
    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(Tensor::numel).sum()
    }

    /// Scalar count of frozen constants (the DCT filter banks).
    pub fn frozen_parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Fsta { module, .. } => module.sa.dct().weights().numel(),
                _ => 0,
            })
            .sum()
    }

    /// Inference forward pass (running-statistics BN, no parameter updates).
    pub fn forward(&self, input: &Tensor<S>, trace: bool) -> Result<(Tensor<S>, Option<ForwardTrace<S>>), ModelError> {
        // Inference never updates BN state; the clone is cheap relative to
        // the forward pass itself at desk scale and keeps `self` immutable.
        // Detaching the clone's parameters keeps the pass off the autodiff
        // tape entirely: nobody can backpropagate through the returned
        // logits, and inference skips the graph bookkeeping.
        let mut scratch = self.clone();
        for p in scratch.parameters_mut() {
            *p = p.detach();
        }
        scratch.run(input, false, trace)
    }

    /// Training forward pass: batch-statistics BN with running updates.
    pub fn forward_train(
        &mut self,
        input: &Tensor<S>,
        trace: bool,
    ) -> Result<(Tensor<S>, Option<ForwardTrace<S>>), ModelError> {
        self.run(input, true, trace)
    }

    fn run(
        &mut self,
        input: &Tensor<S>,
        training: bool,
        trace: bool,
    ) -> Result<(Tensor<S>, Option<ForwardTrace<S>>), ModelError> {
        let expected = [self.spec.input.channels, self.spec.input.height, self.spec.input.width];
        if input.rank() != 4 || input.shape()[1..] != expected {
            return Err(ModelError::InputShapeMismatch {
                expected: expected.to_vec(),
                got: input.shape().to_vec(),
            });
        }
        let t = self.spec.timesteps;
        let lif = self.spec.lif;

        // Direct analog encoding: the same frame at every timestep.
        let frames: Vec<Tensor<S>> = (0..t).map(|_| input.clone()).collect();
        let mut x = stack(&frames)?;

        let mut traces: Vec<LayerTrace<S>> = Vec::new();
        for layer in &mut self.layers {
            // Residual blocks contain an internal spiking stage whose events
            // also feed a convolution; it gets its own trace entry.
            let mut inner_spikes: Option<Tensor<S>> = None;
            x = match layer {
                Layer::ConvBnLif { weight, bn, stride, padding, .. } => {
                    let folded = fold_time(&x)?;
                    let z = conv2d(&folded, weight, *stride, *padding)?;
                    let z = batch_norm(&z, bn, training)?;
                    let drive = unfold_time(&z, t)?;
                    lif_sequence_from_rest(&lif, &drive)?
                }
                Layer::Residual { conv1, bn1, conv2, bn2, projection, stride, shortcut, .. } => {
                    let folded = fold_time(&x)?;
                    let z1 = batch_norm(&conv2d(&folded, conv1, *stride, 1)?, bn1, training)?;
                    let s1 = lif_sequence_from_rest(&lif, &unfold_time(&z1, t)?)?;
                    if trace {
                        inner_spikes = Some(s1.detach());
                    }
                    let z2 = batch_norm(&conv2d(&fold_time(&s1)?, conv2, 1, 1)?, bn2, training)?;
                    let short = match projection {
                        Some((w, bn)) => batch_norm(&conv2d(&folded, w, *stride, 0)?, bn, training)?,
                        None => folded,
                    };
                    match shortcut {
                        ShortcutKind::Membrane => {
                            // Shortcut joins the membrane drive of the final LIF.
                            let drive = unfold_time(&z2.add(&short)?, t)?;
                            lif_sequence_from_rest(&lif, &drive)?
                        }
                        ShortcutKind::SpikeAdd => {
                            let s2 = lif_sequence_from_rest(&lif, &unfold_time(&z2, t)?)?;
                            s2.add(&unfold_time(&short, t)?)?
                        }
                    }
                }
                Layer::AvgPool { .. } => x.mean_axes(&[3, 4], true)?,
                Layer::Flatten { .. } => {
                    let (t0, n) = (x.shape()[0], x.shape()[1]);
                    let d: usize = x.shape()[2..].iter().product();
                    x.reshape(vec![t0, n, d])?
                }
                Layer::Classifier { weight, bias, .. } => linear(&x, weight, bias)?,
                Layer::Fsta { module, .. } => {
                    let n = x.shape()[1];
                    let mut outs = Vec::with_capacity(n);
                    for ni in 0..n {
                        outs.push(module.forward(&split_sample(&x, ni)?)?);
                    }
                    // Reassemble time-major: [T, N, C, H, W].
                    let mut steps = Vec::with_capacity(t);
                    for ti in 0..t {
                        let per_sample: Result<Vec<Tensor<S>>, TensorError> =
                            outs.iter().map(|o| o.select(ti)).collect();
                        steps.push(stack(&per_sample?)?);
                    }
                    stack(&steps)?
                }
            };
            if trace && layer.is_spiking() {
                if let Some(inner) = inner_spikes {
                    traces.push(LayerTrace { name: format!("{}.inner", layer.name()), spikes: inner });
                }
                traces.push(LayerTrace { name: layer.name().to_string(), spikes: x.detach() });
            }
        }

        let trace = trace.then(|| ForwardTrace { layers: traces, logits: x.detach() });
        Ok((x, trace))
    }
}

/// Catalog: a desk-scale spiking CNN for toy experiments.
/// conv(16) → conv(32, /2) → two residual 32 blocks → pool → classifier.
pub fn snn_tiny(input: InputShape, classes: usize, timesteps: usize) -> NetworkSpec {
    NetworkSpec {
        name: "snn-tiny".into(),
        input,
        timesteps,
        lif: LifParams::default(),
        layers: vec![
            LayerSpec::ConvBnLif { channels: 16, kernel: 3, stride: 1, padding: None },
            LayerSpec::ConvBnLif { channels: 32, kernel: 3, stride: 2, padding: None },
            LayerSpec::ResidualBlock { channels: 32, stride: 1, shortcut: ShortcutKind::Membrane },
            LayerSpec::ResidualBlock { channels: 32, stride: 1, shortcut: ShortcutKind::Membrane },
            LayerSpec::AvgPool,
            LayerSpec::Flatten,
            LayerSpec::Classifier { classes },
        ],
        fsta_placement: Vec::new(),
    }
}

/// Catalog: a ResNet-20-shaped spiking descriptor (3 stages × 3 blocks,
/// widths 64/128/256). The reference architecture's exact widths are not
/// published; this entry documents its assumption and remains fully
/// overridable through explicit specs.
pub fn resnet20_snn(input: InputShape, classes: usize, timesteps: usize) -> NetworkSpec {
    let mut layers = vec![LayerSpec::ConvBnLif { channels: 64, kernel: 3, stride: 1, padding: None }];
    for (width, blocks, first_stride) in [(64usize, 3usize, 1usize), (128, 3, 2), (256, 3, 2)] {
        for b in 0..blocks {
            layers.push(LayerSpec::ResidualBlock {
                channels: width,
                stride: if b == 0 { first_stride } else { 1 },
                shortcut: ShortcutKind::Membrane,
            });
        }
    }
    layers.push(LayerSpec::AvgPool);
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Classifier { classes });
    NetworkSpec {
        name: "resnet20-snn".into(),
        input,
        timesteps,
        lif: LifParams::default(),
        layers,
        fsta_placement: Vec::new(),
    }
}
