//! Frequency-based spatial-temporal attention.
//!
//! Both submodules are gated residual enhancements of the form
//! `X + X·w` with `w = sigmoid(...) ∈ (0,1)`, so zeros in the input stay
//! exactly zero and active elements are scaled into (1, 2):
//!
//! - **Spatial attention** projects the time-averaged activation onto a
//!   fixed DCT-II filter bank (depthwise over channels, then averaged), and
//!   compresses the k² frequency channels to a single per-pixel weight map
//!   with a trainable 1×1 map.
//! - **Temporal attention** mixes global max pooling and local average
//!   pooling over space with learnable scalars α and β, averages over
//!   channels, and maps the resulting length-T vector through a trainable
//!   T → T layer to one weight per timestep.
//!
//! The two branches combine with learnable scalars:
//! `X_o = scale_t·X_t + scale_s·X_s`, where serial mode feeds the temporal
//! output into the spatial branch and parallel mode runs both from the
//! input.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::frequency::{dct_basis, DctBasis, FrequencyError};
use crate::scalar::{cast, Scalar};
use crate::tensor::{conv2d, linear, Tensor, TensorError};

/// Errors from attention construction and forward passes.
#[derive(Debug, Clone, PartialEq)]
pub enum FstaError {
    /// Attention inputs are time-major activations `[T, C, H, W]`.
    RankMismatch { context: &'static str, expected: usize, got: usize },
    /// Shape preservation requires an odd DCT kernel (padding (k−1)/2).
    EvenKernel { k: usize },
    /// The DCT kernel size must be at least 1.
    InvalidKernelSize { k: usize },
    /// The temporal extent must be at least 1.
    InvalidTimeSteps { t: usize },
    /// The input's time axis does not match the module's temporal map.
    TimeAxisMismatch { expected: usize, got: usize },
    Frequency(FrequencyError),
    Tensor(TensorError),
}

impl fmt::Display for FstaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FstaError::RankMismatch { context, expected, got } => {
                write!(f, "{context}: expected rank {expected}, got {got}")
            }
            FstaError::EvenKernel { k } => {
                write!(f, "spatial attention kernel must be odd to preserve shape, got {k}")
            }
            FstaError::InvalidKernelSize { k } => {
                write!(f, "spatial attention kernel size must be >= 1, got {k}")
            }
            FstaError::InvalidTimeSteps { t } => {
                write!(f, "temporal attention needs at least 1 timestep, got {t}")
            }
            FstaError::TimeAxisMismatch { expected, got } => {
                write!(f, "input has {got} timesteps but the temporal map expects {expected}")
            }
            FstaError::Frequency(e) => write!(f, "{e}"),
            FstaError::Tensor(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for FstaError {}

impl From<FrequencyError> for FstaError {
    fn from(e: FrequencyError) -> Self {
        FstaError::Frequency(e)
    }
}

impl From<TensorError> for FstaError {
    fn from(e: TensorError) -> Self {
        FstaError::Tensor(e)
    }
}

/// How the temporal and spatial branches combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Spatial attention consumes the temporal branch's output.
    Serial,
    /// Both branches consume the module input.
    Parallel,
}

/// Attention weights captured from one forward pass, for reporting.
#[derive(Debug, Clone)]
pub struct AttentionTrace<S: Scalar> {
    /// Per-pixel spatial weights `[H, W]`, each strictly in (0, 1).
    pub freq_w: Tensor<S>,
    /// Per-timestep weights `[T]`, each strictly in (0, 1).
    pub t_w: Tensor<S>,
}

/// DCT-based spatial attention: fixed frequency analysis, trainable
/// compression to a per-pixel gate.
#[derive(Debug, Clone)]
pub struct SpatialAttention<S: Scalar> {
    dct: DctBasis<S>,
    /// 1×1 compression from k² frequency channels to one, `[1, k², 1, 1]`.
    pub compress_weight: Tensor<S>,
    /// Scalar bias of the compression map.
    pub compress_bias: Tensor<S>,
}

impl<S: Scalar> SpatialAttention<S> {
    /// Build with kernel size `k` (odd). The compression weights start
    /// uniform in ±1/√(k²); the bias starts at zero.
    pub fn new<R: Rng>(k: usize, rng: &mut R) -> Result<Self, FstaError> {
        if k == 0 {
            return Err(FstaError::InvalidKernelSize { k });
        }
        if k % 2 == 0 {
            return Err(FstaError::EvenKernel { k });
        }
        let dct = dct_basis::<S>(k)?;
        let bound = 1.0 / (k as f64);
        let compress_weight = Tensor::rand_uniform(vec![1, k * k, 1, 1], -bound, bound, rng).with_grad();
        let compress_bias = Tensor::scalar(S::zero()).with_grad();
        Ok(SpatialAttention { dct, compress_weight, compress_bias })
    }

    pub fn kernel_size(&self) -> usize {
        self.dct.kernel_size()
    }

    /// Zero padding that keeps H and W unchanged: `(k − 1) / 2`.
    pub fn padding(&self) -> usize {
        (self.dct.kernel_size() - 1) / 2
    }

    /// The fixed filter bank. There is no mutable access: the basis never
    /// receives gradient updates.
    pub fn dct(&self) -> &DctBasis<S> {
        &self.dct
    }

    /// Enhanced activation and the spatial weight map it used.
    pub fn forward_with_map(&self, x: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>), FstaError> {
        if x.rank() != 4 {
            return Err(FstaError::RankMismatch { context: "spatial attention input", expected: 4, got: x.rank() });
        }
        let (c, h, w) = (x.shape()[1], x.shape()[2], x.shape()[3]);
        let k2 = self.dct.channels();

        // Mean over time, then per-channel frequency maps via the fixed bank.
        let x_mean = x.mean_axes(&[0], false)?;
        let per_channel = x_mean.reshape(vec![c, 1, h, w])?;
        let freq = conv2d(&per_channel, self.dct.weights(), 1, self.padding())?;
        // Average the k² coefficient maps over channels: [C,k²,H,W] → [k²,H,W].
        let freq = freq.mean_axes(&[0], false)?;

        // 1×1 compression across the frequency channels, then the gate.
        let z = conv2d(&freq.reshape(vec![1, k2, h, w])?, &self.compress_weight, 1, 0)?;
        let freq_w = z.add(&self.compress_bias)?.sigmoid().reshape(vec![h, w])?;

        let out = x.add(&x.mul(&freq_w)?)?;
        Ok((out, freq_w))
    }

    /// Enhanced activation `X + X·freq_w`.
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>, FstaError> {
        Ok(self.forward_with_map(x)?.0)
    }

    /// Trainable tensors in a stable order.
    pub fn parameters(&self) -> Vec<Tensor<S>> {
        vec![self.compress_weight.clone(), self.compress_bias.clone()]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![&mut self.compress_weight, &mut self.compress_bias]
    }
}

/// Temporal attention: pooled spatial statistics gated through a T → T map.
#[derive(Debug, Clone)]
pub struct TemporalAttention<S: Scalar> {
    t: usize,
    /// Weight on the average-pooled path.
    pub alpha: Tensor<S>,
    /// Weight on the max-pooled path.
    pub beta: Tensor<S>,
    /// Map over the time axis, `[T, T]`.
    pub map_weight: Tensor<S>,
    /// Bias of the temporal map, `[T]`.
    pub map_bias: Tensor<S>,
}

impl<S: Scalar> TemporalAttention<S> {
    /// Build for `t` timesteps. α and β start at 0.5; the temporal map
    /// starts uniform in ±1/√T with zero bias.
    pub fn new<R: Rng>(t: usize, rng: &mut R) -> Result<Self, FstaError> {
        if t == 0 {
            return Err(FstaError::InvalidTimeSteps { t });
        }
        let bound = 1.0 / (t as f64).sqrt();
        Ok(TemporalAttention {
            t,
            alpha: Tensor::scalar(cast::<S>(0.5)).with_grad(),
            beta: Tensor::scalar(cast::<S>(0.5)).with_grad(),
            map_weight: Tensor::rand_uniform(vec![t, t], -bound, bound, rng).with_grad(),
            map_bias: Tensor::zeros(vec![t]).with_grad(),
        })
    }

    pub fn timesteps(&self) -> usize {
        self.t
    }

    /// Enhanced activation and the per-timestep weights it used.
    pub fn forward_with_weights(&self, x: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>), FstaError> {
        if x.rank() != 4 {
            return Err(FstaError::RankMismatch { context: "temporal attention input", expected: 4, got: x.rank() });
        }
        let t = x.shape()[0];
        if t != self.t {
            return Err(FstaError::TimeAxisMismatch { expected: self.t, got: t });
        }

        // Pool over space, mix the two pooling paths, average over channels.
        let f_avg = x.mean_axes(&[2, 3], false)?;
        let f_max = x.max_axes(&[2, 3], false)?;
        let m = f_avg.mul(&self.alpha)?.add(&f_max.mul(&self.beta)?)?;
        let m_mean = m.mean_axes(&[1], false)?;

        let t_w = linear(&m_mean, &self.map_weight, &self.map_bias)?.sigmoid();

        // [T] gates every (C, H, W) slice of its own timestep.
        let out = x.add(&x.mul(&t_w.reshape(vec![t, 1, 1, 1])?)?)?;
        Ok((out, t_w))
    }

    /// Enhanced activation `X + X·T_w`.
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>, FstaError> {
        Ok(self.forward_with_weights(x)?.0)
    }

    pub fn parameters(&self) -> Vec<Tensor<S>> {
        vec![self.alpha.clone(), self.beta.clone(), self.map_weight.clone(), self.map_bias.clone()]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![&mut self.alpha, &mut self.beta, &mut self.map_weight, &mut self.map_bias]
    }
}

/// The full attention unit: temporal and spatial branches fused with
/// learnable scales.
#[derive(Debug, Clone)]
pub struct FstaModule<S: Scalar> {
    pub ta: TemporalAttention<S>,
    pub sa: SpatialAttention<S>,
    /// Weight on the temporal branch.
    pub scale_t: Tensor<S>,
    /// Weight on the spatial branch.
    pub scale_s: Tensor<S>,
    pub mode: FusionMode,
    frozen_scales: bool,
}

impl<S: Scalar> FstaModule<S> {
    /// Build with DCT kernel size `k` (odd) and `t` timesteps. Both scales
    /// start at 0.5.
    pub fn new<R: Rng>(k: usize, t: usize, mode: FusionMode, rng: &mut R) -> Result<Self, FstaError> {
        Ok(FstaModule {
            ta: TemporalAttention::new(t, rng)?,
            sa: SpatialAttention::new(k, rng)?,
            scale_t: Tensor::scalar(cast::<S>(0.5)).with_grad(),
            scale_s: Tensor::scalar(cast::<S>(0.5)).with_grad(),
            mode,
            frozen_scales: false,
        })
    }

    /// Stop training the fusion scales; they keep their current values.
    pub fn freeze_scales(&mut self) {
        self.scale_t = self.scale_t.detach();
        self.scale_s = self.scale_s.detach();
        self.frozen_scales = true;
    }

    pub fn scales_frozen(&self) -> bool {
        self.frozen_scales
    }

    /// Enhanced activation plus the attention weights both branches used.
    pub fn forward_traced(&self, x: &Tensor<S>) -> Result<(Tensor<S>, AttentionTrace<S>), FstaError> {
        let (x_t, t_w) = self.ta.forward_with_weights(x)?;
        let spatial_input = match self.mode {
            FusionMode::Serial => &x_t,
            FusionMode::Parallel => x,
        };
        let (x_s, freq_w) = self.sa.forward_with_map(spatial_input)?;
        let out = x_t.mul(&self.scale_t)?.add(&x_s.mul(&self.scale_s)?)?;
        Ok((out, AttentionTrace { freq_w, t_w }))
    }

    /// Enhanced activation `scale_t·X_t + scale_s·X_s`.
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>, FstaError> {
        Ok(self.forward_traced(x)?.0)
    }

    pub fn kernel_size(&self) -> usize {
        self.sa.kernel_size()
    }

    pub fn timesteps(&self) -> usize {
        self.ta.timesteps()
    }

    /// Trainable tensors in a stable order (scales omitted when frozen).
    pub fn parameters(&self) -> Vec<Tensor<S>> {
        let mut params = self.ta.parameters();
        params.extend(self.sa.parameters());
        if !self.frozen_scales {
            params.push(self.scale_t.clone());
            params.push(self.scale_s.clone());
        }
        params
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut params = self.ta.parameters_mut();
        params.extend(self.sa.parameters_mut());
        if !self.frozen_scales {
            params.push(&mut self.scale_t);
            params.push(&mut self.scale_s);
        }
        params
    }

    /// Total scalar parameter count of the unit, including frozen scales.
    pub fn parameter_count(&self) -> usize {
        fsta_parameter_count(self.kernel_size(), self.timesteps())
    }
}

/// Scalar parameters added by one attention unit:
/// `k² + 1` (compression) + `2` (α, β) + `T² + T` (temporal map) + `2`
/// (fusion scales). Independent of C, H, W.
pub fn fsta_parameter_count(k: usize, t: usize) -> usize {
    (k * k + 1) + 2 + (t * t + t) + 2
}
