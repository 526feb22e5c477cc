//! Leaky integrate-and-fire dynamics with surrogate gradients.
//!
//! The discrete update splits into charge, fire, and reset:
//!
//! ```text
//! V[t] = H[t-1] + (1/τ)·(I[t] − (H[t-1] − V_reset))     charge
//! S[t] = Θ(V[t] − v_th)                                  fire, Θ(0) = 1
//! H[t] = V_reset·S[t] + V[t]·(1 − S[t])                  hard reset
//! ```
//!
//! The Heaviside step has zero derivative almost everywhere, so the backward
//! pass substitutes a triangular window `max(0, 1 − |x|/γ)/γ` centered on the
//! threshold. In [`FiringMode::Smoothed`] the *forward* pass uses the exact
//! antiderivative of that window (a piecewise-quadratic ramp), which makes
//! the whole network differentiable and lets finite differences validate the
//! surrogate path end to end; [`FiringMode::Binary`] is the real spiking
//! behaviour used for training and inference.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scalar::{cast, Scalar};
use crate::tensor::{stack, BackwardRule, Tensor};

/// Errors from invalid neuron parameterization or state/input disagreement.
#[derive(Debug, Clone, PartialEq)]
pub enum NeuronError {
    /// Membrane time constant must satisfy τ > 1 so the leak factor
    /// 1/τ lies in (0, 1).
    InvalidTau { tau: f64 },
    /// Firing threshold must sit strictly above the reset potential.
    InvalidThreshold { v_th: f64, v_reset: f64 },
    /// Surrogate window width must be positive.
    InvalidGamma { gamma: f64 },
    /// The carried membrane state and the input disagree on shape.
    StateShapeMismatch { state: Vec<usize>, input: Vec<usize> },
    /// A sequence input needs a leading time axis.
    MissingTimeAxis,
    /// Elementwise arithmetic failed while stepping the dynamics.
    Tensor(crate::tensor::TensorError),
}

impl fmt::Display for NeuronError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NeuronError::InvalidTau { tau } => {
                write!(f, "membrane time constant must be > 1, got {tau}")
            }
            NeuronError::InvalidThreshold { v_th, v_reset } => {
                write!(f, "threshold {v_th} must be strictly above reset {v_reset}")
            }
            NeuronError::InvalidGamma { gamma } => {
                write!(f, "surrogate window width must be positive, got {gamma}")
            }
            NeuronError::StateShapeMismatch { state, input } => {
                write!(f, "membrane state shape {state:?} does not match input shape {input:?}")
            }
            NeuronError::MissingTimeAxis => {
                write!(f, "sequence input must have a leading time axis (rank >= 1)")
            }
            NeuronError::Tensor(e) => write!(f, "tensor operation failed: {e}"),
        }
    }
}

impl std::error::Error for NeuronError {}

impl From<crate::tensor::TensorError> for NeuronError {
    fn from(e: crate::tensor::TensorError) -> Self {
        NeuronError::Tensor(e)
    }
}

/// Shape of the backward-pass derivative substituted for the Heaviside
/// step. Only the triangular window is currently defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    #[default]
    Triangular,
}

/// Forward behaviour of the firing nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiringMode {
    /// Hard threshold: outputs are exactly 0 or 1.
    Binary,
    /// Piecewise-quadratic ramp whose derivative is the surrogate window.
    Smoothed,
}

/// Leaky integrate-and-fire parameters, shared by every neuron in a layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifParams {
    /// Membrane time constant τ (≥ 1); larger values leak more slowly.
    pub tau: f64,
    /// Firing threshold.
    pub v_th: f64,
    /// Reset potential, also the resting potential the membrane leaks toward.
    pub v_reset: f64,
    /// Half-width γ of the surrogate window.
    pub surrogate_width: f64,
    /// Shape of the surrogate derivative.
    pub surrogate: SurrogateKind,
    /// Exclude the reset term's spike factor from the backward pass, so
    /// gradients flow through the membrane only (on by default, for
    /// training stability).
    pub detach_reset: bool,
    /// Forward behaviour of the firing nonlinearity.
    pub mode: FiringMode,
}

impl Default for LifParams {
    fn default() -> Self {
        LifParams {
            tau: 2.0,
            v_th: 1.0,
            v_reset: 0.0,
            surrogate_width: 1.0,
            surrogate: SurrogateKind::Triangular,
            detach_reset: true,
            mode: FiringMode::Binary,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<(), NeuronError> {
        if !(self.tau > 1.0) || !self.tau.is_finite() {
            return Err(NeuronError::InvalidTau { tau: self.tau });
        }
        if !(self.v_th > self.v_reset) {
            return Err(NeuronError::InvalidThreshold { v_th: self.v_th, v_reset: self.v_reset });
        }
        if !(self.surrogate_width > 0.0) || !self.surrogate_width.is_finite() {
            return Err(NeuronError::InvalidGamma { gamma: self.surrogate_width });
        }
        Ok(())
    }
}

/// Unit step with Θ(0) = 1.
pub fn heaviside<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one()
    } else {
        S::zero()
    }
}

/// Triangular surrogate derivative `max(0, 1 − |x|/γ)/γ`, where `x` is the
/// distance from threshold. Integrates to 1 over its support `[−γ, γ]`.
pub fn surrogate_grad<S: Scalar>(x: S, gamma: S) -> S {
    let slope = S::one() - (x.abs() / gamma);
    if slope > S::zero() {
        slope / gamma
    } else {
        S::zero()
    }
}

/// Antiderivative of [`surrogate_grad`]: 0 below `−γ`, 1 above `γ`, and a
/// C¹ quadratic ramp through ½ at the threshold in between.
pub fn smoothed_fire<S: Scalar>(x: S, gamma: S) -> S {
    let half = cast::<S>(0.5);
    if x <= -gamma {
        S::zero()
    } else if x <= S::zero() {
        let t = x + gamma;
        half * t * t / (gamma * gamma)
    } else if x < gamma {
        let t = gamma - x;
        S::one() - half * t * t / (gamma * gamma)
    } else {
        S::one()
    }
}

struct SpikeRule<S: Scalar> {
    v_th: S,
    gamma: S,
}

impl<S: Scalar> BackwardRule<S> for SpikeRule<S> {
    fn name(&self) -> &'static str {
        "spike"
    }

    fn backward(&self, grad: &Tensor<S>, inputs: &[Tensor<S>], _output: &Tensor<S>) -> Vec<Option<Tensor<S>>> {
        let data: Vec<S> = grad
            .data()
            .iter()
            .zip(inputs[0].data())
            .map(|(&g, &v)| g * surrogate_grad(v - self.v_th, self.gamma))
            .collect();
        vec![Some(Tensor::leaf(inputs[0].shape().to_vec(), data, false))]
    }
}

/// Firing nonlinearity applied to a membrane potential. The backward pass
/// uses the triangular surrogate regardless of mode.
pub fn spike<S: Scalar>(v: &Tensor<S>, params: &LifParams) -> Tensor<S> {
    let v_th = cast::<S>(params.v_th);
    // Dispatch over the surrogate family; only the triangular window exists
    // today, and its width is the one tunable.
    let gamma = match params.surrogate {
        SurrogateKind::Triangular => cast::<S>(params.surrogate_width),
    };
    let data: Vec<S> = match params.mode {
        FiringMode::Binary => v.data().iter().map(|&x| heaviside(x - v_th)).collect(),
        FiringMode::Smoothed => v.data().iter().map(|&x| smoothed_fire(x - v_th, gamma)).collect(),
    };
    Tensor::from_op(
        v.shape().to_vec(),
        data,
        Box::new(SpikeRule { v_th, gamma }),
        vec![v.clone()],
    )
}

/// Membrane potential carried between timesteps (post-reset).
#[derive(Debug, Clone)]
pub struct LifState<S: Scalar> {
    pub h: Tensor<S>,
}

impl<S: Scalar> LifState<S> {
    /// Resting state: every membrane at the reset potential.
    pub fn init(shape: impl Into<Vec<usize>>, params: &LifParams) -> Self {
        LifState { h: Tensor::full(shape, cast::<S>(params.v_reset)) }
    }
}

/// One charge–fire–reset step. Returns the spike output and the post-reset
/// membrane state for the next step.
pub fn lif_step<S: Scalar>(
    params: &LifParams,
    state: &LifState<S>,
    input: &Tensor<S>,
) -> Result<(Tensor<S>, LifState<S>), NeuronError> {
    if state.h.shape() != input.shape() {
        return Err(NeuronError::StateShapeMismatch {
            state: state.h.shape().to_vec(),
            input: input.shape().to_vec(),
        });
    }
    let inv_tau = cast::<S>(1.0 / params.tau);
    let v_reset = cast::<S>(params.v_reset);

    // V = H + (1/τ)(I − (H − V_reset)) = (1 − 1/τ)·H + (1/τ)·I + V_reset/τ
    let v = state
        .h
        .scale(S::one() - inv_tau)
        .add(&input.scale(inv_tau))?
        .add(&Tensor::scalar(v_reset * inv_tau))?;

    let s = spike(&v, params);
    let s_reset = if params.detach_reset { s.detach() } else { s.clone() };

    // H' = V_reset·S + V·(1 − S), written as V − S·(V − V_reset).
    let h = v.sub(&s_reset.mul(&v.sub(&Tensor::scalar(v_reset))?)?)?;
    Ok((s, LifState { h }))
}

/// Run a layer of neurons over a time-major input `[T, ...]`, threading the
/// membrane state from `initial`. Returns the spike outputs stacked as
/// `[T, ...]`.
pub fn lif_sequence<S: Scalar>(
    params: &LifParams,
    input: &Tensor<S>,
    initial: &LifState<S>,
) -> Result<Tensor<S>, NeuronError> {
    if input.rank() == 0 {
        return Err(NeuronError::MissingTimeAxis);
    }
    let steps = input.shape()[0];
    let mut state = initial.clone();
    let mut spikes = Vec::with_capacity(steps);
    for t in 0..steps {
        let (s, next) = lif_step(params, &state, &input.select(t)?)?;
        spikes.push(s);
        state = next;
    }
    Ok(stack(&spikes)?)
}

/// [`lif_sequence`] starting from rest (every membrane at `v_reset`).
pub fn lif_sequence_from_rest<S: Scalar>(
    params: &LifParams,
    input: &Tensor<S>,
) -> Result<Tensor<S>, NeuronError> {
    if input.rank() == 0 {
        return Err(NeuronError::MissingTimeAxis);
    }
    let initial = LifState::init(input.shape()[1..].to_vec(), params);
    lif_sequence(params, input, &initial)
}
