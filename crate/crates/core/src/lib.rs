//! Spiking neural network engine with frequency-based spatial-temporal
//! attention and spike/energy analysis.
//!
//! The crate is generic over the scalar type through [`scalar::Scalar`]
//! (implemented for `f32` and `f64`); the type aliases at the crate root pin
//! the common concrete choices. `f64` is the reference precision used by the
//! test oracles, `f32` is available for faster training runs.
//!
//! Module map:
//! - [`tensor`]: dense tensors, broadcasting, reverse-mode autodiff
//! - [`neuron`]: leaky integrate-and-fire dynamics and surrogate gradients
//! - [`frequency`]: DFT, DCT-II basis, spectra and band energies
//! - [`fsta`]: frequency-based spatial and temporal attention
//! - [`model`]: layer specs, network construction, forward pass
//! - [`train`]: losses, optimizers, the training loop
//! - [`analysis`]: firing statistics, operation counts, energy estimates

pub mod analysis;
pub mod frequency;
pub mod fsta;
pub mod model;
pub mod neuron;
pub mod scalar;
pub mod train;
pub mod tensor;

pub use fsta::{FstaModule, FusionMode};
pub use neuron::{FiringMode, LifParams};
pub use scalar::Scalar;
pub use tensor::{Tensor, TensorError};

/// Reference-precision tensor (the precision the oracles are written in).
pub type Tensor64 = Tensor<f64>;
/// Single-precision tensor for faster training runs.
pub type Tensor32 = Tensor<f32>;
