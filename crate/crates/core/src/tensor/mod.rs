//! Dense row-major tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable n-dimensional array. Operations never mutate
//! their operands; each produces a fresh tensor. When any operand requires
//! gradients the output carries a record of the operation (kind, saved input
//! tensors) so that [`backward`] can replay the chain rule from a scalar root.
//!
//! Broadcasting is right-aligned: two shapes are compatible when, axis by
//! axis from the trailing end, extents are equal or the expanding operand's
//! extent is 1 or absent. Exactly one operand may expand; the other must
//! already have the result shape.

mod autodiff;
mod broadcast;
mod ops;

pub use autodiff::{backward, BackwardRule, Gradients, Tape, TapeRecord};
pub use broadcast::broadcast_shapes;
pub use ops::{conv2d, linear, stack, ReduceKind};

pub(crate) use autodiff::Node;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use crate::scalar::Scalar;

/// Errors produced by tensor construction and arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Element count does not match the product of the shape extents.
    DataLength { expected: usize, got: usize },
    /// A shape extent of zero was supplied.
    ZeroExtent { shape: Vec<usize> },
    /// Two operands disagree on a shape the operation requires to match.
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    /// An operand has the wrong rank for the operation.
    RankMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// Neither operand can be expanded to the other's shape.
    NotBroadcastable { left: Vec<usize>, right: Vec<usize> },
    /// An axis index is out of range for the tensor's rank.
    InvalidAxis { axis: usize, rank: usize },
    /// `backward` was called on a tensor that is not a scalar.
    NonScalarRoot { shape: Vec<usize> },
    /// A convolution kernel exceeds the padded input extent.
    KernelTooLarge { kernel: usize, padded: usize },
    /// Convolution stride must be at least 1.
    InvalidStride { stride: usize },
    /// An index along axis 0 is out of range.
    IndexOutOfRange { index: usize, extent: usize },
    /// An operation that needs at least one operand received none.
    EmptyInput(&'static str),
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::DataLength { expected, got } => {
                write!(f, "data length {got} does not match shape product {expected}")
            }
            TensorError::ZeroExtent { shape } => {
                write!(f, "shape {shape:?} contains a zero extent")
            }
            TensorError::ShapeMismatch { context, expected, got } => {
                write!(f, "{context}: expected shape {expected:?}, got {got:?}")
            }
            TensorError::RankMismatch { context, expected, got } => {
                write!(f, "{context}: expected rank {expected}, got {got}")
            }
            TensorError::NotBroadcastable { left, right } => {
                write!(f, "shapes {left:?} and {right:?} are not broadcastable")
            }
            TensorError::InvalidAxis { axis, rank } => {
                write!(f, "axis {axis} is out of range for rank {rank}")
            }
            TensorError::NonScalarRoot { shape } => {
                write!(f, "backward root must be a scalar, got shape {shape:?}")
            }
            TensorError::KernelTooLarge { kernel, padded } => {
                write!(f, "kernel extent {kernel} exceeds padded input extent {padded}")
            }
            TensorError::InvalidStride { stride } => {
                write!(f, "stride must be positive, got {stride}")
            }
            TensorError::IndexOutOfRange { index, extent } => {
                write!(f, "index {index} out of range for axis extent {extent}")
            }
            TensorError::EmptyInput(what) => write!(f, "{what}: at least one operand required"),
        }
    }
}

impl std::error::Error for TensorError {}

pub type Result<T> = std::result::Result<T, TensorError>;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

struct Inner<S: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: Arc<Vec<S>>,
    requires_grad: bool,
    node: Option<Node<S>>,
}

/// Immutable dense tensor. Cloning is cheap (shared storage).
pub struct Tensor<S: Scalar> {
    inner: Arc<Inner<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor { inner: Arc::clone(&self.inner) }
    }
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.iter().any(|&e| e == 0) {
        return Err(TensorError::ZeroExtent { shape: shape.to_vec() });
    }
    Ok(shape.iter().product())
}

impl<S: Scalar> Tensor<S> {
    /// Build a tensor from row-major data.
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<S>) -> Result<Self> {
        let shape = shape.into();
        let expected = check_shape(&shape)?;
        if data.len() != expected {
            return Err(TensorError::DataLength { expected, got: data.len() });
        }
        Ok(Self::leaf(shape, data, false))
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = check_shape(&shape).expect("non-zero extents");
        Self::leaf(shape, vec![S::zero(); n], false)
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, S::one())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: S) -> Self {
        let shape = shape.into();
        let n = check_shape(&shape).expect("non-zero extents");
        Self::leaf(shape, vec![value; n], false)
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(value: S) -> Self {
        Self::leaf(Vec::new(), vec![value], false)
    }

    /// Uniform samples in `[lo, hi)`, drawn in f64 so the stream is identical
    /// across scalar types for a given generator state.
    pub fn rand_uniform<R: Rng>(shape: impl Into<Vec<usize>>, lo: f64, hi: f64, rng: &mut R) -> Self {
        let shape = shape.into();
        let n = check_shape(&shape).expect("non-zero extents");
        let data = (0..n)
            .map(|_| crate::scalar::cast::<S>(rng.random_range(lo..hi)))
            .collect();
        Self::leaf(shape, data, false)
    }

    /// Normal samples with the given mean and standard deviation.
    pub fn rand_normal<R: Rng>(shape: impl Into<Vec<usize>>, mean: f64, std: f64, rng: &mut R) -> Self {
        use rand_distr::Distribution;
        let shape = shape.into();
        let n = check_shape(&shape).expect("non-zero extents");
        let dist = rand_distr::Normal::new(mean, std).expect("valid normal parameters");
        let data = (0..n)
            .map(|_| crate::scalar::cast::<S>(dist.sample(rng)))
            .collect();
        Self::leaf(shape, data, false)
    }

    pub(crate) fn leaf(shape: Vec<usize>, data: Vec<S>, requires_grad: bool) -> Self {
        Tensor {
            inner: Arc::new(Inner {
                id: fresh_id(),
                shape,
                data: Arc::new(data),
                requires_grad,
                node: None,
            }),
        }
    }

    /// Output of a recorded operation. Gradient tracking is kept only when at
    /// least one input requires it.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<S>,
        op: Box<dyn BackwardRule<S>>,
        inputs: Vec<Tensor<S>>,
    ) -> Self {
        let requires_grad = inputs.iter().any(|t| t.requires_grad());
        let node = if requires_grad { Some(Node { op, inputs }) } else { None };
        Tensor {
            inner: Arc::new(Inner {
                id: fresh_id(),
                shape,
                data: Arc::new(data),
                requires_grad,
                node,
            }),
        }
    }

    /// Same storage, new leaf identity. Marks the tensor as a trainable leaf.
    pub fn with_grad(&self) -> Self {
        Tensor {
            inner: Arc::new(Inner {
                id: fresh_id(),
                shape: self.shape().to_vec(),
                data: Arc::clone(&self.inner.data),
                requires_grad: true,
                node: None,
            }),
        }
    }

    /// Same storage, detached from the recorded graph. Gradients do not flow
    /// through the result.
    pub fn detach(&self) -> Self {
        Tensor {
            inner: Arc::new(Inner {
                id: fresh_id(),
                shape: self.shape().to_vec(),
                data: Arc::clone(&self.inner.data),
                requires_grad: false,
                node: None,
            }),
        }
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.inner.data
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.node.is_none()
    }

    pub(crate) fn node(&self) -> Option<&Node<S>> {
        self.inner.node.as_ref()
    }

    pub(crate) fn shared_data(&self) -> Arc<Vec<S>> {
        Arc::clone(&self.inner.data)
    }

    pub(crate) fn from_shared(shape: Vec<usize>, data: Arc<Vec<S>>, requires_grad: bool, node: Option<Node<S>>) -> Self {
        Tensor {
            inner: Arc::new(Inner { id: fresh_id(), shape, data, requires_grad, node }),
        }
    }

    /// Single element of a scalar (or one-element) tensor.
    pub fn item(&self) -> S {
        assert_eq!(self.numel(), 1, "item() requires exactly one element");
        self.inner.data[0]
    }

    /// Row-major strides for this shape.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.inner.shape)
    }

    /// Element at a multi-index.
    pub fn at(&self, index: &[usize]) -> S {
        debug_assert_eq!(index.len(), self.rank());
        let strides = self.strides();
        let flat: usize = index.iter().zip(&strides).map(|(i, s)| i * s).sum();
        self.inner.data[flat]
    }

    pub fn all_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }

    /// Every element is exactly zero or one.
    pub fn is_binary(&self) -> bool {
        self.inner.data.iter().all(|&v| v == S::zero() || v == S::one())
    }

    /// Largest absolute element difference, in f64. Shapes must match.
    pub fn max_abs_diff(&self, other: &Tensor<S>) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| (a - b).abs().to_f64().unwrap())
            .fold(0.0, f64::max)
    }

    /// Sum of all elements as plain data (not recorded on the tape).
    pub fn sum_value(&self) -> S {
        self.data().iter().fold(S::zero(), |acc, &v| acc + v)
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

impl<S: Scalar> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = self.inner.node.as_ref().map(|n| n.op.name()).unwrap_or("leaf");
        write!(
            f,
            "Tensor {{ id: {}, shape: {:?}, op: {}, requires_grad: {} }}",
            self.inner.id, self.inner.shape, op, self.inner.requires_grad
        )
    }
}

impl<S: Scalar> PartialEq for Tensor<S> {
    fn eq(&self, other: &Self) -> bool {
        self.shape() == other.shape() && self.data() == other.data()
    }
}
