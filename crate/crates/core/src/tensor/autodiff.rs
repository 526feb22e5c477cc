//! Tape construction and reverse-mode gradient propagation.
//!
//! Every recorded operation knows how to map the gradient at its output to
//! gradients at its inputs. [`Tape::trace`] linearizes the graph reachable
//! from a root into topological order (inputs before outputs);
//! [`backward`] walks that order in reverse, accumulating gradients by
//! tensor identity. Gradients are themselves plain tensors, so the whole
//! pass stays first-order.

use std::collections::{HashMap, HashSet};

use crate::scalar::Scalar;

use super::{Result, Tensor, TensorError};

/// Reverse rule for one operation: given the gradient at the output, produce
/// the gradient contribution for each input (None when an input does not
/// take gradients, e.g. the threshold constant of a spike).
pub trait BackwardRule<S: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;
    fn backward(
        &self,
        grad: &Tensor<S>,
        inputs: &[Tensor<S>],
        output: &Tensor<S>,
    ) -> Vec<Option<Tensor<S>>>;
}

pub(crate) struct Node<S: Scalar> {
    pub(crate) op: Box<dyn BackwardRule<S>>,
    pub(crate) inputs: Vec<Tensor<S>>,
}

/// One entry of a linearized tape, for inspection and debugging.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TapeRecord {
    pub op: &'static str,
    pub inputs: Vec<u64>,
    pub output: u64,
}

/// Topologically ordered view of the graph reachable from a root tensor.
pub struct Tape<S: Scalar> {
    order: Vec<Tensor<S>>,
}

impl<S: Scalar> Tape<S> {
    /// Linearize the graph below `root`. Leaves come first and `root` last;
    /// every operation appears after all of its inputs. Shared subgraphs are
    /// visited once.
    pub fn trace(root: &Tensor<S>) -> Self {
        let mut order = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor<S>, usize)> = Vec::new();
        visited.insert(root.id());
        stack.push((root.clone(), 0));
        while let Some((tensor, child)) = stack.pop() {
            let inputs = tensor.node().map(|n| n.inputs.as_slice()).unwrap_or(&[]);
            if child < inputs.len() {
                let next = inputs[child].clone();
                stack.push((tensor, child + 1));
                if visited.insert(next.id()) {
                    stack.push((next, 0));
                }
            } else {
                order.push(tensor);
            }
        }
        Tape { order }
    }

    /// Recorded operations only (leaves carry no record), in forward order.
    pub fn records(&self) -> Vec<TapeRecord> {
        self.order
            .iter()
            .filter_map(|t| {
                t.node().map(|n| TapeRecord {
                    op: n.op.name(),
                    inputs: n.inputs.iter().map(Tensor::id).collect(),
                    output: t.id(),
                })
            })
            .collect()
    }

    /// Number of tensors on the tape, leaves included.
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Gradients keyed by tensor identity.
#[derive(Debug)]
pub struct Gradients<S: Scalar> {
    by_id: HashMap<u64, Tensor<S>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of the root with respect to `tensor`, if it was reached.
    pub fn get(&self, tensor: &Tensor<S>) -> Option<&Tensor<S>> {
        self.by_id.get(&tensor.id())
    }

    pub fn contains(&self, tensor: &Tensor<S>) -> bool {
        self.by_id.contains_key(&tensor.id())
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

/// Reverse-mode sweep from a scalar root. Returns the gradient of `root`
/// with respect to every tensor reachable from it that requires gradients.
pub fn backward<S: Scalar>(root: &Tensor<S>) -> Result<Gradients<S>> {
    if root.numel() != 1 {
        return Err(TensorError::NonScalarRoot { shape: root.shape().to_vec() });
    }
    let tape = Tape::trace(root);
    let mut grads: HashMap<u64, Tensor<S>> = HashMap::new();
    grads.insert(root.id(), Tensor::ones(root.shape().to_vec()));

    for tensor in tape.order.iter().rev() {
        let Some(node) = tensor.node() else { continue };
        let Some(grad) = grads.get(&tensor.id()).cloned() else { continue };
        let contributions = node.op.backward(&grad, &node.inputs, tensor);
        debug_assert_eq!(contributions.len(), node.inputs.len());
        for (input, contribution) in node.inputs.iter().zip(contributions) {
            let Some(contribution) = contribution else { continue };
            if !input.requires_grad() {
                continue;
            }
            debug_assert_eq!(
                contribution.shape(),
                input.shape(),
                "gradient shape must match input shape (op {})",
                node.op.name()
            );
            match grads.remove(&input.id()) {
                Some(existing) => {
                    let sum: Vec<S> = existing
                        .data()
                        .iter()
                        .zip(contribution.data())
                        .map(|(&a, &b)| a + b)
                        .collect();
                    grads.insert(input.id(), Tensor::leaf(input.shape().to_vec(), sum, false));
                }
                None => {
                    grads.insert(input.id(), contribution);
                }
            }
        }
    }
    Ok(Gradients { by_id: grads })
}

impl<S: Scalar> Tensor<S> {
    /// Convenience wrapper for [`backward`].
    pub fn backward(&self) -> Result<Gradients<S>> {
        backward(self)
    }
}
