//! Right-aligned, one-sided broadcasting.
//!
//! Shapes are aligned from the trailing axis. An operand may expand to the
//! result shape when each of its axes is either equal to the corresponding
//! result extent or 1, and missing leading axes are treated as 1. Exactly one
//! operand may expand; the other must already have the result shape. This
//! covers per-channel maps ([H, W] against [N, C, H, W]) and per-step weights
//! reshaped to [T, 1, 1, 1] against [T, N, C, H, W] without the ambiguity of
//! general two-sided broadcasting.

use crate::scalar::Scalar;

use super::{strides_of, Result, TensorError};

/// Whether `from` can be expanded to `to` by the right-aligned rule.
pub(crate) fn is_expandable(from: &[usize], to: &[usize]) -> bool {
    if from.len() > to.len() {
        return false;
    }
    from.iter()
        .rev()
        .zip(to.iter().rev())
        .all(|(&f, &t)| f == t || f == 1)
}

/// Result shape of a broadcast binary operation, or an error when neither
/// operand already has the joint shape.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a == b {
        Ok(a.to_vec())
    } else if is_expandable(b, a) {
        Ok(a.to_vec())
    } else if is_expandable(a, b) {
        Ok(b.to_vec())
    } else {
        Err(TensorError::NotBroadcastable { left: a.to_vec(), right: b.to_vec() })
    }
}

/// Strides into `from`'s data for each axis of `to`: zero where `from` is
/// broadcast (extent 1 or missing), the row-major stride otherwise.
pub(crate) fn aligned_strides(from: &[usize], to: &[usize]) -> Vec<usize> {
    let from_strides = strides_of(from);
    let offset = to.len() - from.len();
    let mut out = vec![0; to.len()];
    for i in 0..from.len() {
        if from[i] != 1 {
            out[offset + i] = from_strides[i];
        }
    }
    out
}

/// Materialize `data` (shape `from`) at shape `to`. `from` must be expandable.
pub(crate) fn expand<S: Scalar>(data: &[S], from: &[usize], to: &[usize]) -> Vec<S> {
    debug_assert!(is_expandable(from, to));
    if from == to {
        return data.to_vec();
    }
    let strides = aligned_strides(from, to);
    let numel: usize = to.iter().product();
    let mut idx = vec![0usize; to.len()];
    let mut out = Vec::with_capacity(numel);
    for _ in 0..numel {
        let flat: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out.push(data[flat]);
        increment_index(&mut idx, to);
    }
    out
}

/// Sum `data` (shape `from`) down to shape `to`, the adjoint of [`expand`].
pub(crate) fn reduce_to<S: Scalar>(data: &[S], from: &[usize], to: &[usize]) -> Vec<S> {
    debug_assert!(is_expandable(to, from));
    if from == to {
        return data.to_vec();
    }
    let strides = aligned_strides(to, from);
    let mut out = vec![S::zero(); to.iter().product()];
    let mut idx = vec![0usize; from.len()];
    for &v in data {
        let flat: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out[flat] += v;
        increment_index(&mut idx, from);
    }
    out
}

pub(crate) fn increment_index(idx: &mut [usize], shape: &[usize]) {
    for i in (0..shape.len()).rev() {
        idx[i] += 1;
        if idx[i] < shape[i] {
            return;
        }
        idx[i] = 0;
    }
}
