//! Forward operations and their reverse rules.
//!
//! Elementwise arithmetic broadcasts by the right-aligned rule; reductions
//! accept explicit axes; `conv2d` and `linear` are the two parameterized
//! layers. Every operation allocates a fresh output and, when gradients are
//! required, records the rule that maps output gradients to input gradients.

use crate::scalar::{cast, Scalar};

use super::broadcast::{aligned_strides, broadcast_shapes, expand, increment_index, reduce_to};
use super::{check_shape, BackwardRule, Result, Tensor, TensorError};

/// Reduction kinds supported by [`Tensor::reduce`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    Max,
}

// ---------------------------------------------------------------------------
// Elementwise binary operations
// ---------------------------------------------------------------------------

fn binary_elemwise<S: Scalar>(
    a: &Tensor<S>,
    b: &Tensor<S>,
    f: impl Fn(S, S) -> S,
) -> Result<(Vec<usize>, Vec<S>)> {
    let out_shape = broadcast_shapes(a.shape(), b.shape())?;
    let data = if a.shape() == out_shape && b.shape() == out_shape {
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
    } else if a.shape() == out_shape {
        let be = expand(b.data(), b.shape(), &out_shape);
        a.data().iter().zip(&be).map(|(&x, &y)| f(x, y)).collect()
    } else {
        let ae = expand(a.data(), a.shape(), &out_shape);
        ae.iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
    };
    Ok((out_shape, data))
}

/// Sum an output-shaped gradient back down to an operand's shape.
fn grad_to_operand<S: Scalar>(grad: &[S], out_shape: &[usize], operand: &Tensor<S>) -> Tensor<S> {
    let data = reduce_to(grad, out_shape, operand.shape());
    Tensor::leaf(operand.shape().to_vec(), data, false)
}

struct AddRule;

impl<S: Scalar> BackwardRule<S> for AddRule {
    fn name(&self) -> &'static str {
        "add"
    }

    fn backward(&self, grad: &Tensor<S>, inputs: &[Tensor<S>], output: &Tensor<S>) -> Vec<Option<Tensor<S>>> {
        let out_shape = output.shape();
        vec![
            Some(grad_to_operand(grad.data(), out_shape, &inputs[0])),
            Some(grad_to_operand(grad.data(), out_shape, &inputs[1])),
        ]
    }
}

struct SubRule;

impl<S: Scalar> BackwardRule<S> for SubRule {
    fn name(&self) -> &'static str {
        "sub"
    }

    fn backward(&self, grad: &Tensor<S>, inputs: &[Tensor<S>], output: &Tensor<S>) -> Vec<Option<Tensor<S>>> {
        let out_shape = output.shape();
        let neg: Vec<S> = grad.data().iter().map(|&g| -g).collect();
        vec![
            Some(grad_to_operand(grad.data(), out_shape, &inputs[0])),
            Some(grad_to_operand(&neg, out_shape, &inputs[1])),
        ]
    }
}

struct MulRule;

impl<S: Scalar> BackwardRule<S> for MulRule {
    fn name(&self) -> &'static str {
        "mul"
    }

    fn backward(&self, grad: &Tensor<S>, inputs: &[Tensor<S>], output: &Tensor<S>) -> Vec<Option<Tensor<S>>> {
        let out_shape = output.shape();
        let a = expand(inputs[0].data(), inputs[0].shape(), out_shape);
        let b = expand(inputs[1].data(), inputs[1].shape(), out_shape);
        let da: Vec<S> = grad.data().iter().zip(&b).map(|(&g, &y)| g * y).collect();
        let db: Vec<S> = grad.data().iter().zip(&a).map(|(&g, &x)| g * x).collect();
        vec![
            Some(grad_to_operand(&da, out_shape, &inputs[0])),
            Some(grad_to_operand(&db, out_shape, &inputs[1])),
        ]
    }
}

struct ScaleRule<S: Scalar> {
    factor: S,
}

impl<S: Scalar> BackwardRule<S> for ScaleRule<S> {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn backward(&self, grad: &Tensor<S>, inputs: &[Tensor<S>], _output: &Tensor<S>) -> Vec<Option<Tensor<S>>> {
        let data: Vec<S> = grad.data().iter().map(|&g| g * self.factor).collect();
        vec![Some(Tensor::leaf(inputs[0].shape().to_vec(), data, false))]
    }
}

struct SigmoidRule;

impl<S: Scalar> BackwardRule<S> for SigmoidRule {
    fn name(&self) -> &'static str {
        "sigmoid"
    }

    fn backward(&self, grad: &Tensor<S>, inputs: &[Tensor<S>], output: &Tensor<S>) -> Vec<Option<Tensor<S>>> {
        let data: Vec<S> = grad
            .data()
            .iter()
            .zip(output.data())
            .map(|(&g, &y)| g * y * (S::one() - y))
            .collect();
        vec![Some(Tensor::leaf(inputs[0].shape().to_vec(), data, false))]
    }
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid_scalar<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

impl<S: Scalar> Tensor<S> {
    /// Elementwise sum with right-aligned broadcasting.
    pub fn add(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        let (shape, data) = binary_elemwise(self, other, |a, b| a + b)?;
        Ok(Tensor::from_op(shape, data, Box::new(AddRule), vec![self.clone(), other.clone()]))
    }

    /// Elementwise difference with right-aligned broadcasting.
    pub fn sub(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        let (shape, data) = binary_elemwise(self, other, |a, b| a - b)?;
        Ok(Tensor::from_op(shape, data, Box::new(SubRule), vec![self.clone(), other.clone()]))
    }

    /// Elementwise (Hadamard) product with right-aligned broadcasting.
    pub fn mul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        let (shape, data) = binary_elemwise(self, other, |a, b| a * b)?;
        Ok(Tensor::from_op(shape, data, Box::new(MulRule), vec![self.clone(), other.clone()]))
    }

    /// Multiply every element by a constant.
    pub fn scale(&self, factor: S) -> Tensor<S> {
        let data: Vec<S> = self.data().iter().map(|&v| v * factor).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            Box::new(ScaleRule { factor }),
            vec![self.clone()],
        )
    }

    /// Elementwise logistic function.
    pub fn sigmoid(&self) -> Tensor<S> {
        let data: Vec<S> = self.data().iter().map(|&v| sigmoid_scalar(v)).collect();
        Tensor::from_op(self.shape().to_vec(), data, Box::new(SigmoidRule), vec![self.clone()])
    }

    /// Reduce over `axes`. Empty `axes` is the identity. With
    /// `keepdims`, reduced axes stay with extent 1; otherwise they are
    /// removed. `Max` breaks ties toward the first index in row-major order.
    pub fn reduce(&self, kind: ReduceKind, axes: &[usize], keepdims: bool) -> Result<Tensor<S>> {
        if axes.is_empty() {
            return Ok(self.clone());
        }
        let rank = self.rank();
        let mut axes = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if let Some(&bad) = axes.iter().find(|&&a| a >= rank) {
            return Err(TensorError::InvalidAxis { axis: bad, rank });
        }

        // Shape with reduced extents set to 1; the output either keeps it or
        // drops those axes entirely.
        let mut kept_shape = self.shape().to_vec();
        for &a in &axes {
            kept_shape[a] = 1;
        }
        let out_shape: Vec<usize> = if keepdims {
            kept_shape.clone()
        } else {
            self.shape()
                .iter()
                .enumerate()
                .filter(|(i, _)| !axes.contains(i))
                .map(|(_, &e)| e)
                .collect()
        };
        let count: usize = axes.iter().map(|&a| self.shape()[a]).product();

        let (data, argmax) = match kind {
            ReduceKind::Sum => (reduce_to(self.data(), self.shape(), &kept_shape), Vec::new()),
            ReduceKind::Mean => {
                let inv = cast::<S>(1.0 / count as f64);
                let mut d = reduce_to(self.data(), self.shape(), &kept_shape);
                for v in &mut d {
                    *v *= inv;
                }
                (d, Vec::new())
            }
            ReduceKind::Max => {
                let out_numel: usize = kept_shape.iter().product();
                let strides = aligned_strides(&kept_shape, self.shape());
                let mut best = vec![S::neg_infinity(); out_numel];
                let mut arg = vec![0usize; out_numel];
                let mut idx = vec![0usize; rank];
                for (in_flat, &v) in self.data().iter().enumerate() {
                    let o: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
                    if v > best[o] {
                        best[o] = v;
                        arg[o] = in_flat;
                    }
                    increment_index(&mut idx, self.shape());
                }
                (best, arg)
            }
        };

        let rule = ReduceRule { kind, kept_shape, input_shape: self.shape().to_vec(), count, argmax };
        Ok(Tensor::from_op(out_shape, data, Box::new(rule), vec![self.clone()]))
    }

    pub fn sum_axes(&self, axes: &[usize], keepdims: bool) -> Result<Tensor<S>> {
        self.reduce(ReduceKind::Sum, axes, keepdims)
    }

    pub fn mean_axes(&self, axes: &[usize], keepdims: bool) -> Result<Tensor<S>> {
        self.reduce(ReduceKind::Mean, axes, keepdims)
    }

    pub fn max_axes(&self, axes: &[usize], keepdims: bool) -> Result<Tensor<S>> {
        self.reduce(ReduceKind::Max, axes, keepdims)
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum_all(&self) -> Tensor<S> {
        let axes: Vec<usize> = (0..self.rank()).collect();
        self.reduce(ReduceKind::Sum, &axes, false).expect("axes in range")
    }

    /// Mean of all elements as a rank-0 tensor.
    pub fn mean_all(&self) -> Tensor<S> {
        let axes: Vec<usize> = (0..self.rank()).collect();
        self.reduce(ReduceKind::Mean, &axes, false).expect("axes in range")
    }

    /// View with a new shape; element count must be preserved. Shares storage.
    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Tensor<S>> {
        let shape = shape.into();
        let expected = check_shape(&shape)?;
        if expected != self.numel() {
            return Err(TensorError::ShapeMismatch {
                context: "reshape: element count must be preserved",
                expected: self.shape().to_vec(),
                got: shape,
            });
        }
        let node = if self.requires_grad() {
            Some(super::Node {
                op: Box::new(ReshapeRule { input_shape: self.shape().to_vec() }) as Box<dyn BackwardRule<S>>,
                inputs: vec![self.clone()],
            })
        } else {
            None
        };
        Ok(Tensor::from_shared(shape, self.shared_data(), self.requires_grad(), node))
    }

    /// Sub-tensor at `index` along axis 0.
    pub fn select(&self, index: usize) -> Result<Tensor<S>> {
        if self.rank() == 0 {
            return Err(TensorError::InvalidAxis { axis: 0, rank: 0 });
        }
        let extent = self.shape()[0];
        if index >= extent {
            return Err(TensorError::IndexOutOfRange { index, extent });
        }
        let slice = self.numel() / extent;
        let data = self.data()[index * slice..(index + 1) * slice].to_vec();
        let shape = self.shape()[1..].to_vec();
        Ok(Tensor::from_op(
            shape,
            data,
            Box::new(SelectRule { index, input_shape: self.shape().to_vec() }),
            vec![self.clone()],
        ))
    }
}

struct ReduceRule {
    kind: ReduceKind,
    kept_shape: Vec<usize>,
    input_shape: Vec<usize>,
    count: usize,
    argmax: Vec<usize>,
}

impl<S: Scalar> BackwardRule<S> for ReduceRule {
    fn name(&self) -> &'static str {
        match self.kind {
            ReduceKind::Sum => "reduce_sum",
            ReduceKind::Mean => "reduce_mean",
            ReduceKind::Max => "reduce_max",
        }
    }

    fn backward(&self, grad: &Tensor<S>, _inputs: &[Tensor<S>], _output: &Tensor<S>) -> Vec<Option<Tensor<S>>> {
        let data = match self.kind {
            ReduceKind::Sum => expand(grad.data(), &self.kept_shape, &self.input_shape),
            ReduceKind::Mean => {
                let inv = cast::<S>(1.0 / self.count as f64);
                expand(grad.data(), &self.kept_shape, &self.input_shape)
                    .into_iter()
                    .map(|g| g * inv)
                    .collect()
            }
            ReduceKind::Max => {
                let numel: usize = self.input_shape.iter().product();
                let mut d = vec![S::zero(); numel];
                for (o, &src) in self.argmax.iter().enumerate() {
                    d[src] += grad.data()[o];
                }
                d
            }
        };
        vec![Some(Tensor::leaf(self.input_shape.clone(), data, false))]
    }
}

struct ReshapeRule {
    input_shape: Vec<usize>,
}

impl<S: Scalar> BackwardRule<S> for ReshapeRule {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, grad: &Tensor<S>, _inputs: &[Tensor<S>], _output: &Tensor<S>) -> Vec<Option<Tensor<S>>> {
        vec![Some(Tensor::leaf(self.input_shape.clone(), grad.data().to_vec(), false))]
    }
}

struct SelectRule {
    index: usize,
    input_shape: Vec<usize>,
}

impl<S: Scalar> BackwardRule<S> for SelectRule {
    fn name(&self) -> &'static str {
        "select"
    }

    fn backward(&self, grad: &Tensor<S>, _inputs: &[Tensor<S>], _output: &Tensor<S>) -> Vec<Option<Tensor<S>>> {
        let numel: usize = self.input_shape.iter().product();
        let slice = numel / self.input_shape[0];
        let mut data = vec![S::zero(); numel];
        data[self.index * slice..(self.index + 1) * slice].copy_from_slice(grad.data());
        vec![Some(Tensor::leaf(self.input_shape.clone(), data, false))]
    }
}

struct StackRule;

impl<S: Scalar> BackwardRule<S> for StackRule {
    fn name(&self) -> &'static str {
        "stack"
    }

    fn backward(&self, grad: &Tensor<S>, inputs: &[Tensor<S>], _output: &Tensor<S>) -> Vec<Option<Tensor<S>>> {
        let slice = inputs[0].numel();
        inputs
            .iter()
            .enumerate()
            .map(|(i, input)| {
                let data = grad.data()[i * slice..(i + 1) * slice].to_vec();
                Some(Tensor::leaf(input.shape().to_vec(), data, false))
            })
            .collect()
    }
}

/// Stack equally shaped tensors along a new leading axis.
pub fn stack<S: Scalar>(parts: &[Tensor<S>]) -> Result<Tensor<S>> {
    let Some(first) = parts.first() else {
        return Err(TensorError::EmptyInput("stack"));
    };
    for p in parts {
        if p.shape() != first.shape() {
            return Err(TensorError::ShapeMismatch {
                context: "stack: operands must share a shape",
                expected: first.shape().to_vec(),
                got: p.shape().to_vec(),
            });
        }
    }
    let mut shape = Vec::with_capacity(first.rank() + 1);
    shape.push(parts.len());
    shape.extend_from_slice(first.shape());
    let mut data = Vec::with_capacity(parts.len() * first.numel());
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Ok(Tensor::from_op(shape, data, Box::new(StackRule), parts.to_vec()))
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

struct Conv2dRule {
    stride: usize,
    padding: usize,
}

/// Half-open range of output columns whose window column `kx` stays inside
/// the unpadded input: `0 ≤ out_x·stride + kx − padding < w`.
fn conv_out_range(stride: usize, padding: usize, w: usize, ow: usize, kx: usize) -> (usize, usize) {
    let lo = if kx >= padding { 0 } else { (padding - kx + stride - 1) / stride };
    let hi = if w + padding <= kx { 0 } else { ((w - 1 + padding - kx) / stride + 1).min(ow) };
    (lo.min(hi), hi)
}

impl<S: Scalar> BackwardRule<S> for Conv2dRule {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, grad: &Tensor<S>, inputs: &[Tensor<S>], output: &Tensor<S>) -> Vec<Option<Tensor<S>>> {
        let input = &inputs[0];
        let kernel = &inputs[1];
        let (n, cin, h, w) = dims4(input.shape());
        let (cout, _, k, _) = dims4(kernel.shape());
        let (_, _, oh, ow) = dims4(output.shape());
        let (s, p) = (self.stride, self.padding);

        let want_dinput = input.requires_grad();
        let want_dkernel = kernel.requires_grad();
        let mut dinput = vec![S::zero(); input.numel()];
        let mut dkernel = vec![S::zero(); kernel.numel()];
        let x = input.data();
        let kd = kernel.data();
        let g = grad.data();

        // Row-sliced accumulation: for a fixed (ky, kx) the gradient row
        // pairs with a shifted input row, so both passes reduce to strided
        // row operations instead of per-element index arithmetic.
        for b in 0..n {
            for co in 0..cout {
                let g_base = ((b * cout + co) * oh) * ow;
                for ci in 0..cin {
                    let x_base = ((b * cin + ci) * h) * w;
                    let k_base = ((co * cin + ci) * k) * k;
                    for ky in 0..k {
                        for out_y in 0..oh {
                            let shifted_y = out_y * s + ky;
                            if shifted_y < p {
                                continue;
                            }
                            let in_y = shifted_y - p;
                            if in_y >= h {
                                break;
                            }
                            let grow = &g[g_base + out_y * ow..g_base + out_y * ow + ow];
                            let xrow = &x[x_base + in_y * w..x_base + in_y * w + w];
                            for kx in 0..k {
                                let (lo, hi) = conv_out_range(s, p, w, ow, kx);
                                if lo >= hi {
                                    continue;
                                }
                                let ki = k_base + ky * k + kx;
                                if want_dinput {
                                    let wv = kd[ki];
                                    let drow =
                                        &mut dinput[x_base + in_y * w..x_base + in_y * w + w];
                                    if s == 1 {
                                        let off = lo + kx - p;
                                        for (d, &gv) in
                                            drow[off..off + hi - lo].iter_mut().zip(&grow[lo..hi])
                                        {
                                            *d += gv * wv;
                                        }
                                    } else {
                                        for out_x in lo..hi {
                                            drow[out_x * s + kx - p] += grow[out_x] * wv;
                                        }
                                    }
                                }
                                if want_dkernel {
                                    let mut acc = S::zero();
                                    if s == 1 {
                                        let off = lo + kx - p;
                                        for (&gv, &xv) in
                                            grow[lo..hi].iter().zip(&xrow[off..off + hi - lo])
                                        {
                                            acc += gv * xv;
                                        }
                                    } else {
                                        for out_x in lo..hi {
                                            acc += grow[out_x] * xrow[out_x * s + kx - p];
                                        }
                                    }
                                    dkernel[ki] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }

        vec![
            want_dinput.then(|| Tensor::leaf(input.shape().to_vec(), dinput, false)),
            want_dkernel.then(|| Tensor::leaf(kernel.shape().to_vec(), dkernel, false)),
        ]
    }
}

fn dims4(shape: &[usize]) -> (usize, usize, usize, usize) {
    (shape[0], shape[1], shape[2], shape[3])
}

/// 2D cross-correlation with zero padding.
///
/// `input` is `[N, C_in, H, W]`, `kernel` is `[C_out, C_in, k, k]` with a
/// square window; the output is `[N, C_out, H', W']` with
/// `H' = (H + 2·padding − k) / stride + 1` (floor division).
pub fn conv2d<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<S>> {
    if input.rank() != 4 {
        return Err(TensorError::RankMismatch { context: "conv2d input", expected: 4, got: input.rank() });
    }
    if kernel.rank() != 4 {
        return Err(TensorError::RankMismatch { context: "conv2d kernel", expected: 4, got: kernel.rank() });
    }
    if stride == 0 {
        return Err(TensorError::InvalidStride { stride });
    }
    let (n, cin, h, w) = dims4(input.shape());
    let (cout, kcin, k, kw) = dims4(kernel.shape());
    if k != kw {
        return Err(TensorError::ShapeMismatch {
            context: "conv2d: kernel window must be square",
            expected: vec![cout, kcin, k, k],
            got: kernel.shape().to_vec(),
        });
    }
    if kcin != cin {
        return Err(TensorError::ShapeMismatch {
            context: "conv2d: kernel input channels must match input",
            expected: vec![cout, cin, k, k],
            got: kernel.shape().to_vec(),
        });
    }
    if k > h + 2 * padding {
        return Err(TensorError::KernelTooLarge { kernel: k, padded: h + 2 * padding });
    }
    if k > w + 2 * padding {
        return Err(TensorError::KernelTooLarge { kernel: k, padded: w + 2 * padding });
    }
    let oh = (h + 2 * padding - k) / stride + 1;
    let ow = (w + 2 * padding - k) / stride + 1;

    let x = input.data();
    let kd = kernel.data();
    let mut out = vec![S::zero(); n * cout * oh * ow];
    // Row-sliced accumulation: each (ky, kx) tap adds a shifted input row
    // into the output row, keeping the inner loop contiguous. Per output
    // element the taps still arrive in (ci, ky, kx) order, so the sums are
    // bit-identical to the naive nest.
    for b in 0..n {
        for co in 0..cout {
            let out_base = ((b * cout + co) * oh) * ow;
            for ci in 0..cin {
                let x_base = ((b * cin + ci) * h) * w;
                let k_base = ((co * cin + ci) * k) * k;
                for ky in 0..k {
                    let krow = &kd[k_base + ky * k..k_base + ky * k + k];
                    for out_y in 0..oh {
                        let shifted_y = out_y * stride + ky;
                        if shifted_y < padding {
                            continue;
                        }
                        let in_y = shifted_y - padding;
                        if in_y >= h {
                            break;
                        }
                        let xrow = &x[x_base + in_y * w..x_base + in_y * w + w];
                        let orow = &mut out[out_base + out_y * ow..out_base + out_y * ow + ow];
                        for (kx, &wv) in krow.iter().enumerate() {
                            let (lo, hi) = conv_out_range(stride, padding, w, ow, kx);
                            if lo >= hi {
                                continue;
                            }
                            if stride == 1 {
                                let off = lo + kx - padding;
                                for (o, &xv) in
                                    orow[lo..hi].iter_mut().zip(&xrow[off..off + hi - lo])
                                {
                                    *o += xv * wv;
                                }
                            } else {
                                for out_x in lo..hi {
                                    orow[out_x] += xrow[out_x * stride + kx - padding] * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(Tensor::from_op(
        vec![n, cout, oh, ow],
        out,
        Box::new(Conv2dRule { stride, padding }),
        vec![input.clone(), kernel.clone()],
    ))
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

struct LinearRule;

impl<S: Scalar> BackwardRule<S> for LinearRule {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn backward(&self, grad: &Tensor<S>, inputs: &[Tensor<S>], _output: &Tensor<S>) -> Vec<Option<Tensor<S>>> {
        let (input, weight, bias) = (&inputs[0], &inputs[1], &inputs[2]);
        let din = *input.shape().last().unwrap();
        let dout = weight.shape()[0];
        let batch = input.numel() / din;
        let x = input.data();
        let wd = weight.data();
        let g = grad.data();

        let dinput = input.requires_grad().then(|| {
            let mut d = vec![S::zero(); input.numel()];
            for b in 0..batch {
                for o in 0..dout {
                    let gv = g[b * dout + o];
                    for i in 0..din {
                        d[b * din + i] += gv * wd[o * din + i];
                    }
                }
            }
            Tensor::leaf(input.shape().to_vec(), d, false)
        });
        let dweight = weight.requires_grad().then(|| {
            let mut d = vec![S::zero(); weight.numel()];
            for b in 0..batch {
                for o in 0..dout {
                    let gv = g[b * dout + o];
                    for i in 0..din {
                        d[o * din + i] += gv * x[b * din + i];
                    }
                }
            }
            Tensor::leaf(weight.shape().to_vec(), d, false)
        });
        let dbias = bias.requires_grad().then(|| {
            let mut d = vec![S::zero(); dout];
            for b in 0..batch {
                for o in 0..dout {
                    d[o] += g[b * dout + o];
                }
            }
            Tensor::leaf(bias.shape().to_vec(), d, false)
        });

        vec![dinput, dweight, dbias]
    }
}

/// Affine map over the last axis: `[..., D_in] → [..., D_out]` with
/// `weight` `[D_out, D_in]` and `bias` `[D_out]`.
pub fn linear<S: Scalar>(input: &Tensor<S>, weight: &Tensor<S>, bias: &Tensor<S>) -> Result<Tensor<S>> {
    if input.rank() == 0 {
        return Err(TensorError::RankMismatch { context: "linear input", expected: 1, got: 0 });
    }
    if weight.rank() != 2 {
        return Err(TensorError::RankMismatch { context: "linear weight", expected: 2, got: weight.rank() });
    }
    if bias.rank() != 1 {
        return Err(TensorError::RankMismatch { context: "linear bias", expected: 1, got: bias.rank() });
    }
    let din = *input.shape().last().unwrap();
    let dout = weight.shape()[0];
    if weight.shape()[1] != din {
        return Err(TensorError::ShapeMismatch {
            context: "linear: weight columns must match input features",
            expected: vec![dout, din],
            got: weight.shape().to_vec(),
        });
    }
    if bias.shape()[0] != dout {
        return Err(TensorError::ShapeMismatch {
            context: "linear: bias length must match output features",
            expected: vec![dout],
            got: bias.shape().to_vec(),
        });
    }
    let batch = input.numel() / din;
    let x = input.data();
    let wd = weight.data();
    let bd = bias.data();
    let mut out = vec![S::zero(); batch * dout];
    for b in 0..batch {
        for o in 0..dout {
            let mut acc = bd[o];
            for i in 0..din {
                acc += x[b * din + i] * wd[o * din + i];
            }
            out[b * dout + o] = acc;
        }
    }
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = dout;
    Ok(Tensor::from_op(
        shape,
        out,
        Box::new(LinearRule),
        vec![input.clone(), weight.clone(), bias.clone()],
    ))
}

impl<S: Scalar> Tensor<S> {
    /// Method form of [`conv2d`].
    pub fn conv2d(&self, kernel: &Tensor<S>, stride: usize, padding: usize) -> Result<Tensor<S>> {
        conv2d(self, kernel, stride, padding)
    }

    /// Method form of [`linear`].
    pub fn linear(&self, weight: &Tensor<S>, bias: &Tensor<S>) -> Result<Tensor<S>> {
        linear(self, weight, bias)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn add_broadcasts_trailing_map() {
        let a = t(&[2, 2, 2], &[1., 2., 3., 4., 5., 6., 7., 8.]);
        let b = t(&[2], &[10., 20.]);
        let c = a.add(&b).unwrap();
        assert_eq!(c.data(), &[11., 22., 13., 24., 15., 26., 17., 28.]);
    }

    #[test]
    fn mul_matches_hand_product() {
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        let b = t(&[2, 2], &[5., 6., 7., 8.]);
        assert_eq!(a.mul(&b).unwrap().data(), &[5., 12., 21., 32.]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        let a = t(&[3], &[-800.0, 0.0, 800.0]);
        let y = a.sigmoid();
        assert!(y.all_finite());
        assert_eq!(y.data()[1], 0.5);
        assert!(y.data()[0] >= 0.0 && y.data()[2] <= 1.0);
    }

    #[test]
    fn reduce_sum_and_mean_over_axis() {
        let a = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let s = a.sum_axes(&[1], false).unwrap();
        assert_eq!(s.shape(), &[2]);
        assert_eq!(s.data(), &[6., 15.]);
        let m = a.mean_axes(&[0], true).unwrap();
        assert_eq!(m.shape(), &[1, 3]);
        assert_eq!(m.data(), &[2.5, 3.5, 4.5]);
    }

    #[test]
    fn reduce_max_breaks_ties_toward_first_index() {
        let a = t(&[4], &[1., 7., 7., 2.]).with_grad();
        let m = a.max_axes(&[0], false).unwrap();
        assert_eq!(m.item(), 7.0);
        // The gradient lands on the winning slot: the first tied index.
        let grads = m.backward().unwrap();
        assert_eq!(grads.get(&a).unwrap().data(), &[0., 1., 0., 0.]);
    }

    #[test]
    fn reduce_with_empty_axes_is_identity() {
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        let r = a.reduce(ReduceKind::Max, &[], false).unwrap();
        assert_eq!(r.data(), a.data());
    }

    #[test]
    fn reduce_invalid_axis_is_an_error() {
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        let err = a.sum_axes(&[2], false).unwrap_err();
        assert_eq!(err, TensorError::InvalidAxis { axis: 2, rank: 2 });
    }

    #[test]
    fn reshape_shares_storage_and_checks_count() {
        let a = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let b = a.reshape(vec![3, 2]).unwrap();
        assert_eq!(b.shape(), &[3, 2]);
        assert_eq!(b.data(), a.data());
        assert!(a.reshape(vec![4, 2]).is_err());
    }

    #[test]
    fn select_out_of_range_is_an_error() {
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        assert_eq!(a.select(1).unwrap().data(), &[3., 4.]);
        assert!(matches!(a.select(2).unwrap_err(), TensorError::IndexOutOfRange { .. }));
    }

    #[test]
    fn stack_then_select_roundtrips() {
        let a = t(&[2], &[1., 2.]);
        let b = t(&[2], &[3., 4.]);
        let s = stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.select(0).unwrap().data(), a.data());
        assert_eq!(s.select(1).unwrap().data(), b.data());
    }

    #[test]
    fn conv2d_identity_kernel_preserves_input() {
        // A 1x1 kernel of weight one is the identity map.
        let x = t(&[1, 1, 2, 2], &[1., 2., 3., 4.]);
        let k = t(&[1, 1, 1, 1], &[1.]);
        let y = conv2d(&x, &k, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv2d_shape_formula_holds() {
        let x = Tensor::<f64>::ones(vec![1, 1, 5, 5]);
        let k = Tensor::<f64>::ones(vec![2, 1, 3, 3]);
        let y = conv2d(&x, &k, 2, 1).unwrap();
        // (5 + 2 - 3) / 2 + 1 = 3
        assert_eq!(y.shape(), &[1, 2, 3, 3]);
    }

    #[test]
    fn conv2d_rejects_oversized_kernel() {
        let x = Tensor::<f64>::ones(vec![1, 1, 2, 2]);
        let k = Tensor::<f64>::ones(vec![1, 1, 3, 3]);
        assert!(matches!(conv2d(&x, &k, 1, 0).unwrap_err(), TensorError::KernelTooLarge { .. }));
        // One ring of padding makes it fit.
        assert!(conv2d(&x, &k, 1, 1).is_ok());
    }

    #[test]
    fn linear_matches_hand_computation() {
        let x = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let w = t(&[2, 3], &[1., 0., -1., 0.5, 0.5, 0.5]);
        let b = t(&[2], &[10., 20.]);
        let y = linear(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[2, 2]);
        assert_eq!(y.data(), &[8., 23., 8., 27.5]);
    }

    #[test]
    fn backward_through_composed_ops_matches_hand_gradient() {
        // f(a, b) = sum(a * b + a) => df/da = b + 1, df/db = a.
        let a = t(&[3], &[1., 2., 3.]).with_grad();
        let b = t(&[3], &[4., 5., 6.]).with_grad();
        let f = a.mul(&b).unwrap().add(&a).unwrap().sum_all();
        let grads = f.backward().unwrap();
        assert_eq!(grads.get(&a).unwrap().data(), &[5., 6., 7.]);
        assert_eq!(grads.get(&b).unwrap().data(), &[1., 2., 3.]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let a = t(&[2], &[1., 2.]).with_grad();
        let y = a.scale(2.0);
        assert!(matches!(y.backward().unwrap_err(), TensorError::NonScalarRoot { .. }));
    }

    #[test]
    fn grad_accumulates_across_shared_subgraphs() {
        // f = sum(a) + sum(a) => df/da = 2.
        let a = t(&[2], &[1., 2.]).with_grad();
        let s = a.sum_all();
        let f = s.add(&s).unwrap();
        let grads = f.backward().unwrap();
        assert_eq!(grads.get(&a).unwrap().data(), &[2., 2.]);
    }

    #[test]
    fn tape_orders_inputs_before_outputs() {
        let a = t(&[2], &[1., 2.]).with_grad();
        let b = a.scale(3.0);
        let c = b.sum_all();
        let tape = super::super::Tape::trace(&c);
        let records = tape.records();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].op, "scale");
        assert_eq!(records[1].op, "reduce_sum");
        assert_eq!(records[1].inputs[0], records[0].output);
    }

    #[test]
    fn no_graph_is_recorded_without_requires_grad() {
        let a = t(&[2], &[1., 2.]);
        let b = a.scale(3.0).sigmoid().sum_all();
        assert!(b.is_leaf());
        assert!(!b.requires_grad());
    }
}
