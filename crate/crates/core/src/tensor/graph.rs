use std::fmt;

use super::ops::{self, ConvGeometry};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kind of a recorded node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpTag {
    Leaf,
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
    Relu,
    Scale,
    Matmul,
    Linear,
    Concat,
    Slice,
    Select,
    Stack,
    Conv1d,
    Sum,
    Mean,
    SoftmaxCrossEntropy,
}

impl OpTag {
    pub const ALL: [OpTag; 18] = [
        OpTag::Leaf,
        OpTag::Add,
        OpTag::Sub,
        OpTag::Mul,
        OpTag::Sigmoid,
        OpTag::Tanh,
        OpTag::Relu,
        OpTag::Scale,
        OpTag::Matmul,
        OpTag::Linear,
        OpTag::Concat,
        OpTag::Slice,
        OpTag::Select,
        OpTag::Stack,
        OpTag::Conv1d,
        OpTag::Sum,
        OpTag::Mean,
        OpTag::SoftmaxCrossEntropy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpTag::Leaf => "leaf",
            OpTag::Add => "add",
            OpTag::Sub => "sub",
            OpTag::Mul => "mul",
            OpTag::Sigmoid => "sigmoid",
            OpTag::Tanh => "tanh",
            OpTag::Relu => "relu",
            OpTag::Scale => "scale",
            OpTag::Matmul => "matmul",
            OpTag::Linear => "linear",
            OpTag::Concat => "concat",
            OpTag::Slice => "slice",
            OpTag::Select => "select",
            OpTag::Stack => "stack",
            OpTag::Conv1d => "conv1d",
            OpTag::Sum => "sum",
            OpTag::Mean => "mean",
            OpTag::SoftmaxCrossEntropy => "softmax_cross_entropy",
        }
    }
}

impl fmt::Display for OpTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for OpTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        OpTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::contract(format!("unknown op `{s}`")))
    }
}

// Saved forward context needed by the backward rules.
#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
    Relu,
    Scale(f64),
    Matmul,
    Linear { bias: bool },
    Concat { axis: usize },
    Slice { axis: usize, start: usize },
    Select { axis: usize, index: usize },
    Stack { axis: usize },
    Conv1d(ConvGeometry),
    Sum,
    Mean,
    SoftmaxCrossEntropy { labels: Vec<usize> },
}

impl Op {
    fn tag(&self) -> OpTag {
        match self {
            Op::Leaf => OpTag::Leaf,
            Op::Add => OpTag::Add,
            Op::Sub => OpTag::Sub,
            Op::Mul => OpTag::Mul,
            Op::Sigmoid => OpTag::Sigmoid,
            Op::Tanh => OpTag::Tanh,
            Op::Relu => OpTag::Relu,
            Op::Scale(_) => OpTag::Scale,
            Op::Matmul => OpTag::Matmul,
            Op::Linear { .. } => OpTag::Linear,
            Op::Concat { .. } => OpTag::Concat,
            Op::Slice { .. } => OpTag::Slice,
            Op::Select { .. } => OpTag::Select,
            Op::Stack { .. } => OpTag::Stack,
            Op::Conv1d(_) => OpTag::Conv1d,
            Op::Sum => OpTag::Sum,
            Op::Mean => OpTag::Mean,
            Op::SoftmaxCrossEntropy { .. } => OpTag::SoftmaxCrossEntropy,
        }
    }
}

struct Node<T> {
    op: Op,
    inputs: Vec<Var>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Append-only tape of operations. Insertion order is a topological order,
/// so the reverse pass simply walks the node list backwards.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    check_finite: bool,
    fault: Option<OpTag>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            check_finite: false,
            fault: None,
        }
    }

    /// When enabled, every recorded value is checked and the first
    /// non-finite result is reported as an error naming the operation.
    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    /// Test hook: scales the backward contribution of every `tag` node so
    /// gradient checks can demonstrate they catch a broken rule.
    #[doc(hidden)]
    pub fn inject_backward_fault(&mut self, tag: OpTag) {
        self.fault = Some(tag);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn op_tag(&self, var: Var) -> OpTag {
        self.nodes[var.0].op.tag()
    }

    pub fn inputs(&self, var: Var) -> &[Var] {
        &self.nodes[var.0].inputs
    }

    /// First recorded node holding a NaN or infinity, if any.
    pub fn first_non_finite(&self) -> Option<(Var, OpTag)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.all_finite())
            .map(|(i, n)| (Var(i), n.op.tag()))
    }

    fn push(&mut self, op: Op, inputs: Vec<Var>, value: Tensor<T>) -> Result<Var> {
        if self.check_finite && !value.all_finite() {
            return Err(Error::NonFinite(format!(
                "{} node #{} produced a non-finite value",
                op.tag(),
                self.nodes.len()
            )));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that does not receive a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn binary(&mut self, op: Op, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let out_shape = ops::broadcast_shape(sa, sb)?;
        let mut out = vec![T::zero(); out_shape.iter().product()];
        {
            let (da, db) = (self.value(a).data(), self.value(b).data());
            let f: fn(T, T) -> T = match op {
                Op::Add => |x, y| x + y,
                Op::Sub => |x, y| x - y,
                Op::Mul => |x, y| x * y,
                _ => unreachable!(),
            };
            ops::for_each_broadcast(sa, sb, &out_shape, |o, ia, ib| out[o] = f(da[ia], db[ib]));
        }
        self.push(op, vec![a, b], Tensor::from_parts(out_shape, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Mul, a, b)
    }

    fn unary(&mut self, op: Op, a: Var, f: impl Fn(T) -> T) -> Result<Var> {
        let value = self.value(a).map(f);
        self.push(op, vec![a], value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Sigmoid, a, sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Tanh, a, T::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Relu, a, |x| if x > T::zero() { x } else { T::zero() })
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let c = T::cast(factor);
        self.unary(Op::Scale(factor), a, move |x| x * c)
    }

    /// `a[m×k] · b[k×n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape(format!("matmul of {sa:?} by {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        ops::gemm_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push(Op::Matmul, vec![a, b], Tensor::from_parts(vec![m, n], out))
    }

    /// Affine map `x[B×in] · w[out×in]ᵀ + bias[out]`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[1] {
            return Err(Error::shape(format!(
                "linear input {sx:?} against weight {sw:?}"
            )));
        }
        let (rows, inp, outp) = (sx[0], sx[1], sw[0]);
        let mut out = vec![T::zero(); rows * outp];
        if let Some(b) = bias {
            let sb = self.shape(b);
            if sb != [outp] {
                return Err(Error::shape(format!(
                    "linear bias {sb:?} for {outp} outputs"
                )));
            }
            let bd = self.value(b).data();
            for row in out.chunks_mut(outp) {
                row.copy_from_slice(bd);
            }
        }
        ops::gemm_nt(self.value(x).data(), self.value(w).data(), &mut out, rows, inp, outp);
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        self.push(
            Op::Linear {
                bias: bias.is_some(),
            },
            inputs,
            Tensor::from_parts(vec![rows, outp], out),
        )
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape(format!("concat axis {axis} on rank {}", base.len())));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape(format!(
                    "concat along axis {axis}: {s:?} does not match {base:?}"
                )));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let ext = self.shape(p)[axis];
                let d = self.value(p).data();
                out.extend_from_slice(&d[o * ext * inner..(o + 1) * ext * inner]);
            }
        }
        self.push(Op::Concat { axis }, parts.to_vec(), Tensor::from_parts(shape, out))
    }

    /// Contiguous range `[start, start+len)` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::shape(format!(
                "slice [{start}, {}) on axis {axis} of {s:?}",
                start + len
            )));
        }
        let (outer, ext, inner) = split_axis(&s, axis);
        let d = self.value(a).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * ext + start) * inner;
            out.extend_from_slice(&d[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        self.push(Op::Slice { axis, start }, vec![a], Tensor::from_parts(shape, out))
    }

    /// Splits along `axis` into pieces of the given extents.
    pub fn split(&mut self, a: Var, axis: usize, extents: &[usize]) -> Result<Vec<Var>> {
        let mut start = 0;
        let mut out = Vec::with_capacity(extents.len());
        for &e in extents {
            out.push(self.slice(a, axis, start, e)?);
            start += e;
        }
        if axis < self.shape(a).len() && start != self.shape(a)[axis] {
            return Err(Error::shape(format!(
                "split extents {extents:?} do not cover axis {axis} of {:?}",
                self.shape(a)
            )));
        }
        Ok(out)
    }

    /// Picks `index` along `axis`, dropping that axis.
    pub fn select(&mut self, a: Var, axis: usize, index: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || index >= s[axis] || s.len() < 2 {
            return Err(Error::shape(format!("select {index} on axis {axis} of {s:?}")));
        }
        let (outer, ext, inner) = split_axis(&s, axis);
        let d = self.value(a).data();
        let mut out = Vec::with_capacity(outer * inner);
        if inner == 1 {
            out.extend((0..outer).map(|o| d[o * ext + index]));
        } else {
            for o in 0..outer {
                let base = (o * ext + index) * inner;
                out.extend_from_slice(&d[base..base + inner]);
            }
        }
        let mut shape = s;
        shape.remove(axis);
        self.push(Op::Select { axis, index }, vec![a], Tensor::from_parts(shape, out))
    }

    /// Stacks equally shaped tensors along a new `axis`.
    pub fn stack(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("stack of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis > base.len() {
            return Err(Error::shape(format!("stack axis {axis} on rank {}", base.len())));
        }
        if let Some(p) = parts.iter().find(|&&p| self.shape(p) != base.as_slice()) {
            return Err(Error::shape(format!(
                "stack of {:?} with {base:?}",
                self.shape(*p)
            )));
        }
        let mut shape = base.clone();
        shape.insert(axis, parts.len());
        let (outer, n, inner) = split_axis(&shape, axis);
        let mut out = vec![T::zero(); outer * n * inner];
        for (j, &p) in parts.iter().enumerate() {
            let d = self.value(p).data();
            if inner == 1 {
                for o in 0..outer {
                    out[o * n + j] = d[o];
                }
            } else {
                for o in 0..outer {
                    out[(o * n + j) * inner..(o * n + j + 1) * inner]
                        .copy_from_slice(&d[o * inner..(o + 1) * inner]);
                }
            }
        }
        self.push(Op::Stack { axis }, parts.to_vec(), Tensor::from_parts(shape, out))
    }

    /// Strided cross-correlation with "same" zero padding:
    /// `pad_left = (k-1)/2`, the remainder on the right, output length `ceil(T/stride)`.
    /// `x` is `[batch × in × T]`, `kernel` is `[out × in × k]`, `bias` is `[out]`.
    pub fn conv1d(&mut self, x: Var, kernel: Var, bias: Var, stride: usize) -> Result<Var> {
        let (sx, sk, sb) = (self.shape(x), self.shape(kernel), self.shape(bias));
        if sx.len() != 3 || sk.len() != 3 || sk[1] != sx[1] || sb != [sk[0]] || stride == 0 {
            return Err(Error::shape(format!(
                "conv1d input {sx:?}, kernel {sk:?}, bias {sb:?}, stride {stride}"
            )));
        }
        let geom = ConvGeometry::new(sx[0], sx[1], sk[0], sk[2], stride, sx[2]);
        let mut out = vec![T::zero(); geom.batch * geom.out_channels * geom.len_out];
        ops::conv1d_forward(
            &geom,
            self.value(x).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
            &mut out,
        );
        let shape = vec![geom.batch, geom.out_channels, geom.len_out];
        self.push(Op::Conv1d(geom), vec![x, kernel, bias], Tensor::from_parts(shape, out))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: T = self.value(a).data().iter().copied().sum();
        self.push(Op::Sum, vec![a], Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let s: T = v.data().iter().copied().sum::<T>() / T::cast(v.numel() as f64);
        self.push(Op::Mean, vec![a], Tensor::scalar(s))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`, computed with
    /// max-subtraction. `logits` is `[B × K]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::shape(format!(
                "cross-entropy over logits {s:?} with {} labels",
                labels.len()
            )));
        }
        let (b, k) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::data(format!("label {bad} outside [0, {k})")));
        }
        let d = self.value(logits).data();
        let mut total = T::zero();
        for (row, &label) in d.chunks(k).zip(labels) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
            total += lse - row[label];
        }
        let loss = total / T::cast(b as f64);
        self.push(
            Op::SoftmaxCrossEntropy {
                labels: labels.to_vec(),
            },
            vec![logits],
            Tensor::scalar(loss),
        )
    }

    /// Reverse pass from a single-element `loss`. Every node that depends on
    /// a [`Graph::param`] leaf receives d(loss)/d(node); contributions from
    /// fan-out are summed.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(format!(
                "backward from non-scalar of shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads: grads
                .into_iter()
                .zip(&self.nodes)
                .map(|(g, n)| g.map(|g| Tensor::from_parts(n.value.shape().to_vec(), g)))
                .collect(),
        })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let scale = if self.fault == Some(node.op.tag()) {
            T::cast(1.5)
        } else {
            T::one()
        };
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        // Lazily allocate and return the gradient buffer of an input.
        fn slot<'a, T: Scalar>(
            grads: &'a mut [Option<Vec<T>>],
            nodes: &[Node<T>],
            v: Var,
        ) -> &'a mut Vec<T> {
            grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.numel()])
        }
        let nodes = &self.nodes;
        let out = node.value.data();
        let out_shape = node.value.shape();

        match &node.op {
            Op::Leaf => {}
            Op::Add | Op::Sub | Op::Mul => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
                let (da, db) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                if wants(a) {
                    let ga = slot(grads, nodes, a);
                    match node.op {
                        Op::Mul => ops::for_each_broadcast(sa, sb, out_shape, |o, ia, ib| {
                            ga[ia] += g[o] * db[ib] * scale
                        }),
                        _ => ops::for_each_broadcast(sa, sb, out_shape, |o, ia, _| {
                            ga[ia] += g[o] * scale
                        }),
                    }
                }
                if wants(b) {
                    let gb = slot(grads, nodes, b);
                    match node.op {
                        Op::Mul => ops::for_each_broadcast(sa, sb, out_shape, |o, ia, ib| {
                            gb[ib] += g[o] * da[ia] * scale
                        }),
                        Op::Sub => ops::for_each_broadcast(sa, sb, out_shape, |o, _, ib| {
                            gb[ib] -= g[o] * scale
                        }),
                        _ => ops::for_each_broadcast(sa, sb, out_shape, |o, _, ib| {
                            gb[ib] += g[o] * scale
                        }),
                    }
                }
            }
            Op::Sigmoid | Op::Tanh | Op::Relu | Op::Scale(_) => {
                let a = node.inputs[0];
                if !wants(a) {
                    return;
                }
                let ga = slot(grads, nodes, a);
                match node.op {
                    Op::Sigmoid => {
                        for ((gi, &y), &go) in ga.iter_mut().zip(out).zip(g) {
                            *gi += go * y * (T::one() - y) * scale;
                        }
                    }
                    Op::Tanh => {
                        for ((gi, &y), &go) in ga.iter_mut().zip(out).zip(g) {
                            *gi += go * (T::one() - y * y) * scale;
                        }
                    }
                    Op::Relu => {
                        for ((gi, &y), &go) in ga.iter_mut().zip(out).zip(g) {
                            if y > T::zero() {
                                *gi += go * scale;
                            }
                        }
                    }
                    Op::Scale(c) => {
                        let c = T::cast(c) * scale;
                        for (gi, &go) in ga.iter_mut().zip(g) {
                            *gi += go * c;
                        }
                    }
                    _ => unreachable!(),
                }
            }
            Op::Matmul => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let gs: Vec<T> = g.iter().map(|&v| v * scale).collect();
                if wants(a) {
                    let db = nodes[b.0].value.data();
                    ops::gemm_nt(&gs, db, slot(grads, nodes, a), m, n, k);
                }
                if wants(b) {
                    let da = nodes[a.0].value.data();
                    ops::gemm_tn(da, &gs, slot(grads, nodes, b), m, k, n);
                }
            }
            Op::Linear { bias } => {
                let (x, w) = (node.inputs[0], node.inputs[1]);
                let (sx, sw) = (nodes[x.0].value.shape(), nodes[w.0].value.shape());
                let (rows, inp, outp) = (sx[0], sx[1], sw[0]);
                let owned;
                let gs: &[T] = if scale == T::one() {
                    g
                } else {
                    owned = g.iter().map(|&v| v * scale).collect::<Vec<_>>();
                    &owned
                };
                if wants(x) {
                    let dw = nodes[w.0].value.data();
                    ops::gemm_nn(gs, dw, slot(grads, nodes, x), rows, outp, inp);
                }
                if wants(w) {
                    let dx = nodes[x.0].value.data();
                    ops::gemm_tn(gs, dx, slot(grads, nodes, w), rows, outp, inp);
                }
                if *bias {
                    let b = node.inputs[2];
                    if wants(b) {
                        let gb = slot(grads, nodes, b);
                        for row in gs.chunks(outp) {
                            for (acc, &v) in gb.iter_mut().zip(row) {
                                *acc += v;
                            }
                        }
                    }
                }
            }
            Op::Concat { axis } => {
                let (outer, total, inner) = split_axis(out_shape, *axis);
                let mut offset = 0;
                for &p in &node.inputs {
                    let ext = nodes[p.0].value.shape()[*axis];
                    if wants(p) {
                        let gp = slot(grads, nodes, p);
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + ext) * inner];
                            for (acc, &v) in gp[o * ext * inner..(o + 1) * ext * inner].iter_mut().zip(src) {
                                *acc += v * scale;
                            }
                        }
                    }
                    offset += ext;
                }
            }
            Op::Slice { axis, start } => {
                let a = node.inputs[0];
                if !wants(a) {
                    return;
                }
                let sa = nodes[a.0].value.shape();
                let (outer, ext, inner) = split_axis(sa, *axis);
                let len = out_shape[*axis];
                let ga = slot(grads, nodes, a);
                for o in 0..outer {
                    let dst = &mut ga[(o * ext + start) * inner..(o * ext + start + len) * inner];
                    for (acc, &v) in dst.iter_mut().zip(&g[o * len * inner..(o + 1) * len * inner]) {
                        *acc += v * scale;
                    }
                }
            }
            Op::Select { axis, index } => {
                let a = node.inputs[0];
                if !wants(a) {
                    return;
                }
                let (outer, ext, inner) = split_axis(nodes[a.0].value.shape(), *axis);
                let ga = slot(grads, nodes, a);
                for o in 0..outer {
                    let base = (o * ext + index) * inner;
                    for j in 0..inner {
                        ga[base + j] += g[o * inner + j] * scale;
                    }
                }
            }
            Op::Stack { axis } => {
                let (outer, n, inner) = split_axis(out_shape, *axis);
                for (j, &p) in node.inputs.iter().enumerate() {
                    if !wants(p) {
                        continue;
                    }
                    let gp = slot(grads, nodes, p);
                    for o in 0..outer {
                        for q in 0..inner {
                            gp[o * inner + q] += g[(o * n + j) * inner + q] * scale;
                        }
                    }
                }
            }
            Op::Conv1d(geom) => {
                let (x, w, b) = (node.inputs[0], node.inputs[1], node.inputs[2]);
                let gs: Vec<T> = g.iter().map(|&v| v * scale).collect();
                let dx = nodes[x.0].value.data();
                let dw = nodes[w.0].value.data();
                let mut gx = wants(x).then(|| vec![T::zero(); dx.len()]);
                let mut gw = wants(w).then(|| vec![T::zero(); dw.len()]);
                let mut gb = wants(b).then(|| vec![T::zero(); geom.out_channels]);
                ops::conv1d_backward(
                    geom,
                    dx,
                    dw,
                    &gs,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                for (v, local) in [(x, gx), (w, gw), (b, gb)] {
                    if let Some(local) = local {
                        for (acc, l) in slot(grads, nodes, v).iter_mut().zip(local) {
                            *acc += l;
                        }
                    }
                }
            }
            Op::Sum | Op::Mean => {
                let a = node.inputs[0];
                if !wants(a) {
                    return;
                }
                let ga = slot(grads, nodes, a);
                let mut gv = g[0] * scale;
                if matches!(node.op, Op::Mean) {
                    gv = gv / T::cast(ga.len() as f64);
                }
                for acc in ga.iter_mut() {
                    *acc += gv;
                }
            }
            Op::SoftmaxCrossEntropy { labels } => {
                let a = node.inputs[0];
                if !wants(a) {
                    return;
                }
                let k = nodes[a.0].value.shape()[1];
                let d = nodes[a.0].value.data();
                let coef = g[0] * scale / T::cast(labels.len() as f64);
                let ga = slot(grads, nodes, a);
                for (r, &label) in labels.iter().enumerate() {
                    let row = &d[r * k..(r + 1) * k];
                    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
                    let z: T = row.iter().map(|&v| (v - m).exp()).sum();
                    for j in 0..k {
                        let p = (row[j] - m).exp() / z;
                        let target = if j == label { T::one() } else { T::zero() };
                        ga[r * k + j] += coef * (p - target);
                    }
                }
            }
        }
    }
}
