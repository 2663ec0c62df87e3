//! Dynamically recorded computation tape with reverse-mode differentiation.
//!
//! One tape is built per training step and discarded afterwards. The op set is
//! fixed: matmul, broadcast add, elementwise mul, scalar scale, softmax,
//! layer norm, GELU, row gather (embedding lookup), concat, slice, 3-axis
//! permute, reshape, rotary rotation, sum/mean and mean-squared error.

use super::tensor::{matmul2, matmul3, Elem, Tensor};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op<E: Elem> {
    Leaf,
    /// Leased parameter value; `slot` routes the gradient back to a store.
    Param { slot: usize },
    MatMul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, c: E },
    SoftmaxLast { a: NodeId },
    LayerNorm { a: NodeId },
    Gelu { a: NodeId },
    Rows { table: NodeId, ids: Vec<usize> },
    Concat0 { parts: Vec<NodeId> },
    SliceRows { a: NodeId, start: usize },
    Permute3 { a: NodeId, perm: [usize; 3] },
    Reshape { a: NodeId },
    Rope { a: NodeId, cos: Tensor<E>, sin: Tensor<E> },
    Sum { a: NodeId },
    Mean { a: NodeId },
    Mse { pred: NodeId, target: Tensor<E> },
}

struct Node<E: Elem> {
    value: Tensor<E>,
    op: Op<E>,
}

pub struct Tape<E: Elem = f32> {
    nodes: Vec<Node<E>>,
}

/// Parameter-slot gradients produced by [`Tape::backward`].
pub struct Gradients<E: Elem> {
    by_slot: Vec<(usize, Tensor<E>)>,
}

impl<E: Elem> Gradients<E> {
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Tensor<E>)> {
        self.by_slot.iter().map(|(s, t)| (*s, t))
    }
}

impl<E: Elem> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Elem> Tape<E> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<E> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor<E>, op: Op<E>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<E>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, slot: usize, value: Tensor<E>) -> NodeId {
        self.push(value, Op::Param { slot })
    }

    /// 2-D or batched 3-D matrix product.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let out = match (va.shape().len(), vb.shape().len()) {
            (2, 2) => matmul2(va, false, vb, false)?,
            (3, 3) => matmul3(va, false, vb, false)?,
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "matmul",
                    lhs: va.shape().to_vec(),
                    rhs: vb.shape().to_vec(),
                })
            }
        };
        Ok(self.push(out, Op::MatMul { a, b }))
    }

    /// Elementwise add; `b` may be a trailing-shape tensor broadcast over the
    /// leading axes of `a` (bias add), but no other broadcasting.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if !is_trailing_broadcast(va.shape(), vb.shape()) {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let bn = vb.numel();
        let mut out = va.clone();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o = *o + vb.data()[i % bn];
        }
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if !is_trailing_broadcast(va.shape(), vb.shape()) {
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let bn = vb.numel();
        let mut out = va.clone();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o = *o * vb.data()[i % bn];
        }
        Ok(self.push(out, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, a: NodeId, c: E) -> NodeId {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale { a, c })
    }

    pub fn softmax_last(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let d = *va.shape().last().expect("softmax needs at least one axis");
        let mut out = va.clone();
        for row in out.data_mut().chunks_mut(d) {
            let mx = row.iter().copied().fold(row[0], |m, v| m.max_v(v));
            let mut sum = E::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum = sum + *v;
            }
            for v in row.iter_mut() {
                *v = *v / sum;
            }
        }
        self.push(out, Op::SoftmaxLast { a })
    }

    /// Normalizes the last axis to zero mean / unit variance with eps in the
    /// denominator. Zero-variance rows come out as exactly zero. Affine terms
    /// are separate `mul`/`add` ops.
    pub fn layer_norm(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let d = *va.shape().last().expect("layer_norm needs at least one axis");
        let eps = E::from_f64(LAYER_NORM_EPS);
        let inv_d = E::one() / E::from_f64(d as f64);
        let mut out = va.clone();
        for row in out.data_mut().chunks_mut(d) {
            let mut mean = E::zero();
            for v in row.iter() {
                mean = mean + *v;
            }
            mean = mean * inv_d;
            let mut var = E::zero();
            for v in row.iter() {
                let c = *v - mean;
                var = var + c * c;
            }
            var = var * inv_d;
            let inv_std = E::one() / (var + eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv_std;
            }
        }
        self.push(out, Op::LayerNorm { a })
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(gelu_scalar);
        self.push(out, Op::Gelu { a })
    }

    /// Row gather: embedding lookup when `table` is a parameter, general row
    /// indexing otherwise. Gradient scatter-adds into the table.
    pub fn rows(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let vt = self.value(table);
        if vt.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "rows",
                lhs: vt.shape().to_vec(),
                rhs: vec![ids.len()],
            });
        }
        let (v, d) = (vt.shape()[0], vt.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::InvalidArgument(format!(
                    "rows: index {id} out of range for table with {v} rows"
                )));
            }
            data.extend_from_slice(&vt.data()[id * d..(id + 1) * d]);
        }
        let out = Tensor::from_vec(&[ids.len(), d], data)?;
        Ok(self.push(out, Op::Rows { table, ids: ids.to_vec() }))
    }

    /// Concatenation along axis 0; trailing dims must match.
    pub fn concat0(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        }
        let trailing: Vec<usize> = self.value(parts[0]).shape()[1..].to_vec();
        let mut rows = 0usize;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.shape()[1..] != trailing[..] {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            rows += v.shape()[0];
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(&trailing);
        let out = Tensor::from_vec(&shape, data)?;
        Ok(self.push(out, Op::Concat0 { parts: parts.to_vec() }))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let va = self.value(a);
        let rows = va.shape()[0];
        if start + len > rows {
            return Err(Error::InvalidArgument(format!(
                "slice_rows: [{start}, {}) out of range for {rows} rows",
                start + len
            )));
        }
        let stride: usize = va.shape()[1..].iter().product();
        let mut shape = va.shape().to_vec();
        shape[0] = len;
        let out =
            Tensor::from_vec(&shape, va.data()[start * stride..(start + len) * stride].to_vec())?;
        Ok(self.push(out, Op::SliceRows { a, start }))
    }

    pub fn permute3(&mut self, a: NodeId, perm: [usize; 3]) -> Result<NodeId> {
        let va = self.value(a);
        if va.shape().len() != 3 {
            return Err(Error::ShapeMismatch {
                op: "permute3",
                lhs: va.shape().to_vec(),
                rhs: perm.to_vec(),
            });
        }
        let out = permute3_tensor(va, perm);
        Ok(self.push(out, Op::Permute3 { a, perm }))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let out = self.value(a).reshaped(shape)?;
        Ok(self.push(out, Op::Reshape { a }))
    }

    /// Rotary rotation on `[heads, n, head_dim]`; `cos`/`sin` are `[n, head_dim/2]`
    /// tables shared across heads. Norm-preserving per 2-subspace.
    pub fn rope(&mut self, a: NodeId, cos: &Tensor<E>, sin: &Tensor<E>) -> Result<NodeId> {
        let va = self.value(a);
        let sh = va.shape();
        if sh.len() != 3 || sh[2] % 2 != 0 || cos.shape() != [sh[1], sh[2] / 2] {
            return Err(Error::ShapeMismatch {
                op: "rope",
                lhs: sh.to_vec(),
                rhs: cos.shape().to_vec(),
            });
        }
        let out = rope_rotate(va, cos, sin, false);
        Ok(self.push(out, Op::Rope { a, cos: cos.clone(), sin: sin.clone() }))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let mut acc = E::zero();
        for &v in self.value(a).data() {
            acc = acc + v;
        }
        self.push(Tensor::scalar(acc), Op::Sum { a })
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).numel();
        let mut acc = E::zero();
        for &v in self.value(a).data() {
            acc = acc + v;
        }
        self.push(Tensor::scalar(acc / E::from_f64(n as f64)), Op::Mean { a })
    }

    /// Mean of squared differences over all elements. Gradient w.r.t. `pred`
    /// is `2 (pred - target) / N` (full convention, no halving).
    pub fn mse(&mut self, pred: NodeId, target: &Tensor<E>) -> Result<NodeId> {
        let vp = self.value(pred);
        if vp.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                op: "mse",
                lhs: vp.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        let n = E::from_f64(vp.numel() as f64);
        let mut acc = E::zero();
        for (&p, &t) in vp.data().iter().zip(target.data()) {
            let d = p - t;
            acc = acc + d * d;
        }
        Ok(self.push(Tensor::scalar(acc / n), Op::Mse { pred, target: target.clone() }))
    }

    /// Reverse pass from a scalar loss. Returns parameter-slot gradients.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients<E>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<E>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(E::one()));

        let mut by_slot: Vec<(usize, Tensor<E>)> = Vec::new();
        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Param { slot } => by_slot.push((*slot, g)),
                Op::MatMul { a, b } => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (ga, gb) = if va.shape().len() == 2 {
                        (matmul2(&g, false, vb, true)?, matmul2(va, true, &g, false)?)
                    } else {
                        (matmul3(&g, false, vb, true)?, matmul3(va, true, &g, false)?)
                    };
                    accumulate(&mut grads, a.0, ga);
                    accumulate(&mut grads, b.0, gb);
                }
                Op::Add { a, b } => {
                    let gb = reduce_to_shape(&g, self.nodes[b.0].value.shape());
                    accumulate(&mut grads, a.0, g);
                    accumulate(&mut grads, b.0, gb);
                }
                Op::Mul { a, b } => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let bn = vb.numel();
                    let mut ga = g.clone();
                    for (idx, v) in ga.data_mut().iter_mut().enumerate() {
                        *v = *v * vb.data()[idx % bn];
                    }
                    let mut gb_full = g.clone();
                    for (idx, v) in gb_full.data_mut().iter_mut().enumerate() {
                        *v = *v * va.data()[idx];
                    }
                    let gb = reduce_to_shape(&gb_full, vb.shape());
                    accumulate(&mut grads, a.0, ga);
                    accumulate(&mut grads, b.0, gb);
                }
                Op::Scale { a, c } => {
                    accumulate(&mut grads, a.0, g.map(|x| x * *c));
                }
                Op::SoftmaxLast { a } => {
                    let y = &self.nodes[i].value;
                    let d = *y.shape().last().unwrap();
                    let mut gx = g.clone();
                    for (grow, yrow) in gx.data_mut().chunks_mut(d).zip(y.data().chunks(d)) {
                        let mut dot = E::zero();
                        for (gv, yv) in grow.iter().zip(yrow) {
                            dot = dot + *gv * *yv;
                        }
                        for (gv, yv) in grow.iter_mut().zip(yrow) {
                            *gv = *yv * (*gv - dot);
                        }
                    }
                    accumulate(&mut grads, a.0, gx);
                }
                Op::LayerNorm { a } => {
                    let x = &self.nodes[a.0].value;
                    let y = &self.nodes[i].value;
                    let d = *x.shape().last().unwrap();
                    let inv_d = E::one() / E::from_f64(d as f64);
                    let eps = E::from_f64(LAYER_NORM_EPS);
                    let mut gx = g.clone();
                    for ((grow, xrow), yrow) in gx
                        .data_mut()
                        .chunks_mut(d)
                        .zip(x.data().chunks(d))
                        .zip(y.data().chunks(d))
                    {
                        let mut mean = E::zero();
                        for v in xrow {
                            mean = mean + *v;
                        }
                        mean = mean * inv_d;
                        let mut var = E::zero();
                        for v in xrow {
                            let c = *v - mean;
                            var = var + c * c;
                        }
                        var = var * inv_d;
                        let inv_std = E::one() / (var + eps).sqrt();
                        let mut gmean = E::zero();
                        let mut gdot = E::zero();
                        for (gv, yv) in grow.iter().zip(yrow) {
                            gmean = gmean + *gv;
                            gdot = gdot + *gv * *yv;
                        }
                        gmean = gmean * inv_d;
                        gdot = gdot * inv_d;
                        for (gv, yv) in grow.iter_mut().zip(yrow) {
                            *gv = inv_std * (*gv - gmean - *yv * gdot);
                        }
                    }
                    accumulate(&mut grads, a.0, gx);
                }
                Op::Gelu { a } => {
                    let x = &self.nodes[a.0].value;
                    let mut gx = g.clone();
                    for (gv, xv) in gx.data_mut().iter_mut().zip(x.data()) {
                        *gv = *gv * gelu_grad_scalar(*xv);
                    }
                    accumulate(&mut grads, a.0, gx);
                }
                Op::Rows { table, ids } => {
                    let vt = &self.nodes[table.0].value;
                    let d = vt.shape()[1];
                    let mut gt = Tensor::zeros(vt.shape());
                    for (row, &id) in ids.iter().enumerate() {
                        let dst = &mut gt.data_mut()[id * d..(id + 1) * d];
                        let src = &g.data()[row * d..(row + 1) * d];
                        for (dv, sv) in dst.iter_mut().zip(src) {
                            *dv = *dv + *sv;
                        }
                    }
                    accumulate(&mut grads, table.0, gt);
                }
                Op::Concat0 { parts } => {
                    let parts = parts.clone();
                    let mut offset = 0usize;
                    for p in parts {
                        let v = &self.nodes[p.0].value;
                        let stride: usize = v.shape()[1..].iter().product();
                        let rows = v.shape()[0];
                        let part = Tensor::from_vec(
                            v.shape(),
                            g.data()[offset..offset + rows * stride].to_vec(),
                        )?;
                        offset += rows * stride;
                        accumulate(&mut grads, p.0, part);
                    }
                }
                Op::SliceRows { a, start } => {
                    let va = &self.nodes[a.0].value;
                    let stride: usize = va.shape()[1..].iter().product();
                    let mut ga = Tensor::zeros(va.shape());
                    let dst = &mut ga.data_mut()[start * stride..start * stride + g.numel()];
                    dst.copy_from_slice(g.data());
                    accumulate(&mut grads, a.0, ga);
                }
                Op::Permute3 { a, perm } => {
                    let inv = inverse_perm(*perm);
                    let ga = permute3_tensor(&g, inv);
                    accumulate(&mut grads, a.0, ga);
                }
                Op::Reshape { a } => {
                    let ga = g.reshaped(self.nodes[a.0].value.shape())?;
                    accumulate(&mut grads, a.0, ga);
                }
                Op::Rope { a, cos, sin } => {
                    let ga = rope_rotate(&g, cos, sin, true);
                    accumulate(&mut grads, a.0, ga);
                }
                Op::Sum { a } => {
                    let gv = g.item();
                    accumulate(&mut grads, a.0, Tensor::full(self.nodes[a.0].value.shape(), gv));
                }
                Op::Mean { a } => {
                    let n = self.nodes[a.0].value.numel();
                    let gv = g.item() / E::from_f64(n as f64);
                    accumulate(&mut grads, a.0, Tensor::full(self.nodes[a.0].value.shape(), gv));
                }
                Op::Mse { pred, target } => {
                    let vp = &self.nodes[pred.0].value;
                    let scale = g.item() * E::from_f64(2.0 / vp.numel() as f64);
                    let mut gp = vp.clone();
                    for (v, t) in gp.data_mut().iter_mut().zip(target.data()) {
                        *v = (*v - *t) * scale;
                    }
                    accumulate(&mut grads, pred.0, gp);
                }
            }
        }
        Ok(Gradients { by_slot })
    }
}

fn accumulate<E: Elem>(grads: &mut [Option<Tensor<E>>], idx: usize, g: Tensor<E>) {
    match &mut grads[idx] {
        Some(existing) => existing.add_assign_tensor(&g),
        slot => *slot = Some(g),
    }
}

/// `b` broadcastable over leading axes of `a` iff `b.shape` is a suffix of `a.shape`.
fn is_trailing_broadcast(a: &[usize], b: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

fn reduce_to_shape<E: Elem>(g: &Tensor<E>, shape: &[usize]) -> Tensor<E> {
    if g.shape() == shape {
        return g.clone();
    }
    let bn: usize = shape.iter().product();
    let mut out = Tensor::zeros(shape);
    for (i, &v) in g.data().iter().enumerate() {
        let o = &mut out.data_mut()[i % bn];
        *o = *o + v;
    }
    out
}

fn permute3_tensor<E: Elem>(t: &Tensor<E>, perm: [usize; 3]) -> Tensor<E> {
    let s = t.shape();
    let out_shape = [s[perm[0]], s[perm[1]], s[perm[2]]];
    let mut out = Tensor::zeros(&out_shape);
    let strides = [s[1] * s[2], s[2], 1];
    let mut idx = 0usize;
    for i in 0..out_shape[0] {
        for j in 0..out_shape[1] {
            for k in 0..out_shape[2] {
                let src = i * strides[perm[0]] + j * strides[perm[1]] + k * strides[perm[2]];
                out.data_mut()[idx] = t.data()[src];
                idx += 1;
            }
        }
    }
    out
}

fn inverse_perm(perm: [usize; 3]) -> [usize; 3] {
    let mut inv = [0usize; 3];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

fn rope_rotate<E: Elem>(x: &Tensor<E>, cos: &Tensor<E>, sin: &Tensor<E>, invert: bool) -> Tensor<E> {
    let sh = x.shape();
    let (heads, n, hd) = (sh[0], sh[1], sh[2]);
    let half = hd / 2;
    let mut out = x.clone();
    for h in 0..heads {
        for r in 0..n {
            let base = (h * n + r) * hd;
            let row = &mut out.data_mut()[base..base + hd];
            for p in 0..half {
                let c = cos.data()[r * half + p];
                let s0 = sin.data()[r * half + p];
                let s = if invert { -s0 } else { s0 };
                let (a, b) = (row[2 * p], row[2 * p + 1]);
                row[2 * p] = a * c - b * s;
                row[2 * p + 1] = a * s + b * c;
            }
        }
    }
    out
}

fn gelu_scalar<E: Elem>(x: E) -> E {
    // tanh approximation
    let k = E::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let c = E::from_f64(0.044715);
    let half = E::from_f64(0.5);
    half * x * (E::one() + (k * (x + c * x * x * x)).tanh())
}

fn gelu_grad_scalar<E: Elem>(x: E) -> E {
    let k = E::from_f64(0.797_884_560_802_865_4);
    let c = E::from_f64(0.044715);
    let half = E::from_f64(0.5);
    let three = E::from_f64(3.0);
    let inner = k * (x + c * x * x * x);
    let t = inner.tanh();
    let sech2 = E::one() - t * t;
    half * (E::one() + t) + half * x * sech2 * k * (E::one() + three * c * x * x)
}
