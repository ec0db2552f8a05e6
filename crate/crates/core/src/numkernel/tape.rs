//! Tape-based reverse-mode differentiation.
//!
//! Every forward op appends one node to the [`Tape`]; node ids are handed out
//! in creation order, so the tape is topologically sorted by construction.
//! [`Tape::backward`] walks it once in reverse and adds the resulting
//! gradients onto each node's persistent gradient buffer. Running backward
//! twice without [`Tape::zero_grad`] therefore doubles every gradient.

use super::tensor::{self, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise operations. Binary tags require equal shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementOp {
    Add,
    Sub,
    Mul,
    Tanh,
    Logistic,
    Relu,
    /// Negative slope fixed at 0.2.
    LeakyRelu,
}

impl ElementOp {
    pub fn is_binary(self) -> bool {
        matches!(self, ElementOp::Add | ElementOp::Sub | ElementOp::Mul)
    }

    fn name(self) -> &'static str {
        match self {
            ElementOp::Add => "add",
            ElementOp::Sub => "sub",
            ElementOp::Mul => "mul",
            ElementOp::Tanh => "tanh",
            ElementOp::Logistic => "logistic",
            ElementOp::Relu => "relu",
            ElementOp::LeakyRelu => "leaky_relu",
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary(ElementOp, Var, Var),
    Unary(ElementOp, Var),
    Affine { x: Var, scale: f64 },
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Softmax(Var),
    Sum(Var),
    AddN(Vec<Var>),
    Dot(Var, Var),
    SquaredNorm(Var),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Row { x: Var, index: usize },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    BceWithLogits { logit: Var, target: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Batch statistics produced by [`Tape::batch_norm`].
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub const BATCH_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Leaf that accumulates `∂loss/∂value` on backward.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient, if backward has reached this node.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::Binary(_, a, b) | Op::Dot(a, b) | Op::MatMul { a, b, .. } => {
                self.requires_grad(*a) || self.requires_grad(*b)
            }
            Op::Unary(_, x)
            | Op::Affine { x, .. }
            | Op::Softmax(x)
            | Op::Sum(x)
            | Op::SquaredNorm(x)
            | Op::Row { x, .. }
            | Op::BceWithLogits { logit: x, .. } => self.requires_grad(*x),
            Op::AddN(xs) | Op::Concat(xs) | Op::Stack(xs) => {
                xs.iter().any(|x| self.requires_grad(*x))
            }
            Op::BatchNorm { x, gamma, beta, .. } => {
                self.requires_grad(*x) || self.requires_grad(*gamma) || self.requires_grad(*beta)
            }
        };
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    /// Generic elementwise entry point; `b` is required exactly for binary tags.
    pub fn elementwise(&mut self, op: ElementOp, a: Var, b: Option<Var>) -> Result<Var> {
        match (op.is_binary(), b) {
            (true, Some(b)) => {
                self.same_shape(a, b, op.name())?;
                let (x, y) = (self.value(a).data(), self.value(b).data());
                let data: Vec<f64> = match op {
                    ElementOp::Add => x.iter().zip(y).map(|(p, q)| p + q).collect(),
                    ElementOp::Sub => x.iter().zip(y).map(|(p, q)| p - q).collect(),
                    _ => x.iter().zip(y).map(|(p, q)| p * q).collect(),
                };
                let value = Tensor::new(self.shape(a).to_vec(), data)?;
                self.push(value, Op::Binary(op, a, b), op.name())
            }
            (false, None) => {
                let f: fn(f64) -> f64 = match op {
                    ElementOp::Tanh => f64::tanh,
                    ElementOp::Logistic => tensor::logistic,
                    ElementOp::Relu => |v| v.max(0.0),
                    _ => tensor::leaky_relu,
                };
                let data = self.value(a).data().iter().map(|&v| f(v)).collect();
                let value = Tensor::new(self.shape(a).to_vec(), data)?;
                self.push(value, Op::Unary(op, a), op.name())
            }
            (true, None) => {
                Err(Error::Argument(format!("{} needs two operands", op.name())))
            }
            (false, Some(_)) => {
                Err(Error::Argument(format!("{} takes one operand", op.name())))
            }
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementOp::Add, a, Some(b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementOp::Sub, a, Some(b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementOp::Mul, a, Some(b))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.elementwise(ElementOp::Tanh, a, None)
    }

    pub fn logistic(&mut self, a: Var) -> Result<Var> {
        self.elementwise(ElementOp::Logistic, a, None)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.elementwise(ElementOp::Relu, a, None)
    }

    pub fn leaky_relu(&mut self, a: Var) -> Result<Var> {
        self.elementwise(ElementOp::LeakyRelu, a, None)
    }

    /// `scale · x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let data = self.value(x).data().iter().map(|v| scale * v + shift).collect();
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        self.push(value, Op::Affine { x, scale }, "affine")
    }

    /// `1 − x`.
    pub fn one_minus(&mut self, x: Var) -> Result<Var> {
        self.affine(x, -1.0, 1.0)
    }

    /// Matrix product. Accepts `[m,k]×[k,n]`, `[m,k]×[k]` (matrix-vector) and
    /// `[k]×[k,n]` (vector-matrix).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, k, out_shape_a) = match sa.as_slice() {
            [m, k] => (*m, *k, Some(*m)),
            [k] => (1, *k, None),
            _ => return Err(Error::Dimension(format!("matmul lhs shape {sa:?}"))),
        };
        let (k2, n, out_shape_b) = match sb.as_slice() {
            [k2, n] => (*k2, *n, Some(*n)),
            [k2] if out_shape_a.is_some() => (*k2, 1, None),
            _ => return Err(Error::Dimension(format!("matmul rhs shape {sb:?}"))),
        };
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner dimensions differ: {sa:?} × {sb:?}"
            )));
        }
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let xv = x[i * k + p];
                if xv == 0.0 {
                    continue;
                }
                let row = &y[p * n..(p + 1) * n];
                for (o, yv) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *o += xv * yv;
                }
            }
        }
        let shape = match (out_shape_a, out_shape_b) {
            (Some(m), Some(n)) => vec![m, n],
            (Some(m), None) => vec![m],
            (None, Some(n)) => vec![n],
            (None, None) => unreachable!(),
        };
        let value = Tensor::new(shape, out)?;
        self.push(value, Op::MatMul { a, b, m, k, n }, "matmul")
    }

    /// Softmax over a vector, computed with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        if self.value(x).rank() != 1 {
            return Err(Error::Dimension(format!("softmax over shape {:?}", self.shape(x))));
        }
        let y = tensor::softmax_slice(self.value(x).data())?;
        self.push(Tensor::vector(y), Op::Softmax(x), "softmax")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), "sum")
    }

    /// Sum of equally shaped tensors.
    pub fn add_n(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::Argument("add_n of nothing".into()))?;
        let mut acc = self.value(first).data().to_vec();
        for &x in &xs[1..] {
            self.same_shape(first, x, "add_n")?;
            for (a, v) in acc.iter_mut().zip(self.value(x).data()) {
                *a += v;
            }
        }
        let value = Tensor::new(self.shape(first).to_vec(), acc)?;
        self.push(value, Op::AddN(xs.to_vec()), "add_n")
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "dot")?;
        let d = tensor::dot(self.value(a).data(), self.value(b).data());
        self.push(Tensor::scalar(d), Op::Dot(a, b), "dot")
    }

    pub fn squared_norm(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).squared_norm();
        self.push(Tensor::scalar(s), Op::SquaredNorm(x), "squared_norm")
    }

    /// Concatenates vectors (or scalars) end to end.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &x in xs {
            if self.value(x).rank() > 1 {
                return Err(Error::Dimension(format!("concat of shape {:?}", self.shape(x))));
            }
            data.extend_from_slice(self.value(x).data());
        }
        if data.is_empty() {
            return Err(Error::Argument("concat of nothing".into()));
        }
        self.push(Tensor::vector(data), Op::Concat(xs.to_vec()), "concat")
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let first = *rows.first().ok_or_else(|| Error::Argument("stack of nothing".into()))?;
        if self.value(first).rank() != 1 {
            return Err(Error::Dimension(format!("stack of shape {:?}", self.shape(first))));
        }
        let d = self.value(first).len();
        let mut data = Vec::with_capacity(d * rows.len());
        for &r in rows {
            self.same_shape(first, r, "stack")?;
            data.extend_from_slice(self.value(r).data());
        }
        let value = Tensor::matrix(rows.len(), d, data)?;
        self.push(value, Op::Stack(rows.to_vec()), "stack")
    }

    pub fn row(&mut self, x: Var, index: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 || index >= shape[0] {
            return Err(Error::Dimension(format!("row {index} of shape {shape:?}")));
        }
        let value = Tensor::vector(self.value(x).row(index).to_vec());
        self.push(value, Op::Row { x, index }, "row")
    }

    /// Training-mode batch normalization over the rows of `x` (`[B, d]`),
    /// followed by the affine `gamma ∘ x̂ + beta`.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<(Var, BatchStats)> {
        let shape = self.shape(x).to_vec();
        let [b, d] = shape[..] else {
            return Err(Error::Dimension(format!("batch_norm input {shape:?}")));
        };
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::Dimension("batch_norm affine parameters must be [d]".into()));
        }
        let xs = self.value(x).data();
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        for i in 0..b {
            for j in 0..d {
                mean[j] += xs[i * d + j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= b as f64);
        for i in 0..b {
            for j in 0..d {
                let c = xs[i * d + j] - mean[j];
                var[j] += c * c;
            }
        }
        var.iter_mut().for_each(|v| *v /= b as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BATCH_NORM_EPS).sqrt()).collect();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; b * d];
        let mut out = vec![0.0; b * d];
        for i in 0..b {
            for j in 0..d {
                let h = (xs[i * d + j] - mean[j]) * inv_std[j];
                xhat[i * d + j] = h;
                out[i * d + j] = g[j] * h + bt[j];
            }
        }
        let value = Tensor::matrix(b, d, out)?;
        let v = self.push(value, Op::BatchNorm { x, gamma, beta, xhat, inv_std }, "batch_norm")?;
        Ok((v, BatchStats { mean, var }))
    }

    /// Sigmoid cross-entropy of a scalar logit against a 0/1 target, evaluated
    /// in log space.
    pub fn bce_with_logits(&mut self, logit: Var, target: f64) -> Result<Var> {
        if self.value(logit).len() != 1 {
            return Err(Error::Dimension("bce_with_logits expects a scalar logit".into()));
        }
        let z = self.value(logit).data()[0];
        let loss = z.max(0.0) - z * target + (-z.abs()).exp().ln_1p();
        self.push(Tensor::scalar(loss), Op::BceWithLogits { logit, target }, "bce_with_logits")
    }

    /// Reverse sweep from a scalar `loss`, adding `∂loss/∂node` onto every
    /// node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Argument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            let slot = &mut self.nodes[idx].grad;
            match slot {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, v)| *a += v),
                None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let mut send = |v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                slot @ None => *slot = Some(contrib),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Binary(op, a, b) => match op {
                ElementOp::Add => {
                    send(*a, g.to_vec());
                    send(*b, g.to_vec());
                }
                ElementOp::Sub => {
                    send(*a, g.to_vec());
                    send(*b, g.iter().map(|v| -v).collect());
                }
                _ => {
                    let (x, y) = (val(*a), val(*b));
                    send(*a, g.iter().zip(y).map(|(g, y)| g * y).collect());
                    send(*b, g.iter().zip(x).map(|(g, x)| g * x).collect());
                }
            },
            Op::Unary(op, a) => {
                let (x, y) = (val(*a), node.value.data());
                let local: Vec<f64> = match op {
                    ElementOp::Tanh => g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect(),
                    ElementOp::Logistic => {
                        g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect()
                    }
                    ElementOp::Relu => {
                        g.iter().zip(x).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect()
                    }
                    _ => g
                        .iter()
                        .zip(x)
                        .map(|(g, x)| if *x > 0.0 { *g } else { tensor::LEAKY_SLOPE * g })
                        .collect(),
                };
                send(*a, local);
            }
            Op::Affine { x, scale } => send(*x, g.iter().map(|v| v * scale).collect()),
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let (x, y) = (val(*a), val(*b));
                if self.nodes[a.0].requires_grad {
                    let mut ga = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            ga[i * k + p] = tensor::dot(&g[i * n..(i + 1) * n], &y[p * n..(p + 1) * n]);
                        }
                    }
                    send(*a, ga);
                }
                if self.nodes[b.0].requires_grad {
                    let mut gb = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let xv = x[i * k + p];
                            for (o, gv) in gb[p * n..(p + 1) * n].iter_mut().zip(&g[i * n..(i + 1) * n]) {
                                *o += xv * gv;
                            }
                        }
                    }
                    send(*b, gb);
                }
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let gy = tensor::dot(g, y);
                send(*x, y.iter().zip(g).map(|(y, g)| y * (g - gy)).collect());
            }
            Op::Sum(x) => send(*x, vec![g[0]; self.nodes[x.0].value.len()]),
            Op::AddN(xs) => {
                for x in xs {
                    send(*x, g.to_vec());
                }
            }
            Op::Dot(a, b) => {
                let (x, y) = (val(*a), val(*b));
                send(*a, y.iter().map(|v| v * g[0]).collect());
                send(*b, x.iter().map(|v| v * g[0]).collect());
            }
            Op::SquaredNorm(x) => send(*x, val(*x).iter().map(|v| 2.0 * v * g[0]).collect()),
            Op::Concat(xs) => {
                let mut offset = 0;
                for x in xs {
                    let len = self.nodes[x.0].value.len();
                    send(*x, g[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::Stack(rows) => {
                let d = node.value.shape()[1];
                for (i, r) in rows.iter().enumerate() {
                    send(*r, g[i * d..(i + 1) * d].to_vec());
                }
            }
            Op::Row { x, index } => {
                let shape = self.nodes[x.0].value.shape();
                let d = shape[1];
                let mut full = vec![0.0; shape[0] * d];
                full[index * d..(index + 1) * d].copy_from_slice(g);
                send(*x, full);
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std } => {
                let d = inv_std.len();
                let b = xhat.len() / d;
                let gm = val(*gamma);
                let mut g_gamma = vec![0.0; d];
                let mut g_beta = vec![0.0; d];
                for i in 0..b {
                    for j in 0..d {
                        g_gamma[j] += g[i * d + j] * xhat[i * d + j];
                        g_beta[j] += g[i * d + j];
                    }
                }
                if self.nodes[x.0].requires_grad {
                    let bf = b as f64;
                    let mut gx = vec![0.0; b * d];
                    for j in 0..d {
                        let mut sum_gh = 0.0;
                        let mut sum_gh_xhat = 0.0;
                        for i in 0..b {
                            let gh = g[i * d + j] * gm[j];
                            sum_gh += gh;
                            sum_gh_xhat += gh * xhat[i * d + j];
                        }
                        for i in 0..b {
                            let gh = g[i * d + j] * gm[j];
                            gx[i * d + j] = inv_std[j] / bf
                                * (bf * gh - sum_gh - xhat[i * d + j] * sum_gh_xhat);
                        }
                    }
                    send(*x, gx);
                }
                send(*gamma, g_gamma);
                send(*beta, g_beta);
            }
            Op::BceWithLogits { logit, target } => {
                let z = val(*logit)[0];
                send(*logit, vec![g[0] * (tensor::logistic(z) - target)]);
            }
        }
    }
}
