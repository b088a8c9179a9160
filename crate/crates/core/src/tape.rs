//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Every operation appends a node to the [`Tape`] and returns a [`Var`]
//! handle. Nodes are stored in creation order, so operands always precede
//! their consumers and [`Tape::backward`] is a single reverse sweep.
//!
//! ```
//! use privdistill::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::vector(&[3.0]));
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum(sq, None).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).data(), &[6.0]);
//! ```

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Relu,
    Sigmoid,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    MatVec(Var, Var),
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    Scale(Var, f64),
    ScalarMul(Var, Var),
    Reduce(Reduce, Var, Option<usize>),
    Reshape(Var),
    Stack(Vec<Var>),
    Concat(Vec<Var>),
    Softmax(Var),
    /// Holds the softmax of the logits for the backward rule.
    SoftmaxCrossEntropy {
        logits: Var,
        label: usize,
        probs: Vec<f64>,
    },
    SoftTargetCrossEntropy {
        logits: Var,
        target: Vec<f64>,
        probs: Vec<f64>,
    },
    Mse(Var, Var),
    CosineDistance(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation graph. Confined to one thread.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; zeros when `var` does not
    /// influence the loss.
    pub fn get(&self, var: Var) -> Tensor {
        match self.grads.get(var.0) {
            Some(Some(g)) => g.clone(),
            _ => Tensor::zeros(&self.shapes[var.0]),
        }
    }

    /// Whether any gradient reached `var`.
    pub fn reached(&self, var: Var) -> bool {
        matches!(self.grads.get(var.0), Some(Some(_)))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A differentiable input (parameter or probe point).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A value that never receives gradient (inputs, frozen targets).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let [m, k] = ta.dims2("matmul")?;
        let [k2, n] = tb.dims2("matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", ta.shape(), tb.shape()));
        }
        let (da, db) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = da[i * k + p];
                for j in 0..n {
                    out[i * n + j] += av * db[p * n + j];
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// Matrix `[m×k]` times vector `[k]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (tw, tx) = (self.value(w), self.value(x));
        let [m, k] = tw.dims2("matvec")?;
        if tx.shape() != [k] {
            return Err(Error::dim("matvec", tw.shape(), tx.shape()));
        }
        let xs = tx.data();
        let out: Vec<f64> = tw
            .data()
            .chunks(k)
            .map(|row| row.iter().zip(xs).map(|(a, b)| a * b).sum())
            .collect();
        let rg = self.rg(&[w, x]);
        Ok(self.push(Tensor::new(vec![m], out)?, Op::MatVec(w, x), rg))
    }

    pub fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let value = match kind {
            Binary::Add => ta.zip_map(tb, "add", |x, y| x + y)?,
            Binary::Sub => ta.zip_map(tb, "sub", |x, y| x - y)?,
            Binary::Mul => ta.zip_map(tb, "mul", |x, y| x * y)?,
        };
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Binary(kind, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let t = self.value(a);
        let value = match kind {
            Unary::Relu => t.map(|v| v.max(0.0)),
            Unary::Sigmoid => t.map(sigmoid),
            Unary::Tanh => t.map(f64::tanh),
        };
        let rg = self.rg(&[a]);
        self.push(value, Op::Unary(kind, a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|v| v * c);
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale(a, c), rg)
    }

    /// One-element tensor `s` times tensor `t`. The only broadcast supported.
    pub fn scalar_mul(&mut self, s: Var, t: Var) -> Result<Var> {
        let ts = self.value(s);
        if !ts.is_scalar() {
            return Err(Error::dim("scalar_mul", ts.shape(), self.value(t).shape()));
        }
        let c = ts.item();
        let value = self.value(t).map(|v| v * c);
        let rg = self.rg(&[s, t]);
        Ok(self.push(value, Op::ScalarMul(s, t), rg))
    }

    pub fn reduce(&mut self, kind: Reduce, a: Var, axis: Option<usize>) -> Result<Var> {
        let t = self.value(a);
        let value = match axis {
            None => {
                let s: f64 = t.data().iter().sum();
                Tensor::scalar(match kind {
                    Reduce::Sum => s,
                    Reduce::Mean => s / t.len() as f64,
                })
            }
            Some(ax) => {
                let (outer, n, inner) = axis_split(t.shape(), ax)?;
                let d = t.data();
                let mut out = vec![0.0; outer * inner];
                for o in 0..outer {
                    for i in 0..n {
                        for j in 0..inner {
                            out[o * inner + j] += d[(o * n + i) * inner + j];
                        }
                    }
                }
                if kind == Reduce::Mean {
                    out.iter_mut().for_each(|v| *v /= n as f64);
                }
                Tensor::new(reduced_shape(t.shape(), ax), out)?
            }
        };
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Reduce(kind, a, axis), rg))
    }

    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(Reduce::Sum, a, axis)
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(Reduce::Mean, a, axis)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshaped(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Stack equally sized vectors into the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows
            .first()
            .ok_or_else(|| Error::contract("stack of an empty sequence"))?;
        let d = self.value(*first).shape().to_vec();
        if d.len() != 1 {
            return Err(Error::dim("stack", &d, &[]));
        }
        let mut data = Vec::with_capacity(rows.len() * d[0]);
        for r in rows {
            let t = self.value(*r);
            if t.shape() != d.as_slice() {
                return Err(Error::dim("stack", &d, t.shape()));
            }
            data.extend_from_slice(t.data());
        }
        let rg = self.rg(rows);
        Ok(self.push(
            Tensor::new(vec![rows.len(), d[0]], data)?,
            Op::Stack(rows.to_vec()),
            rg,
        ))
    }

    /// Concatenate vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<Tensor> = parts.iter().map(|p| self.value(*p).clone()).collect();
        let value = Tensor::concat(&values)?;
        let rg = self.rg(parts);
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    /// Softmax over all elements.
    pub fn softmax(&mut self, a: Var) -> Var {
        let value = self.value(a).softmax();
        let rg = self.rg(&[a]);
        self.push(value, Op::Softmax(a), rg)
    }

    /// `-log softmax(logits)[label]`, stabilized by max subtraction.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.rank() != 1 || t.len() < 2 {
            return Err(Error::dim("softmax_cross_entropy", t.shape(), &[]));
        }
        if label >= t.len() {
            return Err(Error::Index {
                index: label,
                len: t.len(),
            });
        }
        let max = t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = t.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        let loss = lse - t.data()[label];
        let probs = t.softmax().into_data();
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            },
            rg,
        ))
    }

    /// `-Σ target · log softmax(logits)` against a fixed distribution.
    pub fn soft_target_cross_entropy(&mut self, logits: Var, target: &Tensor) -> Result<Var> {
        let t = self.value(logits);
        if t.rank() != 1 || t.shape() != target.shape() {
            return Err(Error::dim("soft_target_cross_entropy", t.shape(), target.shape()));
        }
        let max = t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = t.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        let loss: f64 = target
            .data()
            .iter()
            .zip(t.data())
            .filter(|(p, _)| **p != 0.0)
            .map(|(p, z)| p * (lse - z))
            .sum();
        let probs = t.softmax().into_data();
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftTargetCrossEntropy {
                logits,
                target: target.data().to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Mean over all elements of `(a - b)²`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim("mse", ta.shape(), tb.shape()));
        }
        let n = ta.len() as f64;
        let loss = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::scalar(loss), Op::Mse(a, b), rg))
    }

    /// `1 - cos(a, b)`. Both vectors must be nonzero.
    pub fn cosine_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let dot = ta.dot(tb)?;
        let (na, nb) = (ta.norm(), tb.norm());
        if na == 0.0 || nb == 0.0 {
            return Err(Error::contract("cosine distance of a zero vector"));
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            Tensor::scalar(1.0 - dot / (na * nb)),
            Op::CosineDistance(a, b),
            rg,
        ))
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::contract("backward on an empty tape"));
        }
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let shapes: Vec<Vec<usize>> = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        }
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, contrib: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g
                .data_mut()
                .iter_mut()
                .zip(contrib.data())
                .for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(contrib),
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let gd = g.data();
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let [m, k] = ta.dims2("matmul")?;
                let [_, n] = tb.dims2("matmul")?;
                let (da, db) = (ta.data(), tb.data());
                if self.nodes[a.0].requires_grad {
                    // dA = G · Bᵀ
                    let mut out = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            out[i * k + p] = (0..n).map(|j| gd[i * n + j] * db[p * n + j]).sum();
                        }
                    }
                    self.accumulate(grads, *a, Tensor::new(vec![m, k], out)?);
                }
                if self.nodes[b.0].requires_grad {
                    // dB = Aᵀ · G
                    let mut out = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let av = da[i * k + p];
                            for j in 0..n {
                                out[p * n + j] += av * gd[i * n + j];
                            }
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new(vec![k, n], out)?);
                }
            }
            Op::MatVec(w, x) => {
                let (tw, tx) = (self.value(*w), self.value(*x));
                let [m, k] = tw.dims2("matvec")?;
                if self.nodes[w.0].requires_grad {
                    let xs = tx.data();
                    let mut out = Vec::with_capacity(m * k);
                    for &gi in gd {
                        out.extend(xs.iter().map(|xv| gi * xv));
                    }
                    self.accumulate(grads, *w, Tensor::new(vec![m, k], out)?);
                }
                if self.nodes[x.0].requires_grad {
                    let wd = tw.data();
                    let mut out = vec![0.0; k];
                    for (i, &gi) in gd.iter().enumerate() {
                        for (o, wv) in out.iter_mut().zip(&wd[i * k..(i + 1) * k]) {
                            *o += gi * wv;
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(vec![k], out)?);
                }
            }
            Op::Binary(kind, a, b) => match kind {
                Binary::Add => {
                    self.accumulate(grads, *a, g.clone());
                    self.accumulate(grads, *b, g.clone());
                }
                Binary::Sub => {
                    self.accumulate(grads, *a, g.clone());
                    self.accumulate(grads, *b, g.map(|v| -v));
                }
                Binary::Mul => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    self.accumulate(grads, *a, g.zip_map(tb, "mul", |x, y| x * y)?);
                    self.accumulate(grads, *b, g.zip_map(ta, "mul", |x, y| x * y)?);
                }
            },
            Op::Unary(kind, a) => {
                let contrib = match kind {
                    Unary::Relu => {
                        g.zip_map(self.value(*a), "relu", |gv, x| if x > 0.0 { gv } else { 0.0 })?
                    }
                    Unary::Sigmoid => g.zip_map(&node.value, "sigmoid", |gv, s| gv * s * (1.0 - s))?,
                    Unary::Tanh => g.zip_map(&node.value, "tanh", |gv, t| gv * (1.0 - t * t))?,
                };
                self.accumulate(grads, *a, contrib);
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.map(|v| v * c)),
            Op::ScalarMul(s, t) => {
                let tt = self.value(*t);
                let c = self.value(*s).item();
                let ds = tt.dot(g)?;
                let sshape = self.value(*s).shape().to_vec();
                self.accumulate(grads, *s, Tensor::new(sshape, vec![ds])?);
                self.accumulate(grads, *t, g.map(|v| v * c));
            }
            Op::Reduce(kind, a, axis) => {
                let ta = self.value(*a);
                let mut out = vec![0.0; ta.len()];
                match axis {
                    None => {
                        let v = match kind {
                            Reduce::Sum => gd[0],
                            Reduce::Mean => gd[0] / ta.len() as f64,
                        };
                        out.iter_mut().for_each(|o| *o = v);
                    }
                    Some(ax) => {
                        let (outer, n, inner) = axis_split(ta.shape(), *ax)?;
                        let div = if *kind == Reduce::Mean { n as f64 } else { 1.0 };
                        for o in 0..outer {
                            for i in 0..n {
                                for j in 0..inner {
                                    out[(o * n + i) * inner + j] = gd[o * inner + j] / div;
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, *a, Tensor::new(ta.shape().to_vec(), out)?);
            }
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, g.reshaped(&shape)?);
            }
            Op::Stack(rows) => {
                let d = self.value(rows[0]).len();
                for (i, r) in rows.iter().enumerate() {
                    self.accumulate(grads, *r, Tensor::vector(&gd[i * d..(i + 1) * d]));
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    self.accumulate(grads, *p, Tensor::vector(&gd[off..off + len]));
                    off += len;
                }
            }
            Op::Softmax(a) => {
                let s = node.value.data();
                let inner: f64 = gd.iter().zip(s).map(|(gv, sv)| gv * sv).sum();
                let out: Vec<f64> = gd.iter().zip(s).map(|(gv, sv)| sv * (gv - inner)).collect();
                self.accumulate(grads, *a, Tensor::new(node.value.shape().to_vec(), out)?);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            } => {
                let mut out: Vec<f64> = probs.clone();
                out[*label] -= 1.0;
                out.iter_mut().for_each(|v| *v *= gd[0]);
                self.accumulate(grads, *logits, Tensor::vector(&out));
            }
            Op::SoftTargetCrossEntropy {
                logits,
                target,
                probs,
            } => {
                let mass: f64 = target.iter().sum();
                let out: Vec<f64> = probs
                    .iter()
                    .zip(target)
                    .map(|(p, t)| gd[0] * (mass * p - t))
                    .collect();
                self.accumulate(grads, *logits, Tensor::vector(&out));
            }
            Op::Mse(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let c = 2.0 * gd[0] / ta.len() as f64;
                let diff = ta.zip_map(tb, "mse", |x, y| c * (x - y))?;
                self.accumulate(grads, *b, diff.map(|v| -v));
                self.accumulate(grads, *a, diff);
            }
            Op::CosineDistance(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (na, nb) = (ta.norm(), tb.norm());
                let cos = ta.dot(tb)? / (na * nb);
                // d(1 - cos)/da = -(b / (|a||b|) - cos · a / |a|²)
                let ga = ta.zip_map(tb, "cosine", |x, y| -gd[0] * (y / (na * nb) - cos * x / (na * na)))?;
                let gb = tb.zip_map(ta, "cosine", |y, x| -gd[0] * (x / (na * nb) - cos * y / (nb * nb)))?;
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::dim("reduce axis", shape, &[axis]));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s: Vec<usize> = shape.to_vec();
    s.remove(axis);
    if s.is_empty() {
        s.push(1);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matmul_examples() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::matrix(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let i = t.constant(Tensor::identity(2));
        let ai = t.matmul(a, i).unwrap();
        assert_eq!(t.value(ai).data(), &[1.0, 2.0, 3.0, 4.0]);

        let id = t.constant(Tensor::matrix(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let col = t.constant(Tensor::matrix(&[&[5.0], &[7.0]]));
        let r = t.matmul(id, col).unwrap();
        assert_eq!(t.value(r).data(), &[5.0, 7.0]);

        let ones = t.constant(Tensor::matrix(&[&[1.0], &[1.0]]));
        let r = t.matmul(a, ones).unwrap();
        assert_eq!(t.shape(r), &[2, 1]);
        assert_eq!(t.value(r).data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn elementwise_examples() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(&[-1.0, 0.0, 2.0]));
        let r = t.relu(x);
        assert_eq!(t.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = t.constant(Tensor::vector(&[0.0]));
        let s = t.sigmoid(z);
        assert_eq!(t.value(s).data(), &[0.5]);
        let a = t.constant(Tensor::vector(&[1.0, 2.0]));
        let b = t.constant(Tensor::vector(&[3.0, 4.0]));
        let sum = t.add(a, b).unwrap();
        assert_eq!(t.value(sum).data(), &[4.0, 6.0]);
        assert!(t.add(a, x).is_err());
    }

    #[test]
    fn reduce_examples() {
        let mut t = Tape::new();
        let m = t.constant(Tensor::matrix(&[&[1.0, 3.0], &[5.0, 7.0]]));
        let r = t.mean(m, Some(0)).unwrap();
        assert_eq!(t.value(r).data(), &[3.0, 5.0]);
        let r = t.sum(m, Some(1)).unwrap();
        assert_eq!(t.value(r).data(), &[4.0, 12.0]);
        assert!(matches!(t.mean(m, Some(2)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn cross_entropy_examples() {
        let mut t = Tape::new();
        let u = t.constant(Tensor::vector(&[0.0; 4]));
        for label in 0..4 {
            let l = t.softmax_cross_entropy(u, label).unwrap();
            assert!(close(t.value(l).item(), 4f64.ln(), 1e-12));
        }
        let sat = t.constant(Tensor::vector(&[100.0, 0.0, 0.0]));
        let l = t.softmax_cross_entropy(sat, 0).unwrap();
        assert!(t.value(l).item() < 1e-40);
        // Direct evaluation: ln(e + e² + e³) - 3.
        let x = t.constant(Tensor::vector(&[1.0, 2.0, 3.0]));
        let l = t.softmax_cross_entropy(x, 2).unwrap();
        let oracle = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln() - 3.0;
        assert!(close(t.value(l).item(), oracle, 1e-15));
        assert!(close(t.value(l).item(), 0.40761, 1e-5));
        assert!(matches!(
            t.softmax_cross_entropy(x, 3),
            Err(Error::Index { index: 3, len: 3 })
        ));
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(&[1.0, 2.0, 3.0]));
        let l = t.softmax_cross_entropy(x, 1).unwrap();
        let g = t.backward(l).unwrap().get(x);
        let p = Tensor::vector(&[1.0, 2.0, 3.0]).softmax();
        let expect = [p.data()[0], p.data()[1] - 1.0, p.data()[2]];
        for (a, b) in g.data().iter().zip(expect) {
            assert!(close(*a, b, 1e-15));
        }
    }

    #[test]
    fn mse_examples() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(&[1.0, 2.0, 3.0]));
        let l = t.mse(a, a).unwrap();
        assert_eq!(t.value(l).item(), 0.0);
        let a = t.constant(Tensor::vector(&[0.0, 0.0]));
        let b = t.constant(Tensor::vector(&[2.0, 0.0]));
        let l = t.mse(a, b).unwrap();
        assert_eq!(t.value(l).item(), 2.0);
        let a = t.constant(Tensor::vector(&[1.0, 1.0, 1.0]));
        let b = t.constant(Tensor::vector(&[2.0, 3.0, 4.0]));
        let l = t.mse(a, b).unwrap();
        assert!(close(t.value(l).item(), 14.0 / 3.0, 1e-15));
        let c = t.constant(Tensor::vector(&[1.0]));
        assert!(t.mse(a, c).is_err());
    }

    #[test]
    fn mse_gradient_skips_frozen_target() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::vector(&[1.0, 1.0]));
        let b = t.constant(Tensor::vector(&[2.0, 0.0]));
        let l = t.mse(a, b).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(a).data(), &[-1.0, 1.0]);
        assert!(!g.reached(b));
    }

    #[test]
    fn backward_examples() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(&[3.0]));
        let unused = t.leaf(Tensor::vector(&[1.0, 2.0]));
        let sq = t.mul(x, x).unwrap();
        let loss = t.sum(sq, None).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).data(), &[6.0]);
        assert_eq!(g.get(unused).data(), &[0.0, 0.0]);
        assert!(matches!(t.backward(unused), Err(Error::Contract(_))));
        assert!(Tape::new().backward(Var(0)).is_err());
    }

    #[test]
    fn softmax_is_a_simplex() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(&[-3.0, 0.5, 12.0, 7.0]));
        let s = t.softmax(x);
        let d = t.value(s).data();
        assert!(d.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}
