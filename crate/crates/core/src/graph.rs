//! Reverse-mode differentiation over a tape of tensor operations.
//!
//! A [`Graph`] is built fresh for every forward pass. Each operation appends a
//! node holding its output value; [`Graph::backward`] walks the tape in reverse
//! and accumulates gradients into every node that (transitively) depends on a
//! node created with [`Graph::param`].

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{softmax_in_place, Scalar, Tensor};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Clamp {
        x: usize,
        lo: T,
        hi: T,
    },
    SliceCols {
        x: usize,
        start: usize,
    },
    ConcatCols(Vec<usize>),
    StackSteps(Vec<usize>),
    Reshape(usize),
    Gather {
        table: usize,
        ids: Vec<usize>,
    },
    Mask {
        x: usize,
        mask: Vec<T>,
    },
    Softmax(usize),
    CrossEntropy {
        probs: usize,
        targets: Vec<usize>,
    },
    SoftmaxCrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
    BinaryCrossEntropy {
        pred: usize,
        labels: Vec<T>,
    },
    Sum(usize),
    SumSquares {
        inputs: Vec<usize>,
        lambda: T,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Dropout keep-mask with inverted scaling already folded in.
#[derive(Clone, Debug)]
pub struct DropoutMask<T> {
    shape: Vec<usize>,
    scale: Vec<T>,
}

impl<T: Scalar> DropoutMask<T> {
    /// Each element is kept with probability `1 - rate`; kept elements are
    /// scaled by `1 / (1 - rate)`.
    pub fn sample(shape: &[usize], rate: f64, rng: &mut RngStream) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
        let n = shape.iter().product();
        let scale = (0..n)
            .map(|_| if rng.unit() < rate { T::zero() } else { keep })
            .collect();
        Self {
            shape: shape.to_vec(),
            scale,
        }
    }

    pub fn values(&self) -> &[T] {
        &self.scale
    }
}

/// Inverted dropout on a plain tensor. Identity when `training` is false or
/// `rate` is zero.
pub fn dropout<T: Scalar>(
    x: &Tensor<T>,
    rate: f64,
    rng: &mut RngStream,
    training: bool,
) -> Tensor<T> {
    if !training || rate == 0.0 {
        return x.clone();
    }
    let mask = DropoutMask::<T>::sample(x.shape(), rate, rng);
    let mut out = x.clone();
    out.clear_grad();
    for (o, &m) in out.data_mut().iter_mut().zip(&mask.scale) {
        *o = *o * m;
    }
    out
}

#[derive(Debug, Default)]
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, mut value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        value.clear_grad();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// Constant input; gradients are not tracked through it.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf. The tensor is copied onto the tape.
    pub fn param(&mut self, value: &Tensor<T>) -> Var {
        self.push(value.clone(), Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    /// Gradient accumulated by the last [`Graph::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a.0, b.0]);
        Ok(self.push(out, Op::MatMul(a.0, b.0), rg))
    }

    /// `x + bias` with `bias` broadcast over the rows of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.len() != xv.cols() {
            return Err(shape_err("add_bias", xv.shape(), bv.shape()));
        }
        let mut out = xv.clone();
        let n = bv.len();
        for row in out.data_mut().chunks_mut(n) {
            row.iter_mut()
                .zip(bv.data())
                .for_each(|(o, &b)| *o = *o + b);
        }
        let rg = self.needs(&[x.0, bias.0]);
        Ok(self.push(out, Op::AddBias(x.0, bias.0), rg))
    }

    fn zip_op(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(name, av.shape(), bv.shape()));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_op(a, b, "add", |x, y| x + y)?;
        let rg = self.needs(&[a.0, b.0]);
        Ok(self.push(out, Op::Add(a.0, b.0), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_op(a, b, "mul", |x, y| x * y)?;
        let rg = self.needs(&[a.0, b.0]);
        Ok(self.push(out, Op::Mul(a.0, b.0), rg))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let out = self.value(x).map(|v| v * c);
        let rg = self.needs(&[x.0]);
        self.push(out, Op::Scale(x.0, c), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let rg = self.needs(&[x.0]);
        self.push(out, Op::Sigmoid(x.0), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        let rg = self.needs(&[x.0]);
        self.push(out, Op::Tanh(x.0), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::zero()));
        let rg = self.needs(&[x.0]);
        self.push(out, Op::Relu(x.0), rg)
    }

    /// Elementwise clamp; the gradient is zero where the bound is active.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        let out = self.value(x).map(|v| v.max(lo).min(hi));
        let rg = self.needs(&[x.0]);
        self.push(out, Op::Clamp { x: x.0, lo, hi }, rg)
    }

    /// Columns `start..start + len` of a 2-D value.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let cols = xv.cols();
        if xv.shape().len() != 2 || start + len > cols || len == 0 {
            return Err(shape_err("slice_cols", xv.shape(), &[start, len]));
        }
        let rows = xv.rows();
        let mut data = Vec::with_capacity(rows * len);
        for row in xv.data().chunks(cols) {
            data.extend_from_slice(&row[start..start + len]);
        }
        let out = Tensor::new(vec![rows, len], data)?;
        let rg = self.needs(&[x.0]);
        Ok(self.push(out, Op::SliceCols { x: x.0, start }, rg))
    }

    /// Concatenate 2-D values with equal row counts along the columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::usage("concat_cols needs inputs"))?;
        let rows = self.value(*first).rows();
        let mut total = 0;
        for p in parts {
            let v = self.value(*p);
            if v.shape().len() != 2 || v.rows() != rows {
                return Err(shape_err(
                    "concat_cols",
                    self.value(*first).shape(),
                    v.shape(),
                ));
            }
            total += v.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                let v = self.value(*p);
                let c = v.cols();
                data.extend_from_slice(&v.data()[r * c..(r + 1) * c]);
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.needs(&ids);
        Ok(self.push(out, Op::ConcatCols(ids), rg))
    }

    /// Stack `T` per-step `[B, H]` values into a `[B, T, H]` sequence.
    pub fn stack_steps(&mut self, steps: &[Var]) -> Result<Var> {
        let first = steps
            .first()
            .ok_or_else(|| Error::usage("stack_steps needs inputs"))?;
        let shape = self.value(*first).shape().to_vec();
        if shape.len() != 2 {
            return Err(shape_err("stack_steps", &shape, &[]));
        }
        let (b, h, t) = (shape[0], shape[1], steps.len());
        let mut data = vec![T::zero(); b * t * h];
        for (ti, s) in steps.iter().enumerate() {
            let v = self.value(*s);
            if v.shape() != shape.as_slice() {
                return Err(shape_err("stack_steps", &shape, v.shape()));
            }
            for bi in 0..b {
                let dst = (bi * t + ti) * h;
                data[dst..dst + h].copy_from_slice(&v.data()[bi * h..(bi + 1) * h]);
            }
        }
        let out = Tensor::new(vec![b, t, h], data)?;
        let ids: Vec<usize> = steps.iter().map(|p| p.0).collect();
        let rg = self.needs(&ids);
        Ok(self.push(out, Op::StackSteps(ids), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        let rg = self.needs(&[x.0]);
        Ok(self.push(out, Op::Reshape(x.0), rg))
    }

    /// Rows of `table` selected by `ids` (an embedding lookup).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if tv.shape().len() != 2 || ids.is_empty() {
            return Err(shape_err("gather", tv.shape(), &[ids.len()]));
        }
        let (rows, cols) = (tv.shape()[0], tv.cols());
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index {
                    what: "embedding table",
                    index: id,
                    size: rows,
                });
            }
            data.extend_from_slice(&tv.data()[id * cols..(id + 1) * cols]);
        }
        let out = Tensor::new(vec![ids.len(), cols], data)?;
        let rg = self.needs(&[table.0]);
        Ok(self.push(
            out,
            Op::Gather {
                table: table.0,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Multiply by a pre-sampled dropout mask.
    pub fn apply_mask(&mut self, x: Var, mask: &DropoutMask<T>) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != mask.shape.as_slice() {
            return Err(shape_err("dropout", xv.shape(), &mask.shape));
        }
        let data = xv
            .data()
            .iter()
            .zip(&mask.scale)
            .map(|(&a, &m)| a * m)
            .collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.needs(&[x.0]);
        Ok(self.push(
            out,
            Op::Mask {
                x: x.0,
                mask: mask.scale.clone(),
            },
            rg,
        ))
    }

    /// Inverted dropout with a freshly sampled mask; identity outside training.
    pub fn dropout(
        &mut self,
        x: Var,
        rate: f64,
        rng: &mut RngStream,
        training: bool,
    ) -> Result<Var> {
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let mask = DropoutMask::sample(self.value(x).shape(), rate, rng);
        self.apply_mask(x, &mask)
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let out = self.value(x).softmax();
        let rg = self.needs(&[x.0]);
        self.push(out, Op::Softmax(x.0), rg)
    }

    fn check_targets(&self, x: Var, targets: &[usize]) -> Result<()> {
        let v = self.value(x);
        if v.rows() != targets.len() {
            return Err(shape_err("cross_entropy", v.shape(), &[targets.len()]));
        }
        let classes = v.cols();
        if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
            return Err(Error::Index {
                what: "class id",
                index: bad,
                size: classes,
            });
        }
        Ok(())
    }

    /// Mean of `-ln p[target]` over all rows of a probability tensor.
    pub fn cross_entropy(&mut self, probs: Var, targets: &[usize]) -> Result<Var> {
        self.check_targets(probs, targets)?;
        let pv = self.value(probs);
        let classes = pv.cols();
        let eps = T::from_f64_lossy(PROB_EPS);
        let mut total = T::zero();
        for (row, &t) in pv.data().chunks(classes).zip(targets) {
            total = total - row[t].max(eps).ln();
        }
        let loss = total / T::from_usize(targets.len()).unwrap();
        let rg = self.needs(&[probs.0]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                probs: probs.0,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Softmax followed by [`Graph::cross_entropy`], fused for stability.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        self.check_targets(logits, targets)?;
        let probs = self.value(logits).softmax();
        let classes = probs.cols();
        let lv = self.value(logits);
        let mut total = T::zero();
        for ((row, prow), &t) in lv
            .data()
            .chunks(classes)
            .zip(probs.data().chunks(classes))
            .zip(targets)
        {
            // -ln softmax(x)[t] = logsumexp(x) - x[t]
            let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
            let lse = max + row.iter().fold(T::zero(), |s, &x| s + (x - max).exp()).ln();
            total = total + lse - row[t];
            debug_assert!(prow[t] >= T::zero());
        }
        let loss = total / T::from_usize(targets.len()).unwrap();
        let rg = self.needs(&[logits.0]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                probs: probs.into_data(),
            },
            rg,
        ))
    }

    /// Mean binary cross-entropy of `[B, 1]` probabilities against 0/1 labels.
    pub fn binary_cross_entropy(&mut self, pred: Var, labels: &[T]) -> Result<Var> {
        let pv = self.value(pred);
        if pv.len() != labels.len() {
            return Err(shape_err(
                "binary_cross_entropy",
                pv.shape(),
                &[labels.len()],
            ));
        }
        let eps = T::from_f64_lossy(PROB_EPS);
        let one = T::one();
        let mut total = T::zero();
        for (&p, &y) in pv.data().iter().zip(labels) {
            let p = p.max(eps).min(one - eps);
            total = total - (y * p.ln() + (one - y) * (one - p).ln());
        }
        let loss = total / T::from_usize(labels.len()).unwrap();
        let rg = self.needs(&[pred.0]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BinaryCrossEntropy {
                pred: pred.0,
                labels: labels.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().fold(T::zero(), |a, &b| a + b);
        let rg = self.needs(&[x.0]);
        self.push(Tensor::scalar(s), Op::Sum(x.0), rg)
    }

    /// `lambda * Σ w²` over every element of every input.
    pub fn l2_penalty(&mut self, inputs: &[Var], lambda: T) -> Var {
        let s = inputs
            .iter()
            .fold(T::zero(), |acc, v| acc + self.value(*v).sum_squares());
        let ids: Vec<usize> = inputs.iter().map(|v| v.0).collect();
        let rg = self.needs(&ids);
        self.push(
            Tensor::scalar(lambda * s),
            Op::SumSquares {
                inputs: ids,
                lambda,
            },
            rg,
        )
    }

    /// Populate gradients of `loss` (a single-element value) w.r.t. every
    /// node that requires them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(shape_err("backward", self.value(loss).shape(), &[1]));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            self.backprop_node(i, &g);
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    fn grad_buf(&mut self, i: usize) -> Option<Vec<T>> {
        let node = &mut self.nodes[i];
        if !node.requires_grad {
            return None;
        }
        Some(
            node.grad
                .take()
                .unwrap_or_else(|| vec![T::zero(); node.value.len()]),
        )
    }

    fn accumulate(&mut self, i: usize, f: impl FnOnce(&Self, &mut [T])) {
        if let Some(mut buf) = self.grad_buf(i) {
            f(self, &mut buf);
            self.nodes[i].grad = Some(buf);
        }
    }

    fn backprop_node(&mut self, i: usize, g: &[T]) {
        // Move the op out so its payload can be read while other nodes mutate.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let (m, k) = (
                    self.nodes[a].value.shape()[0],
                    self.nodes[a].value.shape()[1],
                );
                let n = self.nodes[b].value.shape()[1];
                // dA += dC · Bᵀ
                self.accumulate(a, |s, da| {
                    let bv = s.nodes[b].value.data();
                    T::gemm(
                        m,
                        n,
                        k,
                        g,
                        n as isize,
                        1,
                        bv,
                        1,
                        n as isize,
                        T::one(),
                        da,
                        k as isize,
                        1,
                    );
                });
                // dB += Aᵀ · dC
                self.accumulate(b, |s, db| {
                    let av = s.nodes[a].value.data();
                    T::gemm(
                        k,
                        m,
                        n,
                        av,
                        1,
                        k as isize,
                        g,
                        n as isize,
                        1,
                        T::one(),
                        db,
                        n as isize,
                        1,
                    );
                });
            }
            Op::AddBias(x, bias) => {
                self.accumulate(*x, |_, dx| add_into(dx, g));
                self.accumulate(*bias, |_, db| {
                    let n = db.len();
                    for row in g.chunks(n) {
                        add_into(db, row);
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(*a, |_, da| add_into(da, g));
                self.accumulate(*b, |_, db| add_into(db, g));
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                self.accumulate(a, |s, da| {
                    for ((d, &gi), &bv) in da.iter_mut().zip(g).zip(s.nodes[b].value.data()) {
                        *d = *d + gi * bv;
                    }
                });
                self.accumulate(b, |s, db| {
                    for ((d, &gi), &av) in db.iter_mut().zip(g).zip(s.nodes[a].value.data()) {
                        *d = *d + gi * av;
                    }
                });
            }
            Op::Scale(x, c) => {
                let c = *c;
                self.accumulate(*x, |_, dx| {
                    dx.iter_mut().zip(g).for_each(|(d, &gi)| *d = *d + gi * c)
                });
            }
            Op::Sigmoid(x) => {
                self.accumulate(*x, |s, dx| {
                    for ((d, &gi), &y) in dx.iter_mut().zip(g).zip(s.nodes[i].value.data()) {
                        *d = *d + gi * y * (T::one() - y);
                    }
                });
            }
            Op::Tanh(x) => {
                self.accumulate(*x, |s, dx| {
                    for ((d, &gi), &y) in dx.iter_mut().zip(g).zip(s.nodes[i].value.data()) {
                        *d = *d + gi * (T::one() - y * y);
                    }
                });
            }
            Op::Relu(x) => {
                let x = *x;
                self.accumulate(x, |s, dx| {
                    for ((d, &gi), &v) in dx.iter_mut().zip(g).zip(s.nodes[x].value.data()) {
                        if v > T::zero() {
                            *d = *d + gi;
                        }
                    }
                });
            }
            Op::Clamp { x, lo, hi } => {
                let (x, lo, hi) = (*x, *lo, *hi);
                self.accumulate(x, |s, dx| {
                    for ((d, &gi), &v) in dx.iter_mut().zip(g).zip(s.nodes[x].value.data()) {
                        if v > lo && v < hi {
                            *d = *d + gi;
                        }
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let start = *start;
                let len = self.nodes[i].value.cols();
                self.accumulate(*x, |s, dx| {
                    let cols = s.nodes[*x].value.cols();
                    for (drow, grow) in dx.chunks_mut(cols).zip(g.chunks(len)) {
                        add_into(&mut drow[start..start + len], grow);
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = self.nodes[i].value.cols();
                let mut offset = 0;
                for &p in parts {
                    let c = self.nodes[p].value.cols();
                    self.accumulate(p, |_, dp| {
                        for (drow, grow) in dp.chunks_mut(c).zip(g.chunks(total)) {
                            add_into(drow, &grow[offset..offset + c]);
                        }
                    });
                    offset += c;
                }
            }
            Op::StackSteps(steps) => {
                let shape = self.nodes[i].value.shape().to_vec();
                let (b, t, h) = (shape[0], shape[1], shape[2]);
                for (ti, &sidx) in steps.iter().enumerate() {
                    self.accumulate(sidx, |_, ds| {
                        for bi in 0..b {
                            let src = (bi * t + ti) * h;
                            add_into(&mut ds[bi * h..(bi + 1) * h], &g[src..src + h]);
                        }
                    });
                }
            }
            Op::Reshape(x) => self.accumulate(*x, |_, dx| add_into(dx, g)),
            Op::Gather { table, ids } => {
                let cols = self.nodes[i].value.cols();
                self.accumulate(*table, |_, dt| {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(
                            &mut dt[id * cols..(id + 1) * cols],
                            &g[r * cols..(r + 1) * cols],
                        );
                    }
                });
            }
            Op::Mask { x, mask } => {
                self.accumulate(*x, |_, dx| {
                    for ((d, &gi), &m) in dx.iter_mut().zip(g).zip(mask) {
                        *d = *d + gi * m;
                    }
                });
            }
            Op::Softmax(x) => {
                self.accumulate(*x, |s, dx| {
                    let p = &s.nodes[i].value;
                    let cols = p.cols();
                    for ((drow, grow), prow) in dx
                        .chunks_mut(cols)
                        .zip(g.chunks(cols))
                        .zip(p.data().chunks(cols))
                    {
                        let dot = grow
                            .iter()
                            .zip(prow)
                            .fold(T::zero(), |a, (&gi, &pi)| a + gi * pi);
                        for ((d, &gi), &pi) in drow.iter_mut().zip(grow).zip(prow) {
                            *d = *d + pi * (gi - dot);
                        }
                    }
                });
            }
            Op::CrossEntropy { probs, targets } => {
                let probs = *probs;
                let scale = g[0] / T::from_usize(targets.len()).unwrap();
                let eps = T::from_f64_lossy(PROB_EPS);
                self.accumulate(probs, |s, dp| {
                    let pv = &s.nodes[probs].value;
                    let cols = pv.cols();
                    for (r, &t) in targets.iter().enumerate() {
                        let p = pv.data()[r * cols + t];
                        if p > eps {
                            dp[r * cols + t] = dp[r * cols + t] - scale / p;
                        }
                    }
                });
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let scale = g[0] / T::from_usize(targets.len()).unwrap();
                self.accumulate(*logits, |_, dl| {
                    let cols = probs.len() / targets.len();
                    for (r, &t) in targets.iter().enumerate() {
                        let row = &mut dl[r * cols..(r + 1) * cols];
                        for (d, &p) in row.iter_mut().zip(&probs[r * cols..(r + 1) * cols]) {
                            *d = *d + scale * p;
                        }
                        row[t] = row[t] - scale;
                    }
                });
            }
            Op::BinaryCrossEntropy { pred, labels } => {
                let pred = *pred;
                let scale = g[0] / T::from_usize(labels.len()).unwrap();
                let eps = T::from_f64_lossy(PROB_EPS);
                let one = T::one();
                self.accumulate(pred, |s, dp| {
                    for ((d, &p), &y) in dp.iter_mut().zip(s.nodes[pred].value.data()).zip(labels) {
                        if p > eps && p < one - eps {
                            *d = *d + scale * (-y / p + (one - y) / (one - p));
                        }
                    }
                });
            }
            Op::Sum(x) => {
                let gi = g[0];
                self.accumulate(*x, |_, dx| dx.iter_mut().for_each(|d| *d = *d + gi));
            }
            Op::SumSquares { inputs, lambda } => {
                let c = g[0] * (*lambda + *lambda);
                for &p in inputs {
                    self.accumulate(p, |s, dp| {
                        for (d, &w) in dp.iter_mut().zip(s.nodes[p].value.data()) {
                            *d = *d + c * w;
                        }
                    });
                }
            }
        }
        self.nodes[i].op = op;
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
}

/// Softmax of each row of a plain slice; used by inference paths that skip the tape.
pub fn softmax_rows<T: Scalar>(data: &mut [T], cols: usize) {
    for row in data.chunks_mut(cols) {
        softmax_in_place(row);
    }
}
