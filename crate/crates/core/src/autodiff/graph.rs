//! Define-by-run computation graph.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and `backward` is a single reverse sweep. A graph is
//! meant to live for one forward/backward pass and then be dropped.
//! Parameters enter by reference, which keeps binding a large embedding
//! table free.

use std::borrow::Cow;

use super::tensor::{dims2, Tensor};
use crate::error::ShapeError;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    Softmax(Var, usize),
    Concat(Var, Var, usize),
    Sum(Var),
    SumAxis(Var, usize),
    LogSumExp(Var, usize),
    Gather(Var, Vec<usize>),
    Reshape(Var),
    CrossEntropy(Var, Vec<usize>),
}

struct Node<'p> {
    value: Cow<'p, [f64]>,
    shape: Vec<usize>,
    op: Op,
    requires_grad: bool,
    tracked: bool,
}

pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    grads: Vec<Option<Vec<f64>>>,
    sparse: Vec<Vec<(usize, Vec<f64>)>>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            sparse: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'p, [f64]>, shape: Vec<usize>, op: Op, requires_grad: bool) -> Var {
        let tracked = requires_grad
            || match &op {
                Op::Leaf => false,
                Op::MatMul(a, b) | Op::Binary(_, a, b) | Op::Concat(a, b, _) => {
                    self.nodes[a.0].tracked || self.nodes[b.0].tracked
                }
                Op::Unary(_, x)
                | Op::Softmax(x, _)
                | Op::Sum(x)
                | Op::SumAxis(x, _)
                | Op::LogSumExp(x, _)
                | Op::Gather(x, _)
                | Op::Reshape(x)
                | Op::CrossEntropy(x, _) => self.nodes[x.0].tracked,
            };
        self.nodes.push(Node {
            value,
            shape,
            op,
            requires_grad,
            tracked,
        });
        self.grads.push(None);
        self.sparse.push(Vec::new());
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf borrowed from a parameter store.
    pub fn param(&mut self, t: &'p Tensor) -> Var {
        self.push(Cow::Borrowed(t.data()), t.shape().to_vec(), Op::Leaf, true)
    }

    /// Trainable leaf that owns its values.
    pub fn input(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(Cow::Owned(t.into_data()), shape, Op::Leaf, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(Cow::Owned(t.into_data()), shape, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.to_vec()).expect("node shape is consistent")
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(ShapeError::Mismatch {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, y) in orow.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        Ok(self.push(Cow::Owned(out), vec![m, n], Op::MatMul(a, b), false))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        self.binary(Binary::Add, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        self.binary(Binary::Mul, a, b)
    }

    /// `a - b`, composed as `a + (-1) * b`.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, ShapeError> {
        let k = self.constant(Tensor::scalar(c));
        self.mul(x, k)
    }

    /// Elementwise binary op with 2-D broadcasting: each axis must agree or be 1.
    pub fn binary(&mut self, op: Binary, a: Var, b: Var) -> Result<Var, ShapeError> {
        let plan = Broadcast::plan(self.shape(a), self.shape(b)).ok_or_else(|| ShapeError::Mismatch {
            op: match op {
                Binary::Add => "add",
                Binary::Mul => "mul",
            },
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        })?;
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(plan.rows * plan.cols);
        for i in 0..plan.rows {
            for j in 0..plan.cols {
                let x = av[plan.a_index(i, j)];
                let y = bv[plan.b_index(i, j)];
                out.push(match op {
                    Binary::Add => x + y,
                    Binary::Mul => x * y,
                });
            }
        }
        let shape = plan.out_shape.clone();
        Ok(self.push(Cow::Owned(out), shape, Op::Binary(op, a, b), false))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Unary::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn unary(&mut self, op: Unary, x: Var) -> Var {
        let out: Vec<f64> = self
            .value(x)
            .iter()
            .map(|&v| match op {
                Unary::Tanh => v.tanh(),
                Unary::Sigmoid => sigmoid(v),
            })
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(Cow::Owned(out), shape, Op::Unary(op, x), false)
    }

    /// Max-shifted softmax along `axis` (the only axis of a vector, or 0/1 of a matrix).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, ShapeError> {
        let lanes = Lanes::new("softmax", self.shape(x), axis)?;
        let mut out = self.value(x).to_vec();
        for lane in 0..lanes.count {
            let max = lanes.iter(lane).map(|i| out[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for i in lanes.iter(lane) {
                out[i] = (out[i] - max).exp();
                total += out[i];
            }
            for i in lanes.iter(lane) {
                out[i] /= total;
            }
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(Cow::Owned(out), shape, Op::Softmax(x, axis), false))
    }

    /// Concatenation along `axis`. Vectors concatenate along axis 0; matrices
    /// stack rows (axis 0) or join columns (axis 1).
    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var, ShapeError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let mismatch = || ShapeError::Mismatch {
            op: "concat",
            left: sa.clone(),
            right: sb.clone(),
        };
        let (av, bv) = (self.value(a), self.value(b));
        let (out, shape) = match (sa.len(), sb.len(), axis) {
            (1, 1, 0) => {
                let mut out = av.to_vec();
                out.extend_from_slice(bv);
                (out, vec![sa[0] + sb[0]])
            }
            (2, 2, 0) if sa[1] == sb[1] => {
                let mut out = av.to_vec();
                out.extend_from_slice(bv);
                (out, vec![sa[0] + sb[0], sa[1]])
            }
            (2, 2, 1) if sa[0] == sb[0] => {
                let (r, ca, cb) = (sa[0], sa[1], sb[1]);
                let mut out = Vec::with_capacity(r * (ca + cb));
                for i in 0..r {
                    out.extend_from_slice(&av[i * ca..(i + 1) * ca]);
                    out.extend_from_slice(&bv[i * cb..(i + 1) * cb]);
                }
                (out, vec![r, ca + cb])
            }
            _ => return Err(mismatch()),
        };
        Ok(self.push(Cow::Owned(out), shape, Op::Concat(a, b, axis), false))
    }

    /// Sum of all entries, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().sum();
        self.push(Cow::Owned(vec![total]), vec![1], Op::Sum(x), false)
    }

    /// Sum along `axis`, keeping it as a length-1 axis.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var, ShapeError> {
        let lanes = Lanes::new("sum_axis", self.shape(x), axis)?;
        let v = self.value(x);
        let out = (0..lanes.count).map(|l| lanes.iter(l).map(|i| v[i]).sum()).collect();
        let shape = lanes.reduced_shape(self.shape(x));
        Ok(self.push(Cow::Owned(out), shape, Op::SumAxis(x, axis), false))
    }

    /// `log Σ exp` along `axis`, keeping it as a length-1 axis.
    pub fn log_sum_exp(&mut self, x: Var, axis: usize) -> Result<Var, ShapeError> {
        let lanes = Lanes::new("log_sum_exp", self.shape(x), axis)?;
        let v = self.value(x);
        let out = (0..lanes.count)
            .map(|l| log_sum_exp(lanes.iter(l).map(|i| v[i])))
            .collect();
        let shape = lanes.reduced_shape(self.shape(x));
        Ok(self.push(Cow::Owned(out), shape, Op::LogSumExp(x, axis), false))
    }

    /// Row gather from a matrix; also serves as embedding lookup.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, ShapeError> {
        let shape = self.shape(x);
        if shape.len() != 2 {
            return Err(ShapeError::Rank {
                op: "gather_rows",
                expected: "matrix",
                got: shape.to_vec(),
            });
        }
        let (r, c) = (shape[0], shape[1]);
        let v = self.value(x);
        let mut out = Vec::with_capacity(rows.len() * c);
        for &row in rows {
            if row >= r {
                return Err(ShapeError::Index {
                    op: "gather_rows",
                    index: row,
                    extent: r,
                });
            }
            out.extend_from_slice(&v[row * c..(row + 1) * c]);
        }
        Ok(self.push(Cow::Owned(out), vec![rows.len(), c], Op::Gather(x, rows.to_vec()), false))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, ShapeError> {
        let n = self.value(x).len();
        if shape.iter().product::<usize>() != n {
            return Err(ShapeError::Size {
                op: "reshape",
                values: n,
                shape: shape.to_vec(),
            });
        }
        let out = self.value(x).to_vec();
        Ok(self.push(Cow::Owned(out), shape.to_vec(), Op::Reshape(x), false))
    }

    /// Mean negative log-softmax of the target entry of each row.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, ShapeError> {
        let (rows, cols) = dims2(self.shape(logits));
        if self.shape(logits).len() > 2 || rows != targets.len() || rows == 0 {
            return Err(ShapeError::Mismatch {
                op: "cross_entropy",
                left: self.shape(logits).to_vec(),
                right: vec![targets.len()],
            });
        }
        let v = self.value(logits);
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= cols {
                return Err(ShapeError::Index {
                    op: "cross_entropy",
                    index: t,
                    extent: cols,
                });
            }
            let row = &v[i * cols..(i + 1) * cols];
            total += log_sum_exp(row.iter().copied()) - row[t];
        }
        let out = vec![total / rows as f64];
        Ok(self.push(Cow::Owned(out), vec![1], Op::CrossEntropy(logits, targets.to_vec()), false))
    }

    /// Reverse sweep from a scalar `loss`. Gradients of trainable leaves
    /// accumulate across calls until [`Graph::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<(), ShapeError> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(ShapeError::NonScalarLoss(self.nodes[loss.0].shape.clone()));
        }
        let mut work: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        work[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = work[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    if node.requires_grad {
                        add_into(&mut self.grads[idx], &g);
                    }
                }
                Op::MatMul(a, b) => {
                    let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
                    let (m, k, n) = (sa[0], sa[1], sb[1]);
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    if self.nodes[a.0].tracked {
                        let mut ga = vec![0.0; m * k];
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let brow = &bv[p * n..(p + 1) * n];
                                ga[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                            }
                        }
                        add_into(&mut work[a.0], &ga);
                    }
                    if self.nodes[b.0].tracked {
                        let mut gb = vec![0.0; k * n];
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let x = av[i * k + p];
                                if x == 0.0 {
                                    continue;
                                }
                                for (o, y) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *o += x * y;
                                }
                            }
                        }
                        add_into(&mut work[b.0], &gb);
                    }
                }
                Op::Binary(op, a, b) => {
                    let plan = Broadcast::plan(&self.nodes[a.0].shape, &self.nodes[b.0].shape)
                        .expect("validated in forward");
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let mut ga = self.nodes[a.0].tracked.then(|| vec![0.0; av.len()]);
                    let mut gb = self.nodes[b.0].tracked.then(|| vec![0.0; bv.len()]);
                    for i in 0..plan.rows {
                        for j in 0..plan.cols {
                            let go = g[i * plan.cols + j];
                            let (ia, ib) = (plan.a_index(i, j), plan.b_index(i, j));
                            let (da, db) = match op {
                                Binary::Add => (go, go),
                                Binary::Mul => (go * bv[ib], go * av[ia]),
                            };
                            if let Some(ga) = ga.as_mut() {
                                ga[ia] += da;
                            }
                            if let Some(gb) = gb.as_mut() {
                                gb[ib] += db;
                            }
                        }
                    }
                    if let Some(ga) = ga {
                        add_into(&mut work[a.0], &ga);
                    }
                    if let Some(gb) = gb {
                        add_into(&mut work[b.0], &gb);
                    }
                }
                Op::Unary(op, x) => {
                    let y = &node.value;
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(y.iter())
                        .map(|(go, &y)| match op {
                            Unary::Tanh => go * (1.0 - y * y),
                            Unary::Sigmoid => go * y * (1.0 - y),
                        })
                        .collect();
                    add_into(&mut work[x.0], &gx);
                }
                Op::Softmax(x, axis) => {
                    let lanes = Lanes::new("softmax", &node.shape, *axis).expect("validated");
                    let y = &node.value;
                    let mut gx = vec![0.0; y.len()];
                    for lane in 0..lanes.count {
                        let dot: f64 = lanes.iter(lane).map(|i| g[i] * y[i]).sum();
                        for i in lanes.iter(lane) {
                            gx[i] = y[i] * (g[i] - dot);
                        }
                    }
                    add_into(&mut work[x.0], &gx);
                }
                Op::Concat(a, b, axis) => {
                    let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
                    let (ga, gb) = if sa.len() == 2 && *axis == 1 {
                        let (r, ca, cb) = (sa[0], sa[1], sb[1]);
                        let mut ga = Vec::with_capacity(r * ca);
                        let mut gb = Vec::with_capacity(r * cb);
                        for i in 0..r {
                            let row = &g[i * (ca + cb)..(i + 1) * (ca + cb)];
                            ga.extend_from_slice(&row[..ca]);
                            gb.extend_from_slice(&row[ca..]);
                        }
                        (ga, gb)
                    } else {
                        let na = self.nodes[a.0].value.len();
                        (g[..na].to_vec(), g[na..].to_vec())
                    };
                    if self.nodes[a.0].tracked {
                        add_into(&mut work[a.0], &ga);
                    }
                    if self.nodes[b.0].tracked {
                        add_into(&mut work[b.0], &gb);
                    }
                }
                Op::Sum(x) => {
                    let gx = vec![g[0]; self.nodes[x.0].value.len()];
                    add_into(&mut work[x.0], &gx);
                }
                Op::SumAxis(x, axis) => {
                    let lanes = Lanes::new("sum_axis", &self.nodes[x.0].shape, *axis).expect("validated");
                    let mut gx = vec![0.0; self.nodes[x.0].value.len()];
                    for lane in 0..lanes.count {
                        for i in lanes.iter(lane) {
                            gx[i] = g[lane];
                        }
                    }
                    add_into(&mut work[x.0], &gx);
                }
                Op::LogSumExp(x, axis) => {
                    let lanes = Lanes::new("log_sum_exp", &self.nodes[x.0].shape, *axis).expect("validated");
                    let xv = &self.nodes[x.0].value;
                    let mut gx = vec![0.0; xv.len()];
                    for lane in 0..lanes.count {
                        let lse = node.value[lane];
                        for i in lanes.iter(lane) {
                            gx[i] = g[lane] * (xv[i] - lse).exp();
                        }
                    }
                    add_into(&mut work[x.0], &gx);
                }
                Op::Gather(x, rows) => {
                    let source = &self.nodes[x.0];
                    let c = source.shape[1];
                    if matches!(source.op, Op::Leaf) {
                        if source.requires_grad {
                            for (k, &row) in rows.iter().enumerate() {
                                self.sparse[x.0].push((row, g[k * c..(k + 1) * c].to_vec()));
                            }
                        }
                    } else {
                        let mut gx = vec![0.0; source.value.len()];
                        for (k, &row) in rows.iter().enumerate() {
                            for (o, v) in gx[row * c..(row + 1) * c].iter_mut().zip(&g[k * c..(k + 1) * c]) {
                                *o += v;
                            }
                        }
                        add_into(&mut work[x.0], &gx);
                    }
                }
                Op::Reshape(x) => add_into(&mut work[x.0], &g),
                Op::CrossEntropy(x, targets) => {
                    let xv = &self.nodes[x.0].value;
                    let (rows, cols) = dims2(&self.nodes[x.0].shape);
                    let mut gx = vec![0.0; xv.len()];
                    let scale = g[0] / rows as f64;
                    for (i, &t) in targets.iter().enumerate() {
                        let row = &xv[i * cols..(i + 1) * cols];
                        let lse = log_sum_exp(row.iter().copied());
                        for j in 0..cols {
                            let p = (row[j] - lse).exp();
                            gx[i * cols + j] = scale * (p - if j == t { 1.0 } else { 0.0 });
                        }
                    }
                    add_into(&mut work[x.0], &gx);
                }
            }
        }
        Ok(())
    }

    /// Accumulated gradient of a trainable leaf, or `None` if nothing reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        if self.grads[v.0].is_none() && self.sparse[v.0].is_empty() {
            return None;
        }
        let mut out = vec![0.0; self.nodes[v.0].value.len()];
        self.accumulate_grad(v, &mut out);
        Some(Tensor::new(self.nodes[v.0].shape.clone(), out).expect("leaf shape"))
    }

    /// Adds the gradient of leaf `v` into `out` (which must match its size).
    pub fn accumulate_grad(&self, v: Var, out: &mut [f64]) {
        if let Some(g) = &self.grads[v.0] {
            for (o, x) in out.iter_mut().zip(g) {
                *o += x;
            }
        }
        if let Some(c) = self.nodes[v.0].shape.get(1).copied() {
            for (row, g) in &self.sparse[v.0] {
                for (o, x) in out[row * c..(row + 1) * c].iter_mut().zip(g) {
                    *o += x;
                }
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
        self.sparse.iter_mut().for_each(Vec::clear);
    }
}

fn add_into(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted `log Σ exp`; `-inf` for an empty iterator.
pub fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

struct Broadcast {
    rows: usize,
    cols: usize,
    a: (usize, usize),
    b: (usize, usize),
    out_shape: Vec<usize>,
}

impl Broadcast {
    fn plan(sa: &[usize], sb: &[usize]) -> Option<Self> {
        if sa.len() > 2 || sb.len() > 2 || sa.is_empty() || sb.is_empty() {
            return None;
        }
        let (a, b) = (dims2(sa), dims2(sb));
        let join = |x: usize, y: usize| match (x, y) {
            _ if x == y => Some(x),
            (1, y) => Some(y),
            (x, 1) => Some(x),
            _ => None,
        };
        let rows = join(a.0, b.0)?;
        let cols = join(a.1, b.1)?;
        let out_shape = if sa.len() == 1 && sb.len() == 1 {
            vec![cols]
        } else {
            vec![rows, cols]
        };
        Some(Self {
            rows,
            cols,
            a,
            b,
            out_shape,
        })
    }

    fn a_index(&self, i: usize, j: usize) -> usize {
        index(self.a, i, j)
    }

    fn b_index(&self, i: usize, j: usize) -> usize {
        index(self.b, i, j)
    }
}

fn index((r, c): (usize, usize), i: usize, j: usize) -> usize {
    let i = if r == 1 { 0 } else { i };
    let j = if c == 1 { 0 } else { j };
    i * c + j
}

/// Strided 1-D lanes of a vector or matrix along one axis.
struct Lanes {
    count: usize,
    len: usize,
    lane_stride: usize,
    step: usize,
    axis: usize,
}

impl Lanes {
    fn new(op: &'static str, shape: &[usize], axis: usize) -> Result<Self, ShapeError> {
        let lanes = match (shape, axis) {
            ([n], 0) => Self {
                count: 1,
                len: *n,
                lane_stride: 0,
                step: 1,
                axis,
            },
            ([r, c], 1) => Self {
                count: *r,
                len: *c,
                lane_stride: *c,
                step: 1,
                axis,
            },
            ([r, c], 0) => Self {
                count: *c,
                len: *r,
                lane_stride: 1,
                step: *c,
                axis,
            },
            _ => {
                return Err(ShapeError::Rank {
                    op,
                    expected: "vector (axis 0) or matrix (axis 0/1)",
                    got: shape.to_vec(),
                })
            }
        };
        if lanes.len == 0 {
            return Err(ShapeError::EmptyAxis {
                op,
                shape: shape.to_vec(),
            });
        }
        Ok(lanes)
    }

    fn iter(&self, lane: usize) -> impl Iterator<Item = usize> + Clone + '_ {
        let start = lane * self.lane_stride;
        (0..self.len).map(move |k| start + k * self.step)
    }

    fn reduced_shape(&self, shape: &[usize]) -> Vec<usize> {
        match shape {
            [_] => vec![1],
            [r, _] if self.axis == 1 => vec![*r, 1],
            [_, c] => vec![1, *c],
            _ => unreachable!(),
        }
    }
}
