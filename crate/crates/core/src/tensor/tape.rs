use std::fmt;
use std::sync::Arc;

use rand::Rng;

use super::{check_segments, Result, SparseMatrix, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An operation with a hand-written vector-Jacobian product, for fused
/// kernels that live outside this module.
pub trait CustomOp: fmt::Debug {
    fn name(&self) -> &'static str;

    /// Returns one gradient per input, shaped like that input.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor>;
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sum(Var),
    Mean(Var),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    GatherCols(Var, Vec<usize>),
    Transpose(Var),
    RowSoftmax(Var),
    SegmentSoftmax(Var, Vec<usize>),
    SegmentLogSoftmax(Var, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    ScaleRows(Var, Var),
    Dropout(Var, Vec<f64>),
    SpMM(Arc<SparseMatrix>, Var),
    Bce(Var, Arc<Tensor>, f64),
    Custom(Box<dyn CustomOp>, Vec<Var>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations in creation order, which is a topological order;
/// [`Tape::backward`] walks it once in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.nodes.len()).finish()
    }
}

/// Gradient buffers produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`; exactly zero when `v` does not reach the loss.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_t(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMulT(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "hadamard", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Hadamard(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.affine(a, factor, 0.0)
    }

    /// `factor · a + offset`, elementwise.
    pub fn affine(&mut self, a: Var, factor: f64, offset: f64) -> Var {
        let value = self.value(a).map(|x| factor * x + offset);
        let rg = self.rg(a);
        self.push(value, Op::Affine(a, factor), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.rg(a);
        self.push(value, Op::LeakyRelu(a, slope), rg)
    }

    /// Sum of all entries, as 1x1.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    /// Mean of all entries, as 1x1.
    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::scalar(t.sum() / t.len().max(1) as f64);
        let rg = self.rg(a);
        self.push(value, Op::Mean(a), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map_or(0, |&v| self.value(v).cols());
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    left: (rows, cols),
                    right: t.shape(),
                });
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::from_vec(rows, cols, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let cols = t.cols();
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index {
            if i >= t.rows() {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    len: t.rows(),
                });
            }
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor::from_vec(index.len(), cols, data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::GatherRows(a, index.to_vec()), rg))
    }

    pub fn gather_cols(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= t.cols()) {
            return Err(TensorError::IndexOutOfRange {
                op: "gather_cols",
                index: bad,
                len: t.cols(),
            });
        }
        let value = Tensor::from_fn(t.rows(), index.len(), |r, c| t.get(r, index[c]));
        let rg = self.rg(a);
        Ok(self.push(value, Op::GatherCols(a, index.to_vec()), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    /// Softmax along each row.
    pub fn row_softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut value = t.clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        let rg = self.rg(a);
        self.push(value, Op::RowSoftmax(a), rg)
    }

    /// Softmax over the rows of each segment `offsets[s]..offsets[s+1]`,
    /// independently for every column.
    pub fn segment_softmax(&mut self, a: Var, offsets: &[usize]) -> Result<Var> {
        let value = segment_softmax_value(self.value(a), offsets, false)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::SegmentSoftmax(a, offsets.to_vec()), rg))
    }

    /// Log of [`Tape::segment_softmax`], computed stably.
    pub fn segment_log_softmax(&mut self, a: Var, offsets: &[usize]) -> Result<Var> {
        let value = segment_softmax_value(self.value(a), offsets, true)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::SegmentLogSoftmax(a, offsets.to_vec()), rg))
    }

    /// Sums the rows of each segment; output has one row per segment.
    pub fn segment_sum(&mut self, a: Var, offsets: &[usize]) -> Result<Var> {
        let t = self.value(a);
        check_segments(offsets, t.rows(), "segment_sum")?;
        let segs = offsets.len() - 1;
        let mut value = Tensor::zeros(segs, t.cols());
        for s in 0..segs {
            for r in offsets[s]..offsets[s + 1] {
                for (o, &x) in value.row_mut(s).iter_mut().zip(t.row(r)) {
                    *o += x;
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(value, Op::SegmentSum(a, offsets.to_vec()), rg))
    }

    /// Multiplies row `i` of `x` by the scalar `w[i]`; `w` is a column vector.
    pub fn scale_rows(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xt, wt) = (self.value(x), self.value(w));
        if wt.cols() != 1 || wt.rows() != xt.rows() {
            return Err(mismatch("scale_rows", xt, wt));
        }
        let mut value = xt.clone();
        for r in 0..value.rows() {
            let f = wt.get(r, 0);
            value.row_mut(r).iter_mut().for_each(|v| *v *= f);
        }
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(value, Op::ScaleRows(x, w), rg))
    }

    /// Inverted dropout: kept entries are scaled by `1/(1-rate)`.
    /// A zero rate returns `a` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Domain(format!("dropout rate {rate} outside [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let t = self.value(a);
        let mask: Vec<f64> = (0..t.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let value = Tensor::from_vec(t.rows(), t.cols(), data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Dropout(a, mask), rg))
    }

    /// `matrix · a` with a constant sparse left operand.
    pub fn spmm(&mut self, matrix: Arc<SparseMatrix>, a: Var) -> Result<Var> {
        let value = matrix.matmul_dense(self.value(a))?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::SpMM(matrix, a), rg))
    }

    /// Mean binary cross-entropy between probabilities `pred` and constant
    /// `target`, with predictions clamped to `[eps, 1 - eps]`.
    pub fn bce_mean(&mut self, pred: Var, target: Arc<Tensor>, eps: f64) -> Result<Var> {
        let p = self.value(pred);
        p.expect_same_shape(&target, "bce_mean")?;
        let n = p.len().max(1) as f64;
        let total: f64 = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(&q, &y)| {
                let q = q.clamp(eps, 1.0 - eps);
                -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
            })
            .sum();
        let rg = self.rg(pred);
        Ok(self.push(Tensor::scalar(total / n), Op::Bce(pred, target, eps), rg))
    }

    /// Records a fused op whose forward value was computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, op: Box<dyn CustomOp>) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(value, Op::Custom(op, inputs.to_vec()), rg)
    }

    /// Reverse pass from a 1x1 `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shapes: Vec<_> = self.nodes.iter().map(|n| n.value.shape()).collect();
        if shapes[loss.0] != (1, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "backward",
                left: shapes[loss.0],
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            // Intermediate buffers are consumed here; only leaves keep theirs.
            if let Some(g) = grads[i].take() {
                self.propagate(node, &g, &mut grads)?;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let ga = g.matmul_t(self.value(*b))?;
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*b) {
                    let gb = self.value(*a).t_matmul(g)?;
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::MatMulT(a, b) => {
                // out = a bᵀ: da = g b, db = gᵀ a
                if self.rg(*a) {
                    let ga = g.matmul(self.value(*b))?;
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*b) {
                    let gb = g.t_matmul(self.value(*a))?;
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Hadamard(a, b) => {
                if self.rg(*a) {
                    let ga = g.zip_map(self.value(*b), "hadamard", |x, y| x * y)?;
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*b) {
                    let gb = g.zip_map(self.value(*a), "hadamard", |x, y| x * y)?;
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Affine(a, factor) => {
                let f = *factor;
                self.accumulate(grads, *a, g.map(|x| f * x));
            }
            Op::Sigmoid(a) => {
                let ga = g.zip_map(out, "sigmoid", |x, s| x * s * (1.0 - s))?;
                self.accumulate(grads, *a, ga);
            }
            Op::Tanh(a) => {
                let ga = g.zip_map(out, "tanh", |x, t| x * (1.0 - t * t))?;
                self.accumulate(grads, *a, ga);
            }
            Op::Relu(a) => {
                let ga = g.zip_map(self.value(*a), "relu", |x, v| if v > 0.0 { x } else { 0.0 })?;
                self.accumulate(grads, *a, ga);
            }
            Op::LeakyRelu(a, slope) => {
                let s = *slope;
                let ga = g.zip_map(self.value(*a), "leaky_relu", |x, v| if v > 0.0 { x } else { s * x })?;
                self.accumulate(grads, *a, ga);
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                self.accumulate(grads, *a, Tensor::filled(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(*a);
                let n = (r * c).max(1) as f64;
                self.accumulate(grads, *a, Tensor::filled(r, c, g.item() / n));
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if self.rg(p) {
                        let slice = g.data()[start * c..(start + r) * c].to_vec();
                        self.accumulate(grads, p, Tensor::from_vec(r, c, slice)?);
                    }
                    start += r;
                }
            }
            Op::GatherRows(a, index) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for (k, &i) in index.iter().enumerate() {
                    for (o, &x) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::GatherCols(a, index) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for row in 0..r {
                    for (k, &j) in index.iter().enumerate() {
                        let v = ga.get(row, j) + g.get(row, k);
                        ga.set(row, j, v);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Transpose(a) => {
                self.accumulate(grads, *a, g.transpose());
            }
            Op::RowSoftmax(a) => {
                let mut ga = Tensor::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (o, (&yi, &gi)) in ga.row_mut(r).iter_mut().zip(y.iter().zip(gr)) {
                        *o = yi * (gi - dot);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SegmentSoftmax(a, offsets) => {
                let mut ga = Tensor::zeros(out.rows(), out.cols());
                for s in 0..offsets.len() - 1 {
                    for c in 0..out.cols() {
                        let span = offsets[s]..offsets[s + 1];
                        let dot: f64 = span.clone().map(|r| out.get(r, c) * g.get(r, c)).sum();
                        for r in span {
                            ga.set(r, c, out.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SegmentLogSoftmax(a, offsets) => {
                let mut ga = Tensor::zeros(out.rows(), out.cols());
                for s in 0..offsets.len() - 1 {
                    for c in 0..out.cols() {
                        let span = offsets[s]..offsets[s + 1];
                        let gsum: f64 = span.clone().map(|r| g.get(r, c)).sum();
                        for r in span {
                            ga.set(r, c, g.get(r, c) - out.get(r, c).exp() * gsum);
                        }
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SegmentSum(a, offsets) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for s in 0..offsets.len() - 1 {
                    for row in offsets[s]..offsets[s + 1] {
                        ga.row_mut(row).copy_from_slice(g.row(s));
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::ScaleRows(x, w) => {
                let (xt, wt) = (self.value(*x), self.value(*w));
                if self.rg(*x) {
                    let mut gx = g.clone();
                    for r in 0..gx.rows() {
                        let f = wt.get(r, 0);
                        gx.row_mut(r).iter_mut().for_each(|v| *v *= f);
                    }
                    self.accumulate(grads, *x, gx);
                }
                if self.rg(*w) {
                    let gw = Tensor::from_fn(wt.rows(), 1, |r, _| {
                        g.row(r).iter().zip(xt.row(r)).map(|(a, b)| a * b).sum()
                    });
                    self.accumulate(grads, *w, gw);
                }
            }
            Op::Dropout(a, mask) => {
                let data = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                self.accumulate(grads, *a, Tensor::from_vec(g.rows(), g.cols(), data)?);
            }
            Op::SpMM(matrix, a) => {
                let ga = matrix.t_matmul_dense(g)?;
                self.accumulate(grads, *a, ga);
            }
            Op::Bce(pred, target, eps) => {
                let p = self.value(*pred);
                let scale = g.item() / p.len().max(1) as f64;
                let lo = *eps;
                let hi = 1.0 - *eps;
                let gp = p.zip_map(target, "bce_mean", |q, y| {
                    if q <= lo || q >= hi {
                        0.0
                    } else {
                        scale * (q - y) / (q * (1.0 - q))
                    }
                })?;
                self.accumulate(grads, *pred, gp);
            }
            Op::Custom(op, inputs) => {
                let values: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                let input_grads = op.backward(&values, out, g);
                for (&v, gv) in inputs.iter().zip(input_grads) {
                    if gv.shape() != self.shape(v) {
                        return Err(TensorError::ShapeMismatch {
                            op: op.name(),
                            left: self.shape(v),
                            right: gv.shape(),
                        });
                    }
                    self.accumulate(grads, v, gv);
                }
            }
        }
        Ok(())
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return;
    }
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn segment_softmax_value(t: &Tensor, offsets: &[usize], log: bool) -> Result<Tensor> {
    check_segments(offsets, t.rows(), if log { "segment_log_softmax" } else { "segment_softmax" })?;
    let mut out = t.clone();
    for s in 0..offsets.len() - 1 {
        let span = offsets[s]..offsets[s + 1];
        if span.is_empty() {
            continue;
        }
        for c in 0..t.cols() {
            let max = span.clone().map(|r| t.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = span.clone().map(|r| (t.get(r, c) - max).exp()).sum();
            let log_total = total.ln();
            for r in span.clone() {
                let shifted = t.get(r, c) - max;
                let v = if log {
                    shifted - log_total
                } else {
                    shifted.exp() / total
                };
                out.set(r, c, v);
            }
        }
    }
    Ok(out)
}
