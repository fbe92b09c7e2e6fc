//! Define-by-run compute graph with reverse-mode differentiation.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its forward
//! value, so node ids are already in topological order and backward is a
//! single reverse sweep. Learnable tensors are borrowed into the graph, not
//! copied, so one set of parameters can feed many graphs at once.

use std::borrow::Cow;
use std::sync::Arc;

use super::kernels;
use super::sum::exact_sum;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { lhs: Var, rhs: Var, exact: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowBias { x: Var, bias: Var },
    ScaleRows { x: Var, weights: Var },
    Scale { x: Var, factor: f64 },
    Transpose(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, inv_std: f64 },
    MeanNormalize { x: Var, inv_mean: Option<f64> },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    RowL2Norm(Var),
    Gather { x: Var, index: Arc<[usize]> },
    ConcatRows(Vec<Var>),
    Sum(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { exact: false, .. } => "matmul",
            Op::MatMul { exact: true, .. } => "matmul_exact",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRowBias { .. } => "add_row_bias",
            Op::ScaleRows { .. } => "scale_rows",
            Op::Scale { .. } => "scale",
            Op::Transpose(_) => "transpose",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::LayerNorm { .. } => "layer_norm",
            Op::MeanNormalize { .. } => "mean_normalize",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::RowL2Norm(_) => "row_l2_norm",
            Op::Gather { .. } => "gather",
            Op::ConcatRows(_) => "concat_rows",
            Op::Sum(_) => "sum",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul { lhs, rhs, .. } => vec![*lhs, *rhs],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::AddRowBias { x, bias } => vec![*x, *bias],
            Op::ScaleRows { x, weights } => vec![*x, *weights],
            Op::Scale { x, .. }
            | Op::LayerNorm { x, .. }
            | Op::MeanNormalize { x, .. }
            | Op::Gather { x, .. } => vec![*x],
            Op::Transpose(x)
            | Op::SoftmaxRows(x)
            | Op::Sigmoid(x)
            | Op::Tanh(x)
            | Op::Relu(x)
            | Op::RowL2Norm(x)
            | Op::Sum(x) => vec![*x],
            Op::ConcatRows(parts) => parts.clone(),
        }
    }
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    tracked: bool,
}

#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, var: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn op_name(&self, var: Var) -> &'static str {
        self.nodes[var.0].op.name()
    }

    pub fn inputs(&self, var: Var) -> Vec<Var> {
        self.nodes[var.0].op.inputs()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].tracked
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op) -> Var {
        let tracked = match &op {
            Op::Leaf => value.requires_grad(),
            other => other.inputs().iter().any(|v| self.nodes[v.0].tracked),
        };
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn push_owned(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let value = Tensor::new(shape, data).expect("op produced consistent shape");
        self.push(Cow::Owned(value), op)
    }

    /// Adds an owned leaf; it is differentiated iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        self.push(Cow::Owned(tensor), Op::Leaf)
    }

    /// Adds a borrowed leaf that is always differentiated.
    pub fn param(&mut self, tensor: &'a Tensor) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(tensor),
            op: Op::Leaf,
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Adds a constant leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    fn dims(&self, var: Var) -> (usize, usize) {
        let t = self.value(var);
        (t.rows(), t.cols())
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(())
    }

    fn matmul_impl(&mut self, lhs: Var, rhs: Var, exact: bool) -> Result<Var> {
        let (p, q) = self.dims(lhs);
        let (q2, r) = self.dims(rhs);
        let (la, lb) = (self.value(lhs), self.value(rhs));
        if q != q2 || la.rank() > 2 || lb.rank() > 2 {
            return Err(Error::shape("matmul", la.shape(), lb.shape()));
        }
        let data = if exact {
            kernels::matmul_exact(la.data(), lb.data(), p, q, r)
        } else {
            kernels::matmul(la.data(), lb.data(), p, q, r)
        };
        Ok(self.push_owned(vec![p, r], data, Op::MatMul { lhs, rhs, exact }))
    }

    /// Matrix product `[p×q] · [q×r]`.
    pub fn matmul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.matmul_impl(lhs, rhs, false)
    }

    /// Matrix product whose inner sums are correctly rounded, so permuting
    /// the inner index leaves every output bit unchanged.
    pub fn matmul_exact(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.matmul_impl(lhs, rhs, true)
    }

    fn zip_with(&mut self, op_name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(op_name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let shape = ta.shape().to_vec();
        Ok(self.push_owned(shape, data, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a length-`q` bias to every row of a `p×q` matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (p, q) = self.dims(x);
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.numel() != q {
            return Err(Error::shape("add_row_bias", tx.shape(), tb.shape()));
        }
        let mut data = tx.data().to_vec();
        for i in 0..p {
            for (v, b) in data[i * q..(i + 1) * q].iter_mut().zip(tb.data()) {
                *v += b;
            }
        }
        let shape = tx.shape().to_vec();
        Ok(self.push_owned(shape, data, Op::AddRowBias { x, bias }))
    }

    /// Multiplies row `i` of a `p×q` matrix by `weights[i]`.
    pub fn scale_rows(&mut self, x: Var, weights: Var) -> Result<Var> {
        let (p, q) = self.dims(x);
        let (tx, tw) = (self.value(x), self.value(weights));
        if tw.numel() != p {
            return Err(Error::shape("scale_rows", tx.shape(), tw.shape()));
        }
        let mut data = tx.data().to_vec();
        for (i, w) in tw.data().iter().enumerate() {
            for v in &mut data[i * q..(i + 1) * q] {
                *v *= w;
            }
        }
        let shape = tx.shape().to_vec();
        Ok(self.push_owned(shape, data, Op::ScaleRows { x, weights }))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v * factor).collect();
        let shape = t.shape().to_vec();
        self.push_owned(shape, data, Op::Scale { x, factor })
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let (p, q) = self.dims(x);
        let data = kernels::transpose(self.value(x).data(), p, q);
        self.push_owned(vec![q, p], data, Op::Transpose(x))
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (p, q) = self.dims(x);
        let t = self.value(x);
        if t.data().iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("softmax_rows: NaN input".into()));
        }
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(q.max(1)).take(p) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for v in row.iter_mut() {
                *v = (*v - max).exp();
            }
            let total = exact_sum(row.iter().copied());
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let shape = t.shape().to_vec();
        Ok(self.push_owned(shape, data, Op::SoftmaxRows(x)))
    }

    /// `(x - mean) / sqrt(var + eps)` over all elements, population variance,
    /// no affine parameters.
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let t = self.value(x);
        let n = t.numel() as f64;
        let mean = exact_sum(t.data().iter().copied()) / n;
        let var = exact_sum(t.data().iter().map(|v| (v - mean) * (v - mean))) / n;
        let inv_std = 1.0 / (var + eps).sqrt();
        let data = t.data().iter().map(|v| (v - mean) * inv_std).collect();
        let shape = t.shape().to_vec();
        self.push_owned(shape, data, Op::LayerNorm { x, inv_std })
    }

    /// `x / mean(x)`. A zero-mean input passes through unchanged.
    pub fn mean_normalize(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let mean = exact_sum(t.data().iter().copied()) / t.numel() as f64;
        let inv_mean = Some(1.0 / mean).filter(|r| r.is_finite());
        let data = t.data().iter().map(|v| v * inv_mean.unwrap_or(1.0)).collect();
        let shape = t.shape().to_vec();
        self.push_owned(shape, data, Op::MeanNormalize { x, inv_mean })
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| f(*v)).collect();
        let shape = t.shape().to_vec();
        self.push_owned(shape, data, op)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, Op::Tanh(x), f64::tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, Op::Relu(x), |v| v.max(0.0))
    }

    /// Euclidean norm of every row: `[p×q] -> [p]`.
    pub fn row_l2_norm(&mut self, x: Var) -> Var {
        let (p, q) = self.dims(x);
        let t = self.value(x);
        let data = (0..p)
            .map(|i| t.data()[i * q..(i + 1) * q].iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        self.push_owned(vec![p], data, Op::RowL2Norm(x))
    }

    /// `out[k] = x[index[k]]` over the flat data, reshaped to `shape`.
    /// Reshapes, permutations and slices are all gathers.
    pub fn gather(&mut self, x: Var, index: Arc<[usize]>, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x);
        let numel: usize = shape.iter().product();
        if numel != index.len() {
            return Err(Error::shape("gather", &shape, &[index.len()]));
        }
        if let Some(bad) = index.iter().find(|&&i| i >= t.numel()) {
            return Err(Error::shape("gather", t.shape(), &[*bad]));
        }
        let data = index.iter().map(|&i| t.data()[i]).collect();
        Ok(self.push_owned(shape, data, Op::Gather { x, index }))
    }

    pub fn select_row(&mut self, x: Var, row: usize) -> Result<Var> {
        let (p, q) = self.dims(x);
        if row >= p {
            return Err(Error::shape("select_row", &[p, q], &[row]));
        }
        let index: Arc<[usize]> = (row * q..(row + 1) * q).collect();
        self.gather(x, index, vec![1, q])
    }

    /// Columns `start..end` of a `p×q` matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (p, q) = self.dims(x);
        if start > end || end > q {
            return Err(Error::shape("slice_cols", &[p, q], &[start, end]));
        }
        let w = end - start;
        let index: Arc<[usize]> = (0..p).flat_map(|i| (i * q + start)..(i * q + end)).collect();
        self.gather(x, index, vec![p, w])
    }

    /// Stacks row blocks that share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::Contract("concat_rows of nothing".into()));
        };
        let q = self.dims(*first).1;
        let mut rows = 0;
        let mut data = Vec::new();
        for part in parts {
            let (p, c) = self.dims(*part);
            if c != q {
                return Err(Error::shape("concat_rows", &[q], &[c]));
            }
            rows += p;
            data.extend_from_slice(self.value(*part).data());
        }
        Ok(self.push_owned(vec![rows, q], data, Op::ConcatRows(parts.to_vec())))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push_owned(vec![1], vec![s], Op::Sum(x))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        self.backward_with_seed(root, 1.0)
    }

    /// Reverse sweep with `d root = seed`; tracked leaves that do not reach
    /// the root get a zero gradient.
    pub fn backward_with_seed(&self, root: Var, seed: f64) -> Result<Gradients> {
        if self.value(root).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[root.0].tracked {
            grads[root.0] = Some(vec![seed]);
        }

        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }

        for (id, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.tracked && grads[id].is_none() {
                grads[id] = Some(vec![0.0; node.value.numel()]);
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<'a>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { lhs, rhs, .. } => {
                let (p, q) = self.dims(*lhs);
                let r = self.dims(*rhs).1;
                if let Some(da) = self.slot(grads, *lhs) {
                    kernels::acc_grad_lhs(da, g, self.value(*rhs).data(), p, q, r);
                }
                if let Some(db) = self.slot(grads, *rhs) {
                    kernels::acc_grad_rhs(db, self.value(*lhs).data(), g, p, q, r);
                }
            }
            Op::Add(a, b) => {
                if let Some(da) = self.slot(grads, *a) {
                    axpy(da, 1.0, g);
                }
                if let Some(db) = self.slot(grads, *b) {
                    axpy(db, 1.0, g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(da) = self.slot(grads, *a) {
                    axpy(da, 1.0, g);
                }
                if let Some(db) = self.slot(grads, *b) {
                    axpy(db, -1.0, g);
                }
            }
            Op::Mul(a, b) => {
                if let Some(da) = self.slot(grads, *a) {
                    for ((d, gi), bi) in da.iter_mut().zip(g).zip(self.value(*b).data()) {
                        *d += gi * bi;
                    }
                }
                if let Some(db) = self.slot(grads, *b) {
                    for ((d, gi), ai) in db.iter_mut().zip(g).zip(self.value(*a).data()) {
                        *d += gi * ai;
                    }
                }
            }
            Op::AddRowBias { x, bias } => {
                let q = self.dims(*x).1;
                if let Some(dx) = self.slot(grads, *x) {
                    axpy(dx, 1.0, g);
                }
                if let Some(db) = self.slot(grads, *bias) {
                    for row in g.chunks(q) {
                        axpy(db, 1.0, row);
                    }
                }
            }
            Op::ScaleRows { x, weights } => {
                let q = self.dims(*x).1;
                let w = self.value(*weights).data();
                if let Some(dx) = self.slot(grads, *x) {
                    for (i, wi) in w.iter().enumerate() {
                        axpy(&mut dx[i * q..(i + 1) * q], *wi, &g[i * q..(i + 1) * q]);
                    }
                }
                if let Some(dw) = self.slot(grads, *weights) {
                    let xv = self.value(*x).data();
                    for (i, d) in dw.iter_mut().enumerate() {
                        *d += dot(&xv[i * q..(i + 1) * q], &g[i * q..(i + 1) * q]);
                    }
                }
            }
            Op::Scale { x, factor } => {
                if let Some(dx) = self.slot(grads, *x) {
                    axpy(dx, *factor, g);
                }
            }
            Op::Transpose(x) => {
                let (p, q) = self.dims(*x);
                if let Some(dx) = self.slot(grads, *x) {
                    axpy(dx, 1.0, &kernels::transpose(g, q, p));
                }
            }
            Op::SoftmaxRows(x) => {
                let q = self.dims(*x).1;
                if let Some(dx) = self.slot(grads, *x) {
                    for ((dx_row, y_row), g_row) in dx.chunks_mut(q).zip(out.chunks(q)).zip(g.chunks(q)) {
                        let s = dot(y_row, g_row);
                        for ((d, y), gi) in dx_row.iter_mut().zip(y_row).zip(g_row) {
                            *d += y * (gi - s);
                        }
                    }
                }
            }
            Op::LayerNorm { x, inv_std } => {
                if let Some(dx) = self.slot(grads, *x) {
                    let n = out.len() as f64;
                    let mean_g = g.iter().sum::<f64>() / n;
                    let mean_gy = dot(g, out) / n;
                    for ((d, gi), y) in dx.iter_mut().zip(g).zip(out) {
                        *d += inv_std * (gi - mean_g - y * mean_gy);
                    }
                }
            }
            Op::MeanNormalize { x, inv_mean } => {
                if let Some(dx) = self.slot(grads, *x) {
                    let (r, mean_gy) = match inv_mean {
                        Some(r) => (*r, dot(g, out) / out.len() as f64),
                        None => (1.0, 0.0),
                    };
                    for (d, gi) in dx.iter_mut().zip(g) {
                        *d += r * (gi - mean_gy);
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, gi), y) in dx.iter_mut().zip(g).zip(out) {
                        *d += gi * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, gi), y) in dx.iter_mut().zip(g).zip(out) {
                        *d += gi * (1.0 - y * y);
                    }
                }
            }
            Op::Relu(x) => {
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, gi), xi) in dx.iter_mut().zip(g).zip(self.value(*x).data()) {
                        if *xi > 0.0 {
                            *d += gi;
                        }
                    }
                }
            }
            Op::RowL2Norm(x) => {
                let q = self.dims(*x).1;
                if let Some(dx) = self.slot(grads, *x) {
                    let xv = self.value(*x).data();
                    for (i, (norm, gi)) in out.iter().zip(g).enumerate() {
                        if *norm > 0.0 {
                            axpy(&mut dx[i * q..(i + 1) * q], gi / norm, &xv[i * q..(i + 1) * q]);
                        }
                    }
                }
            }
            Op::Gather { x, index } => {
                if let Some(dx) = self.slot(grads, *x) {
                    for (gi, &i) in g.iter().zip(index.iter()) {
                        dx[i] += gi;
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for part in parts {
                    let n = self.value(*part).numel();
                    if let Some(dp) = self.slot(grads, *part) {
                        axpy(dp, 1.0, &g[offset..offset + n]);
                    }
                    offset += n;
                }
            }
            Op::Sum(x) => {
                if let Some(dx) = self.slot(grads, *x) {
                    for d in dx.iter_mut() {
                        *d += g[0];
                    }
                }
            }
        }
    }

    /// Gradient accumulator for `var`, created on first use; `None` when the
    /// node is not differentiated.
    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], var: Var) -> Option<&'g mut Vec<f64>> {
        let node = &self.nodes[var.0];
        if !node.tracked {
            return None;
        }
        Some(grads[var.0].get_or_insert_with(|| vec![0.0; node.value.numel()]))
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
