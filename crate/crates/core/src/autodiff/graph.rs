use std::sync::Arc;

use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded in a [`Graph`].
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
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    OuterAdd(Var, Var),
    Concat(Var, Var),
    SliceRows(Var, usize),
    Scale(Var, f64),
    AddScalar(Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    Exp(Var),
    SoftmaxRows(Var, Option<Arc<[bool]>>),
    Sum(Var),
    RowSum(Var),
    ColSum(Var),
    ComplementGate(Var),
    TraceOfGram(Var),
    L2Norm(Var),
    Clamp(Var, f64, f64),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Reverse-mode computation record.
///
/// Every primitive appends its output node; inputs always precede outputs, so
/// the node list is a topological order and the backward pass is a reverse
/// scan. A record is built and consumed by one training step.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf or intermediate after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.push(out, op, &[x])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(op, av, bv));
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(out, op, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = av.require_matrix("matmul")?;
        let (k2, n) = bv.require_matrix("matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", av, bv));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(av.data(), bv.data(), &mut out, m, k, n);
        let out = Tensor::matrix(m, n, out)?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = xv.require_matrix("transpose")?;
        let out = Tensor::from_fn(c, r, |i, j| xv.at(j, i));
        Ok(self.push(out, Op::Transpose(x), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// Adds a length-`n` vector to every row of an `m x n` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        let (m, n) = xv.require_matrix("add_row")?;
        if rv.len() != n {
            return Err(shape_err("add_row", xv, rv));
        }
        let r = rv.data();
        let out = Tensor::from_fn(m, n, |i, j| xv.at(i, j) + r[j]);
        Ok(self.push(out, Op::AddRow(x, row), &[x, row]))
    }

    /// `out[i,j] = u[i] + v[j]` for column/flat vectors `u` (len m), `v` (len n).
    pub fn outer_add(&mut self, u: Var, v: Var) -> Result<Var> {
        let (uv, vv) = (self.value(u), self.value(v));
        for t in [uv, vv] {
            if t.shape().len() > 2 || (t.shape().len() == 2 && t.shape()[1] != 1) {
                return Err(shape_err("outer_add", uv, vv));
            }
        }
        let (ud, vd) = (uv.data(), vv.data());
        let out = Tensor::from_fn(ud.len(), vd.len(), |i, j| ud[i] + vd[j]);
        Ok(self.push(out, Op::OuterAdd(u, v), &[u, v]))
    }

    /// Concatenation along the last axis of two matrices with equal row counts.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, ca) = av.require_matrix("concat")?;
        let (m2, cb) = bv.require_matrix("concat")?;
        if m != m2 {
            return Err(shape_err("concat", av, bv));
        }
        let mut data = Vec::with_capacity(m * (ca + cb));
        for i in 0..m {
            data.extend_from_slice(av.row(i));
            data.extend_from_slice(bv.row(i));
        }
        let out = Tensor::matrix(m, ca + cb, data)?;
        Ok(self.push(out, Op::Concat(a, b), &[a, b]))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = xv.require_matrix("slice_rows")?;
        if start > end || end > r {
            return Err(Error::Shape {
                op: "slice_rows",
                lhs: xv.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let out = Tensor::matrix(end - start, c, xv.data()[start * c..end * c].to_vec())?;
        Ok(self.push(out, Op::SliceRows(x, start), &[x]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + c)
    }

    pub fn leaky_relu(&mut self, x: Var, negative_slope: f64) -> Var {
        self.unary(x, Op::LeakyRelu(x, negative_slope), |v| {
            if v > 0.0 {
                v
            } else {
                negative_slope * v
            }
        })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, Op::Clamp(x, lo, hi), |v| v.clamp(lo, hi))
    }

    /// Row-wise softmax of a matrix.
    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, None)
    }

    /// Row-wise softmax restricted to entries where `mask` is true.
    ///
    /// Masked entries are exactly zero in the output and receive exactly zero
    /// gradient. A row without any unmasked entry cannot be normalized.
    pub fn row_softmax_masked(&mut self, x: Var, mask: Arc<[bool]>) -> Result<Var> {
        let xv = self.value(x);
        if mask.len() != xv.len() {
            return Err(Error::Shape {
                op: "row_softmax_masked",
                lhs: xv.shape().to_vec(),
                rhs: vec![mask.len()],
            });
        }
        self.softmax_impl(x, Some(mask))
    }

    fn softmax_impl(&mut self, x: Var, mask: Option<Arc<[bool]>>) -> Result<Var> {
        let xv = self.value(x);
        let (m, n) = xv.require_matrix("row_softmax")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = xv.row(i);
            let keep = |j: usize| mask.as_ref().is_none_or(|mk| mk[i * n + j]);
            if !(0..n).any(keep) {
                return Err(Error::Contract(format!(
                    "row {i} of softmax input has no unmasked entry"
                )));
            }
            // NaN inputs propagate instead of being skipped by the max.
            let max = (0..n)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { b } else { a.max(b) });
            let mut total = 0.0;
            for j in (0..n).filter(|&j| keep(j)) {
                let e = (row[j] - max).exp();
                out[i * n + j] = e;
                total += e;
            }
            for j in (0..n).filter(|&j| keep(j)) {
                out[i * n + j] /= total;
            }
        }
        let out = Tensor::matrix(m, n, out)?;
        Ok(self.push(out, Op::SoftmaxRows(x, mask), &[x]))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Per-row sums of a matrix, shape `[m]`.
    pub fn row_sum(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (m, _) = xv.require_matrix("row_sum")?;
        let out = Tensor::vector((0..m).map(|i| xv.row(i).iter().sum()).collect());
        Ok(self.push(out, Op::RowSum(x), &[x]))
    }

    /// Per-column sums of a matrix, shape `[n]`.
    pub fn col_sum(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (m, n) = xv.require_matrix("col_sum")?;
        let mut out = vec![0.0; n];
        for i in 0..m {
            for (o, v) in out.iter_mut().zip(xv.row(i)) {
                *o += v;
            }
        }
        Ok(self.push(Tensor::vector(out), Op::ColSum(x), &[x]))
    }

    /// Per-column `1 - prod_k (1 - x[k, n])`, shape `[n]`.
    pub fn complement_gate(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (m, n) = xv.require_matrix("complement_gate")?;
        let mut prod = vec![1.0; n];
        for i in 0..m {
            for (p, v) in prod.iter_mut().zip(xv.row(i)) {
                *p *= 1.0 - v;
            }
        }
        let out = Tensor::vector(prod.into_iter().map(|p| 1.0 - p).collect());
        Ok(self.push(out, Op::ComplementGate(x), &[x]))
    }

    /// `Tr(X X^T)`, i.e. the sum of squared entries.
    pub fn trace_of_gram(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        self.push(Tensor::scalar(s), Op::TraceOfGram(x), &[x])
    }

    /// Euclidean norm of all entries.
    pub fn l2_norm(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|v| v * v).sum::<f64>().sqrt();
        self.push(Tensor::scalar(s), Op::L2Norm(x), &[x])
    }

    /// Reverse pass from a scalar `loss`. Gradients are added to any already
    /// stored from earlier passes; call [`Graph::zero_grad`] to reset them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
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
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(acc) => acc.data_mut().iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => {
                    node.grad = Some(Tensor::new(node.value.shape().to_vec(), g)?);
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(slot);
        };
        let val = |v: Var| &nodes[v.0].value;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (val(*a).rows(), val(*a).cols());
                let n = val(*b).cols();
                acc(*a, &mut |s| gemm_nt_acc(g, val(*b).data(), s, m, n, k));
                acc(*b, &mut |s| gemm_tn_acc(val(*a).data(), g, s, m, k, n));
            }
            Op::Transpose(x) => {
                let (r, c) = (val(*x).rows(), val(*x).cols());
                acc(*x, &mut |s| {
                    for i in 0..r {
                        for j in 0..c {
                            s[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::Reshape(x) | Op::AddScalar(x) | Op::Sum(x) => {
                let broadcast = matches!(node.op, Op::Sum(_));
                acc(*x, &mut |s| {
                    for (i, si) in s.iter_mut().enumerate() {
                        *si += if broadcast { g[0] } else { g[i] };
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (val(*a).data(), val(*b).data());
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * bd[i];
                    }
                });
                acc(*b, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * ad[i];
                    }
                });
            }
            Op::AddRow(x, row) => {
                let n = val(*x).cols();
                acc(*x, &mut |s| s.iter_mut().zip(g).for_each(|(a, b)| *a += b));
                acc(*row, &mut |s| {
                    for (i, gi) in g.iter().enumerate() {
                        s[i % n] += gi;
                    }
                });
            }
            Op::OuterAdd(u, v) => {
                let (m, n) = (out.rows(), out.cols());
                acc(*u, &mut |s| {
                    for i in 0..m {
                        s[i] += g[i * n..(i + 1) * n].iter().sum::<f64>();
                    }
                });
                acc(*v, &mut |s| {
                    for i in 0..m {
                        for j in 0..n {
                            s[j] += g[i * n + j];
                        }
                    }
                });
            }
            Op::Concat(a, b) => {
                let (m, ca, cb) = (out.rows(), val(*a).cols(), val(*b).cols());
                let w = ca + cb;
                acc(*a, &mut |s| {
                    for i in 0..m {
                        for j in 0..ca {
                            s[i * ca + j] += g[i * w + j];
                        }
                    }
                });
                acc(*b, &mut |s| {
                    for i in 0..m {
                        for j in 0..cb {
                            s[i * cb + j] += g[i * w + ca + j];
                        }
                    }
                });
            }
            Op::SliceRows(x, start) => {
                let off = start * out.cols();
                acc(*x, &mut |s| {
                    s[off..off + g.len()].iter_mut().zip(g).for_each(|(a, b)| *a += b)
                });
            }
            Op::Scale(x, c) => {
                acc(*x, &mut |s| s.iter_mut().zip(g).for_each(|(a, b)| *a += c * b));
            }
            Op::LeakyRelu(x, slope) => {
                let xd = val(*x).data();
                acc(*x, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += if xd[i] > 0.0 { g[i] } else { slope * g[i] };
                    }
                });
            }
            Op::Relu(x) => {
                let xd = val(*x).data();
                acc(*x, &mut |s| {
                    for i in 0..s.len() {
                        if xd[i] > 0.0 {
                            s[i] += g[i];
                        }
                    }
                });
            }
            Op::Exp(x) => {
                let od = out.data();
                acc(*x, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * od[i];
                    }
                });
            }
            Op::Clamp(x, lo, hi) => {
                let xd = val(*x).data();
                acc(*x, &mut |s| {
                    for i in 0..s.len() {
                        if xd[i] >= *lo && xd[i] <= *hi {
                            s[i] += g[i];
                        }
                    }
                });
            }
            Op::SoftmaxRows(x, mask) => {
                let (m, n) = (out.rows(), out.cols());
                let y = out.data();
                acc(*x, &mut |s| {
                    for i in 0..m {
                        let r = i * n..(i + 1) * n;
                        let dot: f64 = y[r.clone()].iter().zip(&g[r]).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            let at = i * n + j;
                            if mask.as_ref().is_some_and(|mk| !mk[at]) {
                                continue;
                            }
                            s[at] += y[at] * (g[at] - dot);
                        }
                    }
                });
            }
            Op::RowSum(x) => {
                let n = val(*x).cols();
                acc(*x, &mut |s| {
                    for (i, si) in s.iter_mut().enumerate() {
                        *si += g[i / n];
                    }
                });
            }
            Op::ColSum(x) => {
                let n = val(*x).cols();
                acc(*x, &mut |s| {
                    for (i, si) in s.iter_mut().enumerate() {
                        *si += g[i % n];
                    }
                });
            }
            Op::ComplementGate(x) => {
                let xv = val(*x);
                let (m, n) = (xv.rows(), xv.cols());
                let xd = xv.data();
                // d/dx[k,n] = prod_{j != k} (1 - x[j,n]) via prefix/suffix products,
                // exact even when some factor is zero.
                acc(*x, &mut |s| {
                    for col in 0..n {
                        let mut suffix = vec![1.0; m + 1];
                        for k in (0..m).rev() {
                            suffix[k] = suffix[k + 1] * (1.0 - xd[k * n + col]);
                        }
                        let mut prefix = 1.0;
                        for k in 0..m {
                            s[k * n + col] += g[col] * prefix * suffix[k + 1];
                            prefix *= 1.0 - xd[k * n + col];
                        }
                    }
                });
            }
            Op::TraceOfGram(x) => {
                let xd = val(*x).data();
                acc(*x, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += 2.0 * xd[i] * g[0];
                    }
                });
            }
            Op::L2Norm(x) => {
                // Subgradient 0 at the origin.
                let norm = out.item();
                let xd = val(*x).data();
                acc(*x, &mut |s| {
                    if norm > 0.0 {
                        for i in 0..s.len() {
                            s[i] += xd[i] / norm * g[0];
                        }
                    }
                });
            }
        }
    }
}
