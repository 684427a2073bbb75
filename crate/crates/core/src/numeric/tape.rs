//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every op appends a node holding its output value and the handles of its
//! inputs. Nodes are stored in creation order, which is a topological order,
//! so [`Tape::backward`] is a single reverse sweep that visits each node
//! once and sums gradient contributions along every edge.
//!
//! Matrix ops treat rank-0 and rank-1 tensors as one row.

use crate::error::{Error, Result};

use super::tensor::{matmul_at_into, matmul_bt_into, matmul_into};
use super::{Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, S),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Embedding(Var, Vec<usize>),
    Relu(Var),
    /// Per-row inverse standard deviations.
    LayerNorm(Var, Vec<S>),
    Softmax(Var),
    LogSoftmax(Var, Option<Vec<bool>>),
    Log(Var),
    Exp(Var),
    Sum(Var),
    Mean(Var),
    Transpose(Var),
    Gather(Var, Vec<usize>),
    /// Per-row clamped norms `max(‖x‖, eps)`.
    NormalizeRows(Var, Vec<S>),
}

#[derive(Debug, Clone)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, var: Var) -> Option<&[S]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

fn row_softmax<S: Scalar>(row: &[S], mask: Option<&[bool]>, out: &mut [S]) {
    let keep = |j: usize| mask.is_none_or(|m| m[j]);
    let mut max = S::neg_infinity();
    for (j, &x) in row.iter().enumerate() {
        if keep(j) && x > max {
            max = x;
        }
    }
    if max == S::neg_infinity() {
        out.iter_mut().for_each(|o| *o = S::zero());
        return;
    }
    let mut total = S::zero();
    for (j, (&x, o)) in row.iter().zip(out.iter_mut()).enumerate() {
        *o = if keep(j) { (x - max).exp() } else { S::zero() };
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

fn row_log_softmax<S: Scalar>(row: &[S], mask: Option<&[bool]>, out: &mut [S]) {
    let keep = |j: usize| mask.is_none_or(|m| m[j]);
    let mut max = S::neg_infinity();
    for (j, &x) in row.iter().enumerate() {
        if keep(j) && x > max {
            max = x;
        }
    }
    if max == S::neg_infinity() {
        out.iter_mut().for_each(|o| *o = S::zero());
        return;
    }
    let mut total = S::zero();
    for (j, &x) in row.iter().enumerate() {
        if keep(j) {
            total += (x - max).exp();
        }
    }
    let lse = max + total.ln();
    for (j, (&x, o)) in row.iter().zip(out.iter_mut()).enumerate() {
        *o = if keep(j) { x - lse } else { S::zero() };
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, var: Var) -> &Tensor<S> {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        // Ops on constants are recorded as leaves so backward can skip them.
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn matrix(rows: usize, cols: usize, data: Vec<S>) -> Tensor<S> {
        Tensor::matrix(rows, cols, data).expect("op output sized by construction")
    }

    // ---- forward ops ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![S::zero(); m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(Self::matrix(m, n, out), Op::MatMul(a, b), &[a, b]))
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(S, S) -> S,
        op: Op<S>,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(name, self.shape(a), self.shape(b)));
        }
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn row_broadcast(
        &mut self,
        name: &'static str,
        m: Var,
        row: Var,
        f: impl Fn(S, S) -> S,
        op: Op<S>,
    ) -> Result<Var> {
        let (r, c) = self.dims(m);
        if self.value(row).len() != c {
            return Err(Error::shape(name, self.shape(m), self.shape(row)));
        }
        let vr = self.value(row).data();
        let data = self
            .value(m)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, vr[i % c]))
            .collect();
        Ok(self.push(Self::matrix(r, c, data), op, &[m, row]))
    }

    /// Adds a row vector to every row of `m`.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var> {
        self.row_broadcast("add_row", m, row, |x, y| x + y, Op::AddRow(m, row))
    }

    /// Multiplies every row of `m` elementwise by a row vector.
    pub fn mul_row(&mut self, m: Var, row: Var) -> Result<Var> {
        self.row_broadcast("mul_row", m, row, |x, y| x * y, Op::MulRow(m, row))
    }

    pub fn scale(&mut self, a: Var, s: S) -> Var {
        let value = self.value(a).map(|x| x * s);
        self.push(value, Op::Scale(a, s), &[a])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Contract("concat_rows of nothing".into()));
        };
        let c = self.dims(first).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, pc) = self.dims(p);
            if pc != c {
                return Err(Error::shape("concat_rows", self.shape(first), self.shape(p)));
            }
            data.extend_from_slice(self.value(p).data());
            rows += r;
        }
        Ok(self.push(Self::matrix(rows, c, data), Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Contract("concat_cols of nothing".into()));
        };
        let r = self.dims(first).0;
        let mut total = 0;
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pr != r {
                return Err(Error::shape("concat_cols", self.shape(first), self.shape(p)));
            }
            total += pc;
        }
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        Ok(self.push(Self::matrix(r, total, data), Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if start + len > r || len == 0 {
            return Err(Error::Contract(format!(
                "slice_rows {start}..{} out of 0..{r}",
                start + len
            )));
        }
        let data = self.value(a).data()[start * c..(start + len) * c].to_vec();
        Ok(self.push(Self::matrix(len, c, data), Op::SliceRows(a, start), &[a]))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if start + len > c || len == 0 {
            return Err(Error::Contract(format!(
                "slice_cols {start}..{} out of 0..{c}",
                start + len
            )));
        }
        let va = self.value(a);
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&va.row(i)[start..start + len]);
        }
        Ok(self.push(Self::matrix(r, len, data), Op::SliceCols(a, start), &[a]))
    }

    /// Gathers rows `ids` of `table` into a `len(ids) × d` matrix.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.dims(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Contract(format!(
                "embedding id {bad} out of range for table of {v} rows"
            )));
        }
        let vt = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(vt.row(i));
        }
        Ok(self.push(
            Self::matrix(ids.len(), d, data),
            Op::Embedding(table, ids.to_vec()),
            &[table],
        ))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > S::zero() { x } else { S::zero() });
        self.push(value, Op::Relu(a), &[a])
    }

    /// Per-row normalization to zero mean and unit variance (no affine part).
    pub fn layernorm(&mut self, a: Var, eps: S) -> Var {
        let (r, c) = self.dims(a);
        let va = self.value(a);
        let n = S::from_usize(c).expect("usize fits scalar");
        let mut data = Vec::with_capacity(r * c);
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = va.row(i);
            let mean = row.iter().copied().sum::<S>() / n;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / n;
            let is = S::one() / (var + eps).sqrt();
            data.extend(row.iter().map(|&x| (x - mean) * is));
            inv_std.push(is);
        }
        self.push(Self::matrix(r, c, data), Op::LayerNorm(a, inv_std), &[a])
    }

    fn check_mask(&self, name: &str, a: Var, mask: Option<&[bool]>) -> Result<()> {
        if let Some(m) = mask {
            if m.len() != self.value(a).len() {
                return Err(Error::Contract(format!(
                    "{name} mask has {} entries for {} values",
                    m.len(),
                    self.value(a).len()
                )));
            }
        }
        Ok(())
    }

    /// Row-wise softmax. Entries where `mask` is false are excluded and
    /// output zero; a fully masked row outputs all zeros.
    pub fn softmax_masked(&mut self, a: Var, mask: Option<Vec<bool>>) -> Result<Var> {
        self.check_mask("softmax", a, mask.as_deref())?;
        let (r, c) = self.dims(a);
        let va = self.value(a);
        let mut data = vec![S::zero(); r * c];
        for i in 0..r {
            let m = mask.as_deref().map(|m| &m[i * c..(i + 1) * c]);
            row_softmax(va.row(i), m, &mut data[i * c..(i + 1) * c]);
        }
        Ok(self.push(Self::matrix(r, c, data), Op::Softmax(a), &[a]))
    }

    /// Softmax along `axis` of a matrix (1 = within each row, 0 = within each
    /// column).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        match axis {
            1 => self.softmax_masked(a, None),
            0 => {
                let t = self.transpose(a);
                let s = self.softmax_masked(t, None)?;
                Ok(self.transpose(s))
            }
            _ => Err(Error::Contract(format!("softmax axis {axis} out of range"))),
        }
    }

    /// Row-wise log-softmax; masked entries are excluded from the
    /// normalizer and output zero.
    pub fn log_softmax_masked(&mut self, a: Var, mask: Option<Vec<bool>>) -> Result<Var> {
        self.check_mask("log_softmax", a, mask.as_deref())?;
        let (r, c) = self.dims(a);
        let va = self.value(a);
        let mut data = vec![S::zero(); r * c];
        for i in 0..r {
            let m = mask.as_deref().map(|m| &m[i * c..(i + 1) * c]);
            row_log_softmax(va.row(i), m, &mut data[i * c..(i + 1) * c]);
        }
        Ok(self.push(Self::matrix(r, c, data), Op::LogSoftmax(a, mask), &[a]))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.log_softmax_masked(a, None)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.ln());
        self.push(value, Op::Log(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.exp());
        self.push(value, Op::Exp(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let n = S::from_usize(va.len()).expect("usize fits scalar");
        let s = va.data().iter().copied().sum::<S>() / n;
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transposed();
        self.push(value, Op::Transpose(a), &[a])
    }

    /// Picks flat-index entries of `a` into a vector.
    pub fn gather(&mut self, a: Var, flat: &[usize]) -> Result<Var> {
        let va = self.value(a);
        if let Some(&bad) = flat.iter().find(|&&i| i >= va.len()) {
            return Err(Error::Contract(format!(
                "gather index {bad} out of range for {} values",
                va.len()
            )));
        }
        let data = flat.iter().map(|&i| va.data()[i]).collect();
        Ok(self.push(Tensor::vector(data), Op::Gather(a, flat.to_vec()), &[a]))
    }

    /// Scales each row to unit length, dividing by `max(‖row‖, eps)`.
    pub fn normalize_rows(&mut self, a: Var, eps: S) -> Var {
        let (r, c) = self.dims(a);
        let va = self.value(a);
        let mut data = Vec::with_capacity(r * c);
        let mut norms = Vec::with_capacity(r);
        for i in 0..r {
            let row = va.row(i);
            let norm = row.iter().map(|&x| x * x).sum::<S>().sqrt().max(eps);
            data.extend(row.iter().map(|&x| x / norm));
            norms.push(norm);
        }
        let shape = va.shape().to_vec();
        let value = Tensor::new(shape, data).expect("same shape as input");
        self.push(value, Op::NormalizeRows(a, norms), &[a])
    }

    // ---- backward ----

    /// Back-propagates from a scalar `loss`, returns the gradients of every
    /// node and clears the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<S>> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Contract("loss is not on this tape".into()));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let nodes = std::mem::take(&mut self.nodes);
        let mut grads: Vec<Option<Vec<S>>> = vec![None; nodes.len()];
        if nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![S::one()]);
        }
        for idx in (0..=loss.0).rev() {
            let node = &nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            propagate(&nodes, idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<S: Scalar>(
    nodes: &[Node<S>],
    grads: &mut [Option<Vec<S>>],
    target: Var,
    f: impl FnOnce(&mut [S]),
) {
    if !nodes[target.0].requires_grad {
        return;
    }
    let slot = grads[target.0].get_or_insert_with(|| vec![S::zero(); nodes[target.0].value.len()]);
    f(slot);
}

fn dims<S: Scalar>(nodes: &[Node<S>], v: Var) -> (usize, usize) {
    let t = &nodes[v.0].value;
    (t.rows(), t.cols())
}

fn propagate<S: Scalar>(nodes: &[Node<S>], idx: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
    let node = &nodes[idx];
    let out = node.value.data();
    let val = |v: Var| nodes[v.0].value.data();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = dims(nodes, *a);
            let n = dims(nodes, *b).1;
            accumulate(nodes, grads, *a, |ga| matmul_bt_into(g, val(*b), ga, m, n, k));
            accumulate(nodes, grads, *b, |gb| matmul_at_into(val(*a), g, gb, m, k, n));
        }
        Op::Add(a, b) => {
            for v in [*a, *b] {
                accumulate(nodes, grads, v, |gv| gv.iter_mut().zip(g).for_each(|(x, &y)| *x += y));
            }
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, |gv| gv.iter_mut().zip(g).for_each(|(x, &y)| *x += y));
            accumulate(nodes, grads, *b, |gv| gv.iter_mut().zip(g).for_each(|(x, &y)| *x -= y));
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            accumulate(nodes, grads, *a, |gv| {
                for ((x, &gy), &y) in gv.iter_mut().zip(g).zip(vb) {
                    *x += gy * y;
                }
            });
            accumulate(nodes, grads, *b, |gv| {
                for ((x, &gy), &y) in gv.iter_mut().zip(g).zip(va) {
                    *x += gy * y;
                }
            });
        }
        Op::AddRow(m, row) => {
            let c = dims(nodes, *m).1;
            accumulate(nodes, grads, *m, |gv| gv.iter_mut().zip(g).for_each(|(x, &y)| *x += y));
            accumulate(nodes, grads, *row, |gv| {
                for (i, &gy) in g.iter().enumerate() {
                    gv[i % c] += gy;
                }
            });
        }
        Op::MulRow(m, row) => {
            let c = dims(nodes, *m).1;
            let (vm, vr) = (val(*m), val(*row));
            accumulate(nodes, grads, *m, |gv| {
                for (i, (x, &gy)) in gv.iter_mut().zip(g).enumerate() {
                    *x += gy * vr[i % c];
                }
            });
            accumulate(nodes, grads, *row, |gv| {
                for (i, &gy) in g.iter().enumerate() {
                    gv[i % c] += gy * vm[i];
                }
            });
        }
        Op::Scale(a, s) => {
            accumulate(nodes, grads, *a, |gv| gv.iter_mut().zip(g).for_each(|(x, &y)| *x += y * *s));
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &p in parts {
                let n = nodes[p.0].value.len();
                accumulate(nodes, grads, p, |gv| {
                    gv.iter_mut().zip(&g[offset..offset + n]).for_each(|(x, &y)| *x += y)
                });
                offset += n;
            }
        }
        Op::ConcatCols(parts) => {
            let total = node.value.cols();
            let mut col = 0;
            for &p in parts {
                let (r, c) = dims(nodes, p);
                accumulate(nodes, grads, p, |gv| {
                    for i in 0..r {
                        for j in 0..c {
                            gv[i * c + j] += g[i * total + col + j];
                        }
                    }
                });
                col += c;
            }
        }
        Op::SliceRows(a, start) => {
            let c = dims(nodes, *a).1;
            accumulate(nodes, grads, *a, |gv| {
                gv[start * c..start * c + g.len()]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(x, &y)| *x += y)
            });
        }
        Op::SliceCols(a, start) => {
            let (r, c) = dims(nodes, *a);
            let len = node.value.cols();
            accumulate(nodes, grads, *a, |gv| {
                for i in 0..r {
                    for j in 0..len {
                        gv[i * c + start + j] += g[i * len + j];
                    }
                }
            });
        }
        Op::Embedding(table, ids) => {
            let d = dims(nodes, *table).1;
            accumulate(nodes, grads, *table, |gv| {
                for (r, &id) in ids.iter().enumerate() {
                    gv[id * d..(id + 1) * d]
                        .iter_mut()
                        .zip(&g[r * d..(r + 1) * d])
                        .for_each(|(x, &y)| *x += y);
                }
            });
        }
        Op::Relu(a) => {
            let va = val(*a);
            accumulate(nodes, grads, *a, |gv| {
                for ((x, &gy), &xin) in gv.iter_mut().zip(g).zip(va) {
                    if xin > S::zero() {
                        *x += gy;
                    }
                }
            });
        }
        Op::LayerNorm(a, inv_std) => {
            let c = node.value.cols();
            let n = S::from_usize(c).expect("usize fits scalar");
            accumulate(nodes, grads, *a, |gv| {
                for (i, &is) in inv_std.iter().enumerate() {
                    let y = &out[i * c..(i + 1) * c];
                    let gr = &g[i * c..(i + 1) * c];
                    let mean_g = gr.iter().copied().sum::<S>() / n;
                    let mean_gy = gr.iter().zip(y).map(|(&a, &b)| a * b).sum::<S>() / n;
                    for j in 0..c {
                        gv[i * c + j] += is * (gr[j] - mean_g - y[j] * mean_gy);
                    }
                }
            });
        }
        Op::Softmax(a) => {
            let c = node.value.cols();
            accumulate(nodes, grads, *a, |gv| {
                for i in 0..node.value.rows() {
                    let y = &out[i * c..(i + 1) * c];
                    let gr = &g[i * c..(i + 1) * c];
                    let dot = gr.iter().zip(y).map(|(&a, &b)| a * b).sum::<S>();
                    for j in 0..c {
                        gv[i * c + j] += y[j] * (gr[j] - dot);
                    }
                }
            });
        }
        Op::LogSoftmax(a, mask) => {
            let c = node.value.cols();
            accumulate(nodes, grads, *a, |gv| {
                for i in 0..node.value.rows() {
                    let keep = |j: usize| mask.as_ref().is_none_or(|m| m[i * c + j]);
                    let gr = &g[i * c..(i + 1) * c];
                    let y = &out[i * c..(i + 1) * c];
                    let total = (0..c).filter(|&j| keep(j)).map(|j| gr[j]).sum::<S>();
                    for j in (0..c).filter(|&j| keep(j)) {
                        gv[i * c + j] += gr[j] - y[j].exp() * total;
                    }
                }
            });
        }
        Op::Log(a) => {
            let va = val(*a);
            accumulate(nodes, grads, *a, |gv| {
                for ((x, &gy), &xin) in gv.iter_mut().zip(g).zip(va) {
                    *x += gy / xin;
                }
            });
        }
        Op::Exp(a) => {
            accumulate(nodes, grads, *a, |gv| {
                for ((x, &gy), &y) in gv.iter_mut().zip(g).zip(out) {
                    *x += gy * y;
                }
            });
        }
        Op::Sum(a) => {
            accumulate(nodes, grads, *a, |gv| gv.iter_mut().for_each(|x| *x += g[0]));
        }
        Op::Mean(a) => {
            let n = S::from_usize(nodes[a.0].value.len()).expect("usize fits scalar");
            accumulate(nodes, grads, *a, |gv| gv.iter_mut().for_each(|x| *x += g[0] / n));
        }
        Op::Transpose(a) => {
            let (r, c) = dims(nodes, *a);
            accumulate(nodes, grads, *a, |gv| {
                for i in 0..r {
                    for j in 0..c {
                        gv[i * c + j] += g[j * r + i];
                    }
                }
            });
        }
        Op::Gather(a, flat) => {
            accumulate(nodes, grads, *a, |gv| {
                for (&i, &gy) in flat.iter().zip(g) {
                    gv[i] += gy;
                }
            });
        }
        Op::NormalizeRows(a, norms) => {
            let c = node.value.cols();
            let va = val(*a);
            accumulate(nodes, grads, *a, |gv| {
                for (i, &norm) in norms.iter().enumerate() {
                    let y = &out[i * c..(i + 1) * c];
                    let gr = &g[i * c..(i + 1) * c];
                    let raw = va[i * c..(i + 1) * c]
                        .iter()
                        .map(|&x| x * x)
                        .sum::<S>()
                        .sqrt();
                    if raw >= norm {
                        let dot = gr.iter().zip(y).map(|(&a, &b)| a * b).sum::<S>();
                        for j in 0..c {
                            gv[i * c + j] += (gr[j] - y[j] * dot) / norm;
                        }
                    } else {
                        for j in 0..c {
                            gv[i * c + j] += gr[j] / norm;
                        }
                    }
                }
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(t: &mut Tape<f64>, r: usize, c: usize, data: &[f64], grad: bool) -> Var {
        t.leaf(Tensor::matrix(r, c, data.to_vec()).unwrap(), grad)
    }

    #[test]
    fn matmul_shape() {
        let mut t = Tape::new();
        let a = mat(&mut t, 2, 3, &[0.0; 6], false);
        let b = mat(&mut t, 3, 4, &[0.0; 12], false);
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c).shape(), &[2, 4]);
        let err = t.matmul(b, a).unwrap_err();
        assert!(err.to_string().contains("[3, 4]") && err.to_string().contains("[2, 3]"));
    }

    #[test]
    fn softmax_is_stable_and_normalized() {
        let mut t = Tape::new();
        let a = mat(&mut t, 1, 2, &[1000.0, 1000.0], false);
        let s = t.softmax(a, 1).unwrap();
        assert_eq!(t.value(s).data(), &[0.5, 0.5]);
        let b = mat(&mut t, 2, 3, &[0.3, -2.0, 7.5, 1e-3, 40.0, -40.0], false);
        let s = t.softmax(b, 1).unwrap();
        for i in 0..2 {
            let total: f64 = t.value(s).row(i).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        let s0 = t.softmax(b, 0).unwrap();
        let v = t.value(s0);
        for j in 0..3 {
            assert!((v.get(0, j) + v.get(1, j) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_softmax_zeroes_excluded_entries() {
        let mut t = Tape::new();
        let a = mat(&mut t, 1, 3, &[1.0, 5.0, 1.0], false);
        let s = t.softmax_masked(a, Some(vec![true, false, true])).unwrap();
        assert_eq!(t.value(s).data(), &[0.5, 0.0, 0.5]);
    }

    #[test]
    fn layernorm_moments() {
        let mut t = Tape::new();
        let a = mat(&mut t, 2, 4, &[1.0, 2.0, 3.0, 10.0, -5.0, 0.5, 0.25, 8.0], false);
        let y = t.layernorm(a, 0.0);
        for i in 0..2 {
            let row = t.value(y).row(i);
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn square_sum_gradient() {
        let mut t = Tape::new();
        let x = mat(&mut t, 1, 3, &[1.0, -2.0, 0.5], true);
        let sq = t.mul(x, x).unwrap();
        let loss = t.sum(sq);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &[2.0, -4.0, 1.0]);
        assert!(t.is_empty());
    }

    #[test]
    fn matmul_sum_gradient() {
        let mut t = Tape::new();
        let a = mat(&mut t, 2, 2, &[1.0, 2.0, 3.0, 4.0], true);
        let b = mat(&mut t, 2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], true);
        let c = t.matmul(a, b).unwrap();
        let loss = t.sum(c);
        let g = t.backward(loss).unwrap();
        // d/dA sum(AB) = 1 Bᵀ: each row holds B's row sums.
        assert_eq!(g.get(a).unwrap(), &[6.0, 15.0, 6.0, 15.0]);
        assert_eq!(g.get(b).unwrap(), &[4.0, 4.0, 4.0, 6.0, 6.0, 6.0]);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let mut t = Tape::new();
        let x = mat(&mut t, 1, 1, &[3.0], true);
        let y = t.scale(x, 2.0);
        let z = t.mul(y, y).unwrap(); // 4x²
        let w = t.add(z, y).unwrap(); // 4x² + 2x
        let loss = t.sum(w);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &[26.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = mat(&mut t, 1, 2, &[1.0, 2.0], true);
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_do_not_require_grad() {
        let mut t = Tape::new();
        let c = mat(&mut t, 1, 2, &[1.0, 2.0], false);
        let x = mat(&mut t, 1, 2, &[1.0, 2.0], true);
        let cc = t.mul(c, c).unwrap();
        assert!(!t.requires_grad(cc));
        let p = t.mul(cc, x).unwrap();
        let loss = t.sum(p);
        let g = t.backward(loss).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap(), &[1.0, 4.0]);
    }
}
