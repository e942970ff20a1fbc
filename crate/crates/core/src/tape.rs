//! Reverse-mode automatic differentiation over a linear operation record.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Operations
//! append a node whose operands are already on the tape, so the node order is
//! a topological order and `backward` is a single reverse sweep. A tape can be
//! swept once; a new forward pass needs a new tape.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{
    axis_split, layer_norm_row, matmul_at_into, matmul_bt_into, matmul_into, Tensor,
};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    AddRow(Var, Var),
    Relu(Var),
    Softmax(Var, usize),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<F>,
        rstd: Vec<F>,
    },
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<Option<usize>>),
    AddMaskedRow(Var, Var, Vec<bool>),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
    grads: Vec<Option<Vec<F>>>,
    checked: bool,
    consumed: bool,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    /// A tape in checked mode: every produced value is scanned for NaN/Inf.
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            checked: true,
            consumed: false,
        }
    }

    pub fn unchecked() -> Self {
        Tape {
            checked: false,
            ..Self::new()
        }
    }

    pub fn is_checked(&self) -> bool {
        self.checked
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Result<Var> {
        self.push(value, Op::Leaf, requires_grad, "leaf")
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<F>) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<F>) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`. `None` before
    /// backward or when `v` does not influence the loss; zero for leaves that
    /// require a gradient but were not reached.
    pub fn grad(&self, v: Var) -> Option<Tensor<F>> {
        let node = &self.nodes[v.0];
        if !self.consumed || !node.requires_grad {
            return None;
        }
        let data = match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => vec![F::zero(); node.value.len()],
        };
        Tensor::new(node.value.shape(), data).ok()
    }

    fn push(
        &mut self,
        value: Tensor<F>,
        op: Op<F>,
        requires_grad: bool,
        name: &'static str,
    ) -> Result<Var> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if self.checked && !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Shape {
            op,
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::MatMul(a, b), rg, "matmul")
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(self.shape_err("matmul_bt", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[0]);
        let mut out = vec![F::zero(); m * n];
        matmul_bt_into(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        let rg = self.rg(&[a, b]);
        self.push(
            Tensor::new(&[m, n], out)?,
            Op::MatMulBt(a, b),
            rg,
            "matmul_bt",
        )
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        let rg = self.rg(&[a]);
        self.push(out, Op::Transpose(a), rg, "transpose")
    }

    fn zip(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(F, F) -> F,
    ) -> Result<Tensor<F>> {
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_err(name, a, b));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.shape(a), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Add(a, b), rg, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Sub(a, b), rg, "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Mul(a, b), rg, "mul")
    }

    pub fn scale(&mut self, a: Var, s: F) -> Result<Var> {
        let out = self.value(a).map(|x| x * s);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, s), rg, "scale")
    }

    /// Adds the vector `b` to every row (last axis) of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let cols = self.value(x).cols();
        if self.value(b).len() != cols {
            return Err(self.shape_err("add_row", x, b));
        }
        let bd = self.value(b).data().to_vec();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(cols) {
            for (o, &bj) in row.iter_mut().zip(&bd) {
                *o += bj;
            }
        }
        let rg = self.rg(&[x, b]);
        self.push(out, Op::AddRow(x, b), rg, "add_row")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self
            .value(x)
            .map(|v| if v > F::zero() { v } else { F::zero() });
        let rg = self.rg(&[x]);
        self.push(out, Op::Relu(x), rg, "relu")
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        if self.checked && !self.value(x).all_finite() {
            return Err(Error::NonFinite { op: "softmax" });
        }
        let out = self.value(x).softmax(axis)?;
        let rg = self.rg(&[x]);
        self.push(out, Op::Softmax(x, axis), rg, "softmax")
    }

    /// Softmax over the last axis.
    pub fn softmax_last(&mut self, x: Var) -> Result<Var> {
        let axis = self.value(x).rank() - 1;
        self.softmax(x, axis)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let d = xv.cols();
        if self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(self.shape_err("layer_norm", x, gain));
        }
        let rows = xv.rows();
        let mut xhat = vec![F::zero(); xv.len()];
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            rstd.push(layer_norm_row(xv.row(r), &mut xhat[r * d..(r + 1) * d]));
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let out: Vec<F> = xhat
            .iter()
            .enumerate()
            .map(|(i, &h)| h * g[i % d] + b[i % d])
            .collect();
        let out = Tensor::new(xv.shape(), out)?;
        let rg = self.rg(&[x, gain, bias]);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
            "layer_norm",
        )
    }

    /// `x W + b` for a matrix `x`; the bias is broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    /// Columns `start..start+len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let cols = xv.cols();
        if len == 0 || start + len > cols {
            return Err(Error::Shape {
                op: "slice_cols",
                lhs: xv.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let rows = xv.rows();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&xv.row(r)[start..start + len]);
        }
        let out = Tensor::new(&[rows, len], out)?;
        let rg = self.rg(&[x]);
        self.push(out, Op::SliceCols(x, start), rg, "slice_cols")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Shape {
            op: "concat_cols",
            lhs: vec![],
            rhs: vec![],
        })?;
        let rows = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(self.shape_err("concat_cols", first, p));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(&[rows, total], out)?;
        let rg = self.rg(parts);
        self.push(out, Op::ConcatCols(parts.to_vec()), rg, "concat_cols")
    }

    /// Row `i` of the output is `table[index[i]]`, or zeros for `None`.
    pub fn gather_rows(&mut self, table: Var, index: Vec<Option<usize>>) -> Result<Var> {
        let tv = self.value(table);
        let (n, d) = (tv.rows(), tv.cols());
        if index.is_empty() {
            return Err(Error::Shape {
                op: "gather_rows",
                lhs: tv.shape().to_vec(),
                rhs: vec![0],
            });
        }
        let mut out = vec![F::zero(); index.len() * d];
        for (r, ix) in index.iter().enumerate() {
            if let Some(i) = *ix {
                if i >= n {
                    return Err(Error::Shape {
                        op: "gather_rows",
                        lhs: tv.shape().to_vec(),
                        rhs: vec![i],
                    });
                }
                out[r * d..(r + 1) * d].copy_from_slice(tv.row(i));
            }
        }
        let out = Tensor::new(&[index.len(), d], out)?;
        let rg = self.rg(&[table]);
        self.push(out, Op::GatherRows(table, index), rg, "gather_rows")
    }

    /// Adds the vector `row` to the rows of `x` flagged in `mask`.
    pub fn add_masked_row(&mut self, x: Var, row: Var, mask: Vec<bool>) -> Result<Var> {
        let xv = self.value(x);
        let d = xv.cols();
        if self.value(row).len() != d || mask.len() != xv.rows() {
            return Err(self.shape_err("add_masked_row", x, row));
        }
        let rd = self.value(row).data().to_vec();
        let mut out = xv.clone();
        for (r, chunk) in out.data_mut().chunks_mut(d).enumerate() {
            if mask[r] {
                for (o, &u) in chunk.iter_mut().zip(&rd) {
                    *o += u;
                }
            }
        }
        let rg = self.rg(&[x, row]);
        self.push(out, Op::AddMaskedRow(x, row, mask), rg, "add_masked_row")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().copied().sum::<F>();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg, "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let s = v.data().iter().copied().sum::<F>() / F::of(v.len() as f64);
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg, "mean")
    }

    /// Mean squared error between `pred` and a constant `target` of equal shape.
    pub fn mse(&mut self, pred: Var, target: Tensor<F>) -> Result<Var> {
        let t = self.constant(target)?;
        let diff = self.sub(pred, t)?;
        let sq = self.mul(diff, diff)?;
        self.mean(sq)
    }

    /// Reverse sweep from a scalar `loss`. Populates gradients readable with
    /// [`Tape::grad`]. Fails on a second call.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        self.consumed = true;
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<F>>> = vec![None; n];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![F::one()]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        if self.checked {
            for (i, g) in self.grads.iter().enumerate() {
                if let Some(g) = g {
                    if g.iter().any(|x| !x.is_finite()) {
                        log::warn!("non-finite gradient at node {i}");
                        return Err(Error::NonFinite { op: "backward" });
                    }
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[F], grads: &mut [Option<Vec<F>>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [F])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let len = nodes[v.0].value.len();
            let buf = grads[v.0].get_or_insert_with(|| vec![F::zero(); len]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                acc(*a, &mut |da| matmul_bt_into(g, bv.data(), da, m, n, k));
                acc(*b, &mut |db| matmul_at_into(av.data(), g, db, k, m, n));
            }
            Op::MatMulBt(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[0]);
                acc(*a, &mut |da| matmul_into(g, bv.data(), da, m, n, k));
                acc(*b, &mut |db| matmul_at_into(g, av.data(), db, n, m, k));
            }
            Op::Transpose(a) => {
                let (m, n) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
                acc(*a, &mut |da| {
                    for r in 0..m {
                        for c in 0..n {
                            da[r * n + c] += g[c * m + r];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |da| add_into(da, g));
                acc(*b, &mut |db| add_into(db, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |da| add_into(da, g));
                acc(*b, &mut |db| {
                    for (d, &x) in db.iter_mut().zip(g) {
                        *d -= x;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                acc(*a, &mut |da| {
                    for ((d, &x), &y) in da.iter_mut().zip(g).zip(bv) {
                        *d += x * y;
                    }
                });
                acc(*b, &mut |db| {
                    for ((d, &x), &y) in db.iter_mut().zip(g).zip(av) {
                        *d += x * y;
                    }
                });
            }
            Op::Scale(a, s) => {
                acc(*a, &mut |da| {
                    for (d, &x) in da.iter_mut().zip(g) {
                        *d += x * *s;
                    }
                });
            }
            Op::AddRow(x, b) => {
                let cols = nodes[b.0].value.len();
                acc(*x, &mut |dx| add_into(dx, g));
                acc(*b, &mut |db| {
                    for row in g.chunks(cols) {
                        add_into(db, row);
                    }
                });
            }
            Op::Relu(x) => {
                let xv = nodes[x.0].value.data();
                acc(*x, &mut |dx| {
                    for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(xv) {
                        if xi > F::zero() {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Softmax(x, axis) => {
                let y = node.value.data();
                let (outer, n, inner) =
                    axis_split(node.value.shape(), *axis, "softmax").expect("validated in forward");
                acc(*x, &mut |dx| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let base = o * n * inner + i;
                            let mut dot = F::zero();
                            for j in 0..n {
                                let p = base + j * inner;
                                dot += g[p] * y[p];
                            }
                            for j in 0..n {
                                let p = base + j * inner;
                                dx[p] += y[p] * (g[p] - dot);
                            }
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let gv = nodes[gain.0].value.data();
                let d = gv.len();
                acc(*bias, &mut |db| {
                    for row in g.chunks(d) {
                        add_into(db, row);
                    }
                });
                acc(*gain, &mut |dg| {
                    for (row, hrow) in g.chunks(d).zip(xhat.chunks(d)) {
                        for ((o, &gi), &h) in dg.iter_mut().zip(row).zip(hrow) {
                            *o += gi * h;
                        }
                    }
                });
                let df = F::of(d as f64);
                acc(*x, &mut |dx| {
                    for (r, ((drow, grow), hrow)) in dx
                        .chunks_mut(d)
                        .zip(g.chunks(d))
                        .zip(xhat.chunks(d))
                        .enumerate()
                    {
                        let mut sum = F::zero();
                        let mut sum_h = F::zero();
                        for j in 0..d {
                            let dh = grow[j] * gv[j];
                            sum += dh;
                            sum_h += dh * hrow[j];
                        }
                        let k = rstd[r] / df;
                        for j in 0..d {
                            let dh = grow[j] * gv[j];
                            drow[j] += k * (df * dh - sum - hrow[j] * sum_h);
                        }
                    }
                });
            }
            Op::SliceCols(x, start) => {
                let cols = nodes[x.0].value.cols();
                let len = node.value.cols();
                acc(*x, &mut |dx| {
                    for (drow, grow) in dx.chunks_mut(cols).zip(g.chunks(len)) {
                        add_into(&mut drow[*start..*start + len], grow);
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let w = nodes[p.0].value.cols();
                    acc(*p, &mut |dp| {
                        for (drow, grow) in dp.chunks_mut(w).zip(g.chunks(total)) {
                            add_into(drow, &grow[offset..offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            Op::GatherRows(table, index) => {
                let d = node.value.cols();
                acc(*table, &mut |dt| {
                    for (r, ix) in index.iter().enumerate() {
                        if let Some(i) = *ix {
                            add_into(&mut dt[i * d..(i + 1) * d], &g[r * d..(r + 1) * d]);
                        }
                    }
                });
            }
            Op::AddMaskedRow(x, row, mask) => {
                let d = node.value.cols();
                acc(*x, &mut |dx| add_into(dx, g));
                acc(*row, &mut |du| {
                    for (r, grow) in g.chunks(d).enumerate() {
                        if mask[r] {
                            add_into(du, grow);
                        }
                    }
                });
            }
            Op::Sum(x) => {
                acc(*x, &mut |dx| {
                    for d in dx.iter_mut() {
                        *d += g[0];
                    }
                });
            }
            Op::Mean(x) => {
                let n = F::of(nodes[x.0].value.len() as f64);
                acc(*x, &mut |dx| {
                    for d in dx.iter_mut() {
                        *d += g[0] / n;
                    }
                });
            }
        }
    }
}

#[inline]
fn add_into<F: Scalar>(dst: &mut [F], src: &[F]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn second_backward_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1., 2.])).unwrap();
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert!(matches!(tape.backward(s), Err(Error::TapeConsumed)));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1., 2.])).unwrap();
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn constant_loss_gives_zero_grads() {
        let mut tape = Tape::new();
        let w = tape.param(t(&[2, 2], &[1., 2., 3., 4.])).unwrap();
        let c = tape.constant(t(&[1], &[5.])).unwrap();
        let loss = tape.sum(c).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(w).unwrap().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn sum_of_matvec_gradient_is_outer_structure() {
        // loss = Σ (W x) ⇒ dW[i][j] = x[j]
        let mut tape = Tape::new();
        let w = tape
            .param(t(&[3, 2], &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6]))
            .unwrap();
        let x = tape.constant(t(&[2, 1], &[2., -3.])).unwrap();
        let y = tape.matmul(w, x).unwrap();
        let loss = tape.sum(y).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[2., -3., 2., -3., 2., -3.]);
        assert!(tape.grad(x).is_none());
    }

    #[test]
    fn checked_mode_rejects_nan() {
        let mut tape = Tape::<f64>::new();
        assert!(matches!(
            tape.constant(t(&[2], &[1., f64::NAN])),
            Err(Error::NonFinite { .. })
        ));
        let mut loose = Tape::<f64>::unchecked();
        let x = loose.constant(t(&[2], &[1., f64::NAN])).unwrap();
        assert!(loose.value(x).data()[1].is_nan());
    }

    #[test]
    fn gather_and_masked_row_route_gradients() {
        let mut tape = Tape::new();
        let table = tape.param(t(&[3, 2], &[1., 2., 3., 4., 5., 6.])).unwrap();
        let g = tape
            .gather_rows(table, vec![Some(2), None, Some(2)])
            .unwrap();
        assert_eq!(tape.value(g).data(), &[5., 6., 0., 0., 5., 6.]);
        let u = tape.param(t(&[2], &[10., 20.])).unwrap();
        let x = tape.add_masked_row(g, u, vec![false, true, true]).unwrap();
        assert_eq!(tape.value(x).data(), &[5., 6., 10., 20., 15., 26.]);
        let loss = tape.sum(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(table).unwrap().data(), &[0., 0., 0., 0., 2., 2.]);
        assert_eq!(tape.grad(u).unwrap().data(), &[2., 2.]);
    }

    #[test]
    fn slice_concat_roundtrip() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2, 3], &[1., 2., 3., 4., 5., 6.])).unwrap();
        let a = tape.slice_cols(x, 0, 1).unwrap();
        let b = tape.slice_cols(x, 1, 2).unwrap();
        let c = tape.concat_cols(&[a, b]).unwrap();
        assert_eq!(tape.value(c), tape.value(x));
        let s = tape.sum(c).unwrap();
        tape.backward(s).unwrap();
        assert!(tape.grad(x).unwrap().data().iter().all(|&g| g == 1.0));
    }
}
