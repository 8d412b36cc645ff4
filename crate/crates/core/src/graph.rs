//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Graph`] is built fresh for every forward pass. Parameters enter the
//! graph through [`Graph::param`], which copies the current value out of a
//! [`ParamStore`] once per graph; [`Graph::backward`] then yields gradients
//! keyed by [`ParamId`].

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::params::{ParamId, ParamStore};
use crate::tensor::Matrix;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Ln(Var),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    Square(Var),
    Transpose(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LayerNormRows(Var, f64),
    BatchNormCols(Var, f64),
    GatherRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    PickPerRow(Var, Vec<usize>),
    Sum(Var),
    Clamp(Var, f64, f64),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// A tape of operations recorded during one forward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<ParamId, Var>,
}

/// Gradients produced by [`Graph::backward`].
pub struct Grads {
    nodes: Vec<Option<Matrix>>,
    params: BTreeMap<ParamId, Var>,
}

impl Grads {
    /// Gradient with respect to a node, if the node influenced the output.
    pub fn of(&self, var: Var) -> Option<&Matrix> {
        self.nodes[var.0].as_ref()
    }

    /// Gradient with respect to a parameter. `None` when the parameter never
    /// entered the graph or did not influence the output.
    pub fn param(&self, id: ParamId) -> Option<&Matrix> {
        self.params.get(&id).and_then(|v| self.nodes[v.0].as_ref())
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.params.keys().copied()
    }
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    let u = C * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + libm::tanh(u))
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = libm::tanh(u);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var + eps))
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

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    /// A constant input; no gradient is tracked for it.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A free input whose gradient is tracked (used by isolation audits).
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// The graph node holding parameter `id`, created on first use.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Leaf, true);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    /// Adds a `1 × n` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (xv, rv) = (self.value(x), self.value(row));
        assert_eq!(rv.rows(), 1);
        assert_eq!(rv.cols(), xv.cols(), "broadcast row width mismatch");
        let mut value = xv.clone();
        for r in 0..value.rows() {
            for (o, b) in value.row_mut(r).iter_mut().zip(rv.data()) {
                *o += b;
            }
        }
        let rg = self.rg(x) || self.rg(row);
        self.push(value, Op::AddRow(x, row), rg)
    }

    /// Multiplies every row of `x` elementwise by a `1 × n` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Var {
        let (xv, rv) = (self.value(x), self.value(row));
        assert_eq!(rv.rows(), 1);
        assert_eq!(rv.cols(), xv.cols(), "broadcast row width mismatch");
        let mut value = xv.clone();
        for r in 0..value.rows() {
            for (o, b) in value.row_mut(r).iter_mut().zip(rv.data()) {
                *o *= b;
            }
        }
        let rg = self.rg(x) || self.rg(row);
        self.push(value, Op::MulRow(x, row), rg)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let value = self.value(x).map(|v| v * k);
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, k), rg)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v + c);
        let rg = self.rg(x);
        self.push(value, Op::AddScalar(x), rg)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).map(libm::exp);
        let rg = self.rg(x);
        self.push(value, Op::Exp(x), rg)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let value = self.value(x).map(libm::log);
        let rg = self.rg(x);
        self.push(value, Op::Ln(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        let rg = self.rg(x);
        self.push(value, Op::Sigmoid(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(libm::tanh);
        let rg = self.rg(x);
        self.push(value, Op::Tanh(x), rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(gelu);
        let rg = self.rg(x);
        self.push(value, Op::Gelu(x), rg)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        let rg = self.rg(x);
        self.push(value, Op::Square(x), rg)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transpose();
        let rg = self.rg(x);
        self.push(value, Op::Transpose(x), rg)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut value = xv.clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        let rg = self.rg(x);
        self.push(value, Op::SoftmaxRows(x), rg)
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut value = xv.clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let lse = log_sum_exp(row);
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let rg = self.rg(x);
        self.push(value, Op::LogSoftmaxRows(x), rg)
    }

    /// Normalizes each row to zero mean and unit (biased) variance.
    pub fn layer_norm_rows(&mut self, x: Var, eps: f64) -> Var {
        let mut value = self.value(x).clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let (mean, s) = row_stats(row, eps);
            for v in row.iter_mut() {
                *v = (*v - mean) / s;
            }
        }
        let rg = self.rg(x);
        self.push(value, Op::LayerNormRows(x, eps), rg)
    }

    /// Normalizes each column over the batch (rows) with biased variance.
    pub fn batch_norm_cols(&mut self, x: Var, eps: f64) -> Var {
        let xt = self.value(x).transpose();
        let mut out_t = xt.clone();
        for c in 0..out_t.rows() {
            let col = out_t.row_mut(c);
            let (mean, s) = row_stats(col, eps);
            for v in col.iter_mut() {
                *v = (*v - mean) / s;
            }
        }
        let rg = self.rg(x);
        self.push(out_t.transpose(), Op::BatchNormCols(x, eps), rg)
    }

    pub fn gather_rows(&mut self, x: Var, indices: Vec<usize>) -> Var {
        let xv = self.value(x);
        let cols = xv.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in &indices {
            data.extend_from_slice(xv.row(i));
        }
        let value = Matrix::from_vec(indices.len(), cols, data);
        let rg = self.rg(x);
        self.push(value, Op::GatherRows(x, indices), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut value = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            let pv = self.value(*p);
            assert_eq!(pv.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                value.row_mut(r)[offset..offset + pv.cols()].copy_from_slice(pv.row(r));
            }
            offset += pv.cols();
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.cols(), "slice_cols out of range");
        let mut value = Matrix::zeros(xv.rows(), len);
        for r in 0..xv.rows() {
            value.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        let rg = self.rg(x);
        self.push(value, Op::SliceCols(x, start), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let pv = self.value(*p);
            assert_eq!(pv.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(pv.data());
            rows += pv.rows();
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Picks `x[i, indices[i]]` for every row, giving an `n × 1` column.
    pub fn pick_per_row(&mut self, x: Var, indices: Vec<usize>) -> Var {
        let xv = self.value(x);
        assert_eq!(indices.len(), xv.rows());
        let data = indices.iter().enumerate().map(|(r, &c)| xv.get(r, c)).collect();
        let value = Matrix::from_vec(indices.len(), 1, data);
        let rg = self.rg(x);
        self.push(value, Op::PickPerRow(x, indices), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push(value, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(x).map(|v| v.clamp(lo, hi));
        let rg = self.rg(x);
        self.push(value, Op::Clamp(x, lo, hi), rg)
    }

    /// Back-propagates from the scalar `output`.
    pub fn backward(&self, output: Var) -> Grads {
        assert_eq!(self.value(output).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Matrix::scalar(1.0));
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads { nodes: grads, params: self.params.clone() }
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, contribution: Matrix) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&contribution),
            slot @ None => *slot = Some(contribution),
        }
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.matmul_t(self.value(*b)));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, self.value(*a).t_matmul(g));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::AddRow(x, row) => {
                self.accumulate(grads, *x, g.clone());
                if self.rg(*row) {
                    self.accumulate(grads, *row, column_sums(g));
                }
            }
            Op::MulRow(x, row) => {
                let rv = self.value(*row);
                if self.rg(*x) {
                    let mut gx = g.clone();
                    for r in 0..gx.rows() {
                        for (o, w) in gx.row_mut(r).iter_mut().zip(rv.data()) {
                            *o *= w;
                        }
                    }
                    self.accumulate(grads, *x, gx);
                }
                if self.rg(*row) {
                    let prod = g.zip_map(self.value(*x), |a, b| a * b);
                    self.accumulate(grads, *row, column_sums(&prod));
                }
            }
            Op::Scale(x, k) => self.accumulate(grads, *x, g.map(|v| v * k)),
            Op::AddScalar(x) => self.accumulate(grads, *x, g.clone()),
            Op::Exp(x) => self.accumulate(grads, *x, g.zip_map(y, |a, b| a * b)),
            Op::Ln(x) => self.accumulate(grads, *x, g.zip_map(self.value(*x), |a, b| a / b)),
            Op::Sigmoid(x) => self.accumulate(grads, *x, g.zip_map(y, |a, s| a * s * (1.0 - s))),
            Op::Tanh(x) => self.accumulate(grads, *x, g.zip_map(y, |a, t| a * (1.0 - t * t))),
            Op::Gelu(x) => self.accumulate(grads, *x, g.zip_map(self.value(*x), |a, v| a * gelu_grad(v))),
            Op::Square(x) => self.accumulate(grads, *x, g.zip_map(self.value(*x), |a, v| 2.0 * a * v)),
            Op::Transpose(x) => self.accumulate(grads, *x, g.transpose()),
            Op::SoftmaxRows(x) => {
                let mut gx = g.clone();
                for r in 0..gx.rows() {
                    let yr = y.row(r);
                    let dot: f64 = g.row(r).iter().zip(yr).map(|(a, b)| a * b).sum();
                    for (o, s) in gx.row_mut(r).iter_mut().zip(yr) {
                        *o = s * (*o - dot);
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::LogSoftmaxRows(x) => {
                let mut gx = g.clone();
                for r in 0..gx.rows() {
                    let total: f64 = g.row(r).iter().sum();
                    for (o, ly) in gx.row_mut(r).iter_mut().zip(y.row(r)) {
                        *o -= libm::exp(*ly) * total;
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::LayerNormRows(x, eps) => {
                let xv = self.value(*x);
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let (_, s) = row_stats(xv.row(r), *eps);
                    norm_backward(g.row(r), y.row(r), s, gx.row_mut(r));
                }
                self.accumulate(grads, *x, gx);
            }
            Op::BatchNormCols(x, eps) => {
                let xt = self.value(*x).transpose();
                let (gt, yt) = (g.transpose(), y.transpose());
                let mut gx_t = Matrix::zeros(xt.rows(), xt.cols());
                for c in 0..xt.rows() {
                    let (_, s) = row_stats(xt.row(c), *eps);
                    norm_backward(gt.row(c), yt.row(c), s, gx_t.row_mut(c));
                }
                self.accumulate(grads, *x, gx_t.transpose());
            }
            Op::GatherRows(x, indices) => {
                let xv = self.value(*x);
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                for (r, &i) in indices.iter().enumerate() {
                    for (o, v) in gx.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let width = self.value(*p).cols();
                    if self.rg(*p) {
                        let mut gp = Matrix::zeros(g.rows(), width);
                        for r in 0..g.rows() {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + width]);
                        }
                        self.accumulate(grads, *p, gp);
                    }
                    offset += width;
                }
            }
            Op::SliceCols(x, start) => {
                let xv = self.value(*x);
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                for r in 0..g.rows() {
                    gx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *x, gx);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                let cols = g.cols();
                for p in parts {
                    let rows = self.value(*p).rows();
                    if self.rg(*p) {
                        let data = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                        self.accumulate(grads, *p, Matrix::from_vec(rows, cols, data));
                    }
                    offset += rows;
                }
            }
            Op::PickPerRow(x, indices) => {
                let xv = self.value(*x);
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                for (r, &c) in indices.iter().enumerate() {
                    gx.set(r, c, g.get(r, 0));
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                self.accumulate(grads, *x, Matrix::filled(xv.rows(), xv.cols(), g.item()));
            }
            Op::Clamp(x, lo, hi) => {
                let gx = g.zip_map(self.value(*x), |a, v| if v >= *lo && v <= *hi { a } else { 0.0 });
                self.accumulate(grads, *x, gx);
            }
        }
    }
}

fn column_sums(g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    out
}

/// Gradient of `xhat = (x - mean) / s` for one normalized group.
fn norm_backward(g: &[f64], xhat: &[f64], s: f64, out: &mut [f64]) {
    let n = g.len() as f64;
    let mean_g = g.iter().sum::<f64>() / n;
    let mean_gx = g.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / n;
    for ((o, gi), xi) in out.iter_mut().zip(g).zip(xhat) {
        *o = (gi - mean_g - xi * mean_gx) / s;
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>())
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::boxed::Box;

    /// Central-difference check of d(sum(f(x) * w))/dx for a unary graph op.
    fn check_unary(build: impl Fn(&mut Graph, Var) -> Var, x: Matrix) {
        let eval = |x: &Matrix| -> (f64, Option<Matrix>) {
            let mut g = Graph::new();
            let xv = g.input(x.clone());
            let y = build(&mut g, xv);
            let shape = g.value(y).shape();
            let w: Vec<f64> = (0..shape.0 * shape.1).map(|i| 0.3 + 0.17 * i as f64).collect();
            let wv = g.constant(Matrix::from_vec(shape.0, shape.1, w));
            let prod = g.mul(y, wv);
            let s = g.sum(prod);
            let grads = g.backward(s);
            (g.scalar(s), grads.of(xv).cloned())
        };
        let (_, analytic) = eval(&x);
        let analytic = analytic.expect("input gradient");
        let h = 1e-6;
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            let numeric = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
            let a = analytic.data()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            assert!((a - numeric).abs() / denom < 1e-5, "element {i}: analytic {a} numeric {numeric}");
        }
    }

    fn sample() -> Matrix {
        Matrix::from_vec(3, 4, alloc::vec![0.3, -1.2, 0.8, 2.1, -0.4, 0.05, 1.7, -0.9, 0.6, 0.2, -1.5, 0.33])
    }

    #[test]
    fn unary_ops_match_finite_differences() {
        type Build = Box<dyn Fn(&mut Graph, Var) -> Var>;
        let ops: Vec<Build> = alloc::vec![
            Box::new(|g, x| g.exp(x)),
            Box::new(|g, x| g.sigmoid(x)),
            Box::new(|g, x| g.tanh(x)),
            Box::new(|g, x| g.gelu(x)),
            Box::new(|g, x| g.square(x)),
            Box::new(|g, x| g.transpose(x)),
            Box::new(|g, x| g.softmax_rows(x)),
            Box::new(|g, x| g.log_softmax_rows(x)),
            Box::new(|g, x| g.layer_norm_rows(x, 1e-5)),
            Box::new(|g, x| g.batch_norm_cols(x, 1e-5)),
            Box::new(|g, x| g.gather_rows(x, alloc::vec![2, 0, 2])),
            Box::new(|g, x| g.slice_cols(x, 1, 2)),
            Box::new(|g, x| g.pick_per_row(x, alloc::vec![3, 0, 1])),
            Box::new(|g, x| g.clamp(x, -1.0, 1.0)),
            Box::new(|g, x| {
                let xt = g.transpose(x);
                g.matmul(x, xt)
            }),
            Box::new(|g, x| {
                let a = g.slice_cols(x, 0, 2);
                let b = g.slice_cols(x, 2, 2);
                let c = g.concat_cols(&[b, a]);
                g.concat_rows(&[c, c])
            }),
            Box::new(|g, x| {
                let row = g.gather_rows(x, alloc::vec![1]);
                let y = g.add_row(x, row);
                g.mul_row(y, row)
            }),
            Box::new(|g, x| {
                let e = g.exp(x);
                g.ln(e)
            }),
        ];
        for op in ops {
            check_unary(op, sample());
        }
    }

    #[test]
    fn parameters_enter_graph_once() {
        let mut store = ParamStore::new();
        let id = store.insert("w", crate::params::Group::Encoder, false, Matrix::scalar(3.0));
        let mut g = Graph::new();
        let a = g.param(&store, id);
        let b = g.param(&store, id);
        assert_eq!(a, b);
        let y = g.mul(a, b);
        let grads = g.backward(y);
        assert_eq!(grads.param(id).unwrap().item(), 6.0);
    }
}
