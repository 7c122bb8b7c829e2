//! Reverse-mode differentiation over a dynamically recorded tape.
//!
//! A [`Tape`] lives for one loss evaluation. Parameters are bound onto it as
//! leaves, every operation appends a node holding its output value, and
//! [`Tape::backward`] walks the nodes in reverse accumulating vector-Jacobian
//! products. All operations work on matrix views of tensors (see
//! [`Tensor::rows`] / [`Tensor::cols`]).
//!
//! Binary elementwise operations broadcast a dimension of size 1 against any
//! size, which covers row-vector biases, column scalings and `1 x 1` scalars.

use super::param::{ParamId, ParamSet};
use super::tensor::{matmul_into, sigmoid, softplus, Tensor, EPS_NORM};
use crate::error::{PflError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy)]
enum Unary {
    Tanh,
    Softplus,
    Exp,
    Log,
    Square,
    Powf(f64),
    Scale(f64),
    Shift(f64),
    Clamp(f64, f64),
    LogAbsClamped(f64),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Transpose(Var),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    MeanRows(Var),
    SoftmaxRows(Var),
    L2NormalizeRows(Var),
    LayerNormRows(Var, f64),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Reshape(Var),
    Upsample(Var, UpsamplePlan),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Precomputed align-corners bilinear interpolation weights.
#[derive(Debug, Clone)]
struct UpsamplePlan {
    in_w: usize,
    rows: Vec<(usize, usize, f64)>,
    cols: Vec<(usize, usize, f64)>,
}

fn axis_plan(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            if n_in == 1 || n_out == 1 {
                return (0, 0, 0.0);
            }
            let pos = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
            let lo = (pos.floor() as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Per-parameter leaves bound onto a tape, indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct Bindings {
    vars: Vec<Var>,
}

impl Bindings {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.index()]
    }
}

impl std::ops::Index<ParamId> for Bindings {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.index()]
    }
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Adds `scale * dL/dp` into the `grad` buffer of every trainable
    /// parameter. Fails if any contribution is non-finite.
    pub fn accumulate(&self, bindings: &Bindings, params: &mut ParamSet, scale: f64) -> Result<()> {
        for id in params.ids().collect::<Vec<_>>() {
            let p = params.get_mut(id);
            if !p.trainable {
                continue;
            }
            if let Some(g) = self.get(bindings.var(id)) {
                if !g.is_finite() {
                    return Err(PflError::numeric(format!(
                        "non-finite gradient for parameter {}",
                        p.name
                    )));
                }
                for (acc, &v) in p.grad.data_mut().iter_mut().zip(g.data()) {
                    *acc += scale * v;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn broadcast_dims(a: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    let dim = |x: usize, y: usize| -> Option<usize> {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    match (dim(a.rows(), b.rows()), dim(a.cols(), b.cols())) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(PflError::argument(format!(
            "shapes {:?} and {:?} do not broadcast",
            a.shape(),
            b.shape()
        ))),
    }
}

#[inline]
fn bcast_index(t: &Tensor, i: usize, j: usize) -> usize {
    let r = if t.rows() == 1 { 0 } else { i };
    let c = if t.cols() == 1 { 0 } else { j };
    r * t.cols() + c
}

/// Sums a full-size gradient down to the (possibly broadcast) shape of `like`.
fn reduce_to(g: &[f64], rows: usize, cols: usize, like: &Tensor) -> Tensor {
    if like.rows() == rows && like.cols() == cols {
        return Tensor::new(like.shape().to_vec(), g.to_vec()).expect("same size");
    }
    let mut out = Tensor::zeros(like.shape());
    for i in 0..rows {
        for j in 0..cols {
            let k = bcast_index(like, i, j);
            out.data_mut()[k] += g[i * cols + j];
        }
    }
    out
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// A leaf holding a constant (or a parameter copy).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant_scalar(&mut self, value: f64) -> Var {
        self.leaf(Tensor::scalar(value))
    }

    /// Copies every parameter value onto the tape as a leaf.
    pub fn bind(&mut self, params: &ParamSet) -> Bindings {
        let vars = params.iter().map(|p| self.leaf(p.value.clone())).collect();
        Bindings { vars }
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (rows, cols) = broadcast_dims(ta, tb)?;
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let x = ta.data()[bcast_index(ta, i, j)];
                let y = tb.data()[bcast_index(tb, i, j)];
                out.push(match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                    Binary::Div => x / y,
                });
            }
        }
        let shape = if ta.rows() == rows && ta.cols() == cols {
            ta.shape().to_vec()
        } else if tb.rows() == rows && tb.cols() == cols {
            tb.shape().to_vec()
        } else {
            vec![rows, cols]
        };
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Binary(kind, a, b)))
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

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let f = |x: f64| match kind {
            Unary::Tanh => x.tanh(),
            Unary::Softplus => softplus(x),
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Square => x * x,
            Unary::Powf(p) => x.powf(p),
            Unary::Scale(s) => x * s,
            Unary::Shift(s) => x + s,
            Unary::Clamp(lo, hi) => x.clamp(lo, hi),
            Unary::LogAbsClamped(eps) => x.abs().max(eps).ln(),
        };
        let value = self.value(a).map(f);
        self.push(value, Op::Unary(kind, a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Unary::Softplus, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(Unary::Log, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        self.unary(Unary::Powf(p), a)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(Unary::Scale(s), a)
    }

    pub fn shift(&mut self, a: Var, s: f64) -> Var {
        self.unary(Unary::Shift(s), a)
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.shift(neg, 1.0)
    }

    /// Clamp with a pass-through gradient inside `[lo, hi]` and zero outside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(Unary::Clamp(lo, hi), a)
    }

    /// `ln(max(|a|, eps))`.
    pub fn log_abs_clamped(&mut self, a: Var, eps: f64) -> Var {
        self.unary(Unary::LogAbsClamped(eps), a)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
        if tb.cols() != k {
            return Err(PflError::argument(format!(
                "matmul_bt inner dimensions differ: {:?} x {:?}^T",
                ta.shape(),
                tb.shape()
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let ar = ta.row_slice(i);
            for j in 0..n {
                out[i * n + j] = ar.iter().zip(tb.row_slice(j)).map(|(x, y)| x * y).sum();
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(value, Op::MatMulBt(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(value, Op::Mean(a))
    }

    /// Row sums, `m x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = (0..t.rows()).map(|i| t.row_slice(i).iter().sum()).collect();
        let value = Tensor::matrix(t.rows(), 1, data).expect("row sums");
        self.push(value, Op::SumCols(a))
    }

    /// Column means, `1 x n`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (m, n) = (t.rows(), t.cols());
        let mut data = vec![0.0; n];
        for i in 0..m {
            for (d, &x) in data.iter_mut().zip(t.row_slice(i)) {
                *d += x;
            }
        }
        data.iter_mut().for_each(|d| *d /= m as f64);
        let value = Tensor::matrix(1, n, data).expect("column means");
        self.push(value, Op::MeanRows(a))
    }

    /// Softmax over the last axis of every row.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = super::tensor::softmax(&as_matrix(t), 1).expect("matrix view");
        let value = value.reshape(t.shape()).expect("same size");
        self.push(value, Op::SoftmaxRows(a))
    }

    /// L2 normalization of every row, with the zero-slice guard.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = super::tensor::l2_normalize(&as_matrix(t), 1).expect("matrix view");
        let value = value.reshape(t.shape()).expect("same size");
        self.push(value, Op::L2NormalizeRows(a))
    }

    /// Per-row standardization `(x - mean) / sqrt(var + eps)`, no affine.
    pub fn layer_norm_rows(&mut self, a: Var, eps: f64) -> Var {
        let t = self.value(a);
        let n = t.cols();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mean) * inv);
        }
        let value = Tensor::new(t.shape().to_vec(), data).expect("same size");
        self.push(value, Op::LayerNormRows(a, eps))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(PflError::argument("concat_rows: column counts differ"));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::matrix(rows, cols, data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(PflError::argument("concat_cols: row counts differ"));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let value = Tensor::matrix(rows, total, data)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if start + len > t.rows() {
            return Err(PflError::argument(format!(
                "row slice {start}..{} out of range for {} rows",
                start + len,
                t.rows()
            )));
        }
        let c = t.cols();
        let value = Tensor::matrix(len, c, t.data()[start * c..(start + len) * c].to_vec())?;
        Ok(self.push(value, Op::SliceRows(a, start)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if start + len > t.cols() {
            return Err(PflError::argument(format!(
                "column slice {start}..{} out of range for {} columns",
                start + len,
                t.cols()
            )));
        }
        let data = (0..t.rows())
            .flat_map(|i| t.row_slice(i)[start..start + len].iter().copied())
            .collect();
        let value = Tensor::matrix(t.rows(), len, data)?;
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    /// Bilinear (align-corners) upsampling of an `in_h*in_w x ch` grid of
    /// channel rows to `out_h*out_w x ch`.
    pub fn upsample_bilinear(
        &mut self,
        a: Var,
        in_h: usize,
        in_w: usize,
        out_h: usize,
        out_w: usize,
    ) -> Result<Var> {
        let t = self.value(a);
        if t.rows() != in_h * in_w {
            return Err(PflError::argument(format!(
                "upsample expects {} rows, got {}",
                in_h * in_w,
                t.rows()
            )));
        }
        let ch = t.cols();
        let plan = UpsamplePlan {
            in_w,
            rows: axis_plan(in_h, out_h),
            cols: axis_plan(in_w, out_w),
        };
        let mut data = vec![0.0; out_h * out_w * ch];
        plan.for_each_tap(|out_idx, in_idx, weight| {
            for c in 0..ch {
                data[out_idx * ch + c] += weight * t.data()[in_idx * ch + c];
            }
        });
        let value = Tensor::matrix(out_h * out_w, ch, data)?;
        Ok(self.push(value, Op::Upsample(a, plan)))
    }

    /// Reverse pass from a `1 x 1` output.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.backward_seeded(loss, 1.0)
    }

    pub fn backward_seeded(&self, loss: Var, seed: f64) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(PflError::argument(format!(
                "backward needs a scalar output, got shape {:?}",
                lv.shape()
            )));
        }
        if !lv.is_finite() {
            return Err(PflError::numeric(format!(
                "non-finite loss {}",
                lv.data()[0]
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::new(lv.shape().to_vec(), vec![seed])?);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let y = &node.value;
        let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
            Some(existing) => {
                for (e, x) in existing.data_mut().iter_mut().zip(t.data()) {
                    *e += x;
                }
            }
            slot @ None => *slot = Some(t),
        };
        let like = |v: Var, data: Vec<f64>| -> Tensor {
            Tensor::new(self.value(v).shape().to_vec(), data).expect("gradient shape")
        };
        match &node.op {
            Op::Leaf => {}
            Op::Binary(kind, a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (rows, cols) = (y.rows(), y.cols());
                let mut ga = vec![0.0; rows * cols];
                let mut gb = vec![0.0; rows * cols];
                for i in 0..rows {
                    for j in 0..cols {
                        let k = i * cols + j;
                        let x = ta.data()[bcast_index(ta, i, j)];
                        let z = tb.data()[bcast_index(tb, i, j)];
                        let gk = g.data()[k];
                        let (da, db) = match kind {
                            Binary::Add => (gk, gk),
                            Binary::Sub => (gk, -gk),
                            Binary::Mul => (gk * z, gk * x),
                            Binary::Div => (gk / z, -gk * x / (z * z)),
                        };
                        ga[k] = da;
                        gb[k] = db;
                    }
                }
                acc(*a, reduce_to(&ga, rows, cols, ta));
                acc(*b, reduce_to(&gb, rows, cols, tb));
            }
            Op::Unary(kind, a) => {
                let x = self.value(*a);
                let data = x
                    .data()
                    .iter()
                    .zip(y.data())
                    .zip(g.data())
                    .map(|((&x, &y), &g)| {
                        g * match *kind {
                            Unary::Tanh => 1.0 - y * y,
                            Unary::Softplus => sigmoid(x),
                            Unary::Exp => y,
                            Unary::Log => 1.0 / x,
                            Unary::Square => 2.0 * x,
                            Unary::Powf(p) => p * x.powf(p - 1.0),
                            Unary::Scale(s) => s,
                            Unary::Shift(_) => 1.0,
                            Unary::Clamp(lo, hi) => {
                                if x >= lo && x <= hi {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Unary::LogAbsClamped(eps) => {
                                if x.abs() > eps {
                                    1.0 / x
                                } else {
                                    0.0
                                }
                            }
                        }
                    })
                    .collect();
                acc(*a, like(*a, data));
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                // dA = G B^T
                let mut ga = vec![0.0; m * k];
                for i in 0..m {
                    let gr = &g.data()[i * n..(i + 1) * n];
                    for p in 0..k {
                        ga[i * k + p] = gr.iter().zip(tb.row_slice(p)).map(|(x, y)| x * y).sum();
                    }
                }
                // dB = A^T G
                let mut gb = vec![0.0; k * n];
                let at = ta.transpose();
                matmul_into(at.data(), g.data(), &mut gb, k, m, n);
                acc(*a, like(*a, ga));
                acc(*b, like(*b, gb));
            }
            Op::MatMulBt(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                // dA = G B, dB = G^T A
                let mut ga = vec![0.0; m * k];
                matmul_into(g.data(), tb.data(), &mut ga, m, n, k);
                let mut gb = vec![0.0; n * k];
                let gt = g.transpose();
                matmul_into(gt.data(), ta.data(), &mut gb, n, m, k);
                acc(*a, like(*a, ga));
                acc(*b, like(*b, gb));
            }
            Op::Transpose(a) => {
                let gt = g.transpose();
                acc(*a, like(*a, gt.into_data()));
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                acc(*a, like(*a, vec![g.data()[0]; n]));
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                acc(*a, like(*a, vec![g.data()[0] / n as f64; n]));
            }
            Op::SumCols(a) => {
                let t = self.value(*a);
                let n = t.cols();
                let data = (0..t.len()).map(|k| g.data()[k / n]).collect();
                acc(*a, like(*a, data));
            }
            Op::MeanRows(a) => {
                let t = self.value(*a);
                let (m, n) = (t.rows(), t.cols());
                let data = (0..t.len()).map(|k| g.data()[k % n] / m as f64).collect();
                acc(*a, like(*a, data));
            }
            Op::SoftmaxRows(a) => {
                let n = y.cols();
                let mut data = vec![0.0; y.len()];
                for ((out, yr), gr) in data
                    .chunks_mut(n)
                    .zip(y.data().chunks(n))
                    .zip(g.data().chunks(n))
                {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, &yv), &gv) in out.iter_mut().zip(yr).zip(gr) {
                        *o = yv * (gv - dot);
                    }
                }
                acc(*a, like(*a, data));
            }
            Op::L2NormalizeRows(a) => {
                let x = self.value(*a);
                let n = x.cols();
                let mut data = vec![0.0; x.len()];
                for (((out, xr), yr), gr) in data
                    .chunks_mut(n)
                    .zip(x.data().chunks(n))
                    .zip(y.data().chunks(n))
                    .zip(g.data().chunks(n))
                {
                    let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm < EPS_NORM {
                        continue;
                    }
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, &yv), &gv) in out.iter_mut().zip(yr).zip(gr) {
                        *o = (gv - yv * dot) / norm;
                    }
                }
                acc(*a, like(*a, data));
            }
            Op::LayerNormRows(a, eps) => {
                let x = self.value(*a);
                let n = x.cols();
                let mut data = vec![0.0; x.len()];
                for (((out, xr), yr), gr) in data
                    .chunks_mut(n)
                    .zip(x.data().chunks(n))
                    .zip(y.data().chunks(n))
                    .zip(g.data().chunks(n))
                {
                    let mean = xr.iter().sum::<f64>() / n as f64;
                    let var = xr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let g_mean = gr.iter().sum::<f64>() / n as f64;
                    let gy_mean = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    for ((o, &yv), &gv) in out.iter_mut().zip(yr).zip(gr) {
                        *o = inv * (gv - g_mean - yv * gy_mean);
                    }
                }
                acc(*a, like(*a, data));
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    acc(p, like(p, g.data()[offset..offset + n].to_vec()));
                    offset += n;
                }
            }
            Op::ConcatCols(parts) => {
                let total = y.cols();
                let mut col = 0;
                for &p in parts {
                    let t = self.value(p);
                    let w = t.cols();
                    let data = (0..t.rows())
                        .flat_map(|i| {
                            g.data()[i * total + col..i * total + col + w]
                                .iter()
                                .copied()
                        })
                        .collect();
                    acc(p, like(p, data));
                    col += w;
                }
            }
            Op::SliceRows(a, start) => {
                let t = self.value(*a);
                let c = t.cols();
                let mut data = vec![0.0; t.len()];
                data[start * c..start * c + g.len()].copy_from_slice(g.data());
                acc(*a, like(*a, data));
            }
            Op::SliceCols(a, start) => {
                let t = self.value(*a);
                let (c, w) = (t.cols(), y.cols());
                let mut data = vec![0.0; t.len()];
                for i in 0..t.rows() {
                    data[i * c + start..i * c + start + w]
                        .copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                }
                acc(*a, like(*a, data));
            }
            Op::Reshape(a) => {
                acc(*a, like(*a, g.data().to_vec()));
            }
            Op::Upsample(a, plan) => {
                let t = self.value(*a);
                let ch = t.cols();
                let mut data = vec![0.0; t.len()];
                plan.for_each_tap(|out_idx, in_idx, weight| {
                    for c in 0..ch {
                        data[in_idx * ch + c] += weight * g.data()[out_idx * ch + c];
                    }
                });
                acc(*a, like(*a, data));
            }
        }
    }
}

impl UpsamplePlan {
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, f64)) {
        let out_w = self.cols.len();
        for (oi, &(r0, r1, fr)) in self.rows.iter().enumerate() {
            for (oj, &(c0, c1, fc)) in self.cols.iter().enumerate() {
                let out_idx = oi * out_w + oj;
                let taps = [
                    (r0, c0, (1.0 - fr) * (1.0 - fc)),
                    (r0, c1, (1.0 - fr) * fc),
                    (r1, c0, fr * (1.0 - fc)),
                    (r1, c1, fr * fc),
                ];
                for (r, c, w) in taps {
                    if w != 0.0 {
                        f(out_idx, r * self.in_w + c, w);
                    }
                }
            }
        }
    }
}

fn as_matrix(t: &Tensor) -> Tensor {
    t.clone()
        .reshape(&[t.rows(), t.cols()])
        .expect("matrix view of a tensor")
}
