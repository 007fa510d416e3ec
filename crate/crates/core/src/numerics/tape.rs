//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive as it is evaluated. Values are kept on
//! the tape, so a recorded graph can be replayed backward any number of
//! times; [`Tape::backward`] walks the records in reverse order and visits
//! each one once.
//!
//! ```
//! use dcl::numerics::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Matrix::row_vector(&[1.0, -2.0]));
//! let y = tape.sigmoid(x);
//! let loss = tape.sum(y);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).shape(), (1, 2));
//! ```

use super::exec::Exec;
use super::matrix::Matrix;
use crate::error::{DclError, Result};

/// Rows whose Euclidean norm falls below this are normalized to zero.
pub const ZERO_NORM: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a + 1 * bias` with a 1 x cols bias row.
    AddRow(Var, Var),
    /// `scale * a + shift`; only the scale matters for the gradient.
    Affine(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Clamp(Var, f64, f64),
    NormalizeRows(Var),
    RowSum(Var),
    Sum(Var),
    Transpose(Var),
    ScaleRows(Var, Vec<f64>),
}

#[derive(Debug)]
struct Record {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of primitive applications.
#[derive(Debug)]
pub struct Tape {
    records: Vec<Record>,
    exec: Exec,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every recorded value.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`; a zero matrix when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            records: Vec::new(),
            exec: Exec::auto(),
        }
    }

    pub fn with_exec(exec: Exec) -> Self {
        Tape {
            records: Vec::new(),
            exec,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.records[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.records[v.0].value.shape()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        debug_assert!(match &op {
            Op::Leaf => true,
            _ => self.inputs(&op).iter().all(|v| v.0 < self.records.len()),
        });
        self.records.push(Record { value, op, needs_grad });
        Var(self.records.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.records[v.0].needs_grad
    }

    fn inputs(&self, op: &Op) -> Vec<Var> {
        match *op {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::MatMulNT(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b) => vec![a, b],
            Op::Affine(a, ..)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Clamp(a, ..)
            | Op::NormalizeRows(a)
            | Op::RowSum(a)
            | Op::Sum(a)
            | Op::Transpose(a)
            | Op::ScaleRows(a, _) => vec![a],
        }
    }

    fn unary(&mut self, a: Var, value: Matrix, op: Op) -> Var {
        let needs = self.needs(a);
        self.push(value, op, needs)
    }

    fn binary(&mut self, a: Var, b: Var, value: Matrix, op: Op) -> Var {
        let needs = self.needs(a) || self.needs(b);
        self.push(value, op, needs)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_with(self.value(b), self.exec)?;
        Ok(self.binary(a, b, v, Op::MatMul(a, b)))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_nt_with(self.value(b), self.exec)?;
        Ok(self.binary(a, b, v, Op::MatMulNT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Mul(a, b)))
    }

    /// Adds a 1 x cols row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.rows() != 1 || vb.cols() != va.cols() {
            return Err(DclError::shape("add_row", va.shape(), vb.shape()));
        }
        let mut out = va.clone();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(vb.as_slice()) {
                *o += b;
            }
        }
        Ok(self.binary(a, bias, out, Op::AddRow(a, bias)))
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let v = self.value(a).map(|x| scale * x + shift);
        self.unary(a, v, Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.unary(a, v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).sigmoid_map();
        self.unary(a, v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.unary(a, v, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.unary(a, v, Op::Ln(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.unary(a, v, Op::Clamp(a, lo, hi))
    }

    /// Scales each row to unit Euclidean norm. Rows with norm below
    /// [`ZERO_NORM`] become zero rows and pass no gradient.
    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < ZERO_NORM {
                row.iter_mut().for_each(|x| *x = 0.0);
            } else {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        self.unary(a, v, Op::NormalizeRows(a))
    }

    /// Per-row sums as an N x 1 column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let sums: Vec<f64> = (0..va.rows()).map(|i| va.row(i).iter().sum()).collect();
        let v = Matrix::column_vector(&sums);
        self.unary(a, v, Op::RowSum(a))
    }

    /// Sum of all entries as a 1 x 1 matrix.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum());
        self.unary(a, v, Op::Sum(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.unary(a, v, Op::Transpose(a))
    }

    /// Multiplies row `i` of `a` by the constant `weights[i]`.
    pub fn scale_rows(&mut self, a: Var, weights: &[f64]) -> Result<Var> {
        let va = self.value(a);
        if weights.len() != va.rows() {
            return Err(DclError::shape("scale_rows", va.shape(), (weights.len(), 1)));
        }
        let mut v = va.clone();
        for (i, &w) in weights.iter().enumerate() {
            v.row_mut(i).iter_mut().for_each(|x| *x *= w);
        }
        Ok(self.unary(a, v, Op::ScaleRows(a, weights.to_vec())))
    }

    /// Sum of several values of equal shape.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (&first, rest) = terms
            .split_first()
            .ok_or_else(|| DclError::Contract("add_all needs at least one term".into()))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    /// Propagates gradients from the scalar `loss` back to every record.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(DclError::Contract(format!(
                "backward needs a scalar loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Matrix>> = vec![None; self.records.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let rec = &self.records[idx];
            if rec.needs_grad {
                self.propagate(rec, &g, &mut grads)?;
            }
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.records.iter().map(|r| r.value.shape()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
        if !self.needs(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    fn propagate(&self, rec: &Record, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let exec = self.exec;
        match rec.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(a) {
                    let ga = g.matmul_nt_with(self.value(b), exec)?;
                    self.accumulate(grads, a, ga)?;
                }
                if self.needs(b) {
                    let gb = self.value(a).matmul_tn_with(g, exec)?;
                    self.accumulate(grads, b, gb)?;
                }
            }
            Op::MatMulNT(a, b) => {
                if self.needs(a) {
                    let ga = g.matmul_with(self.value(b), exec)?;
                    self.accumulate(grads, a, ga)?;
                }
                if self.needs(b) {
                    let gb = g.matmul_tn_with(self.value(a), exec)?;
                    self.accumulate(grads, b, gb)?;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone())?;
                self.accumulate(grads, b, g.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone())?;
                self.accumulate(grads, b, g.scale(-1.0))?;
            }
            Op::Mul(a, b) => {
                if self.needs(a) {
                    self.accumulate(grads, a, g.hadamard(self.value(b))?)?;
                }
                if self.needs(b) {
                    self.accumulate(grads, b, g.hadamard(self.value(a))?)?;
                }
            }
            Op::AddRow(a, bias) => {
                self.accumulate(grads, a, g.clone())?;
                if self.needs(bias) {
                    self.accumulate(grads, bias, g.column_sums())?;
                }
            }
            Op::Affine(a, scale) => self.accumulate(grads, a, g.scale(scale))?,
            Op::Relu(a) => {
                let ga = g.zip_map(self.value(a), "relu", |g, x| if x > 0.0 { g } else { 0.0 })?;
                self.accumulate(grads, a, ga)?;
            }
            Op::Sigmoid(a) => {
                let ga = g.zip_map(&rec.value, "sigmoid", |g, y| g * y * (1.0 - y))?;
                self.accumulate(grads, a, ga)?;
            }
            Op::Exp(a) => {
                let ga = g.hadamard(&rec.value)?;
                self.accumulate(grads, a, ga)?;
            }
            Op::Ln(a) => {
                let ga = g.zip_map(self.value(a), "ln", |g, x| g / x)?;
                self.accumulate(grads, a, ga)?;
            }
            Op::Clamp(a, lo, hi) => {
                let ga = g.zip_map(
                    self.value(a),
                    "clamp",
                    |g, x| {
                        if (lo..=hi).contains(&x) {
                            g
                        } else {
                            0.0
                        }
                    },
                )?;
                self.accumulate(grads, a, ga)?;
            }
            Op::NormalizeRows(a) => {
                let x = self.value(a);
                let y = &rec.value;
                let mut ga = Matrix::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let norm = x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm < ZERO_NORM {
                        continue;
                    }
                    let (yr, gr) = (y.row(i), g.row(i));
                    let proj: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, &yv), &gv) in ga.row_mut(i).iter_mut().zip(yr).zip(gr) {
                        *o = (gv - yv * proj) / norm;
                    }
                }
                self.accumulate(grads, a, ga)?;
            }
            Op::RowSum(a) => {
                let (r, c) = self.shape(a);
                let ga = Matrix::from_fn(r, c, |i, _| g.get(i, 0));
                self.accumulate(grads, a, ga)?;
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(a);
                self.accumulate(grads, a, Matrix::filled(r, c, g.get(0, 0)))?;
            }
            Op::Transpose(a) => self.accumulate(grads, a, g.transpose())?,
            Op::ScaleRows(a, ref w) => {
                let mut ga = g.clone();
                for (i, &wi) in w.iter().enumerate() {
                    ga.row_mut(i).iter_mut().for_each(|x| *x *= wi);
                }
                self.accumulate(grads, a, ga)?;
            }
        }
        Ok(())
    }
}
