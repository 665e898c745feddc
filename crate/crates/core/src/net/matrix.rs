//! Dense row-major matrices and the handful of kernels the LSTM needs.
//!
//! Every kernel accumulates into its output and sums over the shared
//! dimension in a fixed order, so results depend only on the operands and
//! never on how many rows are processed together.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Elementwise product in place.
    pub fn hadamard_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a *= b;
        }
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[f64]) {
        debug_assert_eq!(bias.len(), self.cols);
        for row in self.data.chunks_exact_mut(self.cols.max(1)) {
            for (a, b) in row.iter_mut().zip(bias) {
                *a += b;
            }
        }
    }

    /// Accumulates the column sums into `out`.
    pub fn sum_rows_into(&self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.cols);
        for row in self.data.chunks_exact(self.cols.max(1)) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// `out += x · wᵀ` with `x: B×K`, `w: N×K`, `out: B×N`.
pub fn matmul_nt_acc(x: &Matrix, w: &Matrix, out: &mut Matrix) {
    assert_eq!(x.cols, w.cols, "matmul_nt inner dimension");
    assert_eq!(out.shape(), (x.rows, w.rows), "matmul_nt output shape");
    let k = x.cols;
    for b in 0..x.rows {
        let xr = &x.data[b * k..(b + 1) * k];
        let orow = &mut out.data[b * w.rows..(b + 1) * w.rows];
        for (n, o) in orow.iter_mut().enumerate() {
            let wr = &w.data[n * k..(n + 1) * k];
            *o += dot(xr, wr);
        }
    }
}

/// `out += d · w` with `d: B×N`, `w: N×K`, `out: B×K`.
pub fn matmul_nn_acc(d: &Matrix, w: &Matrix, out: &mut Matrix) {
    assert_eq!(d.cols, w.rows, "matmul_nn inner dimension");
    assert_eq!(out.shape(), (d.rows, w.cols), "matmul_nn output shape");
    let k = w.cols;
    for b in 0..d.rows {
        let orow = &mut out.data[b * k..(b + 1) * k];
        for (n, &dv) in d.row(b).iter().enumerate() {
            if dv == 0.0 {
                continue;
            }
            axpy(dv, &w.data[n * k..(n + 1) * k], orow);
        }
    }
}

/// `out += dᵀ · x` with `d: B×N`, `x: B×K`, `out: N×K`.
pub fn matmul_tn_acc(d: &Matrix, x: &Matrix, out: &mut Matrix) {
    assert_eq!(d.rows, x.rows, "matmul_tn inner dimension");
    assert_eq!(out.shape(), (d.cols, x.cols), "matmul_tn output shape");
    let k = x.cols;
    for n in 0..d.cols {
        let orow = &mut out.data[n * k..(n + 1) * k];
        for b in 0..d.rows {
            let dv = d.data[b * d.cols + n];
            if dv == 0.0 {
                continue;
            }
            axpy(dv, x.row(b), orow);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent partial sums; the combination order is fixed.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
