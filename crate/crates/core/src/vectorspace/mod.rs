//! Linear algebra under the normalized inner product
//! `<x, y> = (1/N) sum_i x_i y_i`, the matching outer product
//! `(a (x) b)_ij = a_i b_j / N` and the symmetrization `(A + A^T) / sqrt 2`.
//!
//! Vectors are plain `[f64]` slices. Matrices are dense and row-major.

mod disorder;

pub use disorder::{sample_disorder, Disorder, DISORDER_MAGIC};

use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row counts below this run single-threaded; rayon overhead dominates.
const PAR_ROWS: usize = 256;

fn check_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::InvalidParameter("vectors must be non-empty".into()));
    }
    Ok(())
}

/// `<x, y> = (1/N) sum_i x_i y_i`.
pub fn inner(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x, y)?;
    Ok(dot(x, y) / x.len() as f64)
}

/// `sqrt(<x, x>)`.
pub fn norm(x: &[f64]) -> Result<f64> {
    inner(x, x).map(f64::sqrt)
}

/// Plain (unnormalized) dot product, sequential left-to-right sum.
#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `a (x) b` with entries `a_i b_j / N`.
pub fn outer(a: &[f64], b: &[f64]) -> Result<Matrix> {
    check_len(a, b)?;
    let n = a.len();
    let inv = 1.0 / n as f64;
    let mut data = Vec::with_capacity(n * n);
    for &ai in a {
        data.extend(b.iter().map(|&bj| ai * bj * inv));
    }
    Ok(Matrix {
        rows: n,
        cols: n,
        data,
    })
}

/// `(A + A^T) / sqrt 2`.
pub fn symmetrize(a: &Matrix) -> Result<Matrix> {
    a.require_square()?;
    let n = a.rows;
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.data[i * n + j] = (a.data[i * n + j] + a.data[j * n + i]) / SQRT_2;
        }
    }
    Ok(out)
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: rows * cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::LengthMismatch {
                    left: r.len(),
                    right: cols,
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub(crate) fn require_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: self.cols,
            });
        }
        let row_dot = |row: &[f64]| dot(row, x);
        Ok(if self.rows >= PAR_ROWS {
            self.data.par_chunks(self.cols).map(row_dot).collect()
        } else {
            self.data.chunks(self.cols).map(row_dot).collect()
        })
    }

    /// `A^T x`, accumulated row by row so the traversal stays contiguous.
    pub fn tmul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: self.rows,
            });
        }
        let mut out = vec![0.0; self.cols];
        for (row, &xi) in self.data.chunks(self.cols).zip(x) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * xi;
            }
        }
        Ok(out)
    }

    /// `<A x, x>` in the normalized inner product.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        self.require_square()?;
        let ax = self.mul_vec(x)?;
        inner(&ax, x)
    }

    /// In-place `A -= B`.
    pub fn sub_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::LengthMismatch {
                left: self.data.len(),
                right: other.data.len(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        Ok(())
    }

    /// In-place `A -= sum_t u_t (x) v_t` (normalized outer products).
    pub(crate) fn sub_outer_products(&mut self, terms: &[(&[f64], &[f64])]) {
        let inv = 1.0 / self.cols as f64;
        let cols = self.cols;
        let update = |(i, row): (usize, &mut [f64])| {
            for &(u, v) in terms {
                let ui = u[i] * inv;
                for (a, &vj) in row.iter_mut().zip(v) {
                    *a -= ui * vj;
                }
            }
        };
        if self.rows >= PAR_ROWS {
            self.data.par_chunks_mut(cols).enumerate().for_each(update);
        } else {
            self.data.chunks_mut(cols).enumerate().for_each(update);
        }
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|a| *a *= c);
    }
}
