//! Minimal dense linear algebra: a row-major matrix with explicit shape and a
//! few vector helpers. No broadcasting anywhere; every operation checks the
//! shapes it is handed.

use std::ops::{Index, IndexMut};

use crate::error::{Result, TnfsError};
use crate::Scalar;

/// Dense matrix stored row-major in a flat buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(TnfsError::dims(
                "matrix buffer",
                format!("{} entries ({rows}x{cols})", rows * cols),
                data.len().to_string(),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(TnfsError::invalid("ragged rows in matrix literal"));
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self * v`.
    pub fn matvec(&self, v: &[F]) -> Vec<F> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| dot(self.row(r), v))
            .collect()
    }

    /// `self^T * v`.
    pub fn matvec_t(&self, v: &[F]) -> Vec<F> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![F::zero(); self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            for (o, &x) in out.iter_mut().zip(row) {
                *o = *o + v[r] * x;
            }
        }
        out
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Matrix<F>, s: F) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + s * b;
        }
    }

    /// Rank-1 update `self += s * a * b^T`.
    pub fn add_outer(&mut self, a: &[F], b: &[F], s: F) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            let coeff = s * ar;
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (cell, &bc) in row.iter_mut().zip(b) {
                *cell = *cell + coeff * bc;
            }
        }
    }

    pub fn scale(&mut self, s: F) {
        for a in &mut self.data {
            *a = *a * s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<F> Index<(usize, usize)> for Matrix<F> {
    type Output = F;
    fn index(&self, (r, c): (usize, usize)) -> &F {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<F> IndexMut<(usize, usize)> for Matrix<F> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut F {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `a += s * b`.
pub fn axpy<F: Scalar>(a: &mut [F], b: &[F], s: F) {
    debug_assert_eq!(a.len(), b.len());
    for (x, &y) in a.iter_mut().zip(b) {
        *x = *x + s * y;
    }
}

pub fn norm2<F: Scalar>(a: &[F]) -> F {
    a.iter().map(|&x| x * x).sum::<F>().sqrt()
}

pub fn squared_distance<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

pub fn all_finite<F: Scalar>(a: &[F]) -> bool {
    a.iter().all(|v| v.is_finite())
}
