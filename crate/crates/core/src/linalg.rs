//! Small dense linear algebra on row-major `Vec<f64>` storage. Problem sizes
//! here are a few dozen parameters, so plain O(n^3) routines are enough.

use crate::prelude::*;
use crate::{Error, Result};

/// Square or rectangular row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    /// Replaces `self` with `(self + self^T) / 2`.
    pub fn symmetrize(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, m);
                self.set(j, i, m);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Pairwise (tree) summation; the reduction order depends only on the length.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Lower Cholesky factor of a symmetric positive-definite matrix, or `None`
/// when a pivot is not strictly positive.
pub fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Some(l)
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert(a: &Matrix) -> Result<Matrix> {
    let n = a.rows;
    if n != a.cols {
        return Err(Error::arg("matrix to invert must be square"));
    }
    let mut m = a.clone();
    let mut inv = Matrix::identity(n);
    let scale = max_abs(&a.data).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let (piv, pval) =
            (col..n)
                .map(|r| (r, m.get(r, col).abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pval <= 1e-14 * scale {
            return Err(Error::Numerical(format!("singular matrix at column {col}")));
        }
        if piv != col {
            for c in 0..n {
                m.data.swap(piv * n + c, col * n + c);
                inv.data.swap(piv * n + c, col * n + c);
            }
        }
        let d = m.get(col, col);
        for c in 0..n {
            m.data[col * n + c] /= d;
            inv.data[col * n + c] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m.get(r, col);
            if f == 0.0 {
                continue;
            }
            for c in 0..n {
                m.data[r * n + c] -= f * m.data[col * n + c];
                inv.data[r * n + c] -= f * inv.data[col * n + c];
            }
        }
    }
    Ok(inv)
}

/// Residual of projecting `y` onto the span of `basis` columns. Columns that
/// are numerically dependent on earlier ones are skipped.
pub fn project_out(y: &[f64], columns: &[&[f64]]) -> Vec<f64> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for col in columns {
        let mut v = col.to_vec();
        let original = norm2(&v);
        if original == 0.0 {
            continue;
        }
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let nv = norm2(&v);
        if nv > 1e-10 * original {
            v.iter_mut().for_each(|a| *a /= nv);
            basis.push(v);
        }
    }
    let mut r = y.to_vec();
    for _ in 0..2 {
        for q in &basis {
            let c = dot(&r, q);
            r.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
    }
    r
}
