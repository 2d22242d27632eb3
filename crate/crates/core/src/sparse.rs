//! Compressed sparse matrix with both column-major and row-major access.
//!
//! Feature matrices are stored `d × n` with one column per sample, so the
//! column path gives `a_i` and the row path gives one feature across samples.

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
    row_ptr: Vec<usize>,
    row_cols: Vec<usize>,
    row_vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets in any order.
    /// Duplicate positions and out-of-range indices are rejected.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::BadParameter(format!(
                    "entry ({r}, {c}) outside a {nrows}x{ncols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("sparse entry"));
            }
        }
        let mut by_col: Vec<(usize, usize, f64)> = triplets.to_vec();
        by_col.sort_by_key(|&(r, c, _)| (c, r));
        for w in by_col.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::BadParameter(format!(
                    "duplicate entry at ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        let mut col_ptr = vec![0usize; ncols + 1];
        for &(_, c, _) in &by_col {
            col_ptr[c + 1] += 1;
        }
        for j in 0..ncols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let col_rows = by_col.iter().map(|t| t.0).collect();
        let col_vals = by_col.iter().map(|t| t.2).collect();

        let mut by_row = by_col;
        by_row.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        for &(r, _, _) in &by_row {
            row_ptr[r + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let row_cols = by_row.iter().map(|t| t.1).collect();
        let row_vals = by_row.iter().map(|t| t.2).collect();

        Ok(Self {
            nrows,
            ncols,
            col_ptr,
            col_rows,
            col_vals,
            row_ptr,
            row_cols,
            row_vals,
        })
    }

    /// Stores the nonzero entries of a dense matrix.
    pub fn from_dense(m: &DenseMatrix) -> Result<Self> {
        let mut trip = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &trip)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_vals.len()
    }

    /// Row indices and values of column `j`, rows ascending.
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.col_rows[s..e], &self.col_vals[s..e])
    }

    /// Column indices and values of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.row_cols[s..e], &self.row_vals[s..e])
    }

    /// Iterates over all `(row, col, value)` entries in column-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |j| {
            let (rows, vals) = self.col(j);
            rows.iter().zip(vals).map(move |(&r, &v)| (r, j, v))
        })
    }

    pub fn col_dot(&self, j: usize, v: &Vector) -> f64 {
        let (rows, vals) = self.col(j);
        rows.iter().zip(vals).map(|(&r, &a)| a * v[r]).sum()
    }

    pub fn row_dot(&self, i: usize, v: &Vector) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(&c, &a)| a * v[c]).sum()
    }

    /// `y += alpha · A[:, j]`
    pub fn col_axpy(&self, j: usize, alpha: f64, y: &mut Vector) {
        let (rows, vals) = self.col(j);
        for (&r, &a) in rows.iter().zip(vals) {
            y[r] += alpha * a;
        }
    }

    /// `y += alpha · A[i, :]ᵀ`
    pub fn row_axpy(&self, i: usize, alpha: f64, y: &mut Vector) {
        let (cols, vals) = self.row(i);
        for (&c, &a) in cols.iter().zip(vals) {
            y[c] += alpha * a;
        }
    }

    pub fn col_norm_sq(&self, j: usize) -> f64 {
        self.col(j).1.iter().map(|a| a * a).sum()
    }

    /// `A x` through the row path.
    pub fn mul_vec(&self, x: &Vector) -> Vector {
        assert_eq!(x.len(), self.ncols, "mul_vec dimension");
        Vector::from_fn(self.nrows, |i, _| {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&c, &a) in cols.iter().zip(vals) {
                acc += a * x[c];
            }
            acc
        })
    }

    /// `A x` through the column path.
    pub fn mul_vec_by_cols(&self, x: &Vector) -> Vector {
        assert_eq!(x.len(), self.ncols, "mul_vec dimension");
        let mut y = Vector::zeros(self.nrows);
        for j in 0..self.ncols {
            self.col_axpy(j, x[j], &mut y);
        }
        y
    }

    /// `Aᵀ v` through the column path.
    pub fn tr_mul_vec(&self, v: &Vector) -> Vector {
        assert_eq!(v.len(), self.nrows, "tr_mul_vec dimension");
        Vector::from_fn(self.ncols, |j, _| self.col_dot(j, v))
    }

    /// Dense Gram matrix `A Aᵀ` (`nrows × nrows`).
    pub fn gram(&self) -> DenseMatrix {
        let mut g = DenseMatrix::zeros(self.nrows, self.nrows);
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            for (a, (&r1, &v1)) in rows.iter().zip(vals).enumerate() {
                for (&r2, &v2) in rows[a..].iter().zip(&vals[a..]) {
                    g[(r1, r2)] += v1 * v2;
                }
            }
        }
        for i in 0..self.nrows {
            for k in (i + 1)..self.nrows {
                g[(k, i)] = g[(i, k)];
            }
        }
        g
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// Multiplies every entry by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.col_vals.iter_mut().for_each(|v| *v *= s);
        out.row_vals.iter_mut().for_each(|v| *v *= s);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseMatrix {
        SparseMatrix::from_triplets(3, 2, &[(2, 0, 2.0), (0, 0, 0.5), (1, 1, 1.0)]).unwrap()
    }

    #[test]
    fn both_paths_describe_the_same_matrix() {
        let a = sample();
        assert_eq!(a.col(0), (&[0usize, 2][..], &[0.5, 2.0][..]));
        assert_eq!(a.row(2), (&[0usize][..], &[2.0][..]));
        let x = Vector::from_column_slice(&[3.0, -1.0]);
        assert_eq!(a.mul_vec(&x), a.mul_vec_by_cols(&x));
        assert_eq!(a.to_dense() * &x, a.mul_vec(&x));
    }

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        assert!(SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0)]).is_err());
        assert!(SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn gram_matches_dense() {
        let a = sample();
        let d = a.to_dense();
        assert_eq!(a.gram(), &d * d.transpose());
    }
}
