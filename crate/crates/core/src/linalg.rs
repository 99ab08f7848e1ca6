//! Dense row-major `f64` matrices and the handful of products the
//! training engine needs. Deliberately minimal: no views, no broadcasting
//! beyond what the tape ops require.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Minimum row count before matrix products fan out across threads.
/// Row-parallel products are bit-identical to the sequential loop.
const PAR_ROWS: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix {
            rows: r,
            cols: c,
            data,
        }
    }

    /// 1 x n row vector.
    pub fn row_vector(values: &[f64]) -> Self {
        Matrix::from_vec(1, values.len(), values.to_vec())
    }

    pub fn scalar(v: f64) -> Self {
        Matrix::from_vec(1, 1, vec![v])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// The single value of a 1x1 matrix.
    pub fn item(&self) -> f64 {
        assert_eq!(self.dim(), (1, 1), "item() on non-scalar matrix");
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn check_same_dim(&self, other: &Matrix, what: &str) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul inner dim mismatch");
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = Matrix::zeros(n, m);
        let body = |i: usize, out_row: &mut [f64]| {
            let a_row = &self.data[i * k..(i + 1) * k];
            for (kk, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[kk * m..(kk + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        };
        if n >= PAR_ROWS {
            out.data
                .par_chunks_mut(m)
                .enumerate()
                .for_each(|(i, row)| body(i, row));
        } else {
            for (i, row) in out.data.chunks_mut(m).enumerate() {
                body(i, row);
            }
        }
        out
    }

    /// `self * other^T`.
    pub fn matmul_nt(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_nt dim mismatch");
        let (n, k, m) = (self.rows, self.cols, other.rows);
        let mut out = Matrix::zeros(n, m);
        let body = |i: usize, out_row: &mut [f64]| {
            let a_row = &self.data[i * k..(i + 1) * k];
            for (j, o) in out_row.iter_mut().enumerate() {
                let b_row = &other.data[j * k..(j + 1) * k];
                *o = dot(a_row, b_row);
            }
        };
        if n >= PAR_ROWS {
            out.data
                .par_chunks_mut(m)
                .enumerate()
                .for_each(|(i, row)| body(i, row));
        } else {
            for (i, row) in out.data.chunks_mut(m).enumerate() {
                body(i, row);
            }
        }
        out
    }

    /// `self^T * other`.
    pub fn matmul_tn(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "matmul_tn dim mismatch");
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = Matrix::zeros(k, m);
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            let b_row = &other.data[i * m..(i + 1) * m];
            for (kk, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out.data[kk * m..(kk + 1) * m];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul_elem(&self, other: &Matrix) -> Matrix {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|x| x * s)
    }

    fn zip(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(self.dim(), other.dim(), "elementwise dim mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Column means as a length-`cols` vector.
    pub fn col_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (mj, &v) in m.iter_mut().zip(self.row(i)) {
                *mj += v;
            }
        }
        let inv = 1.0 / self.rows as f64;
        for v in &mut m {
            *v *= inv;
        }
        m
    }

    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four accumulators keep the FP pipeline busy and let the compiler
    // vectorize despite strict float associativity
    let chunks = a.len() / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..chunks {
        let k = i * 4;
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for k in chunks * 4..a.len() {
        s += a[k] * b[k];
    }
    s
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Matrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Matrix::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.3 - 1.0).collect());
        let b = Matrix::from_vec(4, 2, (0..8).map(|i| (i as f64).sin()).collect());
        let c1 = a.matmul(&b);
        let c2 = a.matmul_nt(&b.transpose());
        let c3 = a.transpose().matmul_tn(&b); // (a^T)^T * b
        for ((x, y), z) in c1.data().iter().zip(c2.data()).zip(c3.data()) {
            assert!((x - y).abs() < 1e-12);
            assert!((x - z).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_matmul_matches_sequential() {
        // Exercise the row-parallel path and compare against a hand loop.
        let n = 80;
        let a = Matrix::from_vec(n, 5, (0..n * 5).map(|i| (i as f64 * 0.7).cos()).collect());
        let b = Matrix::from_vec(5, 3, (0..15).map(|i| (i as f64 * 1.3).sin()).collect());
        let c = a.matmul(&b);
        for i in 0..n {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..5 {
                    s += a[(i, k)] * b[(k, j)];
                }
                assert_eq!(c[(i, j)], s);
            }
        }
    }
}
