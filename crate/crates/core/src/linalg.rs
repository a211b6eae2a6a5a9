//! Dense row-major matrices and the truncated SVD used by initialization.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(alloc::format!("{} values cannot fill a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices; all rows must share a length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(alloc::format!("row {i} has {} entries, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn set_col(&mut self, j: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.rows);
        for (i, v) in values.iter().enumerate() {
            self.data[i * self.cols + j] = *v;
        }
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    /// Frobenius norm of `self - other`; shapes must match.
    pub fn distance(&self, other: &Matrix) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        libm::sqrt(self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(alloc::format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows,
                self.cols,
                other.rows,
                other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (oj, bkj) in o.iter_mut().zip(other.row(k)) {
                    *oj += aik * bkj;
                }
            }
        }
        Ok(out)
    }

    fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> Matrix {
        let mut out = Matrix::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j] = m[(i, j)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Row-major matrix of binary latent indicators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(alloc::format!(
                "{} values cannot fill a {rows}x{cols} binary matrix",
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Domain("binary matrix entries must be 0 or 1".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [u8] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, k: usize) -> u8 {
        self.data[i * self.cols + k]
    }

    pub fn set(&mut self, i: usize, k: usize, v: bool) {
        self.data[i * self.cols + k] = v as u8;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    /// Column `k` as 0/1 reals.
    pub fn col_f64(&self, k: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, k) as f64).collect()
    }

    pub fn col_mean(&self, k: usize) -> f64 {
        if self.rows == 0 {
            return 0.0;
        }
        let ones: usize = (0..self.rows).map(|i| self.get(i, k) as usize).sum();
        ones as f64 / self.rows as f64
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v as f64).collect() }
    }
}

/// Leading singular triplets of a matrix.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// `rows x rank` left singular vectors.
    pub u: Matrix,
    /// Nonincreasing, nonnegative singular values.
    pub singular_values: Vec<f64>,
    /// `cols x rank` right singular vectors.
    pub v: Matrix,
}

impl TruncatedSvd {
    /// `U_k S_k V_k^T`.
    pub fn reconstruct(&self) -> Matrix {
        let k = self.singular_values.len();
        let mut out = Matrix::zeros(self.u.rows(), self.v.rows());
        for i in 0..self.u.rows() {
            for j in 0..self.v.rows() {
                let mut s = 0.0;
                for l in 0..k {
                    s += self.u[(i, l)] * self.singular_values[l] * self.v[(j, l)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    /// Row scores `U_k S_k`.
    pub fn scores(&self) -> Matrix {
        let mut out = self.u.clone();
        for i in 0..out.rows() {
            for (l, s) in self.singular_values.iter().enumerate() {
                out[(i, l)] *= s;
            }
        }
        out
    }
}

/// Best rank-`rank` approximation factors of `matrix` in Frobenius norm.
pub fn truncated_svd(matrix: &Matrix, rank: usize) -> Result<TruncatedSvd> {
    let full = matrix.rows().min(matrix.cols());
    if rank > full {
        return Err(Error::Domain(alloc::format!("rank {rank} exceeds min(n, J) = {full}")));
    }
    if rank == 0 {
        return Ok(TruncatedSvd {
            u: Matrix::zeros(matrix.rows(), 0),
            singular_values: Vec::new(),
            v: Matrix::zeros(matrix.cols(), 0),
        });
    }
    let svd = matrix
        .to_nalgebra()
        .try_svd(true, true, 5.0 * f64::EPSILON, 0)
        .ok_or_else(|| Error::Domain("SVD failed to converge".into()))?;
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let values = svd.singular_values;

    // nalgebra does not promise an ordering here.
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order.truncate(rank);

    let u_full = Matrix::from_nalgebra(&u);
    let v_full = Matrix::from_nalgebra(&vt.transpose());
    let mut u_k = Matrix::zeros(matrix.rows(), rank);
    let mut v_k = Matrix::zeros(matrix.cols(), rank);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..matrix.rows() {
            u_k[(i, dst)] = u_full[(i, src)];
        }
        for j in 0..matrix.cols() {
            v_k[(j, dst)] = v_full[(j, src)];
        }
    }
    Ok(TruncatedSvd { u: u_k, singular_values: order.iter().map(|&i| values[i].max(0.0)).collect(), v: v_k })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_rank_two() {
        let id = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let svd = truncated_svd(&id, 2).unwrap();
        assert!((svd.singular_values[0] - 1.0).abs() < 1e-12);
        assert!((svd.singular_values[1] - 1.0).abs() < 1e-12);
        assert!(svd.reconstruct().distance(&id) < 1e-12);
    }

    #[test]
    fn rank_one_outer_product() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [2.0, 1.0, -1.0];
        let rows: Vec<Vec<f64>> = u.iter().map(|a| v.iter().map(|b| a * b).collect()).collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let svd = truncated_svd(&m, 1).unwrap();
        let nu: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((svd.singular_values[0] - nu * nv).abs() < 1e-10, "{:?} {}", svd.singular_values, nu * nv);
        assert!(svd.reconstruct().distance(&m) < 1e-10);
    }

    #[test]
    fn rank_zero_is_empty() {
        let m = Matrix::zeros(3, 2);
        let svd = truncated_svd(&m, 0).unwrap();
        assert!(svd.singular_values.is_empty());
        assert_eq!(svd.u.cols(), 0);
    }

    #[test]
    fn rank_too_large() {
        assert!(truncated_svd(&Matrix::zeros(3, 2), 3).is_err());
    }

    #[test]
    fn binary_rejects_non_binary() {
        assert!(BinaryMatrix::from_vec(1, 2, vec![0, 2]).is_err());
    }
}
