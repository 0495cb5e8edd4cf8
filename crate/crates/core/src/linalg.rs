//! Minimal dense row-major matrix used throughout the crate.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{ensure, Result};

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(
            data.len() == rows * cols,
            Dimension,
            "buffer of length {} cannot hold a {}x{} matrix",
            data.len(),
            rows,
            cols
        );
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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

    /// Contiguous slice holding rows `start..end`.
    #[inline]
    pub fn rows_slice(&self, start: usize, end: usize) -> &[f64] {
        &self.data[start * self.cols..end * self.cols]
    }

    #[inline]
    pub fn rows_slice_mut(&mut self, start: usize, end: usize) -> &mut [f64] {
        &mut self.data[start * self.cols..end * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Copy of the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Mat { rows: rows.len(), cols: self.cols, data }
    }

    /// Copy of columns `start..end`.
    pub fn col_range(&self, start: usize, end: usize) -> Mat {
        Mat::from_fn(self.rows, end - start, |i, j| self[(i, start + j)])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius(&self) -> f64 {
        sqrt(self.frobenius_sq())
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &Mat) -> Result<Mat> {
        ensure!(
            self.cols == rhs.rows,
            Dimension,
            "cannot multiply {}x{} by {}x{}",
            self.rows,
            self.cols,
            rhs.rows,
            rhs.cols
        );
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, rhs.row(k), out_row);
            }
        }
        Ok(out)
    }

    /// `selfᵀ * rhs`.
    pub fn t_matmul(&self, rhs: &Mat) -> Result<Mat> {
        ensure!(
            self.rows == rhs.rows,
            Dimension,
            "cannot multiply ({}x{})ᵀ by {}x{}",
            self.rows,
            self.cols,
            rhs.rows,
            rhs.cols
        );
        let mut out = Mat::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let rhs_row = rhs.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, rhs_row, &mut out.data[i * rhs.cols..(i + 1) * rhs.cols]);
            }
        }
        Ok(out)
    }

    pub fn sub(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn add(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, |a, b| a + b)
    }

    /// `self + alpha * rhs`.
    pub fn add_scaled(&self, alpha: f64, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, |a, b| a + alpha * b)
    }

    pub fn scale(&self, alpha: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| alpha * v).collect() }
    }

    /// Sum of the element-wise product, `⟨self, rhs⟩_F`.
    pub fn dot(&self, rhs: &Mat) -> Result<f64> {
        self.check_same_shape(rhs)?;
        Ok(self.data.iter().zip(&rhs.data).map(|(a, b)| a * b).sum())
    }

    fn zip_with(&self, rhs: &Mat, f: impl Fn(f64, f64) -> f64) -> Result<Mat> {
        self.check_same_shape(rhs)?;
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    fn check_same_shape(&self, rhs: &Mat) -> Result<()> {
        ensure!(
            self.shape() == rhs.shape(),
            Dimension,
            "shape {}x{} differs from {}x{}",
            self.rows,
            self.cols,
            rhs.rows,
            rhs.cols
        );
        Ok(())
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// `y += a * x`
#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Largest eigenvalue of a small symmetric positive semi-definite matrix by
/// power iteration (relative tolerance `tol`, at most `max_iter` steps).
pub(crate) fn psd_top_eigenvalue(a: &Mat, tol: f64, max_iter: usize) -> f64 {
    let n = a.rows();
    if n == 0 {
        return 0.0;
    }
    if n == 1 {
        return a[(0, 0)].max(0.0);
    }
    // Uneven start so the iterate is not orthogonal to the top eigenvector of
    // the symmetric patterns that show up in tests.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
    let nv = sqrt(norm_sq(&v));
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; n];
    let mut eig = 0.0;
    for _ in 0..max_iter {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = a.row(i).iter().zip(&v).map(|(x, y)| x * y).sum();
        }
        let nw = sqrt(norm_sq(&w));
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw;
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / nw);
        if (next - eig).abs() <= tol * next {
            return next;
        }
        eig = next;
    }
    eig
}

/// Solves `A z = b` for a small symmetric positive definite `A` by Cholesky
/// factorization. Returns `None` if `A` is not numerically positive definite.
pub(crate) fn solve_spd(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d.is_nan() || d <= 0.0 {
            return None;
        }
        let d = sqrt(d);
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            z[i] -= l[(i, k)] * z[k];
        }
        z[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            z[i] -= l[(k, i)] * z[k];
        }
        z[i] /= l[(i, i)];
    }
    Some(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_solve_recovers_rhs() {
        let a = Mat::from_vec(3, 3, vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]).unwrap();
        let z = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3).map(|i| a.row(i).iter().zip(&z).map(|(x, y)| x * y).sum()).collect();
        let got = solve_spd(&a, &b).unwrap();
        for (g, e) in got.iter().zip(z) {
            assert!((g - e).abs() < 1e-12);
        }
        assert!(solve_spd(&Mat::zeros(2, 2), &[1.0, 1.0]).is_none());
    }

    #[test]
    fn matmul_matches_hand_product() {
        let a = Mat::from_vec(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Mat::from_vec(3, 2, vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.as_slice(), &[58., 64., 139., 154.]);
        let ct = a.transpose().t_matmul(&b).unwrap();
        assert_eq!(c, ct);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn top_eigenvalue_of_diagonal() {
        let a = Mat::from_vec(3, 3, vec![2., 0., 0., 0., 5., 0., 0., 0., 1.]).unwrap();
        let e = psd_top_eigenvalue(&a, 1e-12, 10_000);
        assert!((e - 5.0).abs() < 1e-9);
    }

    #[test]
    fn top_eigenvalue_of_rank_one() {
        // u uᵀ with u = (1, -1, 2): eigenvalue ‖u‖² = 6
        let u = [1.0, -1.0, 2.0];
        let a = Mat::from_fn(3, 3, |i, j| u[i] * u[j]);
        assert!((psd_top_eigenvalue(&a, 1e-12, 10_000) - 6.0).abs() < 1e-9);
    }
}
