//! Dense row-major matrices and the handful of factorizations the BLR head needs.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Row-major dense matrix of `f64`.
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

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("Matrix::from_vec", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. An empty slice yields a `0 x 0` matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim("Matrix::from_rows", cols, r.len())?;
            data.extend_from_slice(r);
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
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, so zero-width matrices iterate empty rows by hand.
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor `L` of a symmetric positive definite matrix,
/// together with the diagonal jitter that had to be added to obtain it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cholesky {
    factor: Matrix,
    jitter: f64,
}

/// Jitter schedule relative to the mean diagonal entry: 1e-9 escalated by 10x up to 1e-3.
const JITTER_START: f64 = 1e-9;
const JITTER_MAX: f64 = 1e-3;

impl Cholesky {
    /// Factorizes `a`, adding `jitter * trace(a)/n` to the diagonal and escalating by 10x
    /// when a pivot is non-positive.
    pub fn factorize_with_jitter(a: &Matrix) -> Result<Self> {
        check_dim("Cholesky (square)", a.rows(), a.cols())?;
        if let Some(factor) = try_cholesky(a, 0.0) {
            return Ok(Self { factor, jitter: 0.0 });
        }
        let n = a.rows();
        let mean_diag = (0..n).map(|i| a[(i, i)]).sum::<f64>() / n.max(1) as f64;
        let mut rel = JITTER_START;
        while rel <= JITTER_MAX * (1.0 + 1e-12) {
            let jitter = rel * mean_diag.abs().max(f64::MIN_POSITIVE);
            if let Some(factor) = try_cholesky(a, jitter) {
                log::debug!("cholesky needed jitter {jitter:.3e}");
                return Ok(Self { factor, jitter });
            }
            rel *= 10.0;
        }
        Err(Error::Factorization {
            condition_estimate: diagonal_condition_estimate(a),
        })
    }

    /// Wraps an already lower-triangular factor (e.g. one loaded from disk).
    pub fn from_factor(factor: Matrix) -> Result<Self> {
        check_dim("Cholesky factor (square)", factor.rows(), factor.cols())?;
        let n = factor.rows();
        for i in 0..n {
            if !(factor[(i, i)] > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "cholesky factor has non-positive diagonal at {i}"
                )));
            }
        }
        Ok(Self { factor, jitter: 0.0 })
    }

    #[inline]
    pub fn factor(&self) -> &Matrix {
        &self.factor
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    #[inline]
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let l = &self.factor;
        let n = l.rows();
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let row = l.row(i);
            let s = dot(&row[..i], &b[..i]);
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let l = &self.factor;
        let n = l.rows();
        debug_assert_eq!(b.len(), n);
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= l[(k, i)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// `bᵀ (L Lᵀ)⁻¹ b = ‖L⁻¹ b‖²`.
    pub fn inverse_quadratic_form(&self, b: &[f64]) -> f64 {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        dot(&x, &x)
    }

    /// Dense `(L Lᵀ)⁻¹`, built column by column from triangular solves.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let l = &self.factor;
        let n = l.rows();
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = dot(&l.row(i)[..=j], &l.row(j)[..=j]);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }
}

fn try_cholesky(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = l.row(j)[..j].to_vec();
        let d = a[(j, j)] + jitter - dot(&lj, &lj);
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let s = a[(i, j)] - dot(&l.row(i)[..j], &lj);
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Ratio of the largest to the smallest absolute diagonal entry; a cheap lower bound on
/// the condition number used only for diagnostics.
fn diagonal_condition_estimate(a: &Matrix) -> f64 {
    let n = a.rows();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for i in 0..n {
        let d = a[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_and_solve_small_spd() {
        let a = Matrix::from_vec(2, 2, vec![4.0, 2.0, 2.0, 3.0]).unwrap();
        let c = Cholesky::factorize_with_jitter(&a).unwrap();
        assert_eq!(c.jitter(), 0.0);
        assert!((c.factor()[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((c.factor()[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((c.factor()[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);
        let x = c.solve(&[2.0, 1.0]);
        // A⁻¹ = 1/8 [[3,-2],[-2,4]]
        assert!((x[0] - 0.5).abs() < 1e-14);
        assert!(x[1].abs() < 1e-14);
        let back = c.reconstruct();
        for (u, v) in back.as_slice().iter().zip(a.as_slice()) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_matrix_gets_jitter() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let c = Cholesky::factorize_with_jitter(&a).unwrap();
        assert!(c.jitter() > 0.0);
    }

    #[test]
    fn indefinite_matrix_fails_with_condition() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, -1.0]).unwrap();
        match Cholesky::factorize_with_jitter(&a) {
            Err(Error::Factorization { condition_estimate }) => {
                assert!((condition_estimate - 1.0).abs() < 1e-12)
            }
            other => panic!("expected factorization error, got {other:?}"),
        }
    }

    #[test]
    fn quadratic_form_matches_inverse() {
        let a = Matrix::from_vec(3, 3, vec![5.0, 1.0, 0.5, 1.0, 4.0, 0.2, 0.5, 0.2, 3.0]).unwrap();
        let c = Cholesky::factorize_with_jitter(&a).unwrap();
        let inv = c.inverse();
        let z = [0.3, -1.2, 2.0];
        let mut direct = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                direct += z[i] * inv[(i, j)] * z[j];
            }
        }
        assert!((c.inverse_quadratic_form(&z) - direct).abs() < 1e-13);
    }

    #[test]
    fn zero_row_matrix_iterates_nothing() {
        let m = Matrix::zeros(0, 3);
        assert_eq!(m.row_iter().count(), 0);
        let t = Matrix::zeros(2, 0);
        assert_eq!(t.row_iter().count(), 2);
    }
}
