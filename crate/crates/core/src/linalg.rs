//! Small dense real matrices.
//!
//! Everything in this crate works with matrices whose order is a handful of
//! arrival phases times the maximum batch size, so a row-major `Vec<f64>` and
//! cubic-time elimination are all that is needed.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::Serialize;

use crate::error::{Error, Result};

/// Pivots smaller than this (relative to the largest entry) are treated as zero.
pub const SINGULARITY_THRESHOLD: f64 = 1e-12;

/// Default residual tolerance for [`dominant_left_eigenpair`].
pub const EIGEN_TOL: f64 = 1e-12;

/// Default iteration budget for [`dominant_left_eigenpair`].
pub const EIGEN_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
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

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row vectors; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }

    /// Induced infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.add(&other.scaled(-1.0))
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(l, j)];
                }
            }
        }
        Ok(out)
    }

    /// Row vector times matrix, `v·M`.
    pub fn left_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o += vi * m;
            }
        }
        Ok(out)
    }

    /// Matrix times column vector, `M·x`.
    pub fn right_mul(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn check_same_shape(&self, other: &Matrix) -> Result<()> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: other.rows,
            });
        }
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.cols,
            });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let cells: Vec<String> = self.row(i).iter().map(|x| format!("{x:>12.6}")).collect();
            writeln!(f, "[{}]", cells.join(" "))?;
        }
        Ok(())
    }
}

/// Dominant eigenvalue of a nonnegative matrix with its left eigenvector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenPair {
    pub value: f64,
    /// Normalized to sum 1.
    pub left_vector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn require_square(m: &Matrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: m.rows,
            found: m.cols,
        })
    }
}

/// Gauss-Jordan elimination with partial pivoting on `[a | rhs]`, in place.
/// On success `rhs` holds `a⁻¹·rhs`.
fn eliminate(a: &mut Matrix, rhs: &mut Matrix) -> Result<()> {
    let n = a.rows;
    let threshold = SINGULARITY_THRESHOLD * a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, a[(r, col)]))
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
            .expect("non-empty pivot range");
        if pivot.abs() < threshold || !pivot.is_finite() {
            return Err(Error::SingularMatrix { pivot, column: col });
        }
        if pivot_row != col {
            for j in 0..n {
                a.data.swap(pivot_row * n + j, col * n + j);
            }
            for j in 0..rhs.cols {
                rhs.data.swap(pivot_row * rhs.cols + j, col * rhs.cols + j);
            }
        }
        let inv = 1.0 / a[(col, col)];
        for j in 0..n {
            a[(col, j)] *= inv;
        }
        for j in 0..rhs.cols {
            rhs[(col, j)] *= inv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[(r, col)];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                a[(r, j)] -= factor * a[(col, j)];
            }
            for j in 0..rhs.cols {
                rhs[(r, j)] -= factor * rhs[(col, j)];
            }
        }
    }
    Ok(())
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert(m: &Matrix) -> Result<Matrix> {
    require_square(m)?;
    let mut a = m.clone();
    let mut inv = Matrix::identity(m.rows);
    eliminate(&mut a, &mut inv)?;
    Ok(inv)
}

/// Solves `a·x = b`.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    require_square(a)?;
    if b.len() != a.rows {
        return Err(Error::DimensionMismatch {
            expected: a.rows,
            found: b.len(),
        });
    }
    let mut work = a.clone();
    let mut rhs = Matrix::from_row_major(b.len(), 1, b.to_vec())?;
    eliminate(&mut work, &mut rhs)?;
    Ok(rhs.data)
}

/// Solves the row-vector system `x·a = b`.
pub fn solve_left(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    solve(&a.transpose(), b)
}

/// Perron root and left Perron vector of a nonnegative irreducible matrix by
/// power iteration.
///
/// The iteration runs on `M + sI` with `s` half the mean row sum. The shift
/// leaves eigenvectors unchanged and makes an irreducible matrix primitive, so
/// periodic matrices converge too. Convergence is declared once
/// `‖v·M − r·v‖∞ < tol` for the unshifted matrix.
pub fn dominant_left_eigenpair(m: &Matrix, tol: f64, max_iter: usize) -> Result<EigenPair> {
    require_square(m)?;
    let n = m.rows;
    for i in 0..n {
        for j in 0..n {
            let value = m[(i, j)];
            if value < 0.0 || !value.is_finite() {
                return Err(Error::NegativeEntries { row: i, col: j, value });
            }
        }
    }
    let shift = 0.5 * m.as_slice().iter().sum::<f64>() / n as f64;
    let mut v = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iter {
        let w = m.left_mul(&v)?;
        let value: f64 = w.iter().sum();
        residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - value * vi).abs())
            .fold(0.0, f64::max);
        if residual < tol {
            return Ok(EigenPair {
                value,
                left_vector: v,
                iterations: iteration,
                residual,
            });
        }
        let norm = value + shift;
        if norm <= 0.0 {
            // Nilpotent or zero matrix: the Perron root is zero.
            return Ok(EigenPair {
                value: 0.0,
                left_vector: v,
                iterations: iteration,
                residual,
            });
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = (wi + shift * *vi) / norm;
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual_identity(m: &Matrix, inv: &Matrix) -> f64 {
        m.mul(inv)
            .unwrap()
            .sub(&Matrix::identity(m.rows()))
            .unwrap()
            .max_abs()
    }

    #[test]
    fn inverse_of_identity_and_diagonal() {
        assert_eq!(invert(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
        let inv = invert(&Matrix::from_diag(&[2.0, 4.0])).unwrap();
        assert_eq!(inv, Matrix::from_diag(&[0.5, 0.25]));
    }

    #[test]
    fn inverse_of_random_well_conditioned_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = Matrix::zeros(5, 5);
        for i in 0..5 {
            for j in 0..5 {
                m[(i, j)] = rng.gen_range(-1.0..1.0);
            }
            m[(i, i)] += 5.0;
        }
        let inv = invert(&m).unwrap();
        assert!(residual_identity(&m, &inv) < 1e-10);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(invert(&m), Err(Error::SingularMatrix { .. })));
        assert!(matches!(solve(&m, &[1.0, 1.0]), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn solve_small_systems() {
        assert_eq!(solve(&Matrix::identity(2), &[3.0, 7.0]).unwrap(), vec![3.0, 7.0]);
        assert_eq!(solve(&Matrix::from_diag(&[2.0, 5.0]), &[4.0, 10.0]).unwrap(), vec![2.0, 2.0]);
        assert!(matches!(
            solve(&Matrix::identity(2), &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn solve_random_system_by_substitution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut a = Matrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                a[(i, j)] = rng.gen_range(-2.0..2.0);
            }
        }
        let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x = solve(&a, &b).unwrap();
        let ax = a.right_mul(&x).unwrap();
        let bnorm = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let res = ax.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(res < 1e-10 * bnorm, "residual {res}");
    }

    #[test]
    fn left_solve_matches_transpose() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.5, 3.0]]).unwrap();
        let x = solve_left(&a, &[1.0, 2.0]).unwrap();
        let back = a.left_mul(&x).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-14 && (back[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn eigenpair_of_scalar() {
        let e = dominant_left_eigenpair(&Matrix::from_rows(&[vec![0.5]]).unwrap(), 1e-12, 100).unwrap();
        assert!((e.value - 0.5).abs() < 1e-15);
        assert_eq!(e.left_vector, vec![1.0]);
    }

    #[test]
    fn eigenpair_of_rank_one_product() {
        // c = (1, 2)^T, t = (0.3, 0.1): the only nonzero eigenvalue is t·c.
        let m = Matrix::from_rows(&[vec![0.3, 0.1], vec![0.6, 0.2]]).unwrap();
        let e = dominant_left_eigenpair(&m, 1e-13, 10_000).unwrap();
        assert!((e.value - 0.5).abs() < 1e-12);
        assert!((e.left_vector[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn eigenpair_rejects_negative_entries() {
        let m = Matrix::from_rows(&[vec![0.3, -0.1], vec![0.6, 0.2]]).unwrap();
        assert!(matches!(
            dominant_left_eigenpair(&m, 1e-12, 100),
            Err(Error::NegativeEntries { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn eigenpair_of_periodic_matrix() {
        // Eigenvalues ±1; the shift makes the iteration converge anyway.
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let e = dominant_left_eigenpair(&m, 1e-13, 10_000).unwrap();
        assert!((e.value - 1.0).abs() < 1e-12);
        assert!((e.left_vector[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eigenpair_reports_non_convergence() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.999, 1.0]]).unwrap();
        assert!(matches!(
            dominant_left_eigenpair(&m, 1e-15, 1),
            Err(Error::NoConvergence { iterations: 1, .. })
        ));
    }
}
