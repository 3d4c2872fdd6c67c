//! Dense row-major matrices and the small linear-algebra kernels the solver
//! needs: Gram products, block assembly, a cyclic Jacobi eigensolver and a
//! pivoted Gaussian elimination.

use crate::error::{AdmmError, Result};
use crate::scalar::Real;

/// Largest dimension accepted by [`symmetric_eigenvalues`].
pub const EIGEN_DIM_CAP: usize = 2000;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(AdmmError::DimensionMismatch {
                what: "matrix data",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(AdmmError::DimensionMismatch {
                    what: "matrix row",
                    expected: c,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// `self * x`
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| crate::scalar::dot(self.row(i), x)).collect()
    }

    /// `self^T * y`
    pub fn tr_mul_vec(&self, y: &[T]) -> Vec<T> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * yi;
            }
        }
        out
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

    /// `self^T * self`
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                if row[i] == T::zero() {
                    continue;
                }
                for j in 0..n {
                    g[(i, j)] = g[(i, j)] + row[i] * row[j];
                }
            }
        }
        g
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    /// `x^T self x`
    pub fn quad_form(&self, x: &[T]) -> T {
        crate::scalar::dot(x, &self.mul_vec(x))
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(-T::one()))
    }

    pub fn add_diagonal(&mut self, s: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] = self[(i, i)] + s;
        }
    }

    pub fn max_abs(&self) -> T {
        crate::scalar::max_abs(&self.data)
    }

    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Replaces the matrix by `(M + M^T) / 2`.
    pub fn symmetrize(&mut self) {
        let half = T::lit(0.5);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    /// Block-diagonal matrix from square blocks, in order.
    pub fn block_diag(blocks: &[Self]) -> Self {
        let n: usize = blocks.iter().map(|b| b.rows).sum();
        let mut out = Self::zeros(n, n);
        let mut off = 0;
        for b in blocks {
            for i in 0..b.rows {
                for j in 0..b.cols {
                    out[(off + i, off + j)] = b[(i, j)];
                }
            }
            off += b.rows;
        }
        out
    }

    /// Horizontal concatenation of blocks sharing the row count.
    pub fn hstack(blocks: &[Self]) -> Result<Self> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let mut off = 0;
        for b in blocks {
            if b.rows != rows {
                return Err(AdmmError::DimensionMismatch {
                    what: "hstack rows",
                    expected: rows,
                    found: b.rows,
                });
            }
            for i in 0..rows {
                for j in 0..b.cols {
                    out[(i, off + j)] = b[(i, j)];
                }
            }
            off += b.cols;
        }
        Ok(out)
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

fn check_symmetric<T: Real>(m: &Matrix<T>) -> Result<()> {
    if !m.is_square() {
        return Err(AdmmError::DimensionMismatch {
            what: "square matrix",
            expected: m.rows(),
            found: m.cols(),
        });
    }
    if m.rows() > EIGEN_DIM_CAP {
        return Err(AdmmError::MatrixTooLarge(m.rows(), EIGEN_DIM_CAP));
    }
    let tol = T::attainable_tol(1e-12) * (T::one() + m.max_abs());
    let asym = m.asymmetry();
    if asym > tol {
        return Err(AdmmError::NotSymmetric(asym.to_f64_lossy()));
    }
    Ok(())
}

fn off_diagonal_frobenius<T: Real>(a: &Matrix<T>) -> T {
    let n = a.rows();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s = s + a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi
/// rotations. Sweeps stop once the off-diagonal Frobenius norm falls below
/// `1e-10 * (1 + max|M_ij|)`, which bounds the eigenvalue error by the same
/// amount.
pub fn symmetric_eigenvalues<T: Real>(m: &Matrix<T>) -> Result<Vec<T>> {
    check_symmetric(m)?;
    let n = m.rows();
    let mut a = m.clone();
    a.symmetrize();
    let tol = T::attainable_tol(1e-10) * (T::one() + m.max_abs());
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_frobenius(&a) <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (apq + apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    if !converged && off_diagonal_frobenius(&a) > tol {
        return Err(AdmmError::NoConvergence(MAX_SWEEPS));
    }
    let mut eig: Vec<T> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    Ok(eig)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue_symmetric<T: Real>(m: &Matrix<T>) -> Result<T> {
    if m.rows() == 0 {
        return Ok(T::zero());
    }
    Ok(symmetric_eigenvalues(m)?[0])
}

pub fn max_eigenvalue_symmetric<T: Real>(m: &Matrix<T>) -> Result<T> {
    if m.rows() == 0 {
        return Ok(T::zero());
    }
    Ok(*symmetric_eigenvalues(m)?.last().expect("nonempty"))
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn spectral_norm_symmetric<T: Real>(m: &Matrix<T>) -> Result<T> {
    let eig = symmetric_eigenvalues(m)?;
    Ok(eig.iter().fold(T::zero(), |acc, v| acc.max(v.abs())))
}

/// Spectral norm of a general matrix via the eigenvalues of its Gram.
pub fn spectral_norm<T: Real>(m: &Matrix<T>) -> Result<T> {
    Ok(max_eigenvalue_symmetric(&m.gram())?.max(T::zero()).sqrt())
}

/// Solves `m x = rhs` by Gaussian elimination with partial pivoting.
pub fn solve<T: Real>(m: &Matrix<T>, rhs: &[T]) -> Result<Vec<T>> {
    let n = m.rows();
    if !m.is_square() || rhs.len() != n {
        return Err(AdmmError::DimensionMismatch {
            what: "linear system",
            expected: n,
            found: rhs.len(),
        });
    }
    let mut a = m.clone();
    let mut b = rhs.to_vec();
    let scale = T::one().max(a.max_abs());
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().partial_cmp(&a[(j, col)].abs()).expect("finite"))
            .expect("nonempty range");
        if a[(pivot, col)].abs() <= T::epsilon() * T::lit(1e3) * scale {
            return Err(AdmmError::Singular);
        }
        if pivot != col {
            for k in 0..n {
                let tmp = a[(col, k)];
                a[(col, k)] = a[(pivot, k)];
                a[(pivot, k)] = tmp;
            }
            b.swap(col, pivot);
        }
        for r in (col + 1)..n {
            let f = a[(r, col)] / a[(col, col)];
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                a[(r, k)] = a[(r, k)] - f * a[(col, k)];
            }
            b[r] = b[r] - f * b[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s = s - a[(i, k)] * x[k];
        }
        x[i] = s / a[(i, i)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn min_eigenvalue_examples() {
        let q = m(&[&[10.0, -10.0], &[-10.0, 10.0]]);
        assert!(min_eigenvalue_symmetric(&q).unwrap().abs() < 1e-10);
        assert!((min_eigenvalue_symmetric(&Matrix::<f64>::identity(3)).unwrap() - 1.0).abs() < 1e-12);
        let d = m(&[&[2.0, 0.0], &[0.0, -3.0]]);
        assert_eq!(min_eigenvalue_symmetric(&d).unwrap(), -3.0);
    }

    #[test]
    fn rejects_asymmetric() {
        let a = m(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(min_eigenvalue_symmetric(&a), Err(AdmmError::NotSymmetric(_))));
    }

    #[test]
    fn eigenvalues_match_characteristic_polynomial() {
        // [[2,1,0],[1,2,1],[0,1,2]] has eigenvalues 2-sqrt2, 2, 2+sqrt2
        let a = m(&[&[2.0, 1.0, 0.0], &[1.0, 2.0, 1.0], &[0.0, 1.0, 2.0]]);
        let e = symmetric_eigenvalues(&a).unwrap();
        let r2 = 2f64.sqrt();
        for (got, want) in e.iter().zip([2.0 - r2, 2.0, 2.0 + r2]) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn solve_small_system() {
        let a = m(&[&[0.0, 2.0], &[3.0, 1.0]]);
        let x = solve(&a, &[4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        let s = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(solve(&s, &[1.0, 1.0]), Err(AdmmError::Singular));
    }

    #[test]
    fn works_in_single_precision() {
        let q: Matrix<f32> = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let lo = min_eigenvalue_symmetric(&q).unwrap();
        let want = 3.5 - (1.25f32).sqrt();
        assert!((lo - want).abs() < 1e-5);
    }
}
