//! Small dense linear algebra: row-major matrices and Cholesky factorizations.
//!
//! Gram matrices in this crate are at most a few hundred rows, so everything
//! here is the textbook O(n^3) algorithm with no blocking.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), rows * cols, "buffer length does not match shape");
        Self {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
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
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `self^T v`
    pub fn tr_matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    pub fn add_to_diagonal(&mut self, v: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += v;
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn max_diagonal(&self) -> T {
        self.diagonal().into_iter().fold(T::zero(), |m, d| m.max(d))
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Diagonal jitter schedule, expressed relative to a matrix scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JitterPolicy {
    pub initial: f64,
    pub max: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            initial: 1e-8,
            max: 1e-4,
        }
    }
}

/// Lower-triangular Cholesky factor `L` with `L L^T = A + jitter I`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: Matrix<T>,
    jitter: T,
}

impl<T: Real> Cholesky<T> {
    /// Strict factorization; `None` if a pivot is not strictly positive.
    pub fn try_factor(a: &Matrix<T>) -> Option<Self> {
        factor(a, None).map(|l| Self { l, jitter: T::zero() })
    }

    /// Factorizes `A + jitter I`, starting at `policy.initial * scale` and
    /// doubling the jitter on failure until it exceeds `policy.max * scale`.
    pub fn with_jitter(a: &Matrix<T>, scale: T, policy: JitterPolicy) -> Result<Self> {
        let scale = if scale > T::zero() { scale } else { T::one() };
        let max = T::lit(policy.max) * scale;
        let mut jitter = T::lit(policy.initial) * scale;
        loop {
            let mut shifted = a.clone();
            shifted.add_to_diagonal(jitter);
            if let Some(l) = factor(&shifted, None) {
                return Ok(Self { l, jitter });
            }
            jitter = jitter + jitter;
            if jitter > max {
                return Err(Error::NotPositiveDefinite {
                    jitter: (jitter / (T::one() + T::one())).as_f64(),
                });
            }
        }
    }

    /// Factorization of a positive semidefinite matrix.
    ///
    /// Pivots within a relative tolerance of zero produce a zero column, so
    /// the zero matrix factors to the zero matrix. Clearly negative pivots
    /// fall back to [`Cholesky::with_jitter`].
    pub fn semidefinite(a: &Matrix<T>) -> Result<Self> {
        let scale = a.max_diagonal();
        let tol = T::lit(1e-12) * scale;
        if let Some(l) = factor(a, Some(tol)) {
            return Ok(Self { l, jitter: T::zero() });
        }
        Self::with_jitter(a, scale, JitterPolicy::default())
    }

    pub fn factor_matrix(&self) -> &Matrix<T> {
        &self.l
    }

    pub fn into_factor(self) -> Matrix<T> {
        self.l
    }

    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// `L^{-1} b`
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let mut s = x[i];
            for j in 0..i {
                s -= row[j] * x[j];
            }
            x[i] = s / row[i];
        }
        x
    }

    /// `L^{-T} b`
    pub fn solve_upper(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.l[(j, i)] * x[j];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// `(L L^T)^{-1} b`
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Solves for each column of `b`.
    pub fn solve_matrix(&self, b: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(b.rows(), b.cols());
        let mut col = vec![T::zero(); b.rows()];
        for j in 0..b.cols() {
            for i in 0..b.rows() {
                col[i] = b[(i, j)];
            }
            let x = self.solve(&col);
            for i in 0..b.rows() {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.dim();
        // L^{-1} column by column, then (L^{-1})^T L^{-1}.
        let mut linv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let c = self.solve_lower(&e);
            for i in 0..n {
                linv[(i, j)] = c[i];
            }
        }
        let mut inv = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = T::zero();
                for k in i..n {
                    s += linv[(k, i)] * linv[(k, j)];
                }
                inv[(i, j)] = s;
                inv[(j, i)] = s;
            }
        }
        inv
    }

    pub fn log_det(&self) -> T {
        let two = T::one() + T::one();
        two * self.l.diagonal().into_iter().map(|d| d.ln()).sum::<T>()
    }

    /// `L L^T`
    pub fn reconstruct(&self) -> Matrix<T> {
        self.l.matmul(&self.l.transpose())
    }

    /// Directional derivative of the factor: given symmetric `dA`, returns
    /// `dL = L Phi(L^{-1} dA L^{-T})` where `Phi` keeps the strict lower
    /// triangle and halves the diagonal. Requires a nonsingular factor.
    pub fn differential(&self, da: &Matrix<T>) -> Result<Matrix<T>> {
        let n = self.dim();
        if self.l.diagonal().iter().any(|&d| d <= T::zero()) {
            return Err(Error::ZeroVariance);
        }
        // X = L^{-1} dA L^{-T}: solve column-wise twice.
        let mut y = Matrix::zeros(n, n);
        let mut col = vec![T::zero(); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = da[(i, j)];
            }
            let c = self.solve_lower(&col);
            for i in 0..n {
                y[(i, j)] = c[i];
            }
        }
        // X^T = L^{-1} Y^T; X is symmetric.
        let mut x = Matrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                col[i] = y[(j, i)];
            }
            let c = self.solve_lower(&col);
            for i in 0..n {
                x[(i, j)] = c[i];
            }
        }
        let half = T::lit(0.5);
        let phi = Matrix::from_fn(n, n, |i, j| {
            if i > j {
                x[(i, j)]
            } else if i == j {
                half * x[(i, i)]
            } else {
                T::zero()
            }
        });
        Ok(self.l.matmul(&phi))
    }

    /// Factor of `[[A, c], [c^T, a]]` (plus the same jitter) from the factor
    /// of `A`, or `None` if the new pivot is not positive.
    pub fn extend(&self, c: &[T], a: T) -> Option<Self> {
        let n = self.dim();
        let r = self.solve_lower(c);
        let pivot = a + self.jitter - dot(&r, &r);
        if !(pivot > T::zero()) || !pivot.is_finite() {
            return None;
        }
        let mut l = Matrix::zeros(n + 1, n + 1);
        for i in 0..n {
            l.row_mut(i)[..=i].copy_from_slice(&self.l.row(i)[..=i]);
        }
        l.row_mut(n)[..n].copy_from_slice(&r);
        l[(n, n)] = pivot.sqrt();
        Some(Self {
            l,
            jitter: self.jitter,
        })
    }
}

/// Row-oriented Cholesky–Banachiewicz. With `tol = Some(t)`, pivots in
/// `[-t, t]` are treated as exact zeros and their column is zeroed.
fn factor<T: Real>(a: &Matrix<T>, tol: Option<T>) -> Option<Matrix<T>> {
    assert!(a.is_square(), "Cholesky of a non-square matrix");
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                match tol {
                    Some(t) if s <= t => {
                        if s < -t {
                            return None;
                        }
                        l[(i, i)] = T::zero();
                    }
                    _ => {
                        if !(s > T::zero()) || !s.is_finite() {
                            return None;
                        }
                        l[(i, i)] = s.sqrt();
                    }
                }
            } else {
                let d = l[(j, j)];
                l[(i, j)] = if d > T::zero() { s / d } else { T::zero() };
            }
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> Matrix<f64> {
        let b = Matrix::from_row_slice(3, 3, &[1.0, 0.2, -0.5, 0.3, 2.0, 0.1, -0.4, 0.7, 1.5]);
        let mut a = b.matmul(&b.transpose());
        a.add_to_diagonal(0.1);
        a
    }

    #[test]
    fn factor_reconstructs() {
        let a = spd3();
        let c = Cholesky::try_factor(&a).unwrap();
        assert!(c.reconstruct().max_abs_diff(&a) < 1e-12);
        let x = c.solve(&[1.0, -2.0, 0.5]);
        let back = a.matvec(&x);
        for (b, e) in back.iter().zip([1.0, -2.0, 0.5]) {
            assert!((b - e).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_and_log_det() {
        let a = spd3();
        let c = Cholesky::try_factor(&a).unwrap();
        let prod = a.matmul(&c.inverse());
        assert!(prod.max_abs_diff(&Matrix::identity(3)) < 1e-12);
        // determinant by cofactor expansion
        let det = a[(0, 0)] * (a[(1, 1)] * a[(2, 2)] - a[(1, 2)] * a[(2, 1)])
            - a[(0, 1)] * (a[(1, 0)] * a[(2, 2)] - a[(1, 2)] * a[(2, 0)])
            + a[(0, 2)] * (a[(1, 0)] * a[(2, 1)] - a[(1, 1)] * a[(2, 0)]);
        assert!((c.log_det() - det.ln()).abs() < 1e-12);
    }

    #[test]
    fn jitter_escalates_then_fails() {
        // rank one: needs jitter
        let a = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let c = Cholesky::with_jitter(&a, 1.0, JitterPolicy::default()).unwrap();
        assert!(c.jitter() >= 1e-8);
        let neg = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            Cholesky::with_jitter(&neg, 1.0, JitterPolicy::default()),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn semidefinite_zero_and_diagonal() {
        let z = Matrix::<f64>::zeros(3, 3);
        let c = Cholesky::semidefinite(&z).unwrap();
        assert_eq!(c.factor_matrix(), &z);
        let d = Matrix::from_diagonal(&[4.0, 9.0]);
        let c = Cholesky::semidefinite(&d).unwrap();
        assert_eq!(c.factor_matrix(), &Matrix::from_diagonal(&[2.0, 3.0]));
    }

    #[test]
    fn differential_matches_finite_difference() {
        let a = spd3();
        let da = Matrix::from_row_slice(3, 3, &[0.3, -0.1, 0.2, -0.1, 0.5, 0.05, 0.2, 0.05, -0.2]);
        let c = Cholesky::try_factor(&a).unwrap();
        let dl = c.differential(&da).unwrap();
        let h = 1e-6;
        let lp = Cholesky::try_factor(&a.add(&da.scale(h))).unwrap().into_factor();
        let lm = Cholesky::try_factor(&a.add(&da.scale(-h))).unwrap().into_factor();
        let fd = lp.add(&lm.scale(-1.0)).scale(0.5 / h);
        assert!(fd.max_abs_diff(&dl) < 1e-8);
    }

    #[test]
    fn generic_over_f32() {
        let a = spd3().map(|v| v as f32);
        let c = Cholesky::try_factor(&a).unwrap();
        assert!(c.reconstruct().max_abs_diff(&a) < 1e-5);
    }
}
