//! Small dense matrices, Cholesky factorization with diagonal jitter, and triangular solves.
//!
//! Everything here is generic over [`Scalar`] so the kernel layer can run in `f32` or `f64`.
//! Matrices are stored row-major; the dimensions this crate deals with are tiny (tens of rows),
//! so straightforward loops beat pulling in a BLAS.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
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

    /// Builds a matrix from a row-major buffer.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Self { rows: r, cols: c, data: rows.concat() })
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
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = out.row_mut(i);
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn scale(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn sub_matrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn cast<U: Scalar>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| U::from(*x).expect("castable")).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Square matrix that is symmetric to within `1e-12` (relative to its largest entry).
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix<T>(DenseMatrix<T>);

impl<T: Scalar> SymMatrix<T> {
    pub fn new(m: DenseMatrix<T>) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::Dimension(format!("{}x{} matrix is not square", m.rows(), m.cols())));
        }
        let n = m.rows();
        let scale = m.as_slice().iter().fold(T::one(), |a, &x| a.max(x.abs()));
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) * scale;
        for i in 0..n {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > tol {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self(m))
    }

    /// Wraps a matrix whose symmetry is guaranteed by construction.
    pub(crate) fn new_unchecked(m: DenseMatrix<T>) -> Self {
        debug_assert_eq!(m.rows(), m.cols());
        Self(m)
    }

    pub fn identity(n: usize) -> Self {
        Self(DenseMatrix::identity(n))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> DenseMatrix<T> {
        self.0
    }

    pub fn add_diagonal(&self, v: T) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.rows() {
            m[(i, i)] += v;
        }
        Self(m)
    }
}

impl<T> Index<(usize, usize)> for SymMatrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, idx: (usize, usize)) -> &T {
        &self.0[idx]
    }
}

/// Lower-triangular Cholesky factor together with the diagonal jitter that was needed.
#[derive(Clone, Debug, PartialEq)]
pub struct CholFactor<T> {
    lower: DenseMatrix<T>,
    jitter_applied: T,
}

impl<T: Scalar> CholFactor<T> {
    /// Wraps an existing lower-triangular factor. Entries above the diagonal are ignored.
    pub fn from_lower(lower: DenseMatrix<T>) -> Result<Self> {
        if lower.rows() != lower.cols() {
            return Err(Error::Dimension("Cholesky factor must be square".into()));
        }
        Ok(Self { lower, jitter_applied: T::zero() })
    }

    #[inline]
    pub fn lower(&self) -> &DenseMatrix<T> {
        &self.lower
    }

    #[inline]
    pub fn jitter_applied(&self) -> T {
        self.jitter_applied
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    /// `log |L Lᵀ|`.
    pub fn log_det(&self) -> T {
        (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<T>() * T::lit(2.0)
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix<T> {
        let n = self.dim();
        DenseMatrix::from_fn(n, n, |i, j| {
            let k = i.min(j) + 1;
            dot(&self.lower.row(i)[..k], &self.lower.row(j)[..k])
        })
    }

    /// `L v`.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        let n = self.dim();
        (0..n).map(|i| dot(&self.lower.row(i)[..=i], &v[..=i])).collect()
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [T]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.lower.row(i);
            let s = dot(&row[..i], &b[..i]);
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [T]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.lower[(k, i)] * b[k];
            }
            b[i] = s / self.lower[(i, i)];
        }
    }

    /// Solves `(L Lᵀ) x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        self.solve_lower_in_place(b);
        self.solve_upper_in_place(b);
    }

    /// `(L Lᵀ)⁻¹`, assembled column by column.
    pub fn inverse(&self) -> SymMatrix<T> {
        let n = self.dim();
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            self.solve_in_place(&mut e);
            for i in 0..n {
                inv[(i, j)] = e[i];
            }
        }
        // symmetrize away rounding
        for i in 0..n {
            for j in 0..i {
                let v = (inv[(i, j)] + inv[(j, i)]) * T::lit(0.5);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        SymMatrix::new_unchecked(inv)
    }

    /// Directional derivative of the factor: if `A` moves by `dA`, `L` moves by
    /// `L Φ(L⁻¹ dA L⁻ᵀ)` where `Φ` keeps the strict lower triangle and halves the diagonal.
    pub fn differential(&self, d_a: &DenseMatrix<T>) -> DenseMatrix<T> {
        let n = self.dim();
        // Y = L⁻¹ dA, column by column
        let mut y = DenseMatrix::zeros(n, n);
        let mut col = vec![T::zero(); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = d_a[(i, j)];
            }
            self.solve_lower_in_place(&mut col);
            for i in 0..n {
                y[(i, j)] = col[i];
            }
        }
        // X = Y L⁻ᵀ, i.e. each row of X solves L x = (row of Y)
        let mut phi = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let mut row = y.row(i).to_vec();
            self.solve_lower_in_place(&mut row);
            for j in 0..i {
                phi[(i, j)] = row[j];
            }
            phi[(i, i)] = row[i] * T::lit(0.5);
        }
        self.lower.matmul(&phi).expect("square factors")
    }
}

/// Plain Cholesky–Banachiewicz; `None` when a pivot is not strictly positive.
pub fn cholesky<T: Scalar>(a: &SymMatrix<T>) -> Option<DenseMatrix<T>> {
    let n = a.dim();
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                let d = a[(i, i)] - s;
                if !(d > T::zero()) || !d.is_finite() {
                    return None;
                }
                l[(i, i)] = d.sqrt();
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// First jitter level tried when the plain factorization fails.
pub const JITTER_START: f64 = 1e-10;
/// Default ceiling for [`chol_with_jitter`].
pub const DEFAULT_MAX_JITTER: f64 = 1e-4;

/// Cholesky factorization that adds `1e-10, 1e-9, …` to the diagonal until it succeeds or the
/// jitter would exceed `max_jitter`.
pub fn chol_with_jitter<T: Scalar>(a: &SymMatrix<T>, max_jitter: T) -> Result<CholFactor<T>> {
    if let Some(lower) = cholesky(a) {
        return Ok(CholFactor { lower, jitter_applied: T::zero() });
    }
    let mut jitter = T::lit(JITTER_START);
    while jitter <= max_jitter * T::lit(1.000_001) {
        if let Some(lower) = cholesky(&a.add_diagonal(jitter)) {
            log::debug!("cholesky needed diagonal jitter {jitter:e}");
            return Ok(CholFactor { lower, jitter_applied: jitter });
        }
        jitter *= T::lit(10.0);
    }
    Err(Error::Factorization {
        max_jitter: max_jitter.to_f64().unwrap_or(f64::NAN),
        min_eigenvalue_estimate: min_eigenvalue_estimate(a).to_f64().unwrap_or(f64::NAN),
    })
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
///
/// Only used for diagnostics and tests; accuracy is whatever a few dozen sweeps give.
pub fn min_eigenvalue_estimate<T: Scalar>(a: &SymMatrix<T>) -> T {
    symmetric_eigenvalues(a).into_iter().fold(T::infinity(), T::min)
}

/// All eigenvalues of a symmetric matrix (cyclic Jacobi), unsorted.
pub fn symmetric_eigenvalues<T: Scalar>(a: &SymMatrix<T>) -> Vec<T> {
    let n = a.dim();
    let mut m = a.matrix().clone();
    let two = T::lit(2.0);
    for _sweep in 0..64 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off <= T::epsilon() * T::epsilon() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| m[(i, i)]).collect()
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
pub fn lu_solve<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n {
        return Err(Error::Dimension("lu_solve needs square A and matching B".into()));
    }
    let mut m = a.clone();
    let mut x = b.clone();
    let scale = a.as_slice().iter().fold(T::zero(), |s, &v| s.max(v.abs()));
    for k in 0..n {
        let (piv, pval) = (k..n)
            .map(|i| (i, m[(i, k)].abs()))
            .fold((k, T::neg_infinity()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pval > scale * T::epsilon() * T::from_usize_lossy(n)) {
            return Err(Error::Singular(format!("pivot {k} vanished")));
        }
        if piv != k {
            for j in 0..n {
                let tmp = m[(k, j)];
                m[(k, j)] = m[(piv, j)];
                m[(piv, j)] = tmp;
            }
            for j in 0..x.cols() {
                let tmp = x[(k, j)];
                x[(k, j)] = x[(piv, j)];
                x[(piv, j)] = tmp;
            }
        }
        for i in k + 1..n {
            let f = m[(i, k)] / m[(k, k)];
            if f == T::zero() {
                continue;
            }
            for j in k..n {
                let v = m[(k, j)];
                m[(i, j)] -= f * v;
            }
            for j in 0..x.cols() {
                let v = x[(k, j)];
                x[(i, j)] -= f * v;
            }
        }
    }
    for j in 0..x.cols() {
        for i in (0..n).rev() {
            let mut s = x[(i, j)];
            for k in i + 1..n {
                s -= m[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = s / m[(i, i)];
        }
    }
    Ok(x)
}

fn split_joint<T: Scalar>(
    joint: &SymMatrix<T>,
    n_treated: usize,
) -> Result<(SymMatrix<T>, DenseMatrix<T>, SymMatrix<T>)> {
    let n = joint.dim();
    if n_treated == 0 || n_treated >= n {
        return Err(Error::Dimension(format!(
            "need 0 < n_treated < {n}, got {n_treated}"
        )));
    }
    let n0 = n - n_treated;
    let m = joint.matrix();
    let s11 = SymMatrix::new_unchecked(m.sub_matrix(0, 0, n_treated, n_treated));
    let s10 = m.sub_matrix(0, n_treated, n_treated, n0);
    let s00 = SymMatrix::new_unchecked(m.sub_matrix(n_treated, n_treated, n0, n0));
    Ok((s11, s10, s00))
}

/// Regression weights of the treated block on the control block, `Σ₁₀ Σ₀₀⁻¹`, for a joint
/// covariance ordered treated-first. Solved directly (`Σ₀₀ Wᵀ = Σ₀₁`) by pivoted elimination.
pub fn implied_weights<T: Scalar>(joint: &SymMatrix<T>, n_treated: usize) -> Result<DenseMatrix<T>> {
    let (_, s10, s00) = split_joint(joint, n_treated)?;
    let wt = lu_solve(s00.matrix(), &s10.transpose())?;
    Ok(wt.transpose())
}

/// The same weights through triangular factors: `L₁₁ L₀₁ᵀ L₀₀⁻ᵀ L₀₀⁻¹` with `L₁₁ = chol(Σ₁₁)`,
/// `L₀₁ = Σ₀₁ L₁₁⁻ᵀ` and `L₀₀ = chol(Σ₀₀)`.
pub fn implied_weights_block_cholesky<T: Scalar>(
    joint: &SymMatrix<T>,
    n_treated: usize,
) -> Result<DenseMatrix<T>> {
    let (s11, s10, s00) = split_joint(joint, n_treated)?;
    let n1 = s11.dim();
    let n0 = s00.dim();
    let l11 = CholFactor { lower: cholesky(&s11).ok_or_else(|| Error::Singular("Σ₁₁".into()))?, jitter_applied: T::zero() };
    let l00 = CholFactor { lower: cholesky(&s00).ok_or_else(|| Error::Singular("Σ₀₀".into()))?, jitter_applied: T::zero() };
    // rows of L01 solve L11 x = (row of Σ01)ᵀ, i.e. L01ᵀ = L11⁻¹ Σ10
    let mut l01t = DenseMatrix::zeros(n1, n0);
    for c in 0..n0 {
        let mut col = s10.column(c);
        l11.solve_lower_in_place(&mut col);
        for i in 0..n1 {
            l01t[(i, c)] = col[i];
        }
    }
    let cross = l11.lower().matmul(&l01t)?;
    // each row r of `cross` maps to r (L00 L00ᵀ)⁻¹
    let mut out = DenseMatrix::zeros(n1, n0);
    for i in 0..n1 {
        let mut row = cross.row(i).to_vec();
        l00.solve_in_place(&mut row);
        out.row_mut(i).copy_from_slice(&row);
    }
    Ok(out)
}
