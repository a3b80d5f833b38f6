//! Squared-exponential kernels over treated-area distances, the mixed spatial/idiosyncratic
//! residual covariance, and multivariate-normal density and sampling through Cholesky factors.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{CholFactor, DenseMatrix, SymMatrix};
use crate::scalar::Scalar;

/// Pairwise absolute differences of rescaled treated-area distances, all in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix<T>(DenseMatrix<T>);

impl<T: Scalar> DistanceMatrix<T> {
    /// `D_ii' = |d_i − d_i'|` for positions already rescaled to `[0, 1]`.
    pub fn from_positions(positions: &[T]) -> Result<Self> {
        if positions.iter().any(|&d| !(d >= T::zero() && d <= T::one())) {
            return Err(Error::Domain("distance positions must lie in [0, 1]".into()));
        }
        let n = positions.len();
        Ok(Self(DenseMatrix::from_fn(n, n, |i, j| (positions[i] - positions[j]).abs())))
    }

    /// Validates an explicit distance matrix: symmetric, zero diagonal, entries in `[0, 1]`.
    pub fn new(m: DenseMatrix<T>) -> Result<Self> {
        let sym = SymMatrix::new(m)?;
        let m = sym.into_matrix();
        for i in 0..m.rows() {
            if m[(i, i)] != T::zero() {
                return Err(Error::Domain(format!("distance diagonal entry {i} is not zero")));
            }
        }
        if m.as_slice().iter().any(|&d| !(d >= T::zero() && d <= T::one())) {
            return Err(Error::Domain("distance entries must lie in [0, 1]".into()));
        }
        Ok(Self(m))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.0
    }
}

impl<T> std::ops::Index<(usize, usize)> for DistanceMatrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, idx: (usize, usize)) -> &T {
        &self.0[idx]
    }
}

/// `variance · exp(−D² / (2 · lengthscale_sq))`.
pub fn build_sq_exp_kernel<T: Scalar>(
    d: &DistanceMatrix<T>,
    variance: T,
    lengthscale_sq: T,
) -> Result<SymMatrix<T>> {
    if !(variance > T::zero()) || !(lengthscale_sq > T::zero()) {
        return Err(Error::Domain(format!(
            "kernel needs positive variance and lengthscale, got {variance} and {lengthscale_sq}"
        )));
    }
    Ok(sq_exp_kernel_unchecked(d, variance, lengthscale_sq))
}

pub(crate) fn sq_exp_kernel_unchecked<T: Scalar>(
    d: &DistanceMatrix<T>,
    variance: T,
    lengthscale_sq: T,
) -> SymMatrix<T> {
    let n = d.dim();
    let denom = T::lit(2.0) * lengthscale_sq;
    let k = DenseMatrix::from_fn(n, n, |i, j| {
        if i == j {
            variance
        } else {
            let dij = d[(i, j)];
            variance * (-(dij * dij) / denom).exp()
        }
    });
    SymMatrix::new_unchecked(k)
}

/// Residual covariance `σ²_e · (w · K(D, ρ²_e) + (1 − w) · I)`.
///
/// The diagonal is exactly `sigma_e_sq` for every `w`.
pub fn build_error_cov<T: Scalar>(
    d: &DistanceMatrix<T>,
    sigma_e_sq: T,
    rho_e_sq: T,
    w: T,
) -> Result<SymMatrix<T>> {
    if !(w >= T::zero() && w <= T::one()) {
        return Err(Error::Domain(format!("mixing weight w = {w} outside [0, 1]")));
    }
    if !(sigma_e_sq > T::zero()) || !(rho_e_sq > T::zero()) {
        return Err(Error::Domain(format!(
            "error covariance needs positive variance and lengthscale, got {sigma_e_sq} and {rho_e_sq}"
        )));
    }
    Ok(error_cov_unchecked(d, sigma_e_sq, rho_e_sq, w))
}

pub(crate) fn error_cov_unchecked<T: Scalar>(
    d: &DistanceMatrix<T>,
    sigma_e_sq: T,
    rho_e_sq: T,
    w: T,
) -> SymMatrix<T> {
    let n = d.dim();
    let denom = T::lit(2.0) * rho_e_sq;
    let m = DenseMatrix::from_fn(n, n, |i, j| {
        if i == j {
            sigma_e_sq
        } else {
            let dij = d[(i, j)];
            sigma_e_sq * w * (-(dij * dij) / denom).exp()
        }
    });
    SymMatrix::new_unchecked(m)
}

/// Log-density of `MVN(mean, L Lᵀ)` at `x`, via one forward substitution.
pub fn mvn_logpdf<T: Scalar>(x: &[T], mean: &[T], chol: &CholFactor<T>) -> Result<T> {
    let n = chol.dim();
    if x.len() != n || mean.len() != n {
        return Err(Error::Dimension(format!(
            "mvn_logpdf: x has {}, mean has {}, factor has {n} entries",
            x.len(),
            mean.len()
        )));
    }
    let mut r: Vec<T> = x.iter().zip(mean).map(|(&a, &b)| a - b).collect();
    chol.solve_lower_in_place(&mut r);
    let quad: T = r.iter().map(|&v| v * v).sum();
    let half = T::lit(0.5);
    let log_2pi = T::lit((2.0 * std::f64::consts::PI).ln());
    Ok(-half * (T::from_usize_lossy(n) * log_2pi + chol.log_det() + quad))
}

/// `mean + L z` with `z` i.i.d. standard normal drawn from `rng`.
pub fn mvn_sample<T: Scalar, R: Rng + ?Sized>(
    mean: &[T],
    chol: &CholFactor<T>,
    rng: &mut R,
) -> Result<Vec<T>> {
    let n = chol.dim();
    if mean.len() != n {
        return Err(Error::Dimension(format!(
            "mvn_sample: mean has {} entries, factor has {n}",
            mean.len()
        )));
    }
    let z: Vec<T> = (0..n)
        .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Ok(chol.mul_vec(&z).into_iter().zip(mean).map(|(a, &m)| a + m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::chol_with_jitter;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(pos: &[f64]) -> DistanceMatrix<f64> {
        DistanceMatrix::from_positions(pos).unwrap()
    }

    #[test]
    fn zero_distance_gives_marginal_variance() {
        let k = build_sq_exp_kernel(&dist(&[0.3]), 0.4, 0.1).unwrap();
        assert_eq!(k[(0, 0)], 0.4);
    }

    #[test]
    fn unit_distance_off_diagonal() {
        let k = build_sq_exp_kernel(&dist(&[0.0, 1.0]), 1.0, 0.5).unwrap();
        assert!((k[(0, 1)] - (-1f64).exp()).abs() < 1e-15);
        assert!((k[(0, 1)] - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn catchment_distances_end_to_end_correlation() {
        let d = dist(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        for ell in [0.04, 0.16, 0.36] {
            let k = build_sq_exp_kernel(&d, 1.0, ell).unwrap();
            assert!((k[(0, 4)] - (-1.0 / (2.0 * ell)).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_rejects_bad_parameters() {
        let d = dist(&[0.0, 1.0]);
        assert!(matches!(build_sq_exp_kernel(&d, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(build_sq_exp_kernel(&d, 1.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn error_cov_independent_when_w_zero() {
        let s = build_error_cov(&dist(&[0.0, 0.5, 1.0]), 2.0, 0.04, 0.0).unwrap();
        assert_eq!(s.matrix(), &DenseMatrix::identity(3).scale(2.0));
    }

    #[test]
    fn error_cov_fully_spatial_at_zero_distance() {
        let d = DistanceMatrix::new(DenseMatrix::zeros(3, 3)).unwrap();
        let s = build_error_cov(&d, 0.7, 0.04, 1.0).unwrap();
        assert!(s.matrix().as_slice().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn error_cov_mixed_entry() {
        let s = build_error_cov(&dist(&[0.0, 0.25]), 1.0, 0.04, 0.5).unwrap();
        let expected = 0.5 * (-0.78125f64).exp();
        assert!((s[(0, 1)] - expected).abs() < 1e-15);
        assert!((s[(0, 1)] - 0.2289).abs() < 1e-4);
        assert_eq!(s[(0, 0)], 1.0);
    }

    #[test]
    fn error_cov_rejects_w_out_of_range() {
        let d = dist(&[0.0, 1.0]);
        assert!(matches!(build_error_cov(&d, 1.0, 0.1, 1.5), Err(Error::Domain(_))));
        assert!(matches!(build_error_cov(&d, 1.0, 0.1, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn standard_normal_log_density_at_zero() {
        let f = chol_with_jitter(&SymMatrix::identity(1), 0.0).unwrap();
        let lp = mvn_logpdf(&[0.0], &[0.0], &f).unwrap();
        assert!((lp + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        assert!((lp + 0.918_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn diagonal_covariance_factorizes() {
        let var: [f64; 3] = [0.5, 2.0, 3.0];
        let s = SymMatrix::new(DenseMatrix::from_fn(3, 3, |i, j| if i == j { var[i] } else { 0.0 })).unwrap();
        let f = chol_with_jitter(&s, 0.0).unwrap();
        let x = [0.3, -1.0, 2.0];
        let mean = [0.1, 0.2, -0.5];
        let joint = mvn_logpdf(&x, &mean, &f).unwrap();
        let sum: f64 = (0..3)
            .map(|i| {
                let z = (x[i] - mean[i]) / var[i].sqrt();
                -0.5 * (2.0 * std::f64::consts::PI * var[i]).ln() - 0.5 * z * z
            })
            .sum();
        assert!((joint - sum).abs() < 1e-13);
    }

    #[test]
    fn logpdf_dimension_mismatch() {
        let f = chol_with_jitter(&SymMatrix::<f64>::identity(2), 0.0).unwrap();
        assert!(matches!(mvn_logpdf(&[0.0], &[0.0, 0.0], &f), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_factor_returns_mean() {
        let f = CholFactor::from_lower(DenseMatrix::<f64>::zeros(3, 3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = mvn_sample(&[1.0, -2.0, 3.5], &f, &mut rng).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let s = build_error_cov(&dist(&[0.0, 0.5, 1.0]), 1.0, 0.1, 0.5).unwrap();
        let f = chol_with_jitter(&s, 1e-4).unwrap();
        let a = mvn_sample(&[0.0; 3], &f, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = mvn_sample(&[0.0; 3], &f, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }
}
