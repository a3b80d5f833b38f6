use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{post_controls, pre_design, BaselineEstimate, Method, UnitFit};
use crate::error::{Error, Result};
use crate::panel::PanelDataset;

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols() + 1, |r, c| if c == 0 { 1.0 } else { x[(r, c - 1)] })
}

/// OLS of `y` on `[1, x]` with `1 − alpha` prediction intervals at the rows of `x_new`.
///
/// With `n ≤ p + 1` observations the fit is saturated: the minimum-norm solution is used, residuals
/// are reported as exactly zero and intervals collapse onto the point prediction.
pub fn ols_unit(x: &DMatrix<f64>, y: &DVector<f64>, x_new: &DMatrix<f64>, alpha: f64) -> Result<UnitFit> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n || x_new.ncols() != p {
        return Err(Error::Dimension("OLS design and outcome sizes disagree".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let xa = with_intercept(x);
    let xn = with_intercept(x_new);
    let svd = xa.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * (n.max(p + 1) as f64) * f64::EPSILON;
    let coef = svd.solve(y, eps).map_err(|e| Error::Singular(format!("OLS: {e}")))?;
    let point: Vec<f64> = (&xn * &coef).iter().copied().collect();
    let intercept = coef[0];
    let weights: Vec<f64> = coef.iter().skip(1).copied().collect();

    if n <= p + 1 {
        log::warn!("saturated OLS fit ({n} pre-periods for {p} controls plus intercept): zero residuals and zero-width intervals");
        return Ok(UnitFit {
            weights,
            intercept: Some(intercept),
            fitted_pre: y.iter().copied().collect(),
            interval: Some((point.clone(), point.clone())),
            point,
            draws: None,
        });
    }

    let fitted = &xa * &coef;
    let rank = svd.rank(eps);
    let df = (n - rank) as f64;
    let rss = (y - &fitted).norm_squared();
    let s2 = rss / df;
    // (XᵀX)⁺ = V diag(1/s²) Vᵀ over the retained singular values
    let v_t = svd.v_t.as_ref().expect("computed V");
    let mut xtx_pinv = DMatrix::zeros(p + 1, p + 1);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > eps {
            let v = v_t.row(k).transpose();
            xtx_pinv += (&v * v.transpose()) / (s * s);
        }
    }
    let t = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Config(format!("t distribution: {e}")))?;
    let q = t.inverse_cdf(1.0 - alpha / 2.0);
    let (mut lo, mut hi) = (Vec::with_capacity(point.len()), Vec::with_capacity(point.len()));
    for (r, &yhat) in point.iter().enumerate() {
        let x0 = xn.row(r).transpose();
        let lev = (x0.transpose() * &xtx_pinv * &x0)[(0, 0)];
        let half = q * (s2 * (1.0 + lev)).sqrt();
        lo.push(yhat - half);
        hi.push(yhat + half);
    }
    Ok(UnitFit {
        weights,
        intercept: Some(intercept),
        fitted_pre: fitted.iter().copied().collect(),
        point,
        interval: Some((lo, hi)),
        draws: None,
    })
}

/// Vertical regression by OLS on the raw pre-period outcomes, 95% prediction intervals when
/// `alpha = 0.05`.
pub fn fit_ols(data: &PanelDataset, alpha: f64) -> Result<BaselineEstimate> {
    let post = post_controls(data);
    let units = (0..data.n_treated)
        .into_par_iter()
        .map(|i| {
            let (x, y) = pre_design(data, i);
            ols_unit(&x, &y, &post, alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BaselineEstimate { method: Method::Ols, units })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_recovery() {
        let c1: Vec<f64> = (0..15).map(|t| ((t * 7) % 11) as f64 - 3.0).collect();
        let c2: Vec<f64> = (0..15).map(|t| ((t * 5) % 13) as f64 * 0.5).collect();
        let c3: Vec<f64> = (0..15).map(|t| (t as f64).sin()).collect();
        let x = DMatrix::from_fn(15, 3, |t, c| [&c1, &c2, &c3][c][t]);
        let y = DVector::from_fn(15, |t, _| 2.0 * c1[t] - c2[t] + 3.0);
        let fit = ols_unit(&x, &y, &x.rows(0, 2).into_owned(), 0.05).unwrap();
        assert!((fit.weights[0] - 2.0).abs() < 1e-10);
        assert!((fit.weights[1] + 1.0).abs() < 1e-10);
        assert!(fit.weights[2].abs() < 1e-10);
        assert!((fit.intercept.unwrap() - 3.0).abs() < 1e-10);
        let (lo, hi) = fit.interval.unwrap();
        assert!(hi.iter().zip(&lo).all(|(h, l)| h - l < 1e-8));
    }

    #[test]
    fn saturated_fit_has_zero_width() {
        let x = DMatrix::from_fn(4, 4, |t, c| ((t + 1) * (c + 2)) as f64 + (t * c) as f64 * 0.3);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let fit = ols_unit(&x, &y, &x, 0.05).unwrap();
        assert_eq!(fit.fitted_pre, y.iter().copied().collect::<Vec<_>>());
        let (lo, hi) = fit.interval.unwrap();
        assert_eq!(lo, hi);
        assert_eq!(lo, fit.point);
    }
}
