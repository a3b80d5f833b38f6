use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{post_controls, pre_design, BaselineEstimate, Method, UnitFit};
use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// 71 log-spaced penalties from `1e-4` to `1e3` (ten per decade).
pub fn ridge_gcv_grid() -> Vec<f64> {
    (0..=70).map(|k| 10f64.powf(-4.0 + k as f64 / 10.0)).collect()
}

/// Ridge fit of one treated unit.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeUnit {
    pub lambda: f64,
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub gcv: f64,
}

/// Ridge regression of `y` on `x` with an unpenalized intercept. With `lambda = None` the penalty
/// minimizes generalized cross-validation, `(RSS/n) / (1 − (1 + df)/n)²`, over
/// [`ridge_gcv_grid`]; the `+1` counts the intercept.
pub fn ridge_unit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: Option<f64>) -> Result<RidgeUnit> {
    let n = x.nrows();
    if n == 0 || y.len() != n {
        return Err(Error::Dimension("ridge design and outcome sizes disagree".into()));
    }
    let nf = n as f64;
    let x_mean = DVector::from_fn(x.ncols(), |c, _| x.column(c).mean());
    let y_mean = y.mean();
    let xc = DMatrix::from_fn(n, x.ncols(), |t, c| x[(t, c)] - x_mean[c]);
    let yc = y.map(|v| v - y_mean);
    let svd = xc.clone().svd(true, true);
    let u = svd.u.as_ref().expect("computed U");
    let v_t = svd.v_t.as_ref().expect("computed V");
    let s = &svd.singular_values;
    let uty = u.transpose() * &yc;

    let fit = |lam: f64| -> (DVector<f64>, f64) {
        let shrunk = DVector::from_fn(s.len(), |k, _| s[k] / (s[k] * s[k] + lam) * uty[k]);
        let beta = v_t.transpose() * shrunk;
        let resid = &yc - &xc * &beta;
        let df: f64 = s.iter().map(|&sk| sk * sk / (sk * sk + lam)).sum();
        let denom = 1.0 - (1.0 + df) / nf;
        let gcv = if denom > 0.0 { (resid.norm_squared() / nf) / (denom * denom) } else { f64::INFINITY };
        (beta, gcv)
    };

    let (lambda, beta, gcv) = match lambda {
        Some(l) => {
            if !(l >= 0.0) {
                return Err(Error::Config(format!("ridge penalty must be non-negative, got {l}")));
            }
            let (b, g) = fit(l);
            (l, b, g)
        }
        None => {
            let mut best: Option<(f64, DVector<f64>, f64)> = None;
            for l in ridge_gcv_grid() {
                let (b, g) = fit(l);
                if best.as_ref().is_none_or(|(_, _, bg)| g < *bg) {
                    best = Some((l, b, g));
                }
            }
            best.expect("non-empty grid")
        }
    };
    let intercept = y_mean - x_mean.dot(&beta);
    Ok(RidgeUnit { lambda, intercept, weights: beta.iter().copied().collect(), gcv })
}

/// Separate ridge regressions on the raw pre-period outcomes; point imputations only.
pub fn fit_ridge(data: &PanelDataset) -> Result<BaselineEstimate> {
    let post = post_controls(data);
    let units = (0..data.n_treated)
        .into_par_iter()
        .map(|i| {
            let (x, y) = pre_design(data, i);
            let r = ridge_unit(&x, &y, None)?;
            let b = DVector::from_column_slice(&r.weights);
            Ok(UnitFit {
                fitted_pre: (&x * &b).iter().map(|v| v + r.intercept).collect(),
                point: (&post * &b).iter().map(|v| v + r.intercept).collect(),
                weights: r.weights,
                intercept: Some(r.intercept),
                interval: None,
                draws: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BaselineEstimate { method: Method::Sr, units })
}
