//! Comparison estimators, each fitted separately per treated unit on its pre-period.
//!
//! * [`fit_sc`]: synthetic control, simplex-constrained least squares without intercept.
//! * [`fit_ols`]: vertical regression by OLS with intercept and t prediction intervals.
//! * [`fit_ridge`]: separate ridge regressions, penalty chosen by GCV.
//! * [`fit_bvr`]: Bayesian vertical regression with standard normal coefficient priors.
//! * [`fit_bsc`]: Bayesian synthetic control with a flat Dirichlet prior on the weights.

mod bayes;
mod ols;
mod ridge;
mod sc;

pub use bayes::{fit_bsc, fit_bvr, simplex_from_unconstrained, BscTarget, BvrTarget, UnitDraws};
pub use ols::{fit_ols, ols_unit};
pub use ridge::{fit_ridge, ridge_gcv_grid, ridge_unit, RidgeUnit};
pub use sc::{fit_sc, simplex_kkt_violation, simplex_least_squares};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// Estimation method tags, as used on the command line and in result files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Svr,
    Sc,
    Sr,
    Ols,
    Bvr,
    Bsc,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Svr, Method::Sc, Method::Sr, Method::Ols, Method::Bvr, Method::Bsc];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Svr => "svr",
            Method::Sc => "sc",
            Method::Sr => "sr",
            Method::Ols => "ols",
            Method::Bvr => "bvr",
            Method::Bsc => "bsc",
        }
    }

    /// Methods that produce posterior draws (and are fitted on standardized data).
    pub fn is_bayesian(self) -> bool {
        matches!(self, Method::Svr | Method::Bvr | Method::Bsc)
    }

    /// Methods that report intervals.
    pub fn has_intervals(self) -> bool {
        !matches!(self, Method::Sc | Method::Sr)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method '{s}' (expected svr, sc, sr, ols, bvr or bsc)")))
    }
}

/// One treated unit's fit.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitFit {
    /// Control weights (posterior means for Bayesian methods).
    pub weights: Vec<f64>,
    pub intercept: Option<f64>,
    /// Pre-period fitted values.
    pub fitted_pre: Vec<f64>,
    /// Post-period point imputations (posterior-predictive medians for Bayesian methods).
    pub point: Vec<f64>,
    /// 95% interval bounds per post period.
    pub interval: Option<(Vec<f64>, Vec<f64>)>,
    pub draws: Option<UnitDraws>,
}

/// Per-unit fits of one baseline, in treated-unit order.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineEstimate {
    pub method: Method,
    pub units: Vec<UnitFit>,
}

/// Pre-period design for treated unit `i`: `t0 × N0` control matrix and the treated series.
pub(crate) fn pre_design(data: &PanelDataset, i: usize) -> (DMatrix<f64>, DVector<f64>) {
    let t0 = data.t0;
    let x = DMatrix::from_fn(t0, data.n_control, |t, c| data.control(c)[t]);
    let y = DVector::from_column_slice(&data.treated(i)[..t0]);
    (x, y)
}

/// Post-period control matrix, `(T − t0) × N0`.
pub(crate) fn post_controls(data: &PanelDataset) -> DMatrix<f64> {
    let t0 = data.t0;
    DMatrix::from_fn(data.n_post(), data.n_control, |h, c| data.control(c)[t0 + h])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("lasso".parse::<Method>().is_err());
        assert!(!Method::Sc.has_intervals() && Method::Ols.has_intervals());
    }
}
