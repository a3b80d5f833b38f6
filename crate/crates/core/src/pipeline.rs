//! Fits any registered method on a panel and returns its imputations on the original scale.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_bsc, fit_bvr, fit_ols, fit_ridge, fit_sc, BaselineEstimate, Method};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{impute_counterfactuals, SvrHyperPriors, SvrModel, SvrParams};
use crate::panel::{preprocess, rescale_distances, PanelDataset, ScalingRecord};
use crate::sampler::{derive_seed, nuts_fit, summarize, ChainDraws, FitConfig, SamplerSummary};
use crate::stats::median_and_95;

/// Options shared by every method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub sampler: FitConfig,
    pub priors: SvrHyperPriors,
    /// Remove the cross-sectional control trend before the Bayesian fits.
    pub remove_trend: bool,
    /// Miscoverage of OLS prediction intervals.
    pub alpha: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { sampler: FitConfig::default(), priors: SvrHyperPriors::default(), remove_trend: true, alpha: 0.05 }
    }
}

/// Posterior draws of an SVR fit.
#[derive(Clone, Debug)]
pub struct SvrFit {
    pub chains: Vec<ChainDraws>,
    /// Constrained draws, chain by chain.
    pub draws: Vec<SvrParams>,
    pub summary: SamplerSummary,
}

/// Runs NUTS on the SVR posterior of an already standardized panel.
pub fn fit_svr(data: &PanelDataset, positions: &[f64], priors: &SvrHyperPriors, config: &FitConfig) -> Result<SvrFit> {
    let model = SvrModel::new(data, positions, priors.clone())?;
    let chains = nuts_fit(&model, config)?;
    let names = SvrParams::column_names(data.n_treated, data.n_control);
    let mut draws = Vec::with_capacity(chains.iter().map(ChainDraws::n_draws).sum());
    let mut per_chain = Vec::with_capacity(chains.len());
    for chain in &chains {
        let mut rows = Vec::with_capacity(chain.n_draws());
        for k in 0..chain.n_draws() {
            let p = model.constrain_slice(chain.draw(k))?;
            rows.push(p.flatten());
            draws.push(p);
        }
        per_chain.push(rows);
    }
    let divergences = chains.iter().map(ChainDraws::n_divergent).sum();
    let summary = summarize(&names, &per_chain, divergences);
    Ok(SvrFit { chains, draws, summary })
}

/// Counterfactual imputations for the treated units.
#[derive(Clone, Debug)]
pub struct Imputation {
    pub method: Method,
    /// `N1 × (T − t0)` point imputations (posterior-predictive medians for Bayesian methods).
    pub point: DenseMatrix<f64>,
    /// 95% bounds, same shape as `point`.
    pub interval: Option<(DenseMatrix<f64>, DenseMatrix<f64>)>,
    /// Posterior-predictive draws, each `N1 × (T − t0)`; empty for point estimators.
    pub draws: Vec<DenseMatrix<f64>>,
    /// Pre-period fitted means, each `N1 × t0`: one per draw, or a single one for point estimators.
    pub fitted_pre: Vec<DenseMatrix<f64>>,
    /// `N1 × N0` control weights (posterior means, on the scale the method was fitted on).
    pub weights: DenseMatrix<f64>,
    pub intercepts: Option<Vec<f64>>,
    pub summary: Option<SamplerSummary>,
    /// Flattened constrained parameter draws with column names, for archives.
    pub parameter_draws: Option<(Vec<String>, Vec<Vec<f64>>)>,
}

fn check_scaling(data: &PanelDataset, scaling: &ScalingRecord) -> Result<()> {
    if scaling.mean.len() != data.n_units() || scaling.sd.len() != data.n_units() {
        return Err(Error::Dimension("scaling record does not match the panel".into()));
    }
    Ok(())
}

fn original(
    m: &DenseMatrix<f64>,
    scaling: &ScalingRecord,
    time_offset: usize,
) -> Result<DenseMatrix<f64>> {
    let mut out = m.clone();
    for i in 0..m.rows() {
        for h in 0..m.cols() {
            out[(i, h)] = scaling.to_original_scale(m[(i, h)], i, time_offset + h)?;
        }
    }
    Ok(out)
}

/// Point and 95% bounds per cell over a set of draws.
pub fn summarize_draws(draws: &[DenseMatrix<f64>]) -> (DenseMatrix<f64>, DenseMatrix<f64>, DenseMatrix<f64>) {
    let (r, c) = (draws[0].rows(), draws[0].cols());
    let mut med = DenseMatrix::zeros(r, c);
    let mut lo = DenseMatrix::zeros(r, c);
    let mut hi = DenseMatrix::zeros(r, c);
    let mut cell = Vec::with_capacity(draws.len());
    for i in 0..r {
        for h in 0..c {
            cell.clear();
            cell.extend(draws.iter().map(|d| d[(i, h)]));
            let (m, l, u) = median_and_95(&cell);
            med[(i, h)] = m;
            lo[(i, h)] = l;
            hi[(i, h)] = u;
        }
    }
    (med, lo, hi)
}

fn from_point_estimate(est: BaselineEstimate, data: &PanelDataset) -> Imputation {
    let n1 = data.n_treated;
    let point = DenseMatrix::from_fn(n1, data.n_post(), |i, h| est.units[i].point[h]);
    let interval = est.units[0].interval.as_ref().map(|_| {
        let lo = DenseMatrix::from_fn(n1, data.n_post(), |i, h| est.units[i].interval.as_ref().unwrap().0[h]);
        let hi = DenseMatrix::from_fn(n1, data.n_post(), |i, h| est.units[i].interval.as_ref().unwrap().1[h]);
        (lo, hi)
    });
    let fitted = DenseMatrix::from_fn(n1, data.t0, |i, t| est.units[i].fitted_pre[t]);
    let weights = DenseMatrix::from_fn(n1, data.n_control, |i, c| est.units[i].weights[c]);
    let intercepts = est.units.iter().map(|u| u.intercept).collect::<Option<Vec<f64>>>();
    Imputation {
        method: est.method,
        point,
        interval,
        draws: Vec::new(),
        fitted_pre: vec![fitted],
        weights,
        intercepts,
        summary: None,
        parameter_draws: None,
    }
}

fn from_unit_draws(est: BaselineEstimate, data: &PanelDataset, scaling: &ScalingRecord) -> Result<Imputation> {
    let n1 = data.n_treated;
    let (t0, horizon) = (data.t0, data.n_post());
    let unit_draws: Vec<_> = est
        .units
        .iter()
        .map(|u| u.draws.as_ref().ok_or_else(|| Error::Config("Bayesian estimate without draws".into())))
        .collect::<Result<_>>()?;
    let n_draws = unit_draws[0].predictive.rows();
    let mut draws = Vec::with_capacity(n_draws);
    let mut fitted = Vec::with_capacity(n_draws);
    for k in 0..n_draws {
        let d = DenseMatrix::from_fn(n1, horizon, |i, h| unit_draws[i].predictive[(k, h)]);
        draws.push(original(&d, scaling, t0)?);
        let f = DenseMatrix::from_fn(n1, t0, |i, t| unit_draws[i].fitted[(k, t)]);
        fitted.push(original(&f, scaling, 0)?);
    }
    let (point, lo, hi) = summarize_draws(&draws);
    let mut params = Vec::new();
    let mut names = Vec::new();
    let mut divergences = 0;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_draws];
    for u in &unit_draws {
        divergences += u.summary.divergences;
        params.extend(u.summary.params.iter().cloned());
        names.extend(u.summary.params.iter().map(|p| p.name.clone()));
        for (k, row) in columns.iter_mut().enumerate() {
            if let Some(b0) = &u.intercept {
                row.push(b0[k]);
            }
            row.extend_from_slice(u.weights.row(k));
            row.push(u.sigma[k]);
        }
    }
    let first = &unit_draws[0].summary;
    let summary = SamplerSummary { chains: first.chains, draws_per_chain: first.draws_per_chain, divergences, params };
    let weights = DenseMatrix::from_fn(n1, data.n_control, |i, c| est.units[i].weights[c]);
    let intercepts = est.units.iter().map(|u| u.intercept).collect::<Option<Vec<f64>>>();
    Ok(Imputation {
        method: est.method,
        point,
        interval: Some((lo, hi)),
        draws,
        fitted_pre: fitted,
        weights,
        intercepts,
        summary: Some(summary),
        parameter_draws: Some((names, columns)),
    })
}

/// Fits `method` on the raw panel. Bayesian methods run on the standardized (and, if requested,
/// de-trended) panel and are mapped back per draw; SC, SR and OLS use the raw outcomes.
pub fn fit_method(method: Method, data: &PanelDataset, options: &FitOptions) -> Result<Imputation> {
    match method {
        Method::Sc => Ok(from_point_estimate(fit_sc(data)?, data)),
        Method::Sr => Ok(from_point_estimate(fit_ridge(data)?, data)),
        Method::Ols => Ok(from_point_estimate(fit_ols(data, options.alpha)?, data)),
        Method::Bvr | Method::Bsc => {
            let (std, scaling) = preprocess(data, options.remove_trend)?;
            check_scaling(data, &scaling)?;
            let est = if method == Method::Bvr { fit_bvr(&std, &options.sampler)? } else { fit_bsc(&std, &options.sampler)? };
            from_unit_draws(est, data, &scaling)
        }
        Method::Svr => {
            let (std, scaling) = preprocess(data, options.remove_trend)?;
            check_scaling(data, &scaling)?;
            let positions = rescale_distances(&data.treated_distances)?;
            let fit = fit_svr(&std, &positions, &options.priors, &options.sampler)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(options.sampler.seed, u64::MAX));
            let model = SvrModel::new(&std, &positions, options.priors.clone())?;
            let std_draws = impute_counterfactuals(&fit.draws, &std, model.distances(), &mut rng)?;
            let draws = std_draws.iter().map(|d| original(d, &scaling, data.t0)).collect::<Result<Vec<_>>>()?;
            let fitted =
                fit.draws.iter().map(|p| original(&model.fitted_pre(p), &scaling, 0)).collect::<Result<Vec<_>>>()?;
            let (point, lo, hi) = summarize_draws(&draws);
            let n = fit.draws.len() as f64;
            let (n1, n0) = (data.n_treated, data.n_control);
            let weights = DenseMatrix::from_fn(n1, n0, |i, c| fit.draws.iter().map(|p| p.weights[(i, c)]).sum::<f64>() / n);
            let intercepts = (0..n1).map(|i| fit.draws.iter().map(|p| p.beta0[i]).sum::<f64>() / n).collect();
            let names = SvrParams::column_names(n1, n0);
            let rows = fit.draws.iter().map(SvrParams::flatten).collect();
            Ok(Imputation {
                method,
                point,
                interval: Some((lo, hi)),
                draws,
                fitted_pre: fitted,
                weights,
                intercepts: Some(intercepts),
                summary: Some(fit.summary),
                parameter_draws: Some((names, rows)),
            })
        }
    }
}
