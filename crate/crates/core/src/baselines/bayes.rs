use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{BaselineEstimate, Method, UnitFit};
use crate::dist::{half_normal_logpdf, logistic, std_normal_logpdf};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::panel::PanelDataset;
use crate::sampler::{chain_rng, derive_seed, nuts_fit, summarize, ChainDraws, FitConfig, LogDensity, SamplerSummary};
use crate::stats::{mean, median_and_95};

const SIGMA_SCALE: f64 = 0.5;
const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Stream id of the posterior-predictive noise, kept clear of the chain streams.
const PREDICTIVE_STREAM: usize = 1 << 20;

/// Posterior draws of one unit's Bayesian fit, pooled over chains in chain order.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitDraws {
    /// `draws × (T − t0)` posterior-predictive imputations.
    pub predictive: DenseMatrix<f64>,
    /// `draws × t0` pre-period fitted means.
    pub fitted: DenseMatrix<f64>,
    /// `draws × N0` control weights.
    pub weights: DenseMatrix<f64>,
    pub intercept: Option<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub summary: SamplerSummary,
}

struct Design {
    t0: usize,
    n0: usize,
    /// `t0 × N0` row-major
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Design {
    fn new(data: &PanelDataset, i: usize) -> Self {
        let (t0, n0) = (data.t0, data.n_control);
        let mut x = Vec::with_capacity(t0 * n0);
        for t in 0..t0 {
            x.extend((0..n0).map(|c| data.control(c)[t]));
        }
        Self { t0, n0, x, y: data.treated(i)[..t0].to_vec() }
    }

    fn row(&self, t: usize) -> &[f64] {
        &self.x[t * self.n0..(t + 1) * self.n0]
    }

    /// Gaussian log likelihood with its gradient with respect to the mean offsets: returns
    /// `(ll, residuals / σ², Σ r²)`.
    fn gaussian(&self, intercept: f64, w: &[f64], sigma: f64, scaled_resid: &mut [f64]) -> (f64, f64) {
        let s2 = sigma * sigma;
        let mut rss = 0.0;
        for t in 0..self.t0 {
            let mu = intercept + self.row(t).iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            let r = self.y[t] - mu;
            rss += r * r;
            scaled_resid[t] = r / s2;
        }
        let ll = -0.5 * self.t0 as f64 * (LN_2PI + 2.0 * sigma.ln()) - 0.5 * rss / s2;
        (ll, rss)
    }
}

/// Log posterior of Bayesian vertical regression in `(β₀, β, log σ)`:
/// `N(0, 1)` priors on intercept and weights, half-normal(0.5) on `σ`.
pub struct BvrTarget {
    design: Design,
}

impl BvrTarget {
    pub fn new(data: &PanelDataset, unit: usize) -> Result<Self> {
        if unit >= data.n_treated {
            return Err(Error::UnknownIndex { kind: "treated unit", index: unit });
        }
        Ok(Self { design: Design::new(data, unit) })
    }
}

impl LogDensity for BvrTarget {
    fn dim(&self) -> usize {
        self.design.n0 + 2
    }

    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let d = &self.design;
        let n0 = d.n0;
        let b0 = x[0];
        let w = &x[1..=n0];
        let ls = x[n0 + 1];
        let sigma = ls.exp();
        let mut sr = vec![0.0; d.t0];
        let (ll, rss) = d.gaussian(b0, w, sigma, &mut sr);
        let mut lp = ll + std_normal_logpdf(b0) + half_normal_logpdf(sigma, SIGMA_SCALE) + ls;
        grad[0] = sr.iter().sum::<f64>() - b0;
        for c in 0..n0 {
            lp += std_normal_logpdf(w[c]);
            grad[1 + c] = (0..d.t0).map(|t| sr[t] * d.row(t)[c]).sum::<f64>() - w[c];
        }
        grad[n0 + 1] = -(d.t0 as f64) + rss / (sigma * sigma) - (sigma / SIGMA_SCALE).powi(2) + 1.0;
        if !lp.is_finite() {
            return Err(Error::NonFinite(format!("BVR log posterior {lp}")));
        }
        Ok(lp)
    }
}

/// Log posterior of Bayesian synthetic control in `(v, log σ)`: weights on the simplex through
/// stick-breaking of `v ∈ R^{N0−1}` under a flat Dirichlet prior, no intercept, half-normal(0.5)
/// on `σ`.
pub struct BscTarget {
    design: Design,
}

/// Stick-breaking map: returns weights, log-Jacobian and the intermediate `(z_k, log r_k)`.
fn stick_breaking(v: &[f64]) -> (Vec<f64>, f64, Vec<f64>, Vec<f64>) {
    let k = v.len() + 1;
    let mut w = Vec::with_capacity(k);
    let mut zs = Vec::with_capacity(k - 1);
    let mut log_r = Vec::with_capacity(k);
    let mut lr = 0.0;
    let mut log_jac = 0.0;
    for (j, &vj) in v.iter().enumerate() {
        let u = vj - ((k - j - 1) as f64).ln();
        let z = logistic(u);
        // log z = −softplus(−u), log(1 − z) = −softplus(u)
        let log_z = -softplus(-u);
        let log_1mz = -softplus(u);
        log_jac += log_z + log_1mz + lr;
        log_r.push(lr);
        w.push((lr + log_z).exp());
        zs.push(z);
        lr += log_1mz;
    }
    log_r.push(lr);
    w.push(lr.exp());
    (w, log_jac, zs, log_r)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Simplex weights for an unconstrained stick-breaking vector.
pub fn simplex_from_unconstrained(v: &[f64]) -> Vec<f64> {
    stick_breaking(v).0
}

impl BscTarget {
    pub fn new(data: &PanelDataset, unit: usize) -> Result<Self> {
        if unit >= data.n_treated {
            return Err(Error::UnknownIndex { kind: "treated unit", index: unit });
        }
        Ok(Self { design: Design::new(data, unit) })
    }
}

impl LogDensity for BscTarget {
    fn dim(&self) -> usize {
        self.design.n0
    }

    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let d = &self.design;
        let n0 = d.n0;
        let v = &x[..n0 - 1];
        let ls = x[n0 - 1];
        let sigma = ls.exp();
        let (w, log_jac, zs, log_r) = stick_breaking(v);
        let mut sr = vec![0.0; d.t0];
        let (ll, rss) = d.gaussian(0.0, &w, sigma, &mut sr);
        let lp = ll + log_jac + half_normal_logpdf(sigma, SIGMA_SCALE) + ls;

        let gw: Vec<f64> = (0..n0).map(|c| (0..d.t0).map(|t| sr[t] * d.row(t)[c]).sum()).collect();
        // reverse pass through w_k = r_k z_k, r_{k+1} = r_k (1 − z_k), w_last = r_last
        let mut r_bar = gw[n0 - 1];
        for j in (0..n0 - 1).rev() {
            let z = zs[j];
            let r = log_r[j].exp();
            let z_bar = gw[j] * r - r_bar * r;
            // ∂/∂u of log z + log(1 − z) is 1 − 2z
            grad[j] = z_bar * z * (1.0 - z) + (1.0 - 2.0 * z);
            // the log r_j Jacobian term contributes 1/r_j
            r_bar = gw[j] * z + r_bar * (1.0 - z) + if j > 0 { 1.0 / r } else { 0.0 };
        }
        grad[n0 - 1] = -(d.t0 as f64) + rss / (sigma * sigma) - (sigma / SIGMA_SCALE).powi(2) + 1.0;
        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("BSC log posterior {lp}")));
        }
        Ok(lp)
    }
}

struct Decoded {
    intercept: f64,
    weights: Vec<f64>,
    sigma: f64,
}

fn collect_unit<L: LogDensity>(
    target: &L,
    data: &PanelDataset,
    unit: usize,
    config: &FitConfig,
    with_intercept: bool,
    decode: impl Fn(&[f64]) -> Decoded,
) -> Result<UnitFit> {
    let (t0, n0, horizon) = (data.t0, data.n_control, data.n_post());
    let cfg = config.clone().with_seed(derive_seed(config.seed, unit as u64));
    let chains: Vec<ChainDraws> = nuts_fit(target, &cfg)?;
    let mut rng = chain_rng(cfg.seed, PREDICTIVE_STREAM);
    let total: usize = chains.iter().map(ChainDraws::n_draws).sum();

    let mut predictive = DenseMatrix::zeros(total, horizon);
    let mut fitted = DenseMatrix::zeros(total, t0);
    let mut weights = DenseMatrix::zeros(total, n0);
    let mut intercepts = Vec::with_capacity(total);
    let mut sigmas = Vec::with_capacity(total);
    let mut names: Vec<String> = Vec::new();
    if with_intercept {
        names.push(format!("unit{}.intercept", unit + 1));
    }
    names.extend((0..n0).map(|c| format!("unit{}.w[{}]", unit + 1, c + 1)));
    names.push(format!("unit{}.sigma", unit + 1));
    let mut per_chain: Vec<Vec<Vec<f64>>> = Vec::with_capacity(chains.len());

    let mut row = 0;
    for chain in &chains {
        let mut rows = Vec::with_capacity(chain.n_draws());
        for k in 0..chain.n_draws() {
            let d = decode(chain.draw(k));
            for t in 0..t0 {
                fitted[(row, t)] = d.intercept + (0..n0).map(|c| d.weights[c] * data.control(c)[t]).sum::<f64>();
            }
            for h in 0..horizon {
                let mu = d.intercept + (0..n0).map(|c| d.weights[c] * data.control(c)[t0 + h]).sum::<f64>();
                let e: f64 = rng.sample(StandardNormal);
                predictive[(row, h)] = mu + d.sigma * e;
            }
            weights.row_mut(row).copy_from_slice(&d.weights);
            let mut constrained = Vec::with_capacity(n0 + 2);
            if with_intercept {
                constrained.push(d.intercept);
            }
            constrained.extend_from_slice(&d.weights);
            constrained.push(d.sigma);
            rows.push(constrained);
            intercepts.push(d.intercept);
            sigmas.push(d.sigma);
            row += 1;
        }
        per_chain.push(rows);
    }
    let divergences = chains.iter().map(ChainDraws::n_divergent).sum();
    let summary = summarize(&names, &per_chain, divergences);

    let mut point = Vec::with_capacity(horizon);
    let mut lo = Vec::with_capacity(horizon);
    let mut hi = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let (m, l, u) = median_and_95(&predictive.column(h));
        point.push(m);
        lo.push(l);
        hi.push(u);
    }
    let w_mean: Vec<f64> = (0..n0).map(|c| mean(&weights.column(c))).collect();
    let fitted_mean: Vec<f64> = (0..t0).map(|t| mean(&fitted.column(t))).collect();
    Ok(UnitFit {
        weights: w_mean,
        intercept: with_intercept.then(|| mean(&intercepts)),
        fitted_pre: fitted_mean,
        point,
        interval: Some((lo, hi)),
        draws: Some(UnitDraws {
            predictive,
            fitted,
            weights,
            intercept: with_intercept.then_some(intercepts),
            sigma: sigmas,
            summary,
        }),
    })
}

/// Bayesian vertical regression, fitted independently per treated unit. Expects standardized
/// data; results are on the same scale.
pub fn fit_bvr(data: &PanelDataset, config: &FitConfig) -> Result<BaselineEstimate> {
    config.validate()?;
    let n0 = data.n_control;
    let units = (0..data.n_treated)
        .into_par_iter()
        .map(|i| {
            let target = BvrTarget::new(data, i)?;
            collect_unit(&target, data, i, config, true, |x| Decoded {
                intercept: x[0],
                weights: x[1..=n0].to_vec(),
                sigma: x[n0 + 1].exp(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BaselineEstimate { method: Method::Bvr, units })
}

/// Bayesian synthetic control (simplex weights, no intercept), fitted independently per treated
/// unit on standardized data.
pub fn fit_bsc(data: &PanelDataset, config: &FitConfig) -> Result<BaselineEstimate> {
    config.validate()?;
    let n0 = data.n_control;
    let units = (0..data.n_treated)
        .into_par_iter()
        .map(|i| {
            let target = BscTarget::new(data, i)?;
            collect_unit(&target, data, i, config, false, |x| Decoded {
                intercept: 0.0,
                weights: simplex_from_unconstrained(&x[..n0 - 1]),
                sigma: x[n0 - 1].exp(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BaselineEstimate { method: Method::Bsc, units })
}
