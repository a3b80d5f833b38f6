//! The spatial vertical regression model.
//!
//! Treated outcomes in the pre-period are regressed on contemporaneous control outcomes,
//! `y_it = β₀⁽ⁱ⁾ + Σ_c β_c⁽ⁱ⁾ y_ct + ε_it`, with residual vectors `ε_t ~ MVN(0, Σ_e)` independent
//! over time. Each control's coefficient vector across treated areas has a Gaussian-process
//! prior, `β_c ~ MVN(b_c 1, σ²_β K(D, ρ²_β))`, so areas at similar distances share weights.
//!
//! Sampling happens in an unconstrained space where the GP is non-centered
//! (`β_c = b_c 1 + σ_β L_β z_c`, `z_c ~ N(0, I)`) and positive/unit-interval parameters are
//! log/logit transformed. [`SvrModel`] evaluates that log posterior together with its exact
//! gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{
    beta_logpdf, gamma_logpdf, half_normal_logpdf, laplace_logpdf, logistic, normal_logpdf,
    std_normal_logpdf,
};
use crate::error::{Error, Result};
use crate::gp::{error_cov_unchecked, mvn_sample, sq_exp_kernel_unchecked, DistanceMatrix};
use crate::linalg::{chol_with_jitter, dot, CholFactor, DenseMatrix, SymMatrix};
use crate::panel::PanelDataset;
use crate::sampler::LogDensity;

/// Diagonal nugget added to the unit-variance coefficient kernel before factorizing.
pub const KERNEL_NUGGET: f64 = 1e-8;
const MAX_JITTER: f64 = 1e-4;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Hyperparameters of the SVR priors, for outcomes standardized to unit pre-period variance
/// and distances rescaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrHyperPriors {
    /// Laplace scale for the GP means `b_c`.
    pub lambda_b: f64,
    pub mu_0: f64,
    pub sigma2_0: f64,
    /// Half-normal scale for `σ_β`.
    pub eta_beta: f64,
    pub a_rho_beta: f64,
    pub eta_rho_beta: f64,
    /// Half-normal scale for `σ_e`.
    pub eta_e: f64,
    pub a_rho_e: f64,
    pub eta_rho_e: f64,
    pub a_w: f64,
    pub b_w: f64,
}

impl Default for SvrHyperPriors {
    fn default() -> Self {
        Self {
            lambda_b: 0.1,
            mu_0: 0.0,
            sigma2_0: 1.0,
            eta_beta: 0.35,
            a_rho_beta: 0.5,
            eta_rho_beta: 2.0,
            eta_e: 0.5,
            a_rho_e: 0.5,
            eta_rho_e: 1.5,
            a_w: 2.0,
            b_w: 2.0,
        }
    }
}

impl SvrHyperPriors {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_b", self.lambda_b),
            ("sigma2_0", self.sigma2_0),
            ("eta_beta", self.eta_beta),
            ("a_rho_beta", self.a_rho_beta),
            ("eta_rho_beta", self.eta_rho_beta),
            ("eta_e", self.eta_e),
            ("a_rho_e", self.a_rho_e),
            ("eta_rho_e", self.eta_rho_e),
            ("a_w", self.a_w),
            ("b_w", self.b_w),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("hyperparameter {name} must be positive, got {v}")));
            }
        }
        if !self.mu_0.is_finite() {
            return Err(Error::Config("hyperparameter mu_0 must be finite".into()));
        }
        Ok(())
    }
}

/// Constrained SVR parameters. `weights` is `N1 × N0`; column `c` is `β_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct SvrParams {
    pub beta0: Vec<f64>,
    pub b: Vec<f64>,
    pub weights: DenseMatrix<f64>,
    pub sigma_beta: f64,
    pub rho2_beta: f64,
    pub sigma_e: f64,
    pub rho2_e: f64,
    pub w: f64,
}

impl SvrParams {
    fn check(&self, n1: usize, n0: usize) -> Result<()> {
        if self.beta0.len() != n1
            || self.b.len() != n0
            || self.weights.rows() != n1
            || self.weights.cols() != n0
        {
            return Err(Error::Dimension(format!(
                "parameters do not match {n1} treated and {n0} control units"
            )));
        }
        if !(self.sigma_beta > 0.0 && self.rho2_beta > 0.0 && self.sigma_e > 0.0 && self.rho2_e > 0.0) {
            return Err(Error::Domain("scale and lengthscale parameters must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::Domain(format!("w = {} outside [0, 1]", self.w)));
        }
        Ok(())
    }

    /// Names of the flattened constrained vector written to draw archives.
    pub fn column_names(n1: usize, n0: usize) -> Vec<String> {
        let mut names = Vec::with_capacity(n1 + n0 + n1 * n0 + 5);
        names.extend((0..n1).map(|i| format!("beta0[{}]", i + 1)));
        names.extend((0..n0).map(|c| format!("b[{}]", c + 1)));
        for i in 0..n1 {
            names.extend((0..n0).map(|c| format!("beta[{},{}]", i + 1, c + 1)));
        }
        names.extend(["sigma_beta", "rho2_beta", "sigma_e", "rho2_e", "w"].map(String::from));
        names
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.beta0.len() + self.b.len() + self.weights.as_slice().len() + 5);
        v.extend_from_slice(&self.beta0);
        v.extend_from_slice(&self.b);
        v.extend_from_slice(self.weights.as_slice());
        v.extend([self.sigma_beta, self.rho2_beta, self.sigma_e, self.rho2_e, self.w]);
        v
    }
}

/// Unconstrained coordinates. `z` is `N1 × N0`; column `c` holds the whitened innovations of `β_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnconstrainedParams {
    pub beta0: Vec<f64>,
    pub b: Vec<f64>,
    pub z: DenseMatrix<f64>,
    pub log_sigma_beta: f64,
    pub log_rho2_beta: f64,
    pub log_sigma_e: f64,
    pub log_rho2_e: f64,
    pub logit_w: f64,
}

/// Index layout of the flat unconstrained vector:
/// `[β₀ (N1) | b (N0) | z row-major (N1·N0) | log σ_β, log ρ²_β, log σ_e, log ρ²_e, logit w]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n_treated: usize,
    pub n_control: usize,
}

impl Layout {
    #[inline]
    pub fn dim(&self) -> usize {
        self.n_treated + self.n_control + self.n_treated * self.n_control + 5
    }
    #[inline]
    fn b_off(&self) -> usize {
        self.n_treated
    }
    #[inline]
    fn z_off(&self) -> usize {
        self.n_treated + self.n_control
    }
    #[inline]
    fn tail_off(&self) -> usize {
        self.z_off() + self.n_treated * self.n_control
    }
}

impl UnconstrainedParams {
    pub fn from_slice(layout: Layout, x: &[f64]) -> Result<Self> {
        if x.len() != layout.dim() {
            return Err(Error::Dimension(format!("expected {} coordinates, got {}", layout.dim(), x.len())));
        }
        let (n1, n0) = (layout.n_treated, layout.n_control);
        let t = layout.tail_off();
        Ok(Self {
            beta0: x[..n1].to_vec(),
            b: x[layout.b_off()..layout.z_off()].to_vec(),
            z: DenseMatrix::from_row_major(n1, n0, x[layout.z_off()..t].to_vec())?,
            log_sigma_beta: x[t],
            log_rho2_beta: x[t + 1],
            log_sigma_e: x[t + 2],
            log_rho2_e: x[t + 3],
            logit_w: x[t + 4],
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend_from_slice(&self.beta0);
        v.extend_from_slice(&self.b);
        v.extend_from_slice(self.z.as_slice());
        v.extend([self.log_sigma_beta, self.log_rho2_beta, self.log_sigma_e, self.log_rho2_e, self.logit_w]);
        v
    }
}

fn unit_kernel_factor(d: &DistanceMatrix<f64>, rho2: f64) -> Result<(SymMatrix<f64>, CholFactor<f64>)> {
    let k = sq_exp_kernel_unchecked(d, 1.0, rho2).add_diagonal(KERNEL_NUGGET);
    let l = chol_with_jitter(&k, MAX_JITTER)?;
    Ok((k, l))
}

fn error_corr_factor(d: &DistanceMatrix<f64>, rho2_e: f64, w: f64) -> Result<(SymMatrix<f64>, CholFactor<f64>)> {
    let m = error_cov_unchecked(d, 1.0, rho2_e, w);
    let l = chol_with_jitter(&m, MAX_JITTER)?;
    Ok((m, l))
}

/// Residual covariance `Σ_e` of a parameter draw.
pub fn residual_covariance(p: &SvrParams, d: &DistanceMatrix<f64>) -> SymMatrix<f64> {
    error_cov_unchecked(d, p.sigma_e * p.sigma_e, p.rho2_e, p.w)
}

/// SVR log posterior over one standardized panel.
#[derive(Clone, Debug)]
pub struct SvrModel {
    layout: Layout,
    t0: usize,
    priors: SvrHyperPriors,
    distances: DistanceMatrix<f64>,
    /// squared distances over 2, reused by the lengthscale derivatives
    half_d2: DenseMatrix<f64>,
    /// `N1 × t0` treated pre-period outcomes
    y_treated: DenseMatrix<f64>,
    /// `N0 × t0` control pre-period outcomes
    y_control: DenseMatrix<f64>,
}

impl SvrModel {
    /// `positions` are the treated-area distances rescaled to `[0, 1]`.
    pub fn new(data: &PanelDataset, positions: &[f64], priors: SvrHyperPriors) -> Result<Self> {
        priors.validate()?;
        let n1 = data.n_treated;
        let n0 = data.n_control;
        if positions.len() != n1 {
            return Err(Error::Dimension(format!("{} positions for {n1} treated units", positions.len())));
        }
        let distances = DistanceMatrix::from_positions(positions)?;
        let half_d2 = DenseMatrix::from_fn(n1, n1, |i, j| 0.5 * distances[(i, j)] * distances[(i, j)]);
        let t0 = data.t0;
        let y_treated = DenseMatrix::from_fn(n1, t0, |i, t| data.treated(i)[t]);
        let y_control = DenseMatrix::from_fn(n0, t0, |c, t| data.control(c)[t]);
        Ok(Self {
            layout: Layout { n_treated: n1, n_control: n0 },
            t0,
            priors,
            distances,
            half_d2,
            y_treated,
            y_control,
        })
    }

    #[inline]
    pub fn layout(&self) -> Layout {
        self.layout
    }

    #[inline]
    pub fn distances(&self) -> &DistanceMatrix<f64> {
        &self.distances
    }

    #[inline]
    pub fn priors(&self) -> &SvrHyperPriors {
        &self.priors
    }

    /// Maps unconstrained coordinates to model parameters.
    pub fn constrain(&self, u: &UnconstrainedParams) -> Result<SvrParams> {
        let (n1, n0) = (self.layout.n_treated, self.layout.n_control);
        let sigma_beta = u.log_sigma_beta.exp();
        let rho2_beta = u.log_rho2_beta.exp();
        let (_, l) = unit_kernel_factor(&self.distances, rho2_beta)?;
        let mut weights = DenseMatrix::zeros(n1, n0);
        for c in 0..n0 {
            let zc = u.z.column(c);
            let lz = l.mul_vec(&zc);
            for i in 0..n1 {
                weights[(i, c)] = u.b[c] + sigma_beta * lz[i];
            }
        }
        Ok(SvrParams {
            beta0: u.beta0.clone(),
            b: u.b.clone(),
            weights,
            sigma_beta,
            rho2_beta,
            sigma_e: u.log_sigma_e.exp(),
            rho2_e: u.log_rho2_e.exp(),
            w: logistic(u.logit_w),
        })
    }

    pub fn constrain_slice(&self, x: &[f64]) -> Result<SvrParams> {
        self.constrain(&UnconstrainedParams::from_slice(self.layout, x)?)
    }

    /// Inverse of [`Self::constrain`].
    pub fn unconstrain(&self, p: &SvrParams) -> Result<UnconstrainedParams> {
        let (n1, n0) = (self.layout.n_treated, self.layout.n_control);
        p.check(n1, n0)?;
        if !(p.w > 0.0 && p.w < 1.0) {
            return Err(Error::Domain("w must be strictly inside (0, 1) to unconstrain".into()));
        }
        let (_, l) = unit_kernel_factor(&self.distances, p.rho2_beta)?;
        let mut z = DenseMatrix::zeros(n1, n0);
        for c in 0..n0 {
            let mut col: Vec<f64> = (0..n1).map(|i| (p.weights[(i, c)] - p.b[c]) / p.sigma_beta).collect();
            l.solve_lower_in_place(&mut col);
            for i in 0..n1 {
                z[(i, c)] = col[i];
            }
        }
        Ok(UnconstrainedParams {
            beta0: p.beta0.clone(),
            b: p.b.clone(),
            z,
            log_sigma_beta: p.sigma_beta.ln(),
            log_rho2_beta: p.rho2_beta.ln(),
            log_sigma_e: p.sigma_e.ln(),
            log_rho2_e: p.rho2_e.ln(),
            logit_w: (p.w / (1.0 - p.w)).ln(),
        })
    }

    /// Log prior density of constrained parameters (coefficients under their GP prior).
    pub fn log_prior(&self, p: &SvrParams) -> Result<f64> {
        let (n1, n0) = (self.layout.n_treated, self.layout.n_control);
        p.check(n1, n0)?;
        let pr = &self.priors;
        let mut lp = scalar_log_prior(pr, &p.beta0, &p.b, p.sigma_beta, p.rho2_beta, p.sigma_e, p.rho2_e, p.w);
        let (_, l) = unit_kernel_factor(&self.distances, p.rho2_beta)?;
        let log_det = l.log_det() + 2.0 * n1 as f64 * p.sigma_beta.ln();
        for c in 0..n0 {
            let mut r: Vec<f64> = (0..n1).map(|i| (p.weights[(i, c)] - p.b[c]) / p.sigma_beta).collect();
            l.solve_lower_in_place(&mut r);
            let quad = dot(&r, &r);
            lp += -0.5 * (n1 as f64 * LN_2PI + log_det + quad);
        }
        Ok(lp)
    }

    /// Pre-period log likelihood of the treated outcomes given the controls.
    pub fn log_likelihood(&self, p: &SvrParams) -> Result<f64> {
        let (n1, n0) = (self.layout.n_treated, self.layout.n_control);
        p.check(n1, n0)?;
        let (_, lm) = error_corr_factor(&self.distances, p.rho2_e, p.w)?;
        let log_det = lm.log_det() + 2.0 * n1 as f64 * p.sigma_e.ln();
        let mut quad = 0.0;
        let mut r = vec![0.0; n1];
        for t in 0..self.t0 {
            for i in 0..n1 {
                let mu = p.beta0[i]
                    + (0..n0).map(|c| p.weights[(i, c)] * self.y_control[(c, t)]).sum::<f64>();
                r[i] = (self.y_treated[(i, t)] - mu) / p.sigma_e;
            }
            lm.solve_lower_in_place(&mut r);
            quad += dot(&r, &r);
        }
        Ok(-0.5 * (self.t0 as f64 * (n1 as f64 * LN_2PI + log_det) + quad))
    }

    /// Log posterior in unconstrained coordinates (including the log-Jacobian of the
    /// transforms), writing its gradient into `grad`.
    pub fn log_posterior_unconstrained(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let lay = self.layout;
        let (n1, n0, t0) = (lay.n_treated, lay.n_control, self.t0);
        if x.len() != lay.dim() || grad.len() != lay.dim() {
            return Err(Error::Dimension(format!("expected {} coordinates", lay.dim())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("non-finite coordinates".into()));
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let pr = &self.priors;
        let beta0 = &x[..n1];
        let b = &x[lay.b_off()..lay.z_off()];
        let z = &x[lay.z_off()..lay.tail_off()];
        let tail = lay.tail_off();
        let (ls_beta, lr_beta, ls_e, lr_e, lw) = (x[tail], x[tail + 1], x[tail + 2], x[tail + 3], x[tail + 4]);
        let sigma_beta = ls_beta.exp();
        let rho2_beta = lr_beta.exp();
        let sigma_e = ls_e.exp();
        let rho2_e = lr_e.exp();
        let w = logistic(lw);
        if !(w > 0.0 && w < 1.0) || !(sigma_e > 0.0) || !(sigma_beta > 0.0) || !rho2_beta.is_finite() || !rho2_e.is_finite() {
            return Err(Error::NonFinite("transformed parameters left their domain".into()));
        }

        // coefficients: B[i, c] = b_c + σ_β (L z_c)_i
        let (kb, lb) = unit_kernel_factor(&self.distances, rho2_beta)?;
        let lbm = lb.lower();
        let mut weights = vec![0.0; n1 * n0];
        for i in 0..n1 {
            for c in 0..n0 {
                let mut s = 0.0;
                for k in 0..=i {
                    s += lbm[(i, k)] * z[k * n0 + c];
                }
                weights[i * n0 + c] = b[c] + sigma_beta * s;
            }
        }

        // likelihood
        let (em, lm) = error_corr_factor(&self.distances, rho2_e, w)?;
        let sig2 = sigma_e * sigma_e;
        let mut resid = vec![0.0; n1 * t0]; // column-major by time: [t][i]
        for t in 0..t0 {
            for i in 0..n1 {
                let mut mu = beta0[i];
                let wrow = &weights[i * n0..(i + 1) * n0];
                for c in 0..n0 {
                    mu += wrow[c] * self.y_control[(c, t)];
                }
                resid[t * n1 + i] = self.y_treated[(i, t)] - mu;
            }
        }
        // a_t = Σ_e⁻¹ r_t
        let mut a = resid.clone();
        let mut quad = 0.0;
        for t in 0..t0 {
            let at = &mut a[t * n1..(t + 1) * n1];
            lm.solve_in_place(at);
            for v in at.iter_mut() {
                *v /= sig2;
            }
            quad += dot(at, &resid[t * n1..(t + 1) * n1]);
        }
        let log_det = lm.log_det() + 2.0 * n1 as f64 * ls_e;
        let mut lp = -0.5 * (t0 as f64 * (n1 as f64 * LN_2PI + log_det) + quad);

        // ∂/∂β₀ and ∂/∂B
        let mut gw = vec![0.0; n1 * n0];
        for t in 0..t0 {
            for i in 0..n1 {
                let ai = a[t * n1 + i];
                grad[i] += ai;
                for c in 0..n0 {
                    gw[i * n0 + c] += ai * self.y_control[(c, t)];
                }
            }
        }

        // ∂/∂Σ_e = ½ (A Aᵀ − t0 Σ⁻¹); chain to log σ_e, logit w, log ρ²_e
        let m_inv = lm.inverse();
        let mut d_w = 0.0;
        let mut d_lr_e = 0.0;
        for i in 0..n1 {
            for j in 0..n1 {
                let aat: f64 = (0..t0).map(|t| a[t * n1 + i] * a[t * n1 + j]).sum();
                let g = 0.5 * (aat - t0 as f64 * m_inv[(i, j)] / sig2);
                if i != j {
                    let kij = (-self.half_d2[(i, j)] / rho2_e).exp();
                    d_w += g * sig2 * kij;
                    d_lr_e += g * sig2 * em[(i, j)] * self.half_d2[(i, j)] / rho2_e;
                }
                // diagonal of Σ_e is σ²_e regardless of w and ρ²_e
            }
        }
        let d_ls_e = quad - (t0 * n1) as f64;

        // push ∂/∂B to b, z, σ_β and ρ²_β
        for c in 0..n0 {
            grad[lay.b_off() + c] += (0..n1).map(|i| gw[i * n0 + c]).sum::<f64>();
        }
        let mut d_ls_beta = 0.0;
        for k in 0..n1 {
            for c in 0..n0 {
                // (Lᵀ GB)[k, c]
                let mut s = 0.0;
                for i in k..n1 {
                    s += lbm[(i, k)] * gw[i * n0 + c];
                }
                grad[lay.z_off() + k * n0 + c] += sigma_beta * s;
                d_ls_beta += sigma_beta * s * z[k * n0 + c];
            }
        }
        // P = σ_β GB Zᵀ, contracted against ∂L/∂ log ρ²_β
        let d_k = DenseMatrix::from_fn(n1, n1, |i, j| {
            if i == j {
                0.0
            } else {
                (kb[(i, j)]) * self.half_d2[(i, j)] / rho2_beta
            }
        });
        let d_l = lb.differential(&d_k);
        let mut d_lr_beta = 0.0;
        for i in 0..n1 {
            for k in 0..=i {
                let pik: f64 = (0..n0).map(|c| gw[i * n0 + c] * z[k * n0 + c]).sum::<f64>() * sigma_beta;
                d_lr_beta += pik * d_l[(i, k)];
            }
        }

        // priors and log-Jacobians
        lp += scalar_log_prior(pr, beta0, b, sigma_beta, rho2_beta, sigma_e, rho2_e, w);
        lp += ls_beta + lr_beta + ls_e + lr_e + w.ln() + (1.0 - w).ln();
        for i in 0..n1 {
            grad[i] -= (beta0[i] - pr.mu_0) / pr.sigma2_0;
        }
        for c in 0..n0 {
            grad[lay.b_off() + c] -= b[c].signum() / pr.lambda_b;
        }
        for (k, &zk) in z.iter().enumerate() {
            lp += std_normal_logpdf(zk);
            grad[lay.z_off() + k] -= zk;
        }
        grad[tail] = d_ls_beta + 1.0 - sigma_beta * sigma_beta / (pr.eta_beta * pr.eta_beta);
        grad[tail + 1] = d_lr_beta + pr.a_rho_beta - pr.eta_rho_beta * rho2_beta;
        grad[tail + 2] = d_ls_e + 1.0 - sig2 / (pr.eta_e * pr.eta_e);
        grad[tail + 3] = d_lr_e + pr.a_rho_e - pr.eta_rho_e * rho2_e;
        grad[tail + 4] = d_w * w * (1.0 - w) + pr.a_w * (1.0 - w) - pr.b_w * w;

        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("log posterior {lp}")));
        }
        Ok(lp)
    }

    /// Whitened-coordinate form of the prior: standard-normal innovations plus the scalar
    /// priors, minus `log |σ_β L_β|` per control. Equals [`Self::log_prior`] of the
    /// constrained parameters.
    pub fn log_prior_whitened(&self, u: &UnconstrainedParams) -> Result<f64> {
        let (n1, n0) = (self.layout.n_treated, self.layout.n_control);
        let sigma_beta = u.log_sigma_beta.exp();
        let rho2_beta = u.log_rho2_beta.exp();
        let (_, l) = unit_kernel_factor(&self.distances, rho2_beta)?;
        let mut lp = scalar_log_prior(
            &self.priors,
            &u.beta0,
            &u.b,
            sigma_beta,
            rho2_beta,
            u.log_sigma_e.exp(),
            u.log_rho2_e.exp(),
            logistic(u.logit_w),
        );
        lp += u.z.as_slice().iter().map(|&v| std_normal_logpdf(v)).sum::<f64>();
        lp -= n0 as f64 * (0.5 * l.log_det() + n1 as f64 * u.log_sigma_beta);
        Ok(lp)
    }

    /// Pre-period fitted means `μ_it`, `N1 × t0`.
    pub fn fitted_pre(&self, p: &SvrParams) -> DenseMatrix<f64> {
        let (n1, n0) = (self.layout.n_treated, self.layout.n_control);
        DenseMatrix::from_fn(n1, self.t0, |i, t| {
            p.beta0[i] + (0..n0).map(|c| p.weights[(i, c)] * self.y_control[(c, t)]).sum::<f64>()
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn scalar_log_prior(
    pr: &SvrHyperPriors,
    beta0: &[f64],
    b: &[f64],
    sigma_beta: f64,
    rho2_beta: f64,
    sigma_e: f64,
    rho2_e: f64,
    w: f64,
) -> f64 {
    beta0.iter().map(|&v| normal_logpdf(v, pr.mu_0, pr.sigma2_0)).sum::<f64>()
        + b.iter().map(|&v| laplace_logpdf(v, pr.lambda_b)).sum::<f64>()
        + half_normal_logpdf(sigma_beta, pr.eta_beta)
        + gamma_logpdf(rho2_beta, pr.a_rho_beta, pr.eta_rho_beta)
        + half_normal_logpdf(sigma_e, pr.eta_e)
        + gamma_logpdf(rho2_e, pr.a_rho_e, pr.eta_rho_e)
        + beta_logpdf(w, pr.a_w, pr.b_w)
}

impl LogDensity for SvrModel {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.log_posterior_unconstrained(x, grad)
    }
}

/// Posterior-predictive draws of the treated units' untreated outcomes for the post period.
///
/// For each parameter draw and each `t > t0`, samples `MVN(μ_t, Σ_e)` with
/// `μ_it = β₀⁽ⁱ⁾ + Σ_c β_c⁽ⁱ⁾ y_ct`. Returns one `N1 × (T − t0)` matrix per draw.
pub fn impute_counterfactuals<R: Rng + ?Sized>(
    draws: &[SvrParams],
    data: &PanelDataset,
    distances: &DistanceMatrix<f64>,
    rng: &mut R,
) -> Result<Vec<DenseMatrix<f64>>> {
    let (n1, n0) = (data.n_treated, data.n_control);
    if distances.dim() != n1 {
        return Err(Error::Dimension("distance matrix does not match treated units".into()));
    }
    let horizon = data.n_post();
    let mut out = Vec::with_capacity(draws.len());
    for p in draws {
        p.check(n1, n0)?;
        let (_, lm) = error_corr_factor(distances, p.rho2_e, p.w)?;
        let scaled = CholFactor::from_lower(lm.lower().scale(p.sigma_e))?;
        let mut m = DenseMatrix::zeros(n1, horizon);
        for h in 0..horizon {
            let t = data.t0 + h;
            let mu: Vec<f64> = (0..n1)
                .map(|i| p.beta0[i] + (0..n0).map(|c| p.weights[(i, c)] * data.control(c)[t]).sum::<f64>())
                .collect();
            let y = mvn_sample(&mu, &scaled, rng)?;
            for i in 0..n1 {
                m[(i, h)] = y[i];
            }
        }
        out.push(m);
    }
    Ok(out)
}
