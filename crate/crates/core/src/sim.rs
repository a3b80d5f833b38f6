//! Simulation study: the spatial data-generating process, the scenario grid, the replication
//! runner and the Bias / MSE / coverage metrics.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::Method;
use crate::error::{Error, Result};
use crate::gp::{build_error_cov, build_sq_exp_kernel, DistanceMatrix};
use crate::linalg::{chol_with_jitter, CholFactor, DenseMatrix, SymMatrix, DEFAULT_MAX_JITTER};
use crate::output::{csv_bytes, write_atomic};
use crate::panel::PanelDataset;
use crate::pipeline::{fit_method, FitOptions};
use crate::sampler::{chain_rng, derive_seed};
use crate::stats::sd;

/// Residual structure of the simulated treated outcomes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMode {
    Iid,
    Spatial40,
    Spatial70,
}

impl ErrorMode {
    pub const ALL: [ErrorMode; 3] = [ErrorMode::Iid, ErrorMode::Spatial40, ErrorMode::Spatial70];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorMode::Iid => "iid",
            ErrorMode::Spatial40 => "spatial40",
            ErrorMode::Spatial70 => "spatial70",
        }
    }

    /// Error variance as a fraction of the signal variance.
    pub fn noise_fraction(self) -> f64 {
        match self {
            ErrorMode::Iid | ErrorMode::Spatial40 => 0.4,
            ErrorMode::Spatial70 => 0.7,
        }
    }

    fn is_spatial(self) -> bool {
        self != ErrorMode::Iid
    }
}

/// Scale on which imputation errors are scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricScale {
    /// Errors divided by the pre-period sd of each treated unit's observed outcome.
    #[default]
    Standardized,
    Original,
}

impl std::fmt::Display for ErrorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ErrorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ErrorMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown error mode '{s}' (expected iid, spatial40 or spatial70)")))
    }
}

/// One simulation scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub n_treated: usize,
    pub n_control: usize,
    pub t0: usize,
    pub t_post: usize,
    /// Variance of the GP on the weights across treated areas.
    pub sigma2_s: f64,
    pub rho2_s: f64,
    pub error_mode: ErrorMode,
    /// Standard deviation of the control-series means.
    pub control_mean_sd: f64,
    pub sigma2_c: f64,
    pub rho2_c: f64,
    pub nugget_c: f64,
    /// Spatial share of the error covariance in the spatial modes.
    pub w_error: f64,
    pub rho2_e: f64,
    pub seed: u64,
    pub metric_scale: MetricScale,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n_treated: 5,
            n_control: 10,
            t0: 20,
            t_post: 5,
            sigma2_s: 0.4,
            rho2_s: 0.4 * 0.4,
            error_mode: ErrorMode::Iid,
            control_mean_sd: 0.7,
            sigma2_c: 0.3 * 0.3,
            rho2_c: 0.05 * 0.05,
            nugget_c: 0.15 * 0.15,
            w_error: 0.5,
            rho2_e: 0.2 * 0.2,
            seed: 20_240_101,
            metric_scale: MetricScale::Standardized,
        }
    }
}

impl DgpConfig {
    pub fn n_periods(&self) -> usize {
        self.t0 + self.t_post
    }

    /// Equally spaced treated positions on `[0, 1]`.
    pub fn positions(&self) -> Vec<f64> {
        if self.n_treated == 1 {
            return vec![0.0];
        }
        (0..self.n_treated).map(|i| i as f64 / (self.n_treated - 1) as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_treated == 0 || self.n_control == 0 {
            return Err(Error::Config("need treated and control units".into()));
        }
        if self.t0 < 2 || self.t_post == 0 {
            return Err(Error::Config(format!("need t0 ≥ 2 and t_post ≥ 1, got {} and {}", self.t0, self.t_post)));
        }
        let positive = [self.sigma2_s, self.rho2_s, self.sigma2_c, self.rho2_c, self.rho2_e];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(self.nugget_c >= 0.0) || !(self.control_mean_sd >= 0.0) {
            return Err(Error::Config("DGP variances and lengthscales must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.w_error) {
            return Err(Error::Config("w_error must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// One simulated data set with its ground truth. No treatment is applied, so the observed
/// post-period treated outcomes are the untreated counterfactuals.
#[derive(Clone, Debug, PartialEq)]
pub struct DgpRealization {
    pub panel: PanelDataset,
    pub intercepts: Vec<f64>,
    /// `N1 × N0` true weights.
    pub weights: DenseMatrix<f64>,
    /// Per-control GP means `m_c`.
    pub weight_means: Vec<f64>,
    /// `N1 × T` error draws.
    pub errors: DenseMatrix<f64>,
    pub sigma2_e: f64,
    /// `N1 × (T − t0)` true counterfactuals.
    pub counterfactual: DenseMatrix<f64>,
}

impl DgpRealization {
    /// `β₀ᵢ + Σ_c B_ic y_ct`, the noiseless treated signal at `(i, t)`.
    pub fn signal(&self, i: usize, t: usize) -> f64 {
        self.intercepts[i]
            + (0..self.panel.n_control).map(|c| self.weights[(i, c)] * self.panel.control(c)[t]).sum::<f64>()
    }
}

// sub-streams of one replication; shared across scenarios so that draws are paired
const STREAM_INTERCEPT: usize = 0;
const STREAM_WEIGHT_MEAN: usize = 1;
const STREAM_WEIGHT: usize = 2;
const STREAM_CONTROL_MEAN: usize = 3;
const STREAM_CONTROL: usize = 4;
const STREAM_ERROR: usize = 5;

fn normals<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn chol(m: &SymMatrix<f64>) -> Result<CholFactor<f64>> {
    chol_with_jitter(m, DEFAULT_MAX_JITTER)
}

/// Random seed of replication `replication`; depends only on the grid seed, so every scenario
/// sees the same underlying normal draws.
pub fn replication_seed(seed: u64, replication: usize) -> u64 {
    derive_seed(seed, replication as u64)
}

/// Draws one data set.
pub fn generate_realization(cfg: &DgpConfig, replication: usize) -> Result<DgpRealization> {
    cfg.validate()?;
    let (n1, n0, t) = (cfg.n_treated, cfg.n_control, cfg.n_periods());
    let base = replication_seed(cfg.seed, replication);
    let positions = cfg.positions();
    let d = DistanceMatrix::from_positions(&positions)?;

    let intercepts = normals(&mut chain_rng(base, STREAM_INTERCEPT), n1);

    let m = normals(&mut chain_rng(base, STREAM_WEIGHT_MEAN), n0);
    let lw = chol(&build_sq_exp_kernel(&d, cfg.sigma2_s, cfg.rho2_s)?)?;
    let mut rng = chain_rng(base, STREAM_WEIGHT);
    let mut weights = DenseMatrix::zeros(n1, n0);
    for c in 0..n0 {
        let beta = lw.mul_vec(&normals(&mut rng, n1));
        for i in 0..n1 {
            weights[(i, c)] = m[c] + beta[i];
        }
    }

    // controls: MVN(t_c 1, σ²_c exp(−Δ²/(2ρ²_c)) + η_c I) on time rescaled to [0, 1]
    let tc: Vec<f64> = normals(&mut chain_rng(base, STREAM_CONTROL_MEAN), n0).iter().map(|z| cfg.control_mean_sd * z).collect();
    let times: Vec<f64> = (0..t).map(|s| s as f64 / (t - 1).max(1) as f64).collect();
    let dt = DenseMatrix::from_fn(t, t, |a, b| (times[a] - times[b]).abs());
    let kt = build_sq_exp_kernel(&DistanceMatrix::new(dt)?, cfg.sigma2_c, cfg.rho2_c)?.add_diagonal(cfg.nugget_c);
    let lt = chol(&kt)?;
    let mut rng = chain_rng(base, STREAM_CONTROL);
    let mut outcomes = DenseMatrix::zeros(n1 + n0, t);
    for c in 0..n0 {
        let y = lt.mul_vec(&normals(&mut rng, t));
        for s in 0..t {
            outcomes[(n1 + c, s)] = tc[c] + y[s];
        }
    }

    let signal = DenseMatrix::from_fn(n1, t, |i, s| {
        intercepts[i] + (0..n0).map(|c| weights[(i, c)] * outcomes[(n1 + c, s)]).sum::<f64>()
    });
    let mean_var = (0..n1).map(|i| sd(signal.row(i)).powi(2)).sum::<f64>() / n1 as f64;
    let sigma2_e = cfg.error_mode.noise_fraction() * mean_var;
    let w = if cfg.error_mode.is_spatial() { cfg.w_error } else { 0.0 };
    let le = chol(&build_error_cov(&d, sigma2_e, cfg.rho2_e, w)?)?;
    let mut rng = chain_rng(base, STREAM_ERROR);
    let mut errors = DenseMatrix::zeros(n1, t);
    for s in 0..t {
        let e = le.mul_vec(&normals(&mut rng, n1));
        for i in 0..n1 {
            errors[(i, s)] = e[i];
            outcomes[(i, s)] = signal[(i, s)] + e[i];
        }
    }

    let ids = (0..n1).map(|i| format!("treated{}", i + 1)).chain((0..n0).map(|c| format!("control{}", c + 1))).collect();
    let distances = (1..=n1).map(|i| i as f64).collect();
    let counterfactual = DenseMatrix::from_fn(n1, cfg.t_post, |i, h| outcomes[(i, cfg.t0 + h)]);
    let panel = PanelDataset::new(ids, outcomes, n1, cfg.t0, (1..=t as i64).collect(), distances)?;
    Ok(DgpRealization { panel, intercepts, weights, weight_means: m, errors, sigma2_e, counterfactual })
}

/// Post-period imputations of one method on one data set.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub point: DenseMatrix<f64>,
    pub interval: Option<(DenseMatrix<f64>, DenseMatrix<f64>)>,
}

/// Anything that can impute the post-period counterfactuals of a simulated data set.
pub trait Imputer: Sync {
    fn label(&self) -> String;

    /// `replication` lets stochastic imputers derive a reproducible seed.
    fn impute(&self, data: &DgpRealization, replication: usize) -> Result<Prediction>;
}

/// A registered estimation method with fixed options.
#[derive(Clone, Debug)]
pub struct MethodImputer {
    pub method: Method,
    pub options: FitOptions,
}

impl Imputer for MethodImputer {
    fn label(&self) -> String {
        self.method.to_string()
    }

    fn impute(&self, data: &DgpRealization, replication: usize) -> Result<Prediction> {
        let mut options = self.options.clone();
        options.sampler.seed = derive_seed(options.sampler.seed, replication as u64);
        let fit = fit_method(self.method, &data.panel, &options)?;
        Ok(Prediction { point: fit.point, interval: fit.interval })
    }
}

/// Running sums of the per-cell errors of one method.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricAccumulator {
    pub sum_error: f64,
    pub sum_sq_error: f64,
    pub covered: usize,
    pub cells: usize,
    pub has_intervals: bool,
    pub n_ok: usize,
    pub n_failed: usize,
}

impl MetricAccumulator {
    /// Adds one successful replication.
    pub fn add(&mut self, truth: &DenseMatrix<f64>, pred: &Prediction) -> Result<()> {
        let shape = (truth.rows(), truth.cols());
        if (pred.point.rows(), pred.point.cols()) != shape {
            return Err(Error::Dimension("imputation shape differs from the truth".into()));
        }
        if self.n_ok > 0 && self.has_intervals != pred.interval.is_some() {
            return Err(Error::Config("imputer switched between interval and point output".into()));
        }
        self.has_intervals = pred.interval.is_some();
        for i in 0..shape.0 {
            for h in 0..shape.1 {
                let e = pred.point[(i, h)] - truth[(i, h)];
                self.sum_error += e;
                self.sum_sq_error += e * e;
                if let Some((lo, hi)) = &pred.interval {
                    if lo[(i, h)] <= truth[(i, h)] && truth[(i, h)] <= hi[(i, h)] {
                        self.covered += 1;
                    }
                }
            }
        }
        self.cells += shape.0 * shape.1;
        self.n_ok += 1;
        Ok(())
    }

    pub fn bias(&self) -> f64 {
        self.sum_error / self.cells as f64
    }

    pub fn mse(&self) -> f64 {
        self.sum_sq_error / self.cells as f64
    }

    /// Coverage of the 95% intervals; NaN for point estimators.
    pub fn acp(&self) -> f64 {
        if self.has_intervals {
            self.covered as f64 / self.cells as f64
        } else {
            f64::NAN
        }
    }
}

/// One line of the metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub t0: usize,
    pub t_post: usize,
    pub rho2_s: f64,
    pub error_mode: ErrorMode,
    pub bias: f64,
    pub mse: f64,
    pub acp: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

impl MetricsRow {
    /// Failures reach 2% of the replications.
    pub fn flagged(&self) -> bool {
        let total = self.n_ok + self.n_failed;
        total > 0 && self.n_failed as f64 >= 0.02 * total as f64
    }
}

/// Errors that count as a failed replication rather than aborting the run.
fn is_replication_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::SamplerInit(_)
            | Error::NonFinite(_)
            | Error::Factorization { .. }
            | Error::Singular(_)
            | Error::ZeroVariance { .. }
            | Error::Domain(_)
    )
}

/// Runs `replications` data sets of one scenario through every imputer.
pub fn run_scenario(cfg: &DgpConfig, imputers: &[&dyn Imputer], replications: usize) -> Result<Vec<MetricsRow>> {
    if imputers.is_empty() {
        return Err(Error::Config("no methods to evaluate".into()));
    }
    if replications == 0 {
        return Err(Error::Config("need at least one replication".into()));
    }
    cfg.validate()?;
    let outcomes: Vec<(DenseMatrix<f64>, Vec<Result<Prediction>>)> = (0..replications)
        .into_par_iter()
        .map(|l| {
            let data = generate_realization(cfg, l)?;
            let preds: Vec<Result<Prediction>> = imputers.iter().map(|imp| imp.impute(&data, l)).collect();
            match cfg.metric_scale {
                MetricScale::Original => Ok((data.counterfactual, preds)),
                MetricScale::Standardized => {
                    let sds = pre_period_sds(&data)?;
                    let preds = preds.into_iter().map(|p| p.map(|p| p.divide_rows(&sds))).collect();
                    Ok((divide_rows(&data.counterfactual, &sds), preds))
                }
            }
        })
        .collect::<Result<_>>()?;

    // accumulate in replication order so the sums do not depend on scheduling
    let mut acc = vec![MetricAccumulator::default(); imputers.len()];
    for (l, (truth, per)) in outcomes.into_iter().enumerate() {
        for (k, res) in per.into_iter().enumerate() {
            match res {
                Ok(pred) => acc[k].add(&truth, &pred)?,
                Err(e) if is_replication_failure(&e) => {
                    log::warn!("{} failed on replication {l}: {e}", imputers[k].label());
                    acc[k].n_failed += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
    let rows: Vec<MetricsRow> = imputers
        .iter()
        .zip(&acc)
        .map(|(imp, a)| MetricsRow {
            method: imp.label(),
            t0: cfg.t0,
            t_post: cfg.t_post,
            rho2_s: cfg.rho2_s,
            error_mode: cfg.error_mode,
            bias: if a.n_ok > 0 { a.bias() } else { f64::NAN },
            mse: if a.n_ok > 0 { a.mse() } else { f64::NAN },
            acp: if a.n_ok > 0 { a.acp() } else { f64::NAN },
            n_ok: a.n_ok,
            n_failed: a.n_failed,
        })
        .collect();
    for r in rows.iter().filter(|r| r.flagged()) {
        log::warn!(
            "{} at t0={} t_post={} rho2_s={} {}: {} of {} replications failed",
            r.method,
            r.t0,
            r.t_post,
            r.rho2_s,
            r.error_mode,
            r.n_failed,
            r.n_ok + r.n_failed
        );
    }
    Ok(rows)
}

fn pre_period_sds(data: &DgpRealization) -> Result<Vec<f64>> {
    let p = &data.panel;
    (0..p.n_treated)
        .map(|i| {
            let s = sd(&p.treated(i)[..p.t0]);
            if s.is_finite() && s > 0.0 {
                Ok(s)
            } else {
                Err(Error::ZeroVariance { unit: p.unit_ids[i].clone() })
            }
        })
        .collect()
}

fn divide_rows(m: &DenseMatrix<f64>, by: &[f64]) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] / by[i])
}

impl Prediction {
    fn divide_rows(self, by: &[f64]) -> Prediction {
        Prediction {
            point: divide_rows(&self.point, by),
            interval: self.interval.map(|(lo, hi)| (divide_rows(&lo, by), divide_rows(&hi, by))),
        }
    }
}

/// A post-period length: fixed, or half of `t0`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PostLength {
    Fixed(usize),
    /// The string `"t0/2"`.
    Relative(String),
}

impl PostLength {
    pub fn resolve(&self, t0: usize) -> Result<usize> {
        match self {
            PostLength::Fixed(n) => Ok(*n),
            PostLength::Relative(s) if s.replace(' ', "") == "t0/2" => Ok(t0 / 2),
            PostLength::Relative(s) => Err(Error::Config(format!("unknown post-period length '{s}' (use a number or \"t0/2\")"))),
        }
    }
}

/// Full factorial simulation design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub t0: Vec<usize>,
    pub t_post: Vec<PostLength>,
    pub rho2_s: Vec<f64>,
    pub error_mode: Vec<ErrorMode>,
    pub replications: usize,
    pub methods: Vec<Method>,
    pub fit: FitOptions,
    /// Remaining DGP settings; its `t0`, `t_post`, `rho2_s` and `error_mode` are overridden.
    pub dgp: DgpConfig,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::paper()
    }
}

impl GridSpec {
    /// The 7 × 4 × 3 = 84 scenario design with 200 replications and every method.
    pub fn paper() -> Self {
        let mut fit = FitOptions::default();
        fit.remove_trend = false;
        Self {
            t0: vec![10, 20, 40],
            t_post: vec![PostLength::Fixed(5), PostLength::Fixed(10), PostLength::Relative("t0/2".into())],
            rho2_s: vec![0.001 * 0.001, 0.2 * 0.2, 0.4 * 0.4, 0.6 * 0.6],
            error_mode: ErrorMode::ALL.to_vec(),
            replications: 200,
            methods: Method::ALL.to_vec(),
            fit,
            dgp: DgpConfig::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(format!("parsing {}", path.display()), e))
    }

    /// Scenarios in table order: t0, then post length (duplicates dropped), then ρ²_s, then
    /// error mode.
    pub fn scenarios(&self) -> Result<Vec<DgpConfig>> {
        let mut out = Vec::new();
        for &t0 in &self.t0 {
            let mut posts: Vec<usize> = Vec::new();
            for p in &self.t_post {
                let n = p.resolve(t0)?;
                if !posts.contains(&n) {
                    posts.push(n);
                }
            }
            for &t_post in &posts {
                for &rho2_s in &self.rho2_s {
                    for &error_mode in &self.error_mode {
                        let cfg = DgpConfig { t0, t_post, rho2_s, error_mode, ..self.dgp.clone() };
                        cfg.validate()?;
                        out.push(cfg);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("grid lists no methods".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("grid needs at least one replication".into()));
        }
        self.fit.sampler.validate()?;
        if self.scenarios()?.is_empty() {
            return Err(Error::Config("grid has no scenarios".into()));
        }
        Ok(())
    }
}

/// Runs every scenario of `spec`. With a checkpoint directory, each finished scenario is
/// stored as `scenario-NNN.csv` and reused on the next call with the same spec.
pub fn run_grid(spec: &GridSpec, checkpoint_dir: Option<&Path>) -> Result<Vec<MetricsRow>> {
    spec.validate()?;
    let scenarios = spec.scenarios()?;
    if let Some(dir) = checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let fingerprint = serde_json::to_string_pretty(spec).map_err(|e| Error::json("serializing grid", e))?;
        let path = dir.join("grid.json");
        match fs::read_to_string(&path) {
            Ok(old) if old != fingerprint => {
                return Err(Error::Config(format!("{} holds checkpoints of a different grid", dir.display())))
            }
            Ok(_) => {}
            Err(_) => write_atomic(&path, fingerprint.as_bytes())?,
        }
    }
    let imputers: Vec<MethodImputer> =
        spec.methods.iter().map(|&method| MethodImputer { method, options: spec.fit.clone() }).collect();
    let refs: Vec<&dyn Imputer> = imputers.iter().map(|m| m as &dyn Imputer).collect();

    let mut rows = Vec::new();
    for (idx, cfg) in scenarios.iter().enumerate() {
        let id = format!("scenario {idx} (t0={} t_post={} rho2_s={} {})", cfg.t0, cfg.t_post, cfg.rho2_s, cfg.error_mode);
        let ckpt = checkpoint_dir.map(|d| d.join(format!("scenario-{idx:03}.csv")));
        if let Some(p) = ckpt.as_deref().filter(|p| p.exists()) {
            log::info!("{id}: reusing checkpoint");
            rows.extend(read_metrics_csv(p)?);
            continue;
        }
        log::info!("{id}: running {} replications", spec.replications);
        let res = run_scenario(cfg, &refs, spec.replications).map_err(|e| match e {
            Error::Io { context, source } => Error::Io { context: format!("{id}: {context}"), source },
            other => other,
        })?;
        if let Some(p) = ckpt {
            write_atomic(&p, &csv_bytes(&res, &id)?).map_err(|e| match e {
                Error::Io { context, source } => Error::Io { context: format!("{id}: {context}"), source },
                other => other,
            })?;
        }
        rows.extend(res);
    }
    Ok(rows)
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows, &path.display().to_string())?)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let ctx = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(ctx.clone(), e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::csv(ctx.clone(), e))).collect()
}
