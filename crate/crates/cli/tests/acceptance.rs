//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line; the process exits
//! non-zero if any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use svr_core::baselines::{ols_unit, simplex_least_squares, Method};
use svr_core::dist::{gamma_cdf, half_normal_cdf};
use svr_core::effects::rmspe;
use svr_core::linalg::{implied_weights, implied_weights_block_cholesky, DenseMatrix, SymMatrix};
use svr_core::model::{SvrHyperPriors, SvrModel};
use svr_core::panel::{write_panel_csv, PanelDataset};
use svr_core::pipeline::{fit_method, FitOptions};
use svr_core::sampler::{nuts_fit, rhat, FitConfig, LogDensity};
use svr_core::sim::{generate_realization, run_scenario, DgpConfig, ErrorMode, Imputer, MethodImputer, MetricsRow};
use svr_core::Result as CoreResult;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn prior_analytics() -> Outcome {
    let xs = [0.1, 0.3, 0.5, 1.0];
    let stated: [(&str, [f64; 4], Box<dyn Fn(f64) -> f64>); 3] = [
        ("Gamma(0.5, rate 2)", [0.47, 0.73, 0.83, 0.95], Box::new(|x| gamma_cdf(x, 0.5, 2.0))),
        ("Gamma(0.5, rate 1.5)", [0.4, 0.67, 0.78, 0.92], Box::new(|x| gamma_cdf(x, 0.5, 1.5))),
        ("half-normal(0.5) on sigma", [0.47, 0.73, 0.84, 0.95], Box::new(|x: f64| half_normal_cdf(x.sqrt(), 0.5))),
    ];
    let mut misses = Vec::new();
    let mut values = Vec::new();
    for (name, target, cdf) in &stated {
        let got: Vec<f64> = xs.iter().map(|&x| cdf(x)).collect();
        values.push(format!("{name} {:.3?}", got));
        for ((x, g), t) in xs.iter().zip(&got).zip(target) {
            if (g - t).abs() > 0.01 {
                misses.push(format!("{name} at {x}: {g:.4} vs stated {t}"));
            }
        }
    }
    if misses.is_empty() {
        Ok(values.join("; "))
    } else {
        Err(format!("{}; exact values {}", misses.join(", "), values.join("; ")))
    }
}

fn random_panel(n1: usize, n0: usize, t: usize, t0: usize, seed: u64) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = DenseMatrix::from_fn(n1 + n0, t, |_, _| rng.sample(StandardNormal));
    PanelDataset::new(
        (0..n1 + n0).map(|i| format!("u{i}")).collect(),
        y,
        n1,
        t0,
        (0..t as i64).collect(),
        (1..=n1).map(|d| d as f64).collect(),
    )
    .unwrap()
}

fn gradient_correctness() -> Outcome {
    let data = random_panel(5, 10, 12, 10, 42);
    let positions = [0.0, 0.25, 0.5, 0.75, 1.0];
    let model = SvrModel::new(&data, &positions, SvrHyperPriors::default()).map_err(|e| e.to_string())?;
    let dim = model.layout().dim();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let normal = Normal::new(0.0, 0.5).unwrap();
    let h = 1e-5;
    let (mut g, mut scratch) = (vec![0.0; dim], vec![0.0; dim]);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x: Vec<f64> = (0..dim).map(|_| rng.sample(normal)).collect();
        model.log_posterior_unconstrained(&x, &mut g).map_err(|e| e.to_string())?;
        for j in 0..dim {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            let fp = model.log_posterior_unconstrained(&xp, &mut scratch).map_err(|e| e.to_string())?;
            let fm = model.log_posterior_unconstrained(&xm, &mut scratch).map_err(|e| e.to_string())?;
            worst = worst.max(((fp - fm) / (2.0 * h) - g[j]).abs() / g[j].abs().max(1.0));
        }
    }
    check(worst < 1e-5, format!("max relative error {worst:.2e} over 20 points, {dim} coordinates"))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let a = DenseMatrix::from_fn(7, 7, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut m = a.matmul(&a.transpose()).unwrap();
        for i in 0..7 {
            m[(i, i)] += 0.5;
            for j in 0..i {
                m[(i, j)] = m[(j, i)];
            }
        }
        let joint = SymMatrix::new(m).map_err(|e| e.to_string())?;
        let d = implied_weights(&joint, 3).map_err(|e| e.to_string())?;
        let b = implied_weights_block_cholesky(&joint, 3).map_err(|e| e.to_string())?;
        worst = worst.max(d.max_abs_diff(&b));
    }
    check(worst < 1e-8, format!("max abs difference {worst:.2e} over 100 instances"))
}

struct Gauss2 {
    mean: [f64; 2],
    prec: [[f64; 2]; 2],
}

impl Gauss2 {
    fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Self {
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        Self { mean, prec: [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]] }
    }
}

impl LogDensity for Gauss2 {
    fn dim(&self) -> usize {
        2
    }

    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> CoreResult<f64> {
        let d = [x[0] - self.mean[0], x[1] - self.mean[1]];
        let g0 = self.prec[0][0] * d[0] + self.prec[0][1] * d[1];
        let g1 = self.prec[1][0] * d[0] + self.prec[1][1] * d[1];
        grad[0] = -g0;
        grad[1] = -g1;
        Ok(-0.5 * (d[0] * g0 + d[1] * g1))
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + z.signum() * half_normal_cdf(z.abs(), 1.0))
}

fn ks(x: &[f64], mean: f64, var: f64) -> f64 {
    let mut s: Vec<f64> = x.iter().map(|v| (v - mean) / var.sqrt()).collect();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0, |d, (i, &v)| {
        let f = std_normal_cdf(v);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

fn sampler_calibration() -> Outcome {
    let cases = [([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]]), ([1.0, -2.0], [[1.0, 0.3], [0.3, 1.5]])];
    let config = FitConfig { chains: 4, iterations: 3500, warmup: 1000, ..FitConfig::default() };
    let mut ok = true;
    let mut notes = Vec::new();
    for (mean, cov) in cases {
        let chains = nuts_fit(&Gauss2::new(mean, cov), &config).map_err(|e| e.to_string())?;
        for j in 0..2 {
            let per_chain: Vec<Vec<f64>> = chains.iter().map(|c| c.coordinate(j)).collect();
            let x: Vec<f64> = per_chain.concat();
            let n = x.len() as f64;
            let m = x.iter().sum::<f64>() / n;
            let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
            let d = ks(&x, mean[j], cov[j][j]);
            let r = rhat(&per_chain);
            ok &= (m - mean[j]).abs() < 0.05 && (v - cov[j][j]).abs() < 0.1 && d < 0.02 && r < 1.01;
            notes.push(format!("mean err {:.3} var err {:.3} KS {d:.4} R-hat {r:.4}", m - mean[j], v - cov[j][j]));
        }
    }
    check(ok, notes.join("; "))
}

fn baseline_exactness() -> Outcome {
    let c1 = [1.0, 3.0, -2.0, 0.5, 4.0, 2.0];
    let c2 = [2.0, -1.0, 0.0, 3.0, 1.0, -1.5];
    let c3 = [0.0, 1.0, 1.0, 1.0, -3.0, 0.5];
    let x = DMatrix::from_fn(6, 3, |t, c| [c1, c2, c3][c][t]);
    let y = DVector::from_fn(6, |t, _| 0.5 * c1[t] + 0.5 * c2[t]);
    let w = simplex_least_squares(&x, &y).map_err(|e| e.to_string())?;
    let mix = (w[0] - 0.5).abs().max((w[1] - 0.5).abs()).max(w[2].abs());
    let w2 = simplex_least_squares(&x, &DVector::from_column_slice(&c3)).map_err(|e| e.to_string())?;
    let vertex = (w2[2] - 1.0).abs().max(w2[0].abs()).max(w2[1].abs());
    // unconstrained optimum (2, 0) lies outside the simplex
    let xc = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
    let w3 = simplex_least_squares(&xc, &DVector::from_vec(vec![2.0, 4.0])).map_err(|e| e.to_string())?;
    let clip = (w3[0] - 1.0).abs().max(w3[1].abs());

    let xo = DMatrix::from_fn(6, 2, |t, c| [c1, c3][c][t]);
    let yo = DVector::from_fn(6, |t, _| 3.0 + 2.0 * c1[t] - c3[t]);
    let fit = ols_unit(&xo, &yo, &DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), 0.05).map_err(|e| e.to_string())?;
    let ols = (fit.weights[0] - 2.0).abs().max((fit.weights[1] + 1.0).abs()).max((fit.intercept.unwrap() - 3.0).abs());
    check(
        mix < 1e-6 && vertex < 1e-6 && clip < 1e-6 && ols < 1e-9,
        format!("SC mixture {mix:.1e}, vertex {vertex:.1e}, clipped {clip:.1e}; OLS {ols:.1e}"),
    )
}

fn degenerate_ols() -> Outcome {
    let cfg = DgpConfig { t0: 10, t_post: 5, ..DgpConfig::default() };
    let options = FitOptions::default();
    let mut max_rmspe: f64 = 0.0;
    let mut max_width: f64 = 0.0;
    for l in 0..20 {
        let data = generate_realization(&cfg, l).map_err(|e| e.to_string())?;
        let fit = fit_method(Method::Ols, &data.panel, &options).map_err(|e| e.to_string())?;
        let pre = DenseMatrix::from_fn(5, 10, |i, t| data.panel.treated(i)[t]);
        max_rmspe = rmspe(&pre, &fit.fitted_pre).map_err(|e| e.to_string())?.into_iter().fold(max_rmspe, f64::max);
        let (lo, hi) = fit.interval.ok_or("no OLS interval")?;
        max_width = max_width.max(hi.max_abs_diff(&lo));
    }
    let ols = MethodImputer { method: Method::Ols, options };
    let rows = run_scenario(&cfg, &[&ols as &dyn Imputer], 50).map_err(|e| e.to_string())?;
    let acp = rows[0].acp;
    check(
        max_rmspe == 0.0 && max_width == 0.0 && acp == 0.0,
        format!("RMSPE max {max_rmspe:e}, interval width max {max_width:e}, coverage {acp:.2} over 50 replications"),
    )
}

fn svr_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_svr")).args(args).output().expect("svr binary")
}

fn determinism(dir: &Path) -> Outcome {
    let data = generate_realization(&DgpConfig { t0: 15, t_post: 5, ..DgpConfig::default() }, 9).map_err(|e| e.to_string())?;
    let panel = dir.join("panel.csv");
    write_panel_csv(&data.panel, fs::File::create(&panel).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let grid = dir.join("grid.json");
    fs::write(&grid, r#"{"t0": [10], "t_post": [5], "rho2_s": [0.16], "error_mode": ["iid", "spatial40"], "replications": 2, "methods": ["sc", "sr", "ols"]}"#)
        .map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(format!("fit_{run}"));
        let o = svr_cli(&[
            "fit", "--data", panel.to_str().unwrap(), "--t0", "15", "--methods", "svr,sc,ols,bvr", "--iters", "500", "--warmup",
            "250", "--seed", "5", "--out", out.to_str().unwrap(),
        ]);
        if ![0, 3].contains(&o.status.code().unwrap_or(-1)) {
            return Err(format!("fit failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
        let sim = dir.join(format!("sim_{run}"));
        let o = svr_cli(&["simulate", "--grid", grid.to_str().unwrap(), "--seed", "5", "--out", sim.to_str().unwrap()]);
        if o.status.code() != Some(0) {
            return Err(format!("simulate failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
        let read = |p: &Path| fs::read(p).map_err(|e| e.to_string());
        files.push([
            read(&out.join("effects.csv"))?,
            read(&out.join("draws_svr.csv"))?,
            read(&out.join("draws_bvr.csv"))?,
            read(&sim.join("metrics.csv"))?,
        ]);
    }
    check(files[0] == files[1], "effects, draws and metrics CSVs byte-identical across two runs".into())
}

fn describe(r: &MetricsRow) -> String {
    format!("{} MSE {:.3} bias {:+.3} ACP {:.3}", r.method, r.mse, r.bias, r.acp)
}

fn fast_options() -> FitOptions {
    FitOptions { sampler: FitConfig::fast(), remove_trend: false, ..FitOptions::default() }
}

fn desk_scale_reproduction() -> Outcome {
    let cfg = DgpConfig { t0: 20, t_post: 5, rho2_s: 0.4 * 0.4, error_mode: ErrorMode::Iid, ..DgpConfig::default() };
    let m: Vec<MethodImputer> =
        [Method::Svr, Method::Bvr, Method::Bsc].iter().map(|&method| MethodImputer { method, options: fast_options() }).collect();
    let rows = run_scenario(&cfg, &[&m[0], &m[1], &m[2]], 50).map_err(|e| e.to_string())?;
    let (svr, bvr, bsc) = (&rows[0], &rows[1], &rows[2]);
    let ok = svr.mse < bvr.mse
        && svr.mse < bsc.mse
        && (0.25..=0.55).contains(&svr.mse)
        && (0.88..=0.98).contains(&svr.acp)
        && svr.bias.abs() < 0.08
        && svr.n_failed == 0;
    check(ok, rows.iter().map(describe).collect::<Vec<_>>().join("; "))
}

fn spatial_benefit() -> Outcome {
    let svr = MethodImputer { method: Method::Svr, options: fast_options() };
    let mut mse = Vec::new();
    for rho2_s in [0.6 * 0.6, 0.001 * 0.001] {
        let cfg = DgpConfig { t0: 20, t_post: 5, rho2_s, error_mode: ErrorMode::Iid, ..DgpConfig::default() };
        mse.push(run_scenario(&cfg, &[&svr as &dyn Imputer], 30).map_err(|e| e.to_string())?[0].mse);
    }
    check(mse[0] <= mse[1], format!("SVR MSE {:.3} at rho2_s = 0.36 vs {:.3} at rho2_s = 1e-6 (paired seeds, L = 30)", mse[0], mse[1]))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 prior analytics", Box::new(prior_analytics)),
        ("2 gradient correctness", Box::new(gradient_correctness)),
        ("3 oracle equivalence", Box::new(oracle_equivalence)),
        ("4 sampler calibration", Box::new(sampler_calibration)),
        ("5 desk-scale simulation", Box::new(desk_scale_reproduction)),
        ("6 spatial-benefit monotonicity", Box::new(spatial_benefit)),
        ("7 degenerate OLS", Box::new(degenerate_ols)),
        ("8 baseline exactness", Box::new(baseline_exactness)),
        ("9 determinism", Box::new(|| determinism(tmp.path()))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
