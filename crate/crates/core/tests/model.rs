use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use svr_core::dist::{gamma_cdf, half_normal_cdf};
use svr_core::gp::{build_sq_exp_kernel, DistanceMatrix};
use svr_core::linalg::{chol_with_jitter, DenseMatrix, DEFAULT_MAX_JITTER};
use svr_core::model::{impute_counterfactuals, SvrHyperPriors, SvrModel, SvrParams, UnconstrainedParams};
use svr_core::panel::PanelDataset;

const POSITIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn panel(n1: usize, n0: usize, t: usize, t0: usize, seed: u64) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = DenseMatrix::from_fn(n1 + n0, t, |_, _| StandardNormal.sample(&mut rng));
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

fn random_point(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = Normal::new(0.0, 0.5).unwrap();
    (0..dim).map(|_| n.sample(rng)).collect()
}

#[test]
fn gradient_matches_central_differences() {
    let data = panel(5, 10, 12, 10, 42);
    let model = SvrModel::new(&data, &POSITIONS, SvrHyperPriors::default()).unwrap();
    let dim = model.layout().dim();
    assert_eq!(dim, 5 + 10 + 50 + 5);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut g = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    for _ in 0..20 {
        let x = random_point(dim, &mut rng);
        model.log_posterior_unconstrained(&x, &mut g).unwrap();
        for j in 0..dim {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fp = model.log_posterior_unconstrained(&xp, &mut scratch).unwrap();
            let fm = model.log_posterior_unconstrained(&xm, &mut scratch).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            worst = worst.max((fd - g[j]).abs() / g[j].abs().max(1.0));
        }
    }
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

#[test]
fn non_centered_prior_two_paths_agree() {
    let data = panel(5, 4, 8, 6, 1);
    let model = SvrModel::new(&data, &POSITIONS, SvrHyperPriors::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x = random_point(model.layout().dim(), &mut rng);
        let u = UnconstrainedParams::from_slice(model.layout(), &x).unwrap();
        let p = model.constrain(&u).unwrap();
        let a = model.log_prior(&p).unwrap();
        let b = model.log_prior_whitened(&u).unwrap();
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        let back = model.unconstrain(&p).unwrap().to_vec();
        assert!(back.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-8));
    }
}

#[test]
fn predictive_mean_and_spatial_correlation() {
    let data = panel(5, 3, 40, 20, 5);
    let d = DistanceMatrix::from_positions(&POSITIONS).unwrap();
    let p = SvrParams {
        beta0: vec![0.2, -0.1, 0.0, 0.3, 0.1],
        b: vec![0.1, 0.2, -0.1],
        weights: DenseMatrix::from_fn(5, 3, |i, c| 0.1 * i as f64 - 0.2 * c as f64),
        sigma_beta: 0.3,
        rho2_beta: 0.2,
        sigma_e: 0.8,
        rho2_e: 0.09,
        w: 1.0,
    };
    let n = 10_000;
    let draws = impute_counterfactuals(&vec![p.clone(); n], &data, &d, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let h = 0;
    let t = data.t0 + h;
    let mu: Vec<f64> =
        (0..5).map(|i| p.beta0[i] + (0..3).map(|c| p.weights[(i, c)] * data.control(c)[t]).sum::<f64>()).collect();
    let resid: Vec<Vec<f64>> = (0..5).map(|i| draws.iter().map(|m| m[(i, h)] - mu[i]).collect()).collect();
    for i in 0..5 {
        let mean = resid[i].iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * 0.8 / (n as f64).sqrt(), "unit {i} mean {mean}");
    }
    let k = build_sq_exp_kernel(&d, 1.0, 0.09).unwrap();
    for i in 0..5 {
        for j in 0..i {
            let cov = resid[i].iter().zip(&resid[j]).map(|(a, b)| a * b).sum::<f64>();
            let vi = resid[i].iter().map(|a| a * a).sum::<f64>();
            let vj = resid[j].iter().map(|a| a * a).sum::<f64>();
            let r = cov / (vi * vj).sqrt();
            assert!((r - k[(i, j)]).abs() < 0.05, "({i},{j}) {r} vs {}", k[(i, j)]);
        }
    }
}

#[test]
fn prior_tail_probabilities() {
    let thresholds = [0.1, 0.3, 0.5, 1.0];
    // exact values; shape-½ Gamma and half-normal CDFs reduce to erf
    let rho_beta = [0.4729, 0.7267, 0.8427, 0.9545];
    let rho_e = [0.4161, 0.6572, 0.7793, 0.9167];
    let sigma = [0.4729, 0.7267, 0.8427, 0.9545];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 100_000;
    let gb = rand_distr::Gamma::new(0.5, 1.0 / 2.0).unwrap();
    let ge = rand_distr::Gamma::new(0.5, 1.0 / 1.5).unwrap();
    let hn = Normal::new(0.0, 0.5).unwrap();
    let sb: Vec<f64> = (0..n).map(|_| gb.sample(&mut rng)).collect();
    let se: Vec<f64> = (0..n).map(|_| ge.sample(&mut rng)).collect();
    let ss: Vec<f64> = (0..n).map(|_| { let v: f64 = hn.sample(&mut rng); v * v }).collect();
    let frac = |xs: &[f64], q: f64| xs.iter().filter(|&&v| v < q).count() as f64 / n as f64;
    for (k, &q) in thresholds.iter().enumerate() {
        assert!((gamma_cdf(q, 0.5, 2.0) - rho_beta[k]).abs() < 1e-3);
        assert!((gamma_cdf(q, 0.5, 1.5) - rho_e[k]).abs() < 1e-3);
        assert!((half_normal_cdf(q.sqrt(), 0.5) - sigma[k]).abs() < 1e-3);
        assert!((frac(&sb, q) - rho_beta[k]).abs() < 0.01);
        assert!((frac(&se, q) - rho_e[k]).abs() < 0.01);
        assert!((frac(&ss, q) - sigma[k]).abs() < 0.01);
    }
}

#[test]
fn induced_prior_curves_range_from_flat_to_rough() {
    let d = DistanceMatrix::from_positions(&POSITIONS).unwrap();
    let pr = SvrHyperPriors::default();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let gb = rand_distr::Gamma::new(pr.a_rho_beta, 1.0 / pr.eta_rho_beta).unwrap();
    let lap_b = |rng: &mut ChaCha8Rng| {
        let u: f64 = rng.random::<f64>() - 0.5;
        -pr.lambda_b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    };
    let n = 1000;
    let mut firsts = Vec::new();
    let mut lasts = Vec::new();
    let mut within = 0usize;
    let mut total = 0usize;
    for _ in 0..n {
        let rho2: f64 = gb.sample(&mut rng);
        let s: f64 = Normal::new(0.0, pr.eta_beta).unwrap().sample(&mut rng);
        let s = s.abs();
        let k = build_sq_exp_kernel(&d, s * s, rho2).unwrap().add_diagonal(1e-8 * s * s);
        let l = chol_with_jitter(&k, DEFAULT_MAX_JITTER).unwrap();
        let z: Vec<f64> = (0..5).map(|_| rng.sample(StandardNormal)).collect();
        let b = lap_b(&mut rng);
        let beta: Vec<f64> = l.mul_vec(&z).iter().map(|v| v + b).collect();
        within += beta.iter().filter(|v| v.abs() <= 1.0).count();
        total += 5;
        firsts.push(beta[0]);
        lasts.push(beta[4]);
    }
    assert!(within as f64 / total as f64 > 0.9);
    // split draws by lengthscale regime: long lengthscales give flat curves, short ones rough
    let corr = |a: &[f64], b: &[f64]| {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let c = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>();
        c / (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() * b.iter().map(|y| (y - mb).powi(2)).sum::<f64>()).sqrt()
    };
    let r = corr(&firsts, &lasts);
    assert!(r > 0.0 && r < 0.9, "{r}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn control_order_does_not_matter(seed in 0u64..1000, shift in 1usize..4) {
        let (n1, n0) = (3, 4);
        let data = panel(n1, n0, 7, 6, seed);
        let model = SvrModel::new(&data, &POSITIONS[..n1], SvrHyperPriors::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let x = random_point(model.layout().dim(), &mut rng);
        let perm: Vec<usize> = (0..n0).map(|c| (c + shift) % n0).collect();

        let mut y = data.outcomes.clone();
        for (c, &src) in perm.iter().enumerate() {
            for t in 0..7 {
                y[(n1 + c, t)] = data.outcomes[(n1 + src, t)];
            }
        }
        let permuted = data.with_outcomes(y);
        let pmodel = SvrModel::new(&permuted, &POSITIONS[..n1], SvrHyperPriors::default()).unwrap();
        let u = UnconstrainedParams::from_slice(model.layout(), &x).unwrap();
        let mut v = u.clone();
        for (c, &src) in perm.iter().enumerate() {
            v.b[c] = u.b[src];
            for i in 0..n1 {
                v.z[(i, c)] = u.z[(i, src)];
            }
        }
        let mut g = vec![0.0; x.len()];
        let a = model.log_posterior_unconstrained(&x, &mut g).unwrap();
        let b = pmodel.log_posterior_unconstrained(&v.to_vec(), &mut g).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn constrain_round_trips(seed in 0u64..10_000) {
        let data = panel(4, 3, 6, 5, 0);
        let model = SvrModel::new(&data, &POSITIONS[..4], SvrHyperPriors::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_point(model.layout().dim(), &mut rng);
        let p = model.constrain_slice(&x).unwrap();
        prop_assert!(p.sigma_e > 0.0 && p.sigma_beta > 0.0 && p.w > 0.0 && p.w < 1.0);
        let back = model.unconstrain(&p).unwrap().to_vec();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }
}
