use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use svr_core::baselines::Method;
use svr_core::effects::{compute_effect_draws, phase_windows, summarize_effects, PhaseWindow};
use svr_core::linalg::DenseMatrix;
use svr_core::model::{impute_counterfactuals, SvrHyperPriors, SvrModel};
use svr_core::panel::{preprocess, rescale_distances, PanelDataset, Phase};
use svr_core::pipeline::{fit_svr, Imputation};
use svr_core::sampler::FitConfig;
use svr_core::sim::{generate_realization, DgpConfig};
use svr_core::stats::sd;

fn panel(values: &[f64], n1: usize, n0: usize, t0: usize) -> PanelDataset {
    let t = values.len() / (n1 + n0);
    PanelDataset::new(
        (0..n1 + n0).map(|i| format!("u{i}")).collect(),
        DenseMatrix::from_row_major(n1 + n0, t, values.to_vec()).unwrap(),
        n1,
        t0,
        (2000..2000 + t as i64).collect(),
        (1..=n1).map(|d| 120.0 * d as f64).collect(),
    )
    .unwrap()
}

fn imputation(data: &PanelDataset, draws: Vec<DenseMatrix<f64>>) -> Imputation {
    let (n1, t0) = (data.n_treated, data.t0);
    Imputation {
        method: Method::Svr,
        point: draws[0].clone(),
        interval: None,
        fitted_pre: vec![DenseMatrix::from_fn(n1, t0, |i, t| data.treated(i)[t] + 0.5); draws.len()],
        draws,
        weights: DenseMatrix::zeros(n1, data.n_control),
        intercepts: None,
        summary: None,
        parameter_draws: None,
    }
}

fn arb_case() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, f64)> {
    // 2 treated, 2 control, 6 periods (t0 = 3): post block is 2 × 3
    (prop::collection::vec(-10.0f64..10.0, 24), prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 6), 1..40), -50.0f64..50.0)
}

proptest! {
    #[test]
    fn summaries_are_ordered_and_shift_equivariant((values, raw_draws, k) in arb_case()) {
        let data = panel(&values, 2, 2, 3);
        let draws: Vec<_> = raw_draws.into_iter().map(|d| DenseMatrix::from_row_major(2, 3, d).unwrap()).collect();
        let windows = vec![PhaseWindow { name: "a".into(), start: 0, end: 1 }, PhaseWindow { name: "b".into(), start: 1, end: 3 }];
        let s = summarize_effects(&data, &imputation(&data, draws.clone()), &windows).unwrap();
        for c in &s.cells {
            prop_assert!(c.delta_lo <= c.delta_median && c.delta_median <= c.delta_hi);
        }
        for u in &s.units {
            for p in &u.phases {
                prop_assert!(p.lo.unwrap() <= p.median && p.median <= p.hi.unwrap());
            }
        }

        let mut shifted = data.outcomes.clone();
        for i in 0..2 {
            for t in 3..6 {
                shifted[(i, t)] += k;
            }
        }
        let moved = data.with_outcomes(shifted);
        let s2 = summarize_effects(&moved, &imputation(&moved, draws), &windows).unwrap();
        for (a, b) in s.cells.iter().zip(&s2.cells) {
            prop_assert!((b.delta_median - a.delta_median - k).abs() < 1e-9);
            prop_assert!((b.delta_lo - a.delta_lo - k).abs() < 1e-9);
            prop_assert!((b.delta_hi - a.delta_hi - k).abs() < 1e-9);
        }
        for (a, b) in s.units.iter().zip(&s2.units) {
            prop_assert!((a.rmspe - b.rmspe).abs() < 1e-12);
            for (p, q) in a.phases.iter().zip(&b.phases) {
                prop_assert!((q.median - p.median - k).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn identical_imputation_gives_zero_effect() {
    let values: Vec<f64> = (0..24).map(|v| (v as f64 * 0.7).sin()).collect();
    let data = panel(&values, 2, 2, 3);
    let obs = DenseMatrix::from_fn(2, 3, |i, h| data.treated(i)[3 + h]);
    let s = summarize_effects(&data, &imputation(&data, vec![obs.clone(); 4]), &phase_windows(&data, &[]).unwrap()).unwrap();
    assert!(s.cells.iter().all(|c| c.delta_median == 0.0 && c.delta_lo == 0.0 && c.delta_hi == 0.0));
    assert!(s.units.iter().all(|u| u.phases[0].median == 0.0 && (u.rmspe - 0.5).abs() < 1e-12));
}

#[test]
fn standardized_effects_scale_back_by_sd() {
    let data = generate_realization(&DgpConfig::default(), 2).unwrap().panel;
    let (std, scaling) = preprocess(&data, true).unwrap();
    let (n1, t0, h) = (data.n_treated, data.t0, data.n_post());
    let std_imputed = DenseMatrix::from_fn(n1, h, |i, k| std.treated(i)[t0 + k] - 0.3 * (i + k) as f64);
    let std_obs = DenseMatrix::from_fn(n1, h, |i, k| std.treated(i)[t0 + k]);
    let std_delta = compute_effect_draws(&std_obs, std::slice::from_ref(&std_imputed)).unwrap().remove(0);

    let orig_imputed =
        DenseMatrix::from_fn(n1, h, |i, k| scaling.to_original_scale(std_imputed[(i, k)], i, t0 + k).unwrap());
    let orig_obs = DenseMatrix::from_fn(n1, h, |i, k| data.treated(i)[t0 + k]);
    let delta = compute_effect_draws(&orig_obs, &[orig_imputed]).unwrap().remove(0);
    for i in 0..n1 {
        for k in 0..h {
            let via_sd = scaling.difference_to_original_scale(std_delta[(i, k)], i).unwrap();
            assert!((delta[(i, k)] - via_sd).abs() < 1e-9);
        }
    }
}

#[test]
fn phase_labels_map_to_post_offsets() {
    let values: Vec<f64> = (0..40).map(|v| v as f64).collect();
    let data = panel(&values, 2, 2, 4);
    let phases = vec![
        Phase { name: "construction".into(), start: 2004, end: 2006 },
        Phase { name: "operational".into(), start: 2007, end: 2009 },
    ];
    let w = phase_windows(&data, &phases).unwrap();
    assert_eq!((w[0].start, w[0].end, w[1].start, w[1].end), (0, 3, 3, 6));
    let overlapping = vec![Phase { name: "x".into(), start: 2004, end: 2007 }, Phase { name: "y".into(), start: 2007, end: 2009 }];
    assert!(phase_windows(&data, &overlapping).is_err());
    assert!(phase_windows(&data, &[Phase { name: "pre".into(), start: 2001, end: 2002 }]).is_err());
}

#[test]
fn pre_period_effects_center_on_zero() {
    let data = generate_realization(&DgpConfig { t0: 20, t_post: 5, ..DgpConfig::default() }, 5).unwrap().panel;
    let (std, _) = preprocess(&data, false).unwrap();
    let positions = rescale_distances(&data.treated_distances).unwrap();
    let cfg = FitConfig { iterations: 1000, warmup: 500, ..FitConfig::fast() };
    let fit = fit_svr(&std, &positions, &SvrHyperPriors::default(), &cfg).unwrap();
    // predictive draws for every period after the first
    let whole = PanelDataset { t0: 1, ..std.clone() };
    let model = SvrModel::new(&std, &positions, SvrHyperPriors::default()).unwrap();
    let pred = impute_counterfactuals(&fit.draws, &whole, model.distances(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let mut inside = 0;
    let mut cells = 0;
    for i in 0..data.n_treated {
        for t in 1..data.t0 {
            let deltas: Vec<f64> = pred.iter().map(|p| std.treated(i)[t] - p[(i, t - 1)]).collect();
            let mut sorted = deltas.clone();
            sorted.sort_by(f64::total_cmp);
            let median = sorted[sorted.len() / 2];
            if median.abs() <= 2.0 * sd(&deltas) {
                inside += 1;
            }
            cells += 1;
        }
    }
    assert!(inside as f64 >= 0.9 * cells as f64, "{inside} of {cells}");
}
