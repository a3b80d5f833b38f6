//! Treatment effects from counterfactual imputations: per-cell effects, phase averages and
//! pre-period RMSPE, plus their tabular outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::output::{csv_bytes, write_atomic};
use crate::panel::{PanelDataset, Phase};
use crate::pipeline::Imputation;
use crate::stats::{median_and_95, quantile_sorted};

/// `observed − imputed` for every draw.
pub fn compute_effect_draws(observed: &DenseMatrix<f64>, draws: &[DenseMatrix<f64>]) -> Result<Vec<DenseMatrix<f64>>> {
    draws
        .iter()
        .map(|d| {
            if (d.rows(), d.cols()) != (observed.rows(), observed.cols()) {
                return Err(Error::Dimension(format!(
                    "imputation is {}×{}, observed is {}×{}",
                    d.rows(),
                    d.cols(),
                    observed.rows(),
                    observed.cols()
                )));
            }
            Ok(DenseMatrix::from_fn(d.rows(), d.cols(), |i, h| observed[(i, h)] - d[(i, h)]))
        })
        .collect()
}

/// Median and equal-tailed 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn of(values: &[f64]) -> Self {
        let (median, lo, hi) = median_and_95(values);
        Self { median, lo, hi }
    }

    fn point(v: f64) -> Self {
        Self { median: v, lo: f64::NAN, hi: f64::NAN }
    }
}

/// A post-period window as column offsets `start..end` into the post period.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhaseWindow {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

/// Maps labelled phases onto post-period offsets; without phases the whole post period is one
/// window named `post`.
pub fn phase_windows(data: &PanelDataset, phases: &[Phase]) -> Result<Vec<PhaseWindow>> {
    if phases.is_empty() {
        return Ok(vec![PhaseWindow { name: "post".into(), start: 0, end: data.n_post() }]);
    }
    let post = &data.time_labels[data.t0..];
    let mut out: Vec<PhaseWindow> = Vec::new();
    for p in phases {
        let idx: Vec<usize> = post.iter().enumerate().filter(|(_, &t)| p.start <= t && t <= p.end).map(|(k, _)| k).collect();
        let (Some(&start), Some(&last)) = (idx.first(), idx.last()) else {
            return Err(Error::Config(format!("phase '{}' ({}..{}) has no post-period times", p.name, p.start, p.end)));
        };
        if p.start < post[0] {
            return Err(Error::Config(format!("phase '{}' starts before the post period", p.name)));
        }
        if out.iter().any(|w| start < w.end && w.start <= last) {
            return Err(Error::Config(format!("phase '{}' overlaps another phase", p.name)));
        }
        out.push(PhaseWindow { name: p.name.clone(), start, end: last + 1 });
    }
    Ok(out)
}

/// Per-unit summaries of the window average of the effect, averaged within each draw first.
pub fn phase_average(delta_draws: &[DenseMatrix<f64>], window: &PhaseWindow) -> Result<Vec<Interval>> {
    let first = delta_draws.first().ok_or_else(|| Error::Config("no effect draws".into()))?;
    if window.start >= window.end || window.end > first.cols() {
        return Err(Error::Config(format!("phase '{}' is empty or outside the post period", window.name)));
    }
    let len = (window.end - window.start) as f64;
    Ok((0..first.rows())
        .map(|i| {
            let avgs: Vec<f64> =
                delta_draws.iter().map(|d| d.row(i)[window.start..window.end].iter().sum::<f64>() / len).collect();
            Interval::of(&avgs)
        })
        .collect())
}

/// Posterior median, per unit, of the pre-period root mean squared prediction error.
pub fn rmspe(observed_pre: &DenseMatrix<f64>, fitted: &[DenseMatrix<f64>]) -> Result<Vec<f64>> {
    if fitted.is_empty() {
        return Err(Error::Config("no fitted values".into()));
    }
    let (n, t0) = (observed_pre.rows(), observed_pre.cols());
    if fitted.iter().any(|f| (f.rows(), f.cols()) != (n, t0)) {
        return Err(Error::Dimension("fitted values do not match the pre-period".into()));
    }
    Ok((0..n)
        .map(|i| {
            let mut per_draw: Vec<f64> = fitted
                .iter()
                .map(|f| {
                    let ss: f64 = (0..t0).map(|t| (observed_pre[(i, t)] - f[(i, t)]).powi(2)).sum();
                    (ss / t0 as f64).sqrt()
                })
                .collect();
            per_draw.sort_by(f64::total_cmp);
            quantile_sorted(&per_draw, 0.5)
        })
        .collect())
}

/// One row of the effects table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub method: String,
    pub unit: String,
    pub distance: f64,
    pub time: i64,
    pub delta_median: f64,
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub phase: String,
}

/// Average effect of one unit over one phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseEffect {
    pub phase: String,
    pub median: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitEffects {
    pub unit: String,
    pub distance: f64,
    pub rmspe: f64,
    pub phases: Vec<PhaseEffect>,
}

/// Effects of one method on one panel, on the original scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub method: String,
    pub units: Vec<UnitEffects>,
    #[serde(skip)]
    pub cells: Vec<EffectRow>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Builds the effect summary of `imp` against the observed post-period outcomes of `data`.
/// Point estimators get a single effect per cell, with intervals only when the method
/// reports them and no interval on phase averages.
pub fn summarize_effects(data: &PanelDataset, imp: &Imputation, windows: &[PhaseWindow]) -> Result<EffectSummary> {
    let (n1, t0, horizon) = (data.n_treated, data.t0, data.n_post());
    let observed = DenseMatrix::from_fn(n1, horizon, |i, h| data.treated(i)[t0 + h]);
    let observed_pre = DenseMatrix::from_fn(n1, t0, |i, t| data.treated(i)[t]);
    let method = imp.method.to_string();

    let (cell_stats, phase_stats): (Vec<Vec<Interval>>, Vec<Vec<Interval>>) = if imp.draws.is_empty() {
        let delta = compute_effect_draws(&observed, std::slice::from_ref(&imp.point))?.remove(0);
        let cells = (0..n1)
            .map(|i| {
                (0..horizon)
                    .map(|h| match &imp.interval {
                        Some((lo, hi)) => Interval { median: delta[(i, h)], lo: observed[(i, h)] - hi[(i, h)], hi: observed[(i, h)] - lo[(i, h)] },
                        None => Interval::point(delta[(i, h)]),
                    })
                    .collect()
            })
            .collect();
        let phases = windows
            .iter()
            .map(|w| Ok(phase_average(std::slice::from_ref(&delta), w)?.into_iter().map(|v| Interval::point(v.median)).collect()))
            .collect::<Result<_>>()?;
        (cells, phases)
    } else {
        let delta = compute_effect_draws(&observed, &imp.draws)?;
        let mut column = Vec::with_capacity(delta.len());
        let cells = (0..n1)
            .map(|i| {
                (0..horizon)
                    .map(|h| {
                        column.clear();
                        column.extend(delta.iter().map(|d| d[(i, h)]));
                        Interval::of(&column)
                    })
                    .collect()
            })
            .collect();
        let phases = windows.iter().map(|w| phase_average(&delta, w)).collect::<Result<_>>()?;
        (cells, phases)
    };

    let rmspe = rmspe(&observed_pre, &imp.fitted_pre)?;
    let mut rows = Vec::with_capacity(n1 * horizon);
    let mut units = Vec::with_capacity(n1);
    for i in 0..n1 {
        for h in 0..horizon {
            let phase = windows.iter().find(|w| w.start <= h && h < w.end).map_or(String::new(), |w| w.name.clone());
            let c = cell_stats[i][h];
            rows.push(EffectRow {
                method: method.clone(),
                unit: data.unit_ids[i].clone(),
                distance: data.treated_distances[i],
                time: data.time_labels[t0 + h],
                delta_median: c.median,
                delta_lo: c.lo,
                delta_hi: c.hi,
                phase,
            });
        }
        units.push(UnitEffects {
            unit: data.unit_ids[i].clone(),
            distance: data.treated_distances[i],
            rmspe: rmspe[i],
            phases: windows
                .iter()
                .zip(&phase_stats)
                .map(|(w, s)| PhaseEffect { phase: w.name.clone(), median: s[i].median, lo: finite(s[i].lo), hi: finite(s[i].hi) })
                .collect(),
        });
    }
    Ok(EffectSummary { method, units, cells: rows })
}

/// Writes the per-cell effects of several methods as one CSV. Missing bounds are left empty.
pub fn write_effects_csv(path: &Path, summaries: &[EffectSummary]) -> Result<()> {
    #[derive(Serialize)]
    struct Out<'a> {
        method: &'a str,
        unit: &'a str,
        distance: f64,
        time: i64,
        delta_median: f64,
        delta_lo: Option<f64>,
        delta_hi: Option<f64>,
        phase: &'a str,
    }
    let rows: Vec<Out> = summaries
        .iter()
        .flat_map(|s| s.cells.iter())
        .map(|r| Out {
            method: &r.method,
            unit: &r.unit,
            distance: r.distance,
            time: r.time,
            delta_median: r.delta_median,
            delta_lo: finite(r.delta_lo),
            delta_hi: finite(r.delta_hi),
            phase: &r.phase,
        })
        .collect();
    write_atomic(path, &csv_bytes(&rows, &path.display().to_string())?)
}

/// Reads an effects CSV back; empty bounds become NaN.
pub fn read_effects_csv(path: &Path) -> Result<Vec<EffectRow>> {
    #[derive(Deserialize)]
    struct In {
        method: String,
        unit: String,
        distance: f64,
        time: i64,
        delta_median: f64,
        delta_lo: Option<f64>,
        delta_hi: Option<f64>,
        phase: String,
    }
    let ctx = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(ctx.clone(), e))?;
    r.deserialize::<In>()
        .map(|row| {
            let row = row.map_err(|e| Error::csv(ctx.clone(), e))?;
            Ok(EffectRow {
                method: row.method,
                unit: row.unit,
                distance: row.distance,
                time: row.time,
                delta_median: row.delta_median,
                delta_lo: row.delta_lo.unwrap_or(f64::NAN),
                delta_hi: row.delta_hi.unwrap_or(f64::NAN),
                phase: row.phase,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_effect() {
        let obs = DenseMatrix::from_row_major(1, 1, vec![10.0]).unwrap();
        let draws: Vec<_> = [7.0, 8.0, 9.0].iter().map(|&v| DenseMatrix::from_row_major(1, 1, vec![v]).unwrap()).collect();
        let d = compute_effect_draws(&obs, &draws).unwrap();
        let vals: Vec<f64> = d.iter().map(|m| m[(0, 0)]).collect();
        assert_eq!(vals, vec![3.0, 2.0, 1.0]);
        assert_eq!(Interval::of(&vals).median, 2.0);
    }

    #[test]
    fn rmspe_hand_case() {
        let obs = DenseMatrix::from_row_major(1, 2, vec![3.0, 4.0]).unwrap();
        let r = rmspe(&obs, &[DenseMatrix::zeros(1, 2)]).unwrap();
        assert!((r[0] - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmspe(&obs, &[obs.clone(), obs.clone()]).unwrap()[0], 0.0);
    }

    #[test]
    fn phase_average_is_median_of_draw_averages() {
        let draws: Vec<DenseMatrix<f64>> = (0..5)
            .map(|k| DenseMatrix::from_row_major(1, 2, vec![k as f64, (4 - k) as f64 * (k as f64)]).unwrap())
            .collect();
        let w = PhaseWindow { name: "a".into(), start: 0, end: 2 };
        let got = phase_average(&draws, &w).unwrap()[0];
        let avgs: Vec<f64> = draws.iter().map(|d| (d[(0, 0)] + d[(0, 1)]) / 2.0).collect();
        assert_eq!(got, Interval::of(&avgs));
        assert!(phase_average(&draws, &PhaseWindow { name: "b".into(), start: 1, end: 1 }).is_err());
    }
}
