//! Outcome panels: CSV ingestion, pre-period standardization, control-trend removal,
//! distance rescaling and the inverse map back to the original outcome scale.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// `N × T` outcome panel. Treated rows come first, sorted by strictly increasing distance.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelDataset {
    pub unit_ids: Vec<String>,
    pub outcomes: DenseMatrix<f64>,
    pub n_treated: usize,
    pub n_control: usize,
    pub t0: usize,
    pub time_labels: Vec<i64>,
    pub treated_distances: Vec<f64>,
}

impl PanelDataset {
    /// Checks the structural invariants and returns the dataset unchanged.
    pub fn new(
        unit_ids: Vec<String>,
        outcomes: DenseMatrix<f64>,
        n_treated: usize,
        t0: usize,
        time_labels: Vec<i64>,
        treated_distances: Vec<f64>,
    ) -> Result<Self> {
        let n = outcomes.rows();
        let periods = outcomes.cols();
        if unit_ids.len() != n {
            return Err(Error::Dimension(format!("{} unit ids for {n} rows", unit_ids.len())));
        }
        if time_labels.len() != periods {
            return Err(Error::Dimension(format!(
                "{} time labels for {periods} columns",
                time_labels.len()
            )));
        }
        if n_treated == 0 || n_treated >= n {
            return Err(Error::InvalidPanel(format!(
                "need at least one treated and one control unit, got {n_treated} treated of {n}"
            )));
        }
        if treated_distances.len() != n_treated {
            return Err(Error::Dimension(format!(
                "{} distances for {n_treated} treated units",
                treated_distances.len()
            )));
        }
        if treated_distances.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidPanel("treated distances must be strictly increasing".into()));
        }
        if t0 == 0 || t0 >= periods {
            return Err(Error::PreperiodOutOfRange { t0, periods });
        }
        if outcomes.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPanel("outcomes must be finite".into()));
        }
        if time_labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPanel("time labels must be strictly increasing".into()));
        }
        Ok(Self {
            unit_ids,
            outcomes,
            n_treated,
            n_control: n - n_treated,
            t0,
            time_labels,
            treated_distances,
        })
    }

    #[inline]
    pub fn n_units(&self) -> usize {
        self.outcomes.rows()
    }

    #[inline]
    pub fn n_periods(&self) -> usize {
        self.outcomes.cols()
    }

    #[inline]
    pub fn n_post(&self) -> usize {
        self.n_periods() - self.t0
    }

    /// Outcome series of treated unit `i`.
    #[inline]
    pub fn treated(&self, i: usize) -> &[f64] {
        self.outcomes.row(i)
    }

    /// Outcome series of control unit `c` (0-based among controls).
    #[inline]
    pub fn control(&self, c: usize) -> &[f64] {
        self.outcomes.row(self.n_treated + c)
    }

    /// Same panel with new outcome values.
    pub fn with_outcomes(&self, outcomes: DenseMatrix<f64>) -> Self {
        assert_eq!((outcomes.rows(), outcomes.cols()), (self.n_units(), self.n_periods()));
        Self { outcomes, ..self.clone() }
    }

    /// Column index of a time label.
    pub fn time_index(&self, label: i64) -> Option<usize> {
        self.time_labels.iter().position(|&t| t == label)
    }
}

/// Per-unit pre-period location/scale and, when de-trended, the per-time control trend
/// (expressed in standardized units).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub trend: Option<Vec<f64>>,
}

impl ScalingRecord {
    pub fn identity(n_units: usize) -> Self {
        Self { mean: vec![0.0; n_units], sd: vec![1.0; n_units], trend: None }
    }

    fn check(&self, unit: usize, time: usize) -> Result<()> {
        if unit >= self.mean.len() {
            return Err(Error::UnknownIndex { kind: "unit", index: unit });
        }
        if let Some(trend) = &self.trend {
            if time >= trend.len() {
                return Err(Error::UnknownIndex { kind: "time", index: time });
            }
        }
        Ok(())
    }

    /// Undoes de-trending, then standardization: `(v + Trend_t) · sd_i + Ȳ_i`.
    pub fn to_original_scale(&self, value: f64, unit: usize, time: usize) -> Result<f64> {
        self.check(unit, time)?;
        let trend = self.trend.as_ref().map_or(0.0, |t| t[time]);
        Ok((value + trend) * self.sd[unit] + self.mean[unit])
    }

    /// Maps a difference of two values at the same `(unit, time)`; location terms cancel.
    pub fn difference_to_original_scale(&self, delta: f64, unit: usize) -> Result<f64> {
        self.check(unit, 0)?;
        Ok(delta * self.sd[unit])
    }

    pub fn from_original_scale(&self, value: f64, unit: usize, time: usize) -> Result<f64> {
        self.check(unit, time)?;
        let trend = self.trend.as_ref().map_or(0.0, |t| t[time]);
        Ok((value - self.mean[unit]) / self.sd[unit] - trend)
    }
}

/// Standardizes every series with its own pre-period mean and sample standard deviation
/// (divisor `t0 − 1`).
pub fn standardize(data: &PanelDataset) -> Result<(PanelDataset, ScalingRecord)> {
    let t0 = data.t0;
    if t0 < 2 {
        return Err(Error::InvalidPanel(
            "standardization needs at least two pre-period observations".into(),
        ));
    }
    let n = data.n_units();
    let mut mean = Vec::with_capacity(n);
    let mut sd = Vec::with_capacity(n);
    let mut out = data.outcomes.clone();
    for u in 0..n {
        let pre = &data.outcomes.row(u)[..t0];
        let m = pre.iter().sum::<f64>() / t0 as f64;
        let var = pre.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / (t0 - 1) as f64;
        let s = var.sqrt();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::ZeroVariance { unit: data.unit_ids[u].clone() });
        }
        for v in out.row_mut(u) {
            *v = (*v - m) / s;
        }
        mean.push(m);
        sd.push(s);
    }
    Ok((data.with_outcomes(out), ScalingRecord { mean, sd, trend: None }))
}

/// Subtracts the cross-sectional control mean at every time from every unit.
pub fn detrend(data: &PanelDataset) -> (PanelDataset, ScalingRecord) {
    let trend = control_trend(data);
    let mut out = data.outcomes.clone();
    for u in 0..data.n_units() {
        for (v, tr) in out.row_mut(u).iter_mut().zip(&trend) {
            *v -= tr;
        }
    }
    let mut rec = ScalingRecord::identity(data.n_units());
    rec.trend = Some(trend);
    (data.with_outcomes(out), rec)
}

fn control_trend(data: &PanelDataset) -> Vec<f64> {
    let n0 = data.n_control as f64;
    (0..data.n_periods())
        .map(|t| (0..data.n_control).map(|c| data.control(c)[t]).sum::<f64>() / n0)
        .collect()
}

/// Standardizes, then optionally removes the control trend computed on the standardized
/// controls. The returned record inverts both steps.
pub fn preprocess(data: &PanelDataset, remove_trend: bool) -> Result<(PanelDataset, ScalingRecord)> {
    let (std, mut rec) = standardize(data)?;
    if !remove_trend {
        return Ok((std, rec));
    }
    let (out, trend_rec) = detrend(&std);
    rec.trend = trend_rec.trend;
    Ok((out, rec))
}

/// Affinely maps distances onto `[0, 1]` (minimum to 0, maximum to 1).
pub fn rescale_distances(d: &[f64]) -> Result<Vec<f64>> {
    match d.len() {
        0 => Err(Error::InvalidPanel("no treated distances".into())),
        1 => {
            log::warn!("single treated area: spatial structure is degenerate");
            Ok(vec![0.0])
        }
        _ => {
            if d.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidPanel("distances must be strictly increasing".into()));
            }
            let lo = d[0];
            let span = d[d.len() - 1] - lo;
            Ok(d.iter().map(|&x| ((x - lo) / span).clamp(0.0, 1.0)).collect())
        }
    }
}

/// Sidecar metadata for a panel CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PanelMeta {
    pub t0: usize,
    #[serde(default)]
    pub phases: Vec<Phase>,
}

/// Named post-period window, inclusive on both time labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub start: i64,
    pub end: i64,
}

impl PanelMeta {
    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_reader(f).map_err(|e| Error::json(path.display().to_string(), e))
    }
}

struct RawRow {
    time: i64,
    outcome: f64,
}

struct RawUnit {
    treated: bool,
    distance: Option<f64>,
    rows: Vec<RawRow>,
}

const COLUMNS: [&str; 5] = ["unit_id", "time", "outcome", "role", "distance"];

/// Reads a long-format panel (`unit_id,time,outcome,role,distance`).
pub fn load_panel_csv(path: &Path, t0: usize) -> Result<PanelDataset> {
    let ctx = || path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(ctx(), e))?;
    let headers = reader.headers().map_err(|e| Error::csv(ctx(), e))?.clone();
    let mut idx = [0usize; 5];
    for (k, name) in COLUMNS.iter().enumerate() {
        idx[k] = headers.iter().position(|h| h == *name).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: (*name).to_string(),
        })?;
    }

    let mut order: Vec<String> = Vec::new();
    let mut units: HashMap<String, RawUnit> = HashMap::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(ctx(), e))?;
        let bad = |what: &str| Error::InvalidPanel(format!("{}: row {}: {what}", ctx(), line + 2));
        let unit = rec.get(idx[0]).unwrap_or("").to_string();
        if unit.is_empty() {
            return Err(bad("empty unit_id"));
        }
        let time: i64 = rec.get(idx[1]).unwrap_or("").parse().map_err(|_| bad("time is not an integer"))?;
        let outcome: f64 = rec.get(idx[2]).unwrap_or("").parse().map_err(|_| bad("outcome is not a number"))?;
        let treated = match rec.get(idx[3]).unwrap_or("") {
            "treated" => true,
            "control" => false,
            other => return Err(bad(&format!("role `{other}` is neither treated nor control"))),
        };
        let dist_raw = rec.get(idx[4]).unwrap_or("");
        let distance = if treated {
            match dist_raw.parse::<f64>() {
                Ok(d) if d > 0.0 && d.is_finite() => Some(d),
                _ => return Err(Error::BadDistance { path: path.to_path_buf(), unit }),
            }
        } else {
            if !dist_raw.is_empty() {
                return Err(bad("control rows must leave distance empty"));
            }
            None
        };
        let entry = units.entry(unit.clone()).or_insert_with(|| {
            order.push(unit.clone());
            RawUnit { treated, distance, rows: Vec::new() }
        });
        if entry.treated != treated || entry.distance != distance {
            return Err(bad(&format!("unit `{unit}` changes role or distance between rows")));
        }
        if entry.rows.iter().any(|r| r.time == time) {
            return Err(Error::DuplicateObservation { path: path.to_path_buf(), unit, time });
        }
        entry.rows.push(RawRow { time, outcome });
    }

    let times: Vec<i64> = {
        let mut all: BTreeMap<i64, ()> = BTreeMap::new();
        for u in units.values() {
            for r in &u.rows {
                all.insert(r.time, ());
            }
        }
        all.into_keys().collect()
    };
    for name in &order {
        let u = &units[name];
        if u.rows.len() != times.len() {
            return Err(Error::UnbalancedPanel {
                path: path.to_path_buf(),
                unit: name.clone(),
                found: u.rows.len(),
                expected: times.len(),
            });
        }
    }
    if t0 == 0 || t0 >= times.len() {
        return Err(Error::PreperiodOutOfRange { t0, periods: times.len() });
    }

    let mut treated: Vec<&String> = order.iter().filter(|n| units[*n].treated).collect();
    treated.sort_by(|a, b| units[*a].distance.partial_cmp(&units[*b].distance).expect("finite"));
    let controls: Vec<&String> = order.iter().filter(|n| !units[*n].treated).collect();

    let time_pos: HashMap<i64, usize> = times.iter().enumerate().map(|(k, &t)| (t, k)).collect();
    let ids: Vec<String> = treated.iter().chain(&controls).map(|s| (*s).clone()).collect();
    let mut outcomes = DenseMatrix::zeros(ids.len(), times.len());
    for (r, name) in ids.iter().enumerate() {
        for row in &units[name].rows {
            outcomes[(r, time_pos[&row.time])] = row.outcome;
        }
    }
    let distances = treated.iter().map(|n| units[*n].distance.expect("treated")).collect();
    PanelDataset::new(ids, outcomes, treated.len(), t0, times, distances)
}

/// Writes the panel back in the long format accepted by [`load_panel_csv`].
pub fn write_panel_csv<W: Write>(data: &PanelDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let ctx = "writing panel csv";
    w.write_record(COLUMNS).map_err(|e| Error::csv(ctx, e))?;
    for u in 0..data.n_units() {
        let treated = u < data.n_treated;
        let dist = if treated { data.treated_distances[u].to_string() } else { String::new() };
        for (t, label) in data.time_labels.iter().enumerate() {
            w.write_record([
                data.unit_ids[u].as_str(),
                &label.to_string(),
                &data.outcomes[(u, t)].to_string(),
                if treated { "treated" } else { "control" },
                &dist,
            ])
            .map_err(|e| Error::csv(ctx, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(ctx, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(outcomes: Vec<Vec<f64>>, n_treated: usize, t0: usize) -> PanelDataset {
        let n = outcomes.len();
        let t = outcomes[0].len();
        PanelDataset::new(
            (0..n).map(|i| format!("u{i}")).collect(),
            DenseMatrix::from_rows(&outcomes).unwrap(),
            n_treated,
            t0,
            (1..=t as i64).collect(),
            (1..=n_treated).map(|d| d as f64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn standardize_uses_pre_period_sample_sd() {
        let d = tiny(vec![vec![1.0, 2.0, 3.0, 5.0], vec![0.0, 4.0, 2.0, 1.0]], 1, 3);
        let (s, rec) = standardize(&d).unwrap();
        assert_eq!(&s.treated(0)[..3], &[-1.0, 0.0, 1.0]);
        assert!((s.treated(0)[3] - 3.0).abs() < 1e-15);
        assert_eq!(rec.mean[0], 2.0);
        assert_eq!(rec.sd[0], 1.0);
        for u in 0..2 {
            let m: f64 = s.outcomes.row(u)[..3].iter().sum::<f64>() / 3.0;
            assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn constant_pre_period_is_rejected() {
        let d = tiny(vec![vec![1.0, 2.0, 3.0, 5.0], vec![2.0, 2.0, 2.0, 7.0]], 1, 3);
        match standardize(&d) {
            Err(Error::ZeroVariance { unit }) => assert_eq!(unit, "u1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detrend_hand_case() {
        let d = tiny(vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, 4.0]], 1, 1);
        let (out, rec) = detrend(&d);
        assert_eq!(rec.trend.as_deref(), Some(&[2.0, 3.0][..]));
        assert_eq!(out.treated(0), &[-2.0, -3.0]);
        for t in 0..2 {
            assert!((out.control(0)[t] + out.control(1)[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_controls_detrend_to_zero() {
        let d = tiny(vec![vec![5.0, 1.0, 2.0], vec![1.0, 2.0, 9.0], vec![1.0, 2.0, 9.0]], 1, 2);
        let (out, _) = detrend(&d);
        assert!(out.control(0).iter().chain(out.control(1)).all(|&v| v == 0.0));
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(
            rescale_distances(&[120.0, 240.0, 360.0, 480.0, 600.0]).unwrap(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!(rescale_distances(&[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(rescale_distances(&[10.0, 30.0, 50.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(rescale_distances(&[42.0]).unwrap(), vec![0.0]);
        assert!(rescale_distances(&[2.0, 1.0]).is_err());
    }

    #[test]
    fn inverse_formula() {
        let rec = ScalingRecord { mean: vec![2.0], sd: vec![1.0], trend: Some(vec![0.0]) };
        assert_eq!(rec.to_original_scale(3.0, 0, 0).unwrap(), 5.0);
        assert!(matches!(rec.to_original_scale(3.0, 1, 0), Err(Error::UnknownIndex { kind: "unit", .. })));
        assert!(matches!(rec.to_original_scale(3.0, 0, 4), Err(Error::UnknownIndex { kind: "time", .. })));
    }

    #[test]
    fn differences_only_need_the_scale() {
        let d = tiny(
            vec![vec![3.0, 1.0, 4.0, 1.0, 5.0], vec![9.0, 2.0, 6.0, 5.0, 3.0], vec![5.0, 8.0, 9.0, 7.0, 9.0]],
            1,
            3,
        );
        let (_, rec) = preprocess(&d, true).unwrap();
        let (a, b) = (0.7, -1.3);
        let full = rec.to_original_scale(a, 0, 4).unwrap() - rec.to_original_scale(b, 0, 4).unwrap();
        let short = rec.difference_to_original_scale(a - b, 0).unwrap();
        assert!((full - short).abs() < 1e-12);
    }
}
