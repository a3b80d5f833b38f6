use std::io::Write;
use std::path::Path;

use anyhow::Result;
use serde_json::{json, Value};
use svr_core::sim::{read_metrics_csv, MetricsRow};
use svr_core::Error;

use crate::fit::{load_json, FitSummaryFile};
use crate::{Format, Outcome, ReportArgs};

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        String::new()
    }
}

fn opt(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

type Key = (usize, usize, String, String);

/// Bias, MSE and coverage pivoted to one column per method.
fn simulation_tables(rows: &[MetricsRow], format: Format, out: &mut impl Write) -> Result<()> {
    let mut methods: Vec<String> = Vec::new();
    let mut keys: Vec<Key> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
        let k = (r.t0, r.t_post, r.error_mode.to_string(), r.rho2_s.to_string());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let lookup = |k: &Key, m: &str| {
        rows.iter().find(|r| (r.t0, r.t_post, r.error_mode.to_string(), r.rho2_s.to_string()) == *k && r.method == m)
    };
    let metrics: [(&str, fn(&MetricsRow) -> f64); 3] = [("bias", |r| r.bias), ("mse", |r| r.mse), ("acp", |r| r.acp)];
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header: Vec<String> = ["metric", "t0", "t_post", "error_mode", "rho2_s"].iter().map(|s| s.to_string()).collect();
            header.extend(methods.iter().cloned());
            w.write_record(&header)?;
            for (name, get) in metrics {
                for k in &keys {
                    let mut rec = vec![name.to_string(), k.0.to_string(), k.1.to_string(), k.2.clone(), k.3.clone()];
                    rec.extend(methods.iter().map(|m| lookup(k, m).map_or(String::new(), |r| cell(get(r)))));
                    w.write_record(&rec)?;
                }
            }
            out.write_all(&w.into_inner()?)?;
        }
        Format::Json => {
            let tables: Vec<Value> = metrics
                .iter()
                .map(|(name, get)| {
                    let rows: Vec<Value> = keys
                        .iter()
                        .map(|k| {
                            let values: serde_json::Map<String, Value> =
                                methods.iter().map(|m| (m.clone(), lookup(k, m).map_or(Value::Null, |r| opt(get(r))))).collect();
                            json!({"t0": k.0, "t_post": k.1, "error_mode": k.2, "rho2_s": k.3.parse::<f64>().unwrap_or(f64::NAN), "values": values})
                        })
                        .collect();
                    json!({"metric": name, "rows": rows})
                })
                .collect();
            serde_json::to_writer_pretty(&mut *out, &json!({ "tables": tables }))?;
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Phase-average effects per distance (estimate and interval rows), then RMSPE.
fn fit_tables(summary: &FitSummaryFile, format: Format, out: &mut impl Write) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for s in &summary.methods {
                let mut header = vec!["method".to_string(), "phase".into(), "row".into()];
                header.extend(s.units.iter().map(|u| format!("{} ({})", u.unit, u.distance)));
                w.write_record(&header)?;
                let phases = s.units.first().map_or(0, |u| u.phases.len());
                for p in 0..phases {
                    let name = &s.units[0].phases[p].phase;
                    let mut est = vec![s.method.clone(), name.clone(), "estimate".into()];
                    est.extend(s.units.iter().map(|u| format!("{:.3}", u.phases[p].median)));
                    w.write_record(&est)?;
                    let mut ci = vec![s.method.clone(), name.clone(), "interval".into()];
                    ci.extend(s.units.iter().map(|u| match (u.phases[p].lo, u.phases[p].hi) {
                        (Some(lo), Some(hi)) => format!("({lo:.3}, {hi:.3})"),
                        _ => String::new(),
                    }));
                    w.write_record(&ci)?;
                }
                let mut rm = vec![s.method.clone(), String::new(), "rmspe".into()];
                rm.extend(s.units.iter().map(|u| format!("{:.3}", u.rmspe)));
                w.write_record(&rm)?;
            }
            out.write_all(&w.into_inner()?)?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, &summary.methods)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn write_report(dir: &Path, format: Format, out: &mut impl Write) -> Result<()> {
    let metrics = dir.join("metrics.csv");
    let summary = dir.join("summary.json");
    if metrics.is_file() {
        simulation_tables(&read_metrics_csv(&metrics)?, format, out)
    } else if summary.is_file() {
        fit_tables(&load_json(&summary)?, format, out)
    } else {
        Err(Error::Config(format!("{} holds no fit (summary.json) or simulate (metrics.csv) output", dir.display())).into())
    }
}

pub fn run(a: &ReportArgs) -> Result<Outcome> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    write_report(&a.input, a.format, &mut lock)?;
    Ok(Outcome::Ok)
}
