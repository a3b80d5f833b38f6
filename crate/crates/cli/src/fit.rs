use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use svr_core::baselines::Method;
use svr_core::effects::{phase_windows, summarize_effects, write_effects_csv, EffectSummary};
use svr_core::output::write_atomic;
use svr_core::panel::{load_panel_csv, PanelMeta, Phase};
use svr_core::pipeline::{fit_method, FitOptions, Imputation};
use svr_core::sampler::{FitConfig, SamplerSummary};
use svr_core::Error;

use crate::manifest::{create_out_dir, sha256_file, RunManifest};
use crate::{FitArgs, Outcome, SamplerArgs};

pub const RHAT_THRESHOLD: f64 = 1.01;

pub fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    let mut out: Vec<Method> = Vec::new();
    for n in names.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        let m: Method = n.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no methods given".into()).into());
    }
    Ok(out)
}

pub fn apply_sampler_args(cfg: &mut FitConfig, a: &SamplerArgs) {
    if a.fast {
        let fast = FitConfig::fast();
        cfg.iterations = fast.iterations;
        cfg.warmup = fast.warmup;
        cfg.chains = fast.chains;
    }
    if let Some(c) = a.chains {
        cfg.chains = c;
    }
    if let Some(i) = a.iters {
        cfg.iterations = i;
    }
    if let Some(w) = a.warmup {
        cfg.warmup = w;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { context: format!("reading {}", path.display()), source: e })?;
    Ok(serde_json::from_str(&text).map_err(|e| Error::Json { context: format!("parsing {}", path.display()), source: e })?)
}

#[derive(Serialize)]
struct FitConfigRecord<'a> {
    data: &'a Path,
    t0: usize,
    phases: &'a [Phase],
    methods: &'a [Method],
    options: &'a FitOptions,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitSummaryFile {
    pub t0: usize,
    pub phases: Vec<Phase>,
    pub methods: Vec<EffectSummary>,
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    rhat_threshold: f64,
    methods: Vec<MethodDiagnostics<'a>>,
}

#[derive(Serialize)]
struct MethodDiagnostics<'a> {
    method: Method,
    max_rhat: f64,
    min_ess: f64,
    divergences: usize,
    converged: bool,
    sampler: &'a SamplerSummary,
}

fn write_draws(path: &Path, names: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["draw".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (k, row) in rows.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    write_atomic(path, &w.into_inner()?)?;
    Ok(())
}

pub fn run(a: &FitArgs) -> Result<Outcome> {
    let meta = a.meta.as_deref().map(PanelMeta::load).transpose()?;
    let t0 = a.t0.or(meta.as_ref().map(|m| m.t0)).context("need --t0 or --meta")?;
    let phases = meta.map(|m| m.phases).unwrap_or_default();
    let data = load_panel_csv(&a.data, t0)?;
    let windows = phase_windows(&data, &phases)?;

    let mut options: FitOptions = match &a.config {
        Some(p) => load_json(p)?,
        None => FitOptions::default(),
    };
    apply_sampler_args(&mut options.sampler, &a.sampler);
    if a.no_detrend {
        options.remove_trend = false;
    }
    options.sampler.validate()?;
    options.priors.validate()?;
    let methods = parse_methods(&a.methods)?;

    let mut inputs = vec![sha256_file(&a.data)?];
    for p in [&a.meta, &a.config].into_iter().flatten() {
        inputs.push(sha256_file(p)?);
    }
    create_out_dir(&a.out)?;
    let record = FitConfigRecord { data: &a.data, t0, phases: &phases, methods: &methods, options: &options };
    let mut manifest = RunManifest::new("fit", record, options.sampler.seed, inputs);
    manifest.write(&a.out)?;

    let mut summaries = Vec::new();
    let mut fits: Vec<Imputation> = Vec::new();
    for &m in &methods {
        log::info!("fitting {m}");
        let imp = fit_method(m, &data, &options)?;
        summaries.push(summarize_effects(&data, &imp, &windows)?);
        if let Some((names, rows)) = &imp.parameter_draws {
            write_draws(&a.out.join(format!("draws_{m}.csv")), names, rows)?;
        }
        fits.push(imp);
    }

    write_effects_csv(&a.out.join("effects.csv"), &summaries)?;
    let summary = FitSummaryFile { t0, phases: phases.clone(), methods: summaries };
    write_atomic(&a.out.join("summary.json"), &serde_json::to_vec_pretty(&summary)?)?;

    let diag = Diagnostics {
        rhat_threshold: RHAT_THRESHOLD,
        methods: fits
            .iter()
            .filter_map(|f| f.summary.as_ref().map(|s| (f.method, s)))
            .map(|(method, s)| MethodDiagnostics {
                method,
                max_rhat: s.max_rhat(),
                min_ess: s.min_ess(),
                divergences: s.divergences,
                converged: !(s.max_rhat() > RHAT_THRESHOLD),
                sampler: s,
            })
            .collect(),
    };
    let flagged: Vec<String> = diag.methods.iter().filter(|d| !d.converged).map(|d| format!("{} (R-hat {:.3})", d.method, d.max_rhat)).collect();
    write_atomic(&a.out.join("diagnostics.json"), &serde_json::to_vec_pretty(&diag)?)?;
    manifest.finish(&a.out)?;

    if flagged.is_empty() {
        Ok(Outcome::Ok)
    } else {
        eprintln!("warning: R-hat above {RHAT_THRESHOLD} for {}; results written to {}", flagged.join(", "), a.out.display());
        Ok(Outcome::NotConverged)
    }
}
