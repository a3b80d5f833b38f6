use anyhow::Result;
use svr_core::sampler::FitConfig;
use svr_core::sim::{run_grid, write_metrics_csv, GridSpec};

use crate::fit::parse_methods;
use crate::manifest::{create_out_dir, sha256_file, RunManifest};
use crate::{Outcome, SimulateArgs};

pub fn resolve_grid(a: &SimulateArgs) -> Result<GridSpec> {
    let mut spec = match &a.grid {
        Some(p) => GridSpec::load(p)?,
        None => GridSpec::paper(),
    };
    if let Some(l) = a.replications {
        spec.replications = l;
    }
    if let Some(m) = &a.methods {
        spec.methods = parse_methods(m)?;
    }
    if a.fast {
        let fast = FitConfig::fast();
        spec.fit.sampler.iterations = fast.iterations;
        spec.fit.sampler.warmup = fast.warmup;
        spec.fit.sampler.chains = fast.chains;
    }
    if let Some(n) = a.fit_iters {
        spec.fit.sampler.iterations = n;
        spec.fit.sampler.warmup = n / 2;
    }
    if let Some(s) = a.seed {
        spec.dgp.seed = s;
        spec.fit.sampler.seed = s;
    }
    spec.validate()?;
    Ok(spec)
}

pub fn run(a: &SimulateArgs) -> Result<Outcome> {
    let spec = resolve_grid(a)?;
    let inputs = a.grid.as_deref().map(sha256_file).transpose()?.into_iter().collect();
    create_out_dir(&a.out)?;
    let mut manifest = RunManifest::new("simulate", &spec, spec.dgp.seed, inputs);
    manifest.write(&a.out)?;

    let rows = run_grid(&spec, Some(&a.out.join("checkpoints")))?;
    for r in rows.iter().filter(|r| r.flagged()) {
        eprintln!(
            "warning: {} failed in {} of {} replications at t0={} t_post={} rho2_s={} {}",
            r.method,
            r.n_failed,
            r.n_ok + r.n_failed,
            r.t0,
            r.t_post,
            r.rho2_s,
            r.error_mode
        );
    }
    write_metrics_csv(&a.out.join("metrics.csv"), &rows)?;
    manifest.finish(&a.out)?;
    Ok(Outcome::Ok)
}
