mod fit;
mod manifest;
mod report;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use svr_core::Error;

/// Spatial vertical regression: counterfactual imputation for nested treated areas.
#[derive(Parser, Debug)]
#[command(name = "svr", version, about)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "SVR_THREADS")]
    threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one or more methods on a panel and write effects, draws and diagnostics.
    Fit(FitArgs),
    /// Run the simulation grid and write the metrics table.
    Simulate(SimulateArgs),
    /// Print consolidated tables from a fit or simulate output directory.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SamplerArgs {
    /// 3 chains × 2,000 iterations with 1,000 warmup.
    #[arg(long)]
    fast: bool,
    #[arg(long)]
    chains: Option<usize>,
    /// Iterations per chain, warmup included.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Long-format panel CSV: unit_id,time,outcome,role,distance.
    #[arg(long)]
    data: PathBuf,
    /// Number of pre-treatment periods.
    #[arg(long, required_unless_present = "meta", conflicts_with = "meta")]
    t0: Option<usize>,
    /// JSON sidecar with t0 and named post-period phases.
    #[arg(long)]
    meta: Option<PathBuf>,
    /// JSON fit options (sampler, priors, remove_trend, alpha).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated methods: svr, sc, sr, ols, bvr, bsc.
    #[arg(long, value_delimiter = ',', default_value = "svr")]
    methods: Vec<String>,
    /// Keep the control trend in the Bayesian fits.
    #[arg(long)]
    no_detrend: bool,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Grid spec JSON.
    #[arg(long, required_unless_present = "paper_grid", conflicts_with = "paper_grid")]
    grid: Option<PathBuf>,
    /// The full 84-scenario design.
    #[arg(long)]
    paper_grid: bool,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Iterations per chain; warmup is half.
    #[arg(long)]
    fit_iters: Option<usize>,
    /// 3 chains × 2,000 iterations with 1,000 warmup.
    #[arg(long)]
    fast: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

/// Process exit status.
pub enum Outcome {
    Ok,
    /// Results written, but some R-hat exceeds 1.01.
    NotConverged,
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::SamplerInit(_)) => 4,
        Some(Error::Factorization { .. } | Error::Singular(_) | Error::NonFinite(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_env("SVR_LOG")
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Fit(a) => fit::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::SamplerInit("x".into()).into()), 4);
        assert_eq!(exit_code(&Error::Config("x".into()).into()), 2);
        assert_eq!(exit_code(&Error::InvalidPanel("x".into()).into()), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), 2);
        assert_eq!(exit_code(&Error::NonFinite("x".into()).into()), 1);
    }
}
