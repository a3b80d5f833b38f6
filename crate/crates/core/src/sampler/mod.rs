//! No-U-Turn Hamiltonian Monte Carlo with warmup adaptation, plus convergence diagnostics.

mod adapt;
pub mod diagnostics;
mod nuts;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use diagnostics::{ess, ess_multi_chain, rhat};
pub use nuts::Chain;

/// Differentiable log density in unconstrained coordinates.
///
/// Implementations must be callable from several chains at once.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns `log p(x)` and writes `∇ log p(x)` into `grad`. An error (or a non-finite
    /// value) is treated by the sampler as a divergence.
    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64>;
}

impl<F: LogDensity + ?Sized> LogDensity for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        (**self).log_density_and_gradient(x, grad)
    }
}

/// Sampler settings. `iterations` counts warmup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { chains: 3, iterations: 10_000, warmup: 5_000, target_accept: 0.8, max_tree_depth: 10, seed: 20_240_101 }
    }
}

impl FitConfig {
    /// 3 chains of 2,000 iterations with 1,000 warmup.
    pub fn fast() -> Self {
        Self { iterations: 2_000, warmup: 1_000, ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("need at least one chain".into()));
        }
        if self.warmup >= self.iterations {
            return Err(Error::Config(format!(
                "warmup ({}) must be smaller than iterations ({})",
                self.warmup, self.iterations
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must lie in (0, 1)".into()));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::Config("max_tree_depth must be positive".into()));
        }
        Ok(())
    }

    pub fn draws_per_chain(&self) -> usize {
        self.iterations - self.warmup
    }
}

/// Post-warmup output of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainDraws {
    pub chain_id: usize,
    pub dim: usize,
    /// Row-major `(iterations − warmup) × dim` unconstrained draws.
    pub draws: Vec<f64>,
    pub log_density: Vec<f64>,
    pub accept_stat: Vec<f64>,
    pub divergent: Vec<bool>,
    pub tree_depth: Vec<usize>,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
}

impl ChainDraws {
    pub fn n_draws(&self) -> usize {
        self.log_density.len()
    }

    pub fn draw(&self, k: usize) -> &[f64] {
        &self.draws[k * self.dim..(k + 1) * self.dim]
    }

    /// Trace of one coordinate.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        (0..self.n_draws()).map(|k| self.draws[k * self.dim + j]).collect()
    }

    pub fn n_divergent(&self) -> usize {
        self.divergent.iter().filter(|&&d| d).count()
    }
}

/// Mixes a run seed with a tag into a new seed (SplitMix64 finalizer), for independent
/// sub-streams such as per-unit fits or simulation replications.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Posterior summary of one scalar quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub median: f64,
    pub q97_5: f64,
    pub rhat: f64,
    pub ess: f64,
}

/// Convergence and posterior summary of a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSummary {
    pub chains: usize,
    pub draws_per_chain: usize,
    pub divergences: usize,
    pub params: Vec<ParamSummary>,
}

impl SamplerSummary {
    /// Largest R-hat; NaN values (constant quantities) are skipped.
    pub fn max_rhat(&self) -> f64 {
        self.params.iter().map(|p| p.rhat).filter(|r| !r.is_nan()).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.params.iter().map(|p| p.ess).filter(|e| !e.is_nan()).fold(f64::INFINITY, f64::min)
    }
}

/// Summarizes per-chain draws of named quantities. `chains[k]` holds one row per draw.
pub fn summarize(names: &[String], chains: &[Vec<Vec<f64>>], divergences: usize) -> SamplerSummary {
    let draws_per_chain = chains.first().map_or(0, Vec::len);
    let params = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let traces: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|d| d[j]).collect()).collect();
            let pooled: Vec<f64> = traces.iter().flatten().copied().collect();
            let (median, q2_5, q97_5) = crate::stats::median_and_95(&pooled);
            let quiet = pooled.iter().all(|&v| v == pooled[0]);
            ParamSummary {
                name: name.clone(),
                mean: crate::stats::mean(&pooled),
                sd: crate::stats::sd(&pooled),
                q2_5,
                median,
                q97_5,
                rhat: if quiet { f64::NAN } else { rhat(&traces) },
                ess: if quiet { 0.0 } else { ess_multi_chain(&traces) },
            }
        })
        .collect();
    SamplerSummary { chains: chains.len(), draws_per_chain, divergences, params }
}

/// Random stream for one chain: seeded by the run seed, split by chain id.
pub fn chain_rng(seed: u64, chain_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_id as u64 + 1);
    rng
}

/// Runs `config.chains` independent NUTS chains. Results are in chain-id order and depend
/// only on `(config, target)`, never on thread scheduling.
pub fn nuts_fit<L: LogDensity>(target: &L, config: &FitConfig) -> Result<Vec<ChainDraws>> {
    config.validate()?;
    (0..config.chains)
        .into_par_iter()
        .map(|id| {
            let mut chain = Chain::new(target, config, id)?;
            chain.run()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_defaults() {
        let c = FitConfig::default();
        assert_eq!((c.chains, c.iterations, c.warmup), (3, 10_000, 5_000));
        assert_eq!(c.draws_per_chain(), 5_000);
        let f = FitConfig::fast();
        assert_eq!((f.chains, f.iterations, f.warmup), (3, 2_000, 1_000));
    }

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..100).map(|t| derive_seed(7, t)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }

    #[test]
    fn warmup_must_leave_draws() {
        let c = FitConfig { warmup: 10, iterations: 10, ..FitConfig::default() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
