//! Multinomial NUTS transition with the generalized no-U-turn criterion and a diagonal
//! Euclidean metric.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};

use super::adapt::{DualAveraging, RunningVariance, WarmupEvent, WarmupSchedule};
use super::{chain_rng, ChainDraws, FitConfig, LogDensity};
use crate::error::{Error, Result};

const MAX_DELTA_H: f64 = 1000.0;
const INIT_SCALE: f64 = 0.1;
const INIT_ATTEMPTS: usize = 100;

#[derive(Clone, Debug)]
struct State {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

#[derive(Clone, Debug)]
struct Subtree {
    proposal: State,
    log_sum_weight: f64,
    rho: Vec<f64>,
    /// first point built (adjacent to the existing trajectory)
    p_beg: Vec<f64>,
    p_sharp_beg: Vec<f64>,
    /// last point built
    p_end: Vec<f64>,
    p_sharp_end: Vec<f64>,
}

#[derive(Default)]
struct Tally {
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

/// Outcome of one NUTS transition.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Transition {
    pub(crate) accept_stat: f64,
    pub(crate) divergent: bool,
    pub(crate) depth: usize,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// One Markov chain with its private random stream.
pub struct Chain<'a, L: LogDensity> {
    target: &'a L,
    config: FitConfig,
    id: usize,
    rng: ChaCha8Rng,
    inv_metric: Vec<f64>,
    step_size: f64,
    state: State,
}

impl<'a, L: LogDensity> Chain<'a, L> {
    /// Draws an initial point from `N(0, 0.1²)` per coordinate, retrying until the density
    /// is finite.
    pub fn new(target: &'a L, config: &FitConfig, id: usize) -> Result<Self> {
        let dim = target.dim();
        let mut rng = chain_rng(config.seed, id);
        let init = Normal::new(0.0, INIT_SCALE).expect("valid normal");
        let mut grad = vec![0.0; dim];
        for _ in 0..INIT_ATTEMPTS {
            let q: Vec<f64> = (0..dim).map(|_| rng.sample(init)).collect();
            match target.log_density_and_gradient(&q, &mut grad) {
                Ok(lp) if lp.is_finite() && grad.iter().all(|g| g.is_finite()) => {
                    let state = State { q, p: vec![0.0; dim], grad: grad.clone(), logp: lp };
                    return Ok(Self {
                        target,
                        config: config.clone(),
                        id,
                        rng,
                        inv_metric: vec![1.0; dim],
                        step_size: 1.0,
                        state,
                    });
                }
                _ => continue,
            }
        }
        Err(Error::SamplerInit(format!(
            "chain {id}: no finite log density in {INIT_ATTEMPTS} initial draws"
        )))
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(x, m)| x * x * m).sum::<f64>()
    }

    fn hamiltonian(&self, z: &State) -> f64 {
        let h = -z.logp + self.kinetic(&z.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(x, m)| x * m).collect()
    }

    fn sample_momentum(&mut self, z: &mut State) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = self.rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
    }

    fn leapfrog(&self, z: &mut State, eps: f64) {
        let half = 0.5 * eps;
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += half * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        match self.target.log_density_and_gradient(&z.q, &mut z.grad) {
            Ok(lp) if lp.is_finite() => {
                z.logp = lp;
                for (p, g) in z.p.iter_mut().zip(&z.grad) {
                    *p += half * g;
                }
            }
            _ => {
                z.logp = f64::NEG_INFINITY;
            }
        }
    }

    /// Doubles/halves the step size until one leapfrog step crosses acceptance 0.8.
    fn find_reasonable_step_size(&mut self) {
        let start = self.state.clone();
        let log_08 = 0.8f64.ln();
        let mut z = start.clone();
        self.sample_momentum(&mut z);
        let h0 = self.hamiltonian(&z);
        self.leapfrog(&mut z, self.step_size);
        let delta = h0 - self.hamiltonian(&z);
        let direction = if delta > log_08 { 1.0 } else { -1.0 };
        for _ in 0..100 {
            let mut z = start.clone();
            self.sample_momentum(&mut z);
            let h0 = self.hamiltonian(&z);
            self.leapfrog(&mut z, self.step_size);
            let delta = h0 - self.hamiltonian(&z);
            if (direction > 0.0 && !(delta > log_08)) || (direction < 0.0 && !(delta < log_08)) {
                break;
            }
            self.step_size = if direction > 0.0 { self.step_size * 2.0 } else { self.step_size * 0.5 };
            if self.step_size > 1e7 || self.step_size < 1e-12 {
                break;
            }
        }
        self.step_size = self.step_size.clamp(1e-12, 1e7);
    }

    fn build_tree(&mut self, depth: usize, z: &mut State, eps: f64, h0: f64, tally: &mut Tally) -> Option<Subtree> {
        if depth == 0 {
            self.leapfrog(z, eps);
            tally.n_leapfrog += 1;
            let h = self.hamiltonian(z);
            let divergent = h - h0 > MAX_DELTA_H;
            tally.sum_metro_prob += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            if divergent {
                tally.divergent = true;
                return None;
            }
            let ps = self.p_sharp(&z.p);
            return Some(Subtree {
                proposal: z.clone(),
                log_sum_weight: h0 - h,
                rho: z.p.clone(),
                p_beg: z.p.clone(),
                p_sharp_beg: ps.clone(),
                p_end: z.p.clone(),
                p_sharp_end: ps,
            });
        }
        let init = self.build_tree(depth - 1, z, eps, h0, tally)?;
        let last = self.build_tree(depth - 1, z, eps, h0, tally)?;

        let log_sum_weight = log_sum_exp(init.log_sum_weight, last.log_sum_weight);
        let take_last = last.log_sum_weight > log_sum_weight
            || self.rng.random::<f64>() < (last.log_sum_weight - log_sum_weight).exp();
        let rho = add(&init.rho, &last.rho);
        let persist = no_u_turn(&init.p_sharp_beg, &last.p_sharp_end, &rho)
            && no_u_turn(&init.p_sharp_beg, &last.p_sharp_beg, &add(&init.rho, &last.p_beg))
            && no_u_turn(&init.p_sharp_end, &last.p_sharp_end, &add(&last.rho, &init.p_end));
        if !persist {
            return None;
        }
        Some(Subtree {
            proposal: if take_last { last.proposal } else { init.proposal },
            log_sum_weight,
            rho,
            p_beg: init.p_beg,
            p_sharp_beg: init.p_sharp_beg,
            p_end: last.p_end,
            p_sharp_end: last.p_sharp_end,
        })
    }

    pub(crate) fn transition(&mut self) -> Transition {
        let mut z0 = self.state.clone();
        self.sample_momentum(&mut z0);
        let h0 = self.hamiltonian(&z0);

        let ps0 = self.p_sharp(&z0.p);
        // trajectory ends: (p, p♯) at the far left and far right
        let (mut left_p, mut left_ps) = (z0.p.clone(), ps0.clone());
        let (mut right_p, mut right_ps) = (z0.p.clone(), ps0);
        let mut z_left = z0.clone();
        let mut z_right = z0.clone();
        let mut rho = z0.p.clone();
        let mut log_sum_weight = 0.0;
        let mut sample = z0;
        let mut tally = Tally::default();
        let mut depth = 0;

        while depth < self.config.max_tree_depth {
            let forward = self.rng.random::<f64>() > 0.5;
            let sub = if forward {
                self.build_tree(depth, &mut z_right, self.step_size, h0, &mut tally)
            } else {
                self.build_tree(depth, &mut z_left, -self.step_size, h0, &mut tally)
            };
            let Some(sub) = sub else { break };
            depth += 1;

            if sub.log_sum_weight > log_sum_weight
                || self.rng.random::<f64>() < (sub.log_sum_weight - log_sum_weight).exp()
            {
                sample = sub.proposal.clone();
            }
            log_sum_weight = log_sum_exp(log_sum_weight, sub.log_sum_weight);

            let total = add(&rho, &sub.rho);
            let persist = if forward {
                no_u_turn(&left_ps, &sub.p_sharp_end, &total)
                    && no_u_turn(&left_ps, &sub.p_sharp_beg, &add(&rho, &sub.p_beg))
                    && no_u_turn(&right_ps, &sub.p_sharp_end, &add(&sub.rho, &right_p))
            } else {
                no_u_turn(&sub.p_sharp_end, &right_ps, &total)
                    && no_u_turn(&sub.p_sharp_end, &left_ps, &add(&sub.rho, &left_p))
                    && no_u_turn(&sub.p_sharp_beg, &right_ps, &add(&rho, &sub.p_beg))
            };
            rho = total;
            if forward {
                right_p = sub.p_end;
                right_ps = sub.p_sharp_end;
            } else {
                left_p = sub.p_end;
                left_ps = sub.p_sharp_end;
            }
            if !persist {
                break;
            }
        }

        self.state = sample;
        let accept_stat = if tally.n_leapfrog > 0 { tally.sum_metro_prob / tally.n_leapfrog as f64 } else { 0.0 };
        Transition { accept_stat, divergent: tally.divergent, depth }
    }

    /// Warmup followed by `iterations − warmup` recorded transitions.
    pub fn run(&mut self) -> Result<ChainDraws> {
        let dim = self.target.dim();
        let warmup = self.config.warmup;
        let n_draws = self.config.draws_per_chain();
        self.find_reasonable_step_size();
        let mut da = DualAveraging::new(self.config.target_accept, self.step_size);
        let schedule = WarmupSchedule::new(warmup);
        let mut window = RunningVariance::new(dim);
        let mut warmup_divergences = 0;

        for it in 0..warmup {
            let tr = self.transition();
            if tr.divergent {
                warmup_divergences += 1;
            }
            self.step_size = da.update(tr.accept_stat);
            match schedule.event(it) {
                WarmupEvent::Collect => window.push(&self.state.q),
                WarmupEvent::CloseWindow => {
                    window.push(&self.state.q);
                    self.inv_metric = window.regularized_variance();
                    window = RunningVariance::new(dim);
                    self.find_reasonable_step_size();
                    da.restart(self.step_size);
                }
                WarmupEvent::Nothing => {}
            }
        }
        if warmup > 0 {
            if warmup_divergences == warmup {
                return Err(Error::SamplerInit(format!(
                    "chain {}: every warmup transition diverged (final step size {:e})",
                    self.id, self.step_size
                )));
            }
            self.step_size = da.final_step_size();
        }

        let mut out = ChainDraws {
            chain_id: self.id,
            dim,
            draws: Vec::with_capacity(n_draws * dim),
            log_density: Vec::with_capacity(n_draws),
            accept_stat: Vec::with_capacity(n_draws),
            divergent: Vec::with_capacity(n_draws),
            tree_depth: Vec::with_capacity(n_draws),
            step_size: self.step_size,
            inv_metric: self.inv_metric.clone(),
        };
        for _ in 0..n_draws {
            let tr = self.transition();
            out.draws.extend_from_slice(&self.state.q);
            out.log_density.push(self.state.logp);
            out.accept_stat.push(tr.accept_stat);
            out.divergent.push(tr.divergent);
            out.tree_depth.push(tr.depth);
        }
        Ok(out)
    }
}
