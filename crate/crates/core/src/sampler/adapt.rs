//! Warmup machinery: dual-averaging step size and windowed diagonal metric estimation.

/// Nesterov dual averaging of `log ε` toward a target acceptance statistic.
#[derive(Clone, Debug)]
pub(crate) struct DualAveraging {
    target: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

const GAMMA: f64 = 0.05;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

impl DualAveraging {
    pub(crate) fn new(target: f64, step_size: f64) -> Self {
        Self { target, mu: (10.0 * step_size).ln(), counter: 0.0, s_bar: 0.0, x_bar: 0.0 }
    }

    pub(crate) fn restart(&mut self, step_size: f64) {
        *self = Self::new(self.target, step_size);
    }

    /// Feeds one acceptance statistic and returns the next step size.
    pub(crate) fn update(&mut self, accept_stat: f64) -> f64 {
        let a = if accept_stat.is_finite() { accept_stat.min(1.0) } else { 0.0 };
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / GAMMA;
        let x_eta = self.counter.powf(-KAPPA);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    /// Step size to freeze once adaptation ends.
    pub(crate) fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Running mean/variance (Welford).
#[derive(Clone, Debug)]
pub(crate) struct RunningVariance {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    pub(crate) fn new(dim: usize) -> Self {
        Self { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub(crate) fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Sample variance shrunk toward `1e-3`, as in the usual windowed adaptation.
    pub(crate) fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|&s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }

    #[cfg(test)]
    pub(crate) fn count(&self) -> usize {
        self.n
    }
}

/// Warmup phases, as fractions of the warmup length: step size only until 15%, a first metric
/// window until 50%, the final metric window over the second half (until 90%), then step size
/// only until the end.
#[derive(Clone, Copy, Debug)]
pub(crate) struct WarmupSchedule {
    first_window_start: usize,
    first_window_end: usize,
    final_window_end: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum WarmupEvent {
    /// Iteration inside a metric window; its draw is accumulated.
    Collect,
    /// Last iteration of a metric window: accumulate, then update the metric.
    CloseWindow,
    Nothing,
}

impl WarmupSchedule {
    pub(crate) fn new(warmup: usize) -> Self {
        let first_window_start = (warmup as f64 * 0.15).round() as usize;
        let first_window_end = warmup / 2;
        let final_window_end = (warmup as f64 * 0.9).round() as usize;
        Self { first_window_start, first_window_end, final_window_end }
    }

    /// Whether metric adaptation is possible at all (windows need a handful of draws).
    fn adapts_metric(&self) -> bool {
        self.first_window_end >= self.first_window_start + 10
            && self.final_window_end >= self.first_window_end + 10
    }

    pub(crate) fn event(&self, iteration: usize) -> WarmupEvent {
        if !self.adapts_metric() || iteration >= self.final_window_end {
            return WarmupEvent::Nothing;
        }
        if iteration + 1 == self.first_window_end || iteration + 1 == self.final_window_end {
            WarmupEvent::CloseWindow
        } else if iteration >= self.first_window_start {
            WarmupEvent::Collect
        } else {
            WarmupEvent::Nothing
        }
    }
}
