//! Scalar log-densities and CDFs used by the priors.

use statrs::function::beta::ln_beta;
use statrs::function::erf::erf;
use statrs::function::gamma::{gamma_lr, ln_gamma};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln()) - 0.5 * d * d / var
}

#[inline]
pub fn std_normal_logpdf(x: f64) -> f64 {
    -0.5 * (LN_2PI + x * x)
}

/// Laplace with location 0 and scale `scale`: `exp(−|x|/scale) / (2 scale)`.
#[inline]
pub fn laplace_logpdf(x: f64, scale: f64) -> f64 {
    -(2.0 * scale).ln() - x.abs() / scale
}

/// Normal(0, scale²) folded onto `x ≥ 0`.
#[inline]
pub fn half_normal_logpdf(x: f64, scale: f64) -> f64 {
    std::f64::consts::LN_2 - 0.5 * LN_2PI - scale.ln() - 0.5 * (x / scale).powi(2)
}

#[inline]
pub fn half_normal_cdf(x: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        erf(x / (scale * std::f64::consts::SQRT_2))
    }
}

/// Gamma with shape `shape` and rate `rate`.
#[inline]
pub fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn gamma_cdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(shape, rate * x)
    }
}

#[inline]
pub fn beta_logpdf(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
