//! Split R-hat and effective sample size.

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split-chain potential scale reduction factor. Each chain is cut into two halves (the middle
/// draw is dropped for odd lengths). Returns NaN, with a warning, when every half is the same
/// constant or there are fewer than two draws per half; constant halves at different values
/// give infinity.
pub fn rhat(chains: &[Vec<f64>]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let n = c.len() / 2;
        halves.push(&c[..n]);
        halves.push(&c[c.len() - n..]);
    }
    let n = halves.first().map_or(0, |h| h.len());
    if n < 2 || halves.iter().any(|h| h.len() != n) || halves.iter().flat_map(|h| h.iter()).any(|v| !v.is_finite()) {
        log::warn!("R-hat undefined: need finite, equal-length chains with at least 4 draws");
        return f64::NAN;
    }
    let m = halves.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = nf / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves.iter().map(|h| sample_var(h)).sum::<f64>() / m;
    if !(w > 0.0) {
        if b > 0.0 {
            // constant chains stuck at different values
            return f64::INFINITY;
        }
        log::warn!("R-hat undefined: zero within-chain variance");
        return f64::NAN;
    }
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    (var_plus / w).sqrt()
}

/// Effective sample size of a single trace.
pub fn ess(x: &[f64]) -> f64 {
    ess_multi_chain(&[x.to_vec()])
}

/// Effective sample size pooled over chains (Geyer's initial positive, monotone sequence
/// estimator on the combined autocorrelation). Capped at ten times the number of draws. A
/// constant trace yields 0 with a warning.
pub fn ess_multi_chain(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    if m == 0 {
        return 0.0;
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 4 {
        log::warn!("ESS undefined for fewer than 4 draws per chain");
        return f64::NAN;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    if chains.iter().flat_map(|c| c.iter()).any(|v| !v.is_finite()) {
        log::warn!("ESS undefined for non-finite draws");
        return f64::NAN;
    }
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| sample_var(c)).sum::<f64>() / m as f64;
    if !(w > 0.0) {
        log::warn!("ESS of a constant trace is reported as 0");
        return 0.0;
    }
    let b_over_n = if m > 1 { sample_var(&means) } else { 0.0 };
    let var_plus = w * (nf - 1.0) / nf + b_over_n;

    // mean over chains of the biased lag-t autocovariance
    let acov = |t: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, mu)| (0..n - t).map(|i| (c[i] - mu) * (c[i + t] - mu)).sum::<f64>() / nf)
            .sum::<f64>()
            / m as f64
    };
    let rho_at = |t: usize| 1.0 - (w - acov(t)) / var_plus;

    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    rho[1] = rho_at(1);
    let mut even = rho[0];
    let mut odd = rho[1];
    let mut t = 1;
    while t + 2 < n && even + odd > 0.0 {
        even = rho_at(t + 1);
        odd = rho_at(t + 2);
        if even + odd >= 0.0 {
            rho[t + 1] = even;
            rho[t + 2] = odd;
        }
        t += 2;
    }
    let max_t = t;
    // enforce a monotone sequence of pair sums
    let mut k = 1;
    while k + 4 <= max_t {
        let cur = rho[k + 1] + rho[k + 2];
        let prev = rho[k - 1] + rho[k];
        if cur > prev {
            rho[k + 1] = prev / 2.0;
            rho[k + 2] = prev / 2.0;
        }
        k += 2;
    }
    let tail = if max_t + 1 < n { rho[max_t + 1] } else { 0.0 };
    let tau = -1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + tail;
    let total = (m * n) as f64;
    if tau > 0.0 {
        (total / tau).min(10.0 * total)
    } else {
        10.0 * total
    }
}
