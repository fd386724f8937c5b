//! Sample summaries: effective sample size, weighted moments and
//! Kolmogorov–Smirnov distances.

use crate::error::{Error, Result};

/// Effective sample size of one coordinate of a chain, n / τ, where τ is the
/// integrated autocorrelation time truncated by Geyer's initial monotone
/// sequence. Constant chains report 1; values above n are capped at n.
pub fn compute_ess(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 10 {
        return Err(Error::Invalid(format!("ESS needs at least 10 samples, got {n}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("ESS needs finite values".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centred[..n - lag]
            .iter()
            .zip(&centred[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let c0 = autocov(0);
    if c0 <= f64::EPSILON * mean.abs().max(1.0).powi(2) * 1e-6 || c0 == 0.0 {
        return Ok(1.0);
    }

    // Γ_k = ρ_{2k} + ρ_{2k+1}, summed while positive and forced nonincreasing
    let mut sum_gamma = 0.0;
    let mut prev_gamma = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let rho_even = if k == 0 { 1.0 } else { autocov(2 * k) / c0 };
        let rho_odd = autocov(2 * k + 1) / c0;
        let mut gamma = rho_even + rho_odd;
        if gamma <= 0.0 {
            break;
        }
        gamma = gamma.min(prev_gamma);
        sum_gamma += gamma;
        prev_gamma = gamma;
        k += 1;
    }
    let tau = -1.0 + 2.0 * sum_gamma;
    let n = n as f64;
    if tau <= 0.0 {
        return Ok(n);
    }
    Ok((n / tau).min(n))
}

/// Weighted mean and (biased, normalized-weight) variance.
pub fn weighted_mean_var(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
    let var = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - mean).powi(2))
        .sum::<f64>()
        / total;
    (mean, var)
}

/// Plain mean and unbiased variance.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Weighted mean vector and covariance (normalized weights, no bias
/// correction) of row-vector samples.
pub fn weighted_covariance(samples: &[Vec<f64>], weights: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = samples.first().map_or(0, Vec::len);
    let total: f64 = weights.iter().sum();
    let mut mean = vec![0.0; d];
    for (s, w) in samples.iter().zip(weights) {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += w * x / total;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for (s, w) in samples.iter().zip(weights) {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += w * (s[a] - mean[a]) * (s[b] - mean[b]) / total;
            }
        }
    }
    (mean, cov)
}

/// Unbiased sample covariance of row-vector samples.
pub fn sample_covariance(samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = samples.len() as f64;
    let (_, mut cov) = weighted_covariance(samples, &vec![1.0; samples.len()]);
    if n > 1.0 {
        cov.iter_mut().flatten().for_each(|c| *c *= n / (n - 1.0));
    }
    cov
}

/// sup_x |F_w(x) − F(x)| between the weighted empirical CDF of `values` and
/// a continuous reference CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(values: &[f64], weights: &[f64], cdf: F) -> f64 {
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let x = pairs[i].0;
        let f = cdf(x);
        let before = acc;
        while i < pairs.len() && pairs[i].0 == x {
            acc += pairs[i].1 / total;
            i += 1;
        }
        worst = worst.max((f - before).abs()).max((acc - f).abs());
    }
    worst
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
