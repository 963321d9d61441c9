//! Empirical-distribution statistics: ECDF summaries, Kolmogorov–Smirnov
//! distances and p-values, quantiles, correlation.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
}

/// Sup-distance between the ECDF of `sample` and a reference CDF, taking both
/// one-sided gaps at every sample point.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut xs = sample.to_vec();
    xs.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let hi = ((i + 1) as f64 / n - f).abs();
        let lo = (i as f64 / n - f).abs();
        sup = sup.max(hi).max(lo);
    }
    Ok(sup)
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|p, q| p.total_cmp(q));
    ys.sort_unstable_by(|p, q| p.total_cmp(q));
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(sup)
}

/// Survival function of the Kolmogorov distribution,
/// `Q(t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2)`, with the theta-dual form
/// for small `t`.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 0.3 {
        // Dual series: P(K <= t) = sqrt(2*pi)/t * sum exp(-(2k-1)^2 pi^2 / (8 t^2)).
        let mut cdf = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            cdf += (-(m * m) * std::f64::consts::PI * std::f64::consts::PI / (8.0 * t * t)).exp();
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / t;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic one-sample KS p-value for a sample of size `n` with observed
/// distance `d`.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    kolmogorov_sf((n as f64).sqrt() * d)
}

/// Linear-interpolation quantile (type 7) of an unsorted sample.
pub fn quantile(sample: &[f64], q: f64) -> Result<f64, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut xs = sample.to_vec();
    xs.sort_unstable_by(|a, b| a.total_cmp(b));
    Ok(quantile_sorted(&xs, q))
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = h.floor() as usize;
    let frac = h - i as f64;
    if i + 1 < n {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[n - 1]
    }
}

pub fn mean(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

/// Pearson correlation of two equal-length samples.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || a.len() != b.len() {
        return Err(StatsError::EmptySample);
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        let (da, db) = (a[i] - ma, b[i] - mb);
        num += da * db;
        va += da * da;
        vb += db * db;
    }
    Ok(num / (va.sqrt() * vb.sqrt()))
}

/// Chi-square uniformity p-value for counts over equiprobable cells.
pub fn chi_square_uniform_p(counts: &[u64]) -> Result<f64, StatsError> {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    if counts.len() < 2 {
        return Err(StatsError::EmptySample);
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(StatsError::EmptySample);
    }
    let expect = total as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expect;
            d * d / expect
        })
        .sum();
    let df = (counts.len() - 1) as f64;
    let dist = ChiSquared::new(df).expect("df > 0");
    Ok(1.0 - dist.cdf(stat))
}

/// Compact ECDF record kept in experiment summaries.
#[derive(Debug, Clone, Serialize)]
pub struct EcdfSummary {
    pub size: usize,
    pub reference: String,
    pub ks: f64,
    /// (q, value) pairs at the deciles plus extremes.
    pub quantiles: Vec<(f64, f64)>,
}

impl EcdfSummary {
    pub fn against<F: Fn(f64) -> f64>(
        sample: &[f64],
        reference: &str,
        cdf: F,
    ) -> Result<Self, StatsError> {
        let ks = ks_distance(sample, cdf)?;
        let mut xs = sample.to_vec();
        xs.sort_unstable_by(|a, b| a.total_cmp(b));
        let qs = [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0];
        let quantiles = qs
            .iter()
            .map(|&q| (q, quantile_sorted(&xs, q)))
            .collect();
        Ok(EcdfSummary {
            size: sample.len(),
            reference: reference.to_string(),
            ks,
            quantiles,
        })
    }
}
