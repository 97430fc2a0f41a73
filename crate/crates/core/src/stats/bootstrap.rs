//! Percentile bootstrap and paired bootstrap tests.
//!
//! Resample `r` draws its indices from substream `r` of the master seed, so
//! the parallel loop yields exactly the sequential result.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exact::Interval;
use super::StatsError;
use crate::provenance::substream;

/// Resampling parameters shared by every bootstrap procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl BootstrapConfig {
    pub const DEFAULT_RESAMPLES: usize = 2000;

    pub fn new(seed: u64) -> Self {
        BootstrapConfig { resamples: Self::DEFAULT_RESAMPLES, seed, alpha: 0.05 }
    }

    pub fn with_resamples(mut self, resamples: usize) -> Self {
        self.resamples = resamples;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    fn validate(&self) -> Result<(), StatsError> {
        if self.resamples == 0 {
            return Err(StatsError::Invalid("bootstrap needs at least one resample".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(StatsError::Invalid(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// Case indices of resample `r` over `n` cases.
pub fn resample_indices(n: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut rng = substream(seed, r as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Metric values over all resamples, in resample order.
pub fn bootstrap_distribution<F>(n: usize, cfg: &BootstrapConfig, metric: F) -> Vec<f64>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    (0..cfg.resamples)
        .into_par_iter()
        .map(|r| metric(&resample_indices(n, cfg.seed, r)))
        .collect()
}

/// Nearest-rank percentile of sorted data: element `ceil(q * len)` (1-based).
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((q * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Percentile interval `(alpha/2, 1 - alpha/2)` of a resample distribution.
pub fn percentile_interval(mut values: Vec<f64>, alpha: f64) -> Interval {
    values.sort_by(f64::total_cmp);
    Interval::new(nearest_rank(&values, alpha / 2.0), nearest_rank(&values, 1.0 - alpha / 2.0))
}

/// Percentile bootstrap interval of a case-level metric over `n` cases.
pub fn bootstrap_ci<F>(n: usize, cfg: &BootstrapConfig, metric: F) -> Result<Interval, StatsError>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    cfg.validate()?;
    if n == 0 {
        return Err(StatsError::Empty);
    }
    Ok(percentile_interval(bootstrap_distribution(n, cfg, metric), cfg.alpha))
}

/// Two-sided paired bootstrap p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPValue {
    pub p: f64,
    /// No resample crossed zero; the true p is below `p` (= 2 / B).
    pub floored: bool,
}

impl BootstrapPValue {
    pub fn display(&self, decimals: usize) -> String {
        if self.floored {
            format!("<{:.*}", decimals, self.p)
        } else {
            format!("{:.*}", decimals, self.p)
        }
    }
}

/// Joint resampling of cases; `delta` returns `metric_a - metric_b` on a resample.
///
/// `p = 2 min(frac(delta <= 0), frac(delta >= 0))`, capped at 1. When one
/// side is empty the result is floored at `2 / B`.
pub fn paired_bootstrap_p<F>(n: usize, cfg: &BootstrapConfig, delta: F) -> Result<BootstrapPValue, StatsError>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    cfg.validate()?;
    if n == 0 {
        return Err(StatsError::Empty);
    }
    let deltas = bootstrap_distribution(n, cfg, delta);
    let total = deltas.len() as f64;
    let le = deltas.iter().filter(|d| **d <= 0.0).count();
    let ge = deltas.iter().filter(|d| **d >= 0.0).count();
    let tail = le.min(ge);
    if tail == 0 {
        return Ok(BootstrapPValue { p: 2.0 / total, floored: true });
    }
    Ok(BootstrapPValue { p: (2.0 * tail as f64 / total).min(1.0), floored: false })
}
