//! Latency statistics.
//!
//! Percentiles use the nearest-rank definition: the p-th percentile of `n`
//! samples is the value at rank `ceil(p / 100 * n)` (1-based) of the sorted
//! samples. Ranks are located with a selection pass rather than a full sort.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

/// 1-based nearest rank for percentile `p` over `n` samples.
pub fn nearest_rank(p: f64, n: usize) -> usize {
    let rank = (p / 100.0 * n as f64).ceil() as usize;
    rank.clamp(1, n.max(1))
}

/// Nearest-rank percentile; reorders `samples` in place.
pub fn percentile(samples: &mut [f64], p: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let idx = nearest_rank(p, samples.len()) - 1;
    let (_, value, _) = samples.select_nth_unstable_by(idx, f64::total_cmp);
    Some(*value)
}

/// Mean, p50/p95/p99 and max of `samples`; `None` when empty.
pub fn distribution(samples: &[f64]) -> Option<Distribution> {
    if samples.is_empty() {
        return None;
    }
    let mut work = samples.to_vec();
    let mean = work.iter().sum::<f64>() / work.len() as f64;
    let max = work.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(Distribution {
        count: work.len(),
        mean,
        p50: percentile(&mut work, 50.0)?,
        p95: percentile(&mut work, 95.0)?,
        p99: percentile(&mut work, 99.0)?,
        max,
    })
}
