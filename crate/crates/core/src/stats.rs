//! Streaming summaries for Monte Carlo aggregation.
//!
//! Replica workers each fold their observations into a [`RunningMoments`]
//! and the per-worker summaries are merged afterwards. Merging in a fixed
//! order (replica index) makes the aggregate independent of how replicas
//! were scheduled across threads.

use serde::Serialize;

/// Two-sided 95% normal quantile, `Φ⁻¹(0.975)`.
pub const Z_95: f64 = 1.959963984540054;

/// Count, mean, and centred second moment of a stream of observations.
///
/// Uses Welford's update for single observations and Chan's pairwise
/// formula for merges. `merge(a, b)` and `merge(b, a)` agree bit-for-bit,
/// so only the grouping of merges has to be fixed for reproducibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Default for RunningMoments {
    fn default() -> Self {
        Self::new()
    }
}

impl RunningMoments {
    pub fn new() -> Self {
        Self { count: 0, mean: 0.0, m2: 0.0 }
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        // Weighted mean written symmetrically so the merge commutes bitwise.
        self.mean = (na * self.mean + nb * other.mean) / n;
        self.m2 += other.m2 + delta * delta * (na * nb / n);
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then_some(self.mean)
    }

    /// Unbiased sample variance. `None` until two observations exist.
    pub fn variance(&self) -> Option<f64> {
        (self.count > 1).then(|| self.m2 / (self.count - 1) as f64)
    }

    /// Standard error of the mean. `None` until two observations exist.
    pub fn stderr(&self) -> Option<f64> {
        self.variance().map(|v| (v / self.count as f64).sqrt())
    }
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
///
/// Returns `None` when there are no trials. The interval never leaves
/// `[0, 1]` and has nonzero width even at proportions 0 and 1, which is
/// why it is used for coexistence frequencies instead of the Wald
/// interval.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> Option<(f64, f64)> {
    if trials == 0 {
        return None;
    }
    assert!(successes <= trials, "more successes than trials");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let denom = 1.0 + z2 / n;
    // Clamped: rounding can push the raw endpoints one ulp outside [0, 1].
    Some((
        ((centre - half) / denom).clamp(0.0, 1.0),
        ((centre + half) / denom).clamp(0.0, 1.0),
    ))
}
