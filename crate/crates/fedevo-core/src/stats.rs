//! Streaming per-feature statistics with exact parallel combination.
//!
//! Owners accumulate a [`StatsSummary`] over their local shard and exchange
//! only these aggregates; combining them reproduces the whole-data mean and
//! variance without any raw samples changing hands.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature count, mean, and sum of squared deviations (Welford's M2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    count: Vec<u64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl StatsSummary {
    /// Empty summary over `dim` features.
    pub fn new(dim: usize) -> Self {
        Self { count: vec![0; dim], mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Number of accumulated samples (rows are always complete, so every
    /// feature has seen the same count).
    pub fn count(&self) -> u64 {
        self.count.first().copied().unwrap_or(0)
    }

    /// Folds one sample in (Welford's update). Panics if `x` has the wrong
    /// length.
    pub fn update(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim(), "sample dimension mismatch");
        for j in 0..x.len() {
            self.count[j] += 1;
            let delta = x[j] - self.mean[j];
            self.mean[j] += delta / self.count[j] as f64;
            self.m2[j] += delta * (x[j] - self.mean[j]);
        }
    }

    /// Merges another summary in (parallel mean/M2 combination). Exact up to
    /// rounding, associative and commutative. Panics on dimension mismatch.
    pub fn merge(&mut self, other: &StatsSummary) {
        assert_eq!(other.dim(), self.dim(), "summary dimension mismatch");
        for j in 0..self.dim() {
            let (na, nb) = (self.count[j] as f64, other.count[j] as f64);
            if other.count[j] == 0 {
                continue;
            }
            if self.count[j] == 0 {
                self.count[j] = other.count[j];
                self.mean[j] = other.mean[j];
                self.m2[j] = other.m2[j];
                continue;
            }
            let n = na + nb;
            let delta = other.mean[j] - self.mean[j];
            self.mean[j] += delta * nb / n;
            self.m2[j] += other.m2[j] + delta * delta * na * nb / n;
            self.count[j] = self.count[j] + other.count[j];
        }
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased per-feature variances (n−1 denominator); features with
    /// fewer than two samples report 0.
    pub fn variances(&self) -> Vec<f64> {
        self.count
            .iter()
            .zip(&self.m2)
            .map(|(&n, &m2)| if n >= 2 { m2 / (n - 1) as f64 } else { 0.0 })
            .collect()
    }

    /// Checks internal consistency after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.count.len() != self.mean.len() || self.m2.len() != self.mean.len() {
            return Err(Error::LengthMismatch {
                left: self.count.len(),
                right: self.mean.len(),
            });
        }
        if !self.mean.iter().chain(&self.m2).all(|v| v.is_finite()) {
            return Err(Error::NonFiniteSample);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn combines_two_shards_exactly() {
        let mut a = StatsSummary::new(1);
        a.update(&[1.0]);
        a.update(&[2.0]);
        let mut b = StatsSummary::new(1);
        b.update(&[3.0]);
        b.update(&[4.0]);
        a.merge(&b);
        assert_eq!(a.count(), 4);
        assert_relative_eq!(a.means()[0], 2.5);
        assert_relative_eq!(a.m2[0], 5.0);
        assert_relative_eq!(a.variances()[0], 5.0 / 3.0);
    }

    #[test]
    fn empty_summary_is_identity() {
        let mut a = StatsSummary::new(2);
        a.update(&[1.0, -1.0]);
        a.update(&[3.0, 1.0]);
        let before = a.clone();
        a.merge(&StatsSummary::new(2));
        assert_eq!(a, before);

        let mut e = StatsSummary::new(2);
        e.merge(&before);
        assert_eq!(e, before);
    }

    #[test]
    fn merge_order_does_not_matter() {
        let xs: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin() * 5.0).collect();
        let mut whole = StatsSummary::new(1);
        for &x in &xs {
            whole.update(&[x]);
        }
        let mut parts: Vec<StatsSummary> = (0..3)
            .map(|p| {
                let mut s = StatsSummary::new(1);
                for &x in xs.iter().skip(p).step_by(3) {
                    s.update(&[x]);
                }
                s
            })
            .collect();
        let mut acc = parts.remove(2);
        acc.merge(&parts[0]);
        acc.merge(&parts[1]);
        assert_relative_eq!(acc.means()[0], whole.means()[0], epsilon = 1e-12);
        assert_relative_eq!(acc.variances()[0], whole.variances()[0], epsilon = 1e-12);
    }

    #[test]
    fn variance_needs_two_samples() {
        let mut s = StatsSummary::new(1);
        s.update(&[7.0]);
        assert_eq!(s.variances()[0], 0.0);
    }
}
