//! Single-node evolving model lifecycle: activation, incremental update,
//! cluster birth, iterated merging with a size cap, and pruning.
//!
//! The model is built in one pass over the stream. Each sample either updates
//! its best-matching cluster or gives birth to a new one, then merge
//! candidates around the activated cluster are evaluated. Per-feature data
//! variance σ² (the prototype scale) is either tracked online or fixed
//! up front from an external estimate.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use crate::gaussian::DetMode;

use crate::error::{Error, Result};
use crate::gaussian::{log_volume, merge_pair, GaussianCluster, PrototypeSpec};
use crate::linalg::Cholesky;
use crate::math;
use crate::stats::StatsSummary;

/// Evolution hyperparameters.
///
/// `n_sigma = None` means the activation radius defaults to √D, which puts
/// the birth threshold at exp(−1) in every dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    /// Quantization number N_r: prototype covariance is diag(σ²/N_r).
    pub n_r: f64,
    /// Merge overlap threshold κ_m; a pair merges when V_pq/(V_p+V_q) < κ_m^D.
    pub kappa_m: f64,
    /// Minimum sample count κ_n; smaller clusters are pruned as outliers.
    pub kappa_n: u64,
    /// Size cap: merged volume may not exceed κ_v × prototype volume.
    pub kappa_v: f64,
    /// Activation radius N_σ in Mahalanobis units; `None` → √D.
    pub n_sigma: Option<f64>,
    /// Prune clusters idle for more than this many ticks (off by default).
    pub age_limit: Option<u64>,
    /// Pseudo-count weight of the prototype prior in effective covariances.
    pub prior_weight: f64,
    pub det_mode: DetMode,
}

impl EvolveConfig {
    /// Defaults for a given quantization number: κ_m = 1.5, κ_n = 1,
    /// κ_v = 10, N_σ = √D, no age limit, prior weight 1, sqrt-det volumes.
    pub fn new(n_r: f64) -> Self {
        Self {
            n_r,
            kappa_m: 1.5,
            kappa_n: 1,
            kappa_v: 10.0,
            n_sigma: None,
            age_limit: None,
            prior_weight: 1.0,
            det_mode: DetMode::SqrtDet,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.n_r) {
            return Err(Error::InvalidConfig("n_r must be positive"));
        }
        if !pos(self.kappa_m) {
            return Err(Error::InvalidConfig("kappa_m must be positive"));
        }
        if self.kappa_n < 1 {
            return Err(Error::InvalidConfig("kappa_n must be at least 1"));
        }
        if !pos(self.kappa_v) {
            return Err(Error::InvalidConfig("kappa_v must be positive"));
        }
        if let Some(ns) = self.n_sigma {
            if !pos(ns) {
                return Err(Error::InvalidConfig("n_sigma must be positive"));
            }
        }
        if let Some(age) = self.age_limit {
            if age < 1 {
                return Err(Error::InvalidConfig("age_limit must be at least 1"));
            }
        }
        if !(self.prior_weight >= 0.0) || !self.prior_weight.is_finite() {
            return Err(Error::InvalidConfig("prior_weight must be non-negative"));
        }
        Ok(())
    }

    /// Activation radius, defaulting to √D.
    pub fn n_sigma_for(&self, dim: usize) -> f64 {
        self.n_sigma.unwrap_or_else(|| math::sqrt(dim as f64))
    }

    /// Birth/activation threshold exp(−N_σ²/D); a sample whose best
    /// membership does not exceed this births a new cluster. With the √D
    /// default, N_σ² is taken as D exactly, so the threshold is exp(−1)
    /// without a sqrt/square round trip.
    pub fn membership_threshold(&self, dim: usize) -> f64 {
        let ns2 = match self.n_sigma {
            Some(ns) => ns * ns,
            None => dim as f64,
        };
        math::exp(-ns2 / dim as f64)
    }

    /// ln(κ_m^D), kept in log space so high dimensions cannot overflow.
    pub fn ln_merge_threshold(&self, dim: usize) -> f64 {
        dim as f64 * math::ln(self.kappa_m)
    }
}

/// What a processed sample did to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleOutcome {
    /// A new cluster was born with this id.
    Born(u64),
    /// This existing cluster absorbed the sample.
    Updated(u64),
}

impl SampleOutcome {
    pub fn cluster_id(&self) -> u64 {
        match *self {
            SampleOutcome::Born(id) | SampleOutcome::Updated(id) => id,
        }
    }
}

/// Cached Cholesky factor and log-volume of one cluster's effective
/// covariance; dropped whenever the cluster or the prototype changes.
#[derive(Debug, Clone)]
struct Factor {
    chol: Cholesky,
    ln_volume: f64,
}

/// A dynamic set of Gaussian clusters plus prototype statistics and config.
#[derive(Debug, Clone)]
pub struct EvolvingModel {
    config: EvolveConfig,
    proto: PrototypeSpec,
    clusters: Vec<GaussianCluster>,
    factors: Vec<Option<Factor>>,
    /// Running data statistics; `Some` when σ² adapts online.
    sigma_stats: Option<StatsSummary>,
    class_id: Option<usize>,
    tick: u64,
    next_id: u64,
}

impl EvolvingModel {
    /// Empty model that tracks σ² online from the samples it sees.
    pub fn new(config: EvolveConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(Error::InvalidConfig("dimension must be at least 1"));
        }
        let proto = PrototypeSpec::new(vec![1.0; dim], config.n_r)?;
        Ok(Self {
            config,
            proto,
            clusters: Vec::new(),
            factors: Vec::new(),
            sigma_stats: Some(StatsSummary::new(dim)),
            class_id: None,
            tick: 0,
            next_id: 0,
        })
    }

    /// Empty model with σ² fixed up front (e.g. from a federated exchange).
    pub fn with_fixed_sigma(config: EvolveConfig, sigma2: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let proto = PrototypeSpec::new(sigma2, config.n_r)?;
        Ok(Self {
            config,
            proto,
            clusters: Vec::new(),
            factors: Vec::new(),
            sigma_stats: None,
            class_id: None,
            tick: 0,
            next_id: 0,
        })
    }

    /// Reassembles a model from restored state. σ² stays fixed.
    pub fn from_parts(
        config: EvolveConfig,
        proto: PrototypeSpec,
        clusters: Vec<GaussianCluster>,
        tick: u64,
    ) -> Result<Self> {
        config.validate()?;
        proto.validate()?;
        let dim = proto.dim();
        let mut next_id = 0;
        for (i, c) in clusters.iter().enumerate() {
            c.validate()?;
            if c.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: c.dim() });
            }
            if c.last_activation > tick {
                return Err(Error::InvalidConfig("cluster activation is newer than model tick"));
            }
            if clusters[..i].iter().any(|o| o.id == c.id) {
                return Err(Error::InvalidConfig("cluster ids must be unique"));
            }
            next_id = next_id.max(c.id + 1);
        }
        let factors = vec![None; clusters.len()];
        Ok(Self {
            config,
            proto,
            clusters,
            factors,
            sigma_stats: None,
            class_id: None,
            tick,
            next_id,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.proto.dim()
    }

    pub fn config(&self) -> &EvolveConfig {
        &self.config
    }

    pub fn proto(&self) -> &PrototypeSpec {
        &self.proto
    }

    pub fn clusters(&self) -> &[GaussianCluster] {
        &self.clusters
    }

    pub fn cluster(&self, id: u64) -> Option<&GaussianCluster> {
        self.clusters.iter().find(|c| c.id == id)
    }

    #[inline]
    pub fn tick(&self) -> u64 {
        self.tick
    }

    #[inline]
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Class tag stamped on clusters born in this model.
    pub fn class_id(&self) -> Option<usize> {
        self.class_id
    }

    pub(crate) fn set_class_id(&mut self, class_id: Option<usize>) {
        self.class_id = class_id;
    }

    /// Sum of cluster sample counts (absorbed samples; merging preserves it).
    pub fn total_n(&self) -> u64 {
        self.clusters.iter().map(|c| c.n).sum()
    }

    fn index_of(&self, id: u64) -> Option<usize> {
        self.clusters.iter().position(|c| c.id == id)
    }

    fn invalidate_all_factors(&mut self) {
        for f in &mut self.factors {
            *f = None;
        }
    }

    /// Fills the factor cache for cluster `idx`.
    fn ensure_factor(&mut self, idx: usize) -> Result<()> {
        if self.factors[idx].is_some() {
            return Ok(());
        }
        let sigma =
            self.clusters[idx].effective_covariance(&self.proto, self.config.prior_weight)?;
        let chol = sigma.cholesky()?;
        let ln_volume = ln_volume_from(&chol, self.config.det_mode);
        self.factors[idx] = Some(Factor { chol, ln_volume });
        Ok(())
    }

    fn membership_at(&self, idx: usize, x: &[f64]) -> Result<f64> {
        let c = &self.clusters[idx];
        let d2 = match &self.factors[idx] {
            Some(f) => {
                let d: Vec<f64> = x.iter().zip(&c.mu).map(|(a, b)| a - b).collect();
                f.chol.quad_form(&d)
            }
            None => {
                let sigma = c.effective_covariance(&self.proto, self.config.prior_weight)?;
                c.mahalanobis_sq(x, &sigma)?
            }
        };
        Ok(math::exp(-d2 / self.dim() as f64))
    }

    /// Id and membership of the best-matching cluster; ties break toward the
    /// lowest id.
    pub fn best_match(&self, x: &[f64]) -> Result<(u64, f64)> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let mut best: Option<(u64, f64)> = None;
        for idx in 0..self.clusters.len() {
            let gamma = self.membership_at(idx, x)?;
            let id = self.clusters[idx].id;
            let better = match best {
                None => true,
                Some((bid, bg)) => gamma > bg || (gamma == bg && id < bid),
            };
            if better {
                best = Some((id, gamma));
            }
        }
        best.ok_or(Error::EmptyModel)
    }

    /// Processes one sample at the model's own tick counter.
    pub fn process_sample(&mut self, x: &[f64]) -> Result<SampleOutcome> {
        let tick = self.tick + 1;
        self.process_sample_at(x, tick)
    }

    /// Processes one sample at an externally supplied (monotone) tick, so
    /// several per-class models can share one global clock.
    pub fn process_sample_at(&mut self, x: &[f64], tick: u64) -> Result<SampleOutcome> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteSample);
        }
        if tick <= self.tick {
            return Err(Error::InvalidConfig("sample ticks must be increasing"));
        }

        if self.sigma_stats.is_some() {
            self.refresh_adaptive_sigma(x)?;
        }

        // activation test over all clusters, then birth or update
        let mut best: Option<(usize, u64, f64)> = None;
        for idx in 0..self.clusters.len() {
            self.ensure_factor(idx)?;
            let gamma = self.membership_at(idx, x)?;
            let id = self.clusters[idx].id;
            let better = match best {
                None => true,
                Some((_, bid, bg)) => gamma > bg || (gamma == bg && id < bid),
            };
            if better {
                best = Some((idx, id, gamma));
            }
        }
        let threshold = self.config.membership_threshold(self.dim());
        let outcome = match best {
            Some((idx, id, gamma)) if gamma > threshold => {
                self.clusters[idx].absorb(x, tick)?;
                self.factors[idx] = None;
                SampleOutcome::Updated(id)
            }
            _ => {
                let id = self.next_id;
                self.next_id += 1;
                self.clusters.push(GaussianCluster::birth(id, x, tick, self.class_id));
                self.factors.push(None);
                SampleOutcome::Born(id)
            }
        };
        self.tick = tick;

        let pairs = self.candidate_pairs(Some(x));
        self.merge_step(&pairs);
        Ok(outcome)
    }

    /// Re-estimates σ² from the running statistics (floored per
    /// [`floored_sigma2`]) and refreshes the prototype.
    fn refresh_adaptive_sigma(&mut self, x: &[f64]) -> Result<()> {
        let stats = self.sigma_stats.as_mut().expect("adaptive mode");
        stats.update(x);
        let sigma2 = floored_sigma2(&stats.variances());
        self.set_sigma2(sigma2)
    }

    /// Replaces the prototype σ², dropping cached factors if it changed.
    pub(crate) fn set_sigma2(&mut self, sigma2: Vec<f64>) -> Result<()> {
        if sigma2 != self.proto.sigma2 {
            self.proto = PrototypeSpec::new(sigma2, self.config.n_r)?;
            self.invalidate_all_factors();
        }
        Ok(())
    }

    /// Unordered merge-candidate id pairs, class-pure, sorted.
    ///
    /// With `focus = Some(x)` (online mode): all pairs among clusters whose
    /// membership of `x` exceeds the activation threshold. Without focus
    /// (global mode): all pairs where at least one center lies inside the
    /// other cluster's activation region. Clusters whose covariance cannot
    /// be evaluated are skipped.
    pub fn candidate_pairs(&self, focus: Option<&[f64]>) -> Vec<(u64, u64)> {
        let threshold = self.config.membership_threshold(self.dim());
        let mut pairs = Vec::new();
        match focus {
            Some(x) => {
                let mut active: Vec<u64> = Vec::new();
                for idx in 0..self.clusters.len() {
                    if let Ok(gamma) = self.membership_at(idx, x) {
                        if gamma > threshold {
                            active.push(self.clusters[idx].id);
                        }
                    }
                }
                active.sort_unstable();
                for (i, &p) in active.iter().enumerate() {
                    for &q in &active[i + 1..] {
                        if self.classes_agree(p, q) {
                            pairs.push((p, q));
                        }
                    }
                }
            }
            None => {
                for i in 0..self.clusters.len() {
                    for j in (i + 1)..self.clusters.len() {
                        let (p, q) = (&self.clusters[i], &self.clusters[j]);
                        if p.class_id != q.class_id {
                            continue;
                        }
                        let p_in_q = self.membership_at(j, &p.mu).unwrap_or(0.0);
                        let q_in_p = self.membership_at(i, &q.mu).unwrap_or(0.0);
                        if p_in_q > threshold || q_in_p > threshold {
                            pairs.push((p.id.min(q.id), p.id.max(q.id)));
                        }
                    }
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    fn classes_agree(&self, p: u64, q: u64) -> bool {
        match (self.cluster(p), self.cluster(q)) {
            (Some(a), Some(b)) => a.class_id == b.class_id,
            _ => false,
        }
    }

    /// Greedily merges qualifying candidate pairs, smallest overlap ratio
    /// first, re-evaluating after every accepted merge. A pair qualifies
    /// when `V_pq/(V_p+V_q) < κ_m^D` and `V_pq ≤ κ_v · V_proto` (all in log
    /// space). Returns the number of merges performed.
    pub fn merge_step(&mut self, pairs: &[(u64, u64)]) -> usize {
        let ln_cap = match self.proto.log_volume(self.config.det_mode) {
            Ok(v) => math::ln(self.config.kappa_v) + v,
            Err(_) => return 0,
        };
        let ln_threshold = self.config.ln_merge_threshold(self.dim());

        let mut pairs: Vec<(u64, u64)> =
            pairs.iter().map(|&(a, b)| (a.min(b), a.max(b))).filter(|&(a, b)| a != b).collect();
        pairs.sort_unstable();
        pairs.dedup();

        let mut merges = 0;
        loop {
            let mut best: Option<(f64, (u64, u64), GaussianCluster)> = None;
            for &(a, b) in &pairs {
                let (Some(ia), Some(ib)) = (self.index_of(a), self.index_of(b)) else {
                    continue;
                };
                let Some((ln_ratio, ln_vpq, merged)) = self.evaluate_merge(ia, ib) else {
                    continue;
                };
                if ln_ratio < ln_threshold && ln_vpq <= ln_cap {
                    let better = match &best {
                        None => true,
                        Some((br, bp, _)) => {
                            ln_ratio < *br || (ln_ratio == *br && (a, b) < *bp)
                        }
                    };
                    if better {
                        best = Some((ln_ratio, (a, b), merged));
                    }
                }
            }
            let Some((_, (a, b), merged)) = best else { break };
            let ia = self.index_of(a).expect("merged pair exists");
            let ib = self.index_of(b).expect("merged pair exists");
            self.clusters[ia] = merged;
            self.factors[ia] = None;
            self.clusters.remove(ib);
            self.factors.remove(ib);
            for pair in &mut pairs {
                if pair.0 == b {
                    pair.0 = a;
                }
                if pair.1 == b {
                    pair.1 = a;
                }
                *pair = (pair.0.min(pair.1), pair.0.max(pair.1));
            }
            pairs.retain(|&(x, y)| x != y);
            pairs.sort_unstable();
            pairs.dedup();
            merges += 1;
        }
        merges
    }

    /// Hypothetical merge of two clusters by index: log overlap ratio, log
    /// merged volume, and the merged cluster. `None` when not evaluable.
    fn evaluate_merge(&mut self, ia: usize, ib: usize) -> Option<(f64, f64, GaussianCluster)> {
        self.ensure_factor(ia).ok()?;
        self.ensure_factor(ib).ok()?;
        let w = self.config.prior_weight;
        let merged = merge_pair(&self.clusters[ia], &self.clusters[ib], &self.proto, w).ok()?;
        let sigma_m = merged.effective_covariance(&self.proto, w).ok()?;
        let ln_vpq = log_volume(&sigma_m, self.config.det_mode).ok()?;
        let ln_vp = self.factors[ia].as_ref()?.ln_volume;
        let ln_vq = self.factors[ib].as_ref()?.ln_volume;
        Some((ln_vpq - math::log_sum_exp(ln_vp, ln_vq), ln_vpq, merged))
    }

    /// Removes outlier clusters (`n < κ_n`) and, when an age limit is set,
    /// clusters idle longer than the limit. The last remaining cluster of a
    /// class is never removed. Returns the number removed.
    pub fn prune(&mut self) -> usize {
        let kappa_n = self.config.kappa_n;
        let age_limit = self.config.age_limit;
        let tick = self.tick;
        self.retain_clusters(|c| {
            c.n >= kappa_n && age_limit.map_or(true, |lim| c.age(tick) <= lim)
        })
    }

    /// Removes clusters failing `keep`, except that the last cluster of each
    /// class (largest `n`, then lowest id) always survives. Returns the
    /// number removed.
    pub fn retain_clusters<F: Fn(&GaussianCluster) -> bool>(&mut self, keep: F) -> usize {
        let mut marked: Vec<bool> = self.clusters.iter().map(|c| !keep(c)).collect();
        // protect the best marked cluster of any class facing extinction
        let classes: Vec<Option<usize>> = {
            let mut cs: Vec<Option<usize>> = self.clusters.iter().map(|c| c.class_id).collect();
            cs.sort_unstable();
            cs.dedup();
            cs
        };
        for class in classes {
            let members: Vec<usize> = (0..self.clusters.len())
                .filter(|&i| self.clusters[i].class_id == class)
                .collect();
            if !members.is_empty() && members.iter().all(|&i| marked[i]) {
                let &best = members
                    .iter()
                    .min_by_key(|&&i| (core::cmp::Reverse(self.clusters[i].n), self.clusters[i].id))
                    .expect("non-empty members");
                marked[best] = false;
            }
        }
        let mut removed = 0;
        let mut idx = 0;
        self.factors.retain(|_| {
            let drop = marked[idx];
            idx += 1;
            !drop
        });
        let mut idx = 0;
        self.clusters.retain(|_| {
            let drop = marked[idx];
            idx += 1;
            if drop {
                removed += 1;
            }
            !drop
        });
        removed
    }

    /// Processes every row in order (single-pass online learning; the result
    /// depends on row order).
    pub fn fit_stream(&mut self, rows: &[Vec<f64>]) -> Result<()> {
        for row in rows {
            self.process_sample(row)?;
        }
        Ok(())
    }
}

/// Floors non-positive variance estimates to the largest observed feature
/// variance (or 1 when none is positive) so prototype covariances stay
/// positive definite even for constant features or tiny sample counts.
pub(crate) fn floored_sigma2(vars: &[f64]) -> Vec<f64> {
    let vmax = vars.iter().fold(0.0f64, |a, &b| math::max(a, b));
    let fallback = if vmax > 0.0 { vmax } else { 1.0 };
    vars.iter().map(|&v| if v > 0.0 { v } else { fallback }).collect()
}

fn ln_volume_from(chol: &Cholesky, det_mode: DetMode) -> f64 {
    let d = chol.dim() as f64;
    let coef = match det_mode {
        DetMode::SqrtDet => 0.5,
        DetMode::LiteralDet => 1.0,
    };
    math::ln(2.0) + 0.5 * d * math::ln(core::f64::consts::PI)
        - math::ln(d)
        - math::ln_gamma(0.5 * d)
        + coef * chol.log_det()
}
