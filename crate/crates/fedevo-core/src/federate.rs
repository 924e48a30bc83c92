//! Federated workflow: data partitioning, round-0 statistics exchange,
//! snapshot wire format, and server-side aggregation of owner models.
//!
//! The server-facing surface ([`aggregate`], [`ModelSnapshot`]) accepts only
//! model parameters and summary statistics — raw samples never cross it.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{select_features, EvolvingClassifier, FisherStats};
use crate::error::{Error, Result};
use crate::evolve::{floored_sigma2, EvolveConfig, EvolvingModel};
use crate::gaussian::{GaussianCluster, PrototypeSpec};
use crate::linalg::SquareMat;
use crate::math;
use crate::stats::StatsSummary;

/// Wire-format version accepted by [`ModelSnapshot::from_json`].
pub const FORMAT_VERSION: u32 = 1;

/// Default percentile for server-side age pruning.
pub const DEFAULT_AGE_PERCENTILE: f64 = 95.0;

/// How samples are split across owners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMode {
    IidRandom,
}

/// Disjoint owner shards covering the full training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederatedPartition {
    /// Sample indices per owner, in per-owner training order.
    pub shards: Vec<Vec<usize>>,
    pub seed: u64,
    pub mode: PartitionMode,
}

impl FederatedPartition {
    pub fn n_owners(&self) -> usize {
        self.shards.len()
    }
}

/// Splits `0..n_samples` into `n_owners` uniform random shards whose sizes
/// differ by at most one; deterministic for a given seed.
pub fn partition_data(n_samples: usize, n_owners: usize, seed: u64) -> Result<FederatedPartition> {
    if n_owners == 0 {
        return Err(Error::InvalidConfig("need at least one owner"));
    }
    if n_samples < n_owners {
        return Err(Error::InsufficientData);
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let base = n_samples / n_owners;
    let extra = n_samples % n_owners;
    let mut shards = Vec::with_capacity(n_owners);
    let mut start = 0;
    for k in 0..n_owners {
        let len = base + usize::from(k < extra);
        shards.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(FederatedPartition { shards, seed, mode: PartitionMode::IidRandom })
}

/// Per-feature running statistics of one owner's shard.
pub fn local_stats(shard: &[Vec<f64>]) -> Result<StatsSummary> {
    let dim = shard.first().ok_or(Error::EmptyInput)?.len();
    let mut stats = StatsSummary::new(dim);
    for row in shard {
        if row.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
        }
        if !row.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteSample);
        }
        stats.update(row);
    }
    Ok(stats)
}

/// Exact parallel combination of two summaries (Chan et al. formulas).
pub fn combine_stats(a: &StatsSummary, b: &StatsSummary) -> StatsSummary {
    let mut out = a.clone();
    out.merge(b);
    out
}

/// One cluster in wire form; `sigma_eff` is derived from `scatter` and
/// carried for consumers that want covariances without recomputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSnapshot {
    pub id: u64,
    pub mu: Vec<f64>,
    pub sigma_eff: Vec<Vec<f64>>,
    pub scatter: Vec<Vec<f64>>,
    pub n: u64,
    pub last_activation: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<usize>,
}

/// Serialization-stable wire form of a model exchanged between owner and
/// server; field order is the canonical file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub format_version: u32,
    #[serde(rename = "D")]
    pub dim: usize,
    /// Class count; 0 for pure clustering models.
    #[serde(rename = "M")]
    pub n_classes: usize,
    pub config: EvolveConfig,
    pub proto: PrototypeSpec,
    pub clusters: Vec<ClusterSnapshot>,
    pub owner_id: String,
    pub tick: u64,
}

impl ModelSnapshot {
    /// Captures a model; `n_classes` is 0 for clustering models and the
    /// class count for pooled multi-class models.
    pub fn from_model(model: &EvolvingModel, n_classes: usize, owner_id: &str) -> Result<Self> {
        let clusters = model
            .clusters()
            .iter()
            .map(|c| cluster_snapshot(c, model.proto(), model.config().prior_weight))
            .collect::<Result<Vec<_>>>()?;
        let snap = Self {
            format_version: FORMAT_VERSION,
            dim: model.dim(),
            n_classes,
            config: model.config().clone(),
            proto: model.proto().clone(),
            clusters,
            owner_id: owner_id.to_string(),
            tick: model.tick(),
        };
        snap.validate()?;
        Ok(snap)
    }

    /// Captures a finalized classifier by pooling its per-class models;
    /// cluster ids are renumbered 0.. in (class, id) order so re-serializing
    /// a restored classifier reproduces the same bytes.
    pub fn from_classifier(cls: &EvolvingClassifier, owner_id: &str) -> Result<Self> {
        if cls.feature_mask().is_none() {
            return Err(Error::NotFinalized);
        }
        let models = cls.models();
        let proto = models[0].proto().clone();
        let mut clusters = Vec::new();
        let mut next_id = 0u64;
        for model in models {
            for c in model.clusters() {
                let mut cs = cluster_snapshot(c, &proto, cls.config().prior_weight)?;
                cs.id = next_id;
                next_id += 1;
                clusters.push(cs);
            }
        }
        let snap = Self {
            format_version: FORMAT_VERSION,
            dim: models[0].dim(),
            n_classes: cls.n_classes(),
            config: cls.config().clone(),
            proto,
            clusters,
            owner_id: owner_id.to_string(),
            tick: cls.tick(),
        };
        snap.validate()?;
        Ok(snap)
    }

    /// Rebuilds the model; scatter matrices are re-symmetrized, σ² stays
    /// fixed at the snapshot prototype.
    pub fn into_model(&self) -> Result<EvolvingModel> {
        self.validate()?;
        let clusters = self
            .clusters
            .iter()
            .map(restore_cluster)
            .collect::<Result<Vec<_>>>()?;
        EvolvingModel::from_parts(self.config.clone(), self.proto.clone(), clusters, self.tick)
    }

    /// Rebuilds a prediction-ready classifier over the snapshot's (already
    /// feature-selected) input space from a pooled multi-class snapshot.
    pub fn into_classifier(&self) -> Result<EvolvingClassifier> {
        self.validate()?;
        if self.n_classes < 2 {
            return Err(Error::SnapshotSchema("snapshot has no class structure".to_string()));
        }
        let mut per_class: Vec<Vec<GaussianCluster>> = vec![Vec::new(); self.n_classes];
        for cs in &self.clusters {
            let class = cs.class_id.expect("validated multi-class snapshot");
            per_class[class].push(restore_cluster(cs)?);
        }
        let models = per_class
            .into_iter()
            .enumerate()
            .map(|(m, clusters)| {
                let mut model = EvolvingModel::from_parts(
                    self.config.clone(),
                    self.proto.clone(),
                    clusters,
                    self.tick,
                )?;
                model.set_class_id(Some(m));
                Ok(model)
            })
            .collect::<Result<Vec<_>>>()?;
        EvolvingClassifier::from_parts(
            self.config.clone(),
            0.0,
            vec![true; self.dim],
            models,
            self.tick,
        )
    }

    /// Canonical text encoding: compact JSON with shortest round-trip
    /// float representation.
    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        serde_json::to_string(self).map_err(|e| Error::SnapshotSchema(e.to_string()))
    }

    /// Parses and fully validates a snapshot; no partial state escapes.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::SnapshotSchema(e.to_string()))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            None => {
                return Err(Error::SnapshotSchema(
                    "missing or non-integer format_version".to_string(),
                ));
            }
            Some(found) if found != u64::from(FORMAT_VERSION) => {
                return Err(Error::SnapshotVersion { found: found.min(u32::MAX as u64) as u32 });
            }
            Some(_) => {}
        }
        let snap: ModelSnapshot =
            serde_json::from_value(value).map_err(|e| Error::SnapshotSchema(e.to_string()))?;
        snap.validate()?;
        Ok(snap)
    }

    /// Checks version, dimensions, matrix symmetry, id uniqueness, and
    /// class-id consistency.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::SnapshotVersion { found: self.format_version });
        }
        if self.dim == 0 {
            return Err(Error::SnapshotSchema("dimension must be positive".to_string()));
        }
        self.config.validate()?;
        self.proto.validate()?;
        if self.proto.dim() != self.dim {
            return Err(Error::SnapshotSchema(format!(
                "prototype dimension {} does not match D={}",
                self.proto.dim(),
                self.dim
            )));
        }
        if self.proto.n_r != self.config.n_r {
            return Err(Error::SnapshotSchema(
                "prototype radius disagrees with config".to_string(),
            ));
        }
        for (i, cs) in self.clusters.iter().enumerate() {
            self.validate_cluster(cs)?;
            if self.clusters[..i].iter().any(|o| o.id == cs.id) {
                return Err(Error::SnapshotSchema(format!("duplicate cluster id {}", cs.id)));
            }
        }
        Ok(())
    }

    fn validate_cluster(&self, cs: &ClusterSnapshot) -> Result<()> {
        let fail = |msg: String| Err(Error::SnapshotSchema(msg));
        if cs.mu.len() != self.dim {
            return fail(format!("cluster {}: center has wrong dimension", cs.id));
        }
        if !cs.mu.iter().all(|v| v.is_finite()) {
            return fail(format!("cluster {}: non-finite center", cs.id));
        }
        if cs.n == 0 {
            return fail(format!("cluster {}: sample count must be positive", cs.id));
        }
        if cs.last_activation > self.tick {
            return fail(format!("cluster {}: activation newer than model tick", cs.id));
        }
        for (name, rows) in [("scatter", &cs.scatter), ("sigma_eff", &cs.sigma_eff)] {
            let mat = SquareMat::from_rows(rows)
                .map_err(|_| Error::SnapshotSchema(format!("cluster {}: bad {name} shape", cs.id)))?;
            if mat.dim() != self.dim {
                return fail(format!("cluster {}: {name} has wrong dimension", cs.id));
            }
            if !mat.is_finite() {
                return fail(format!("cluster {}: non-finite {name}", cs.id));
            }
            if mat.max_asymmetry() > 1e-12 * math::max(1.0, mat.max_abs()) {
                return fail(format!("cluster {}: {name} is asymmetric", cs.id));
            }
        }
        match cs.class_id {
            Some(c) if self.n_classes == 0 => {
                fail(format!("cluster {}: class id {c} in a clustering snapshot", cs.id))
            }
            Some(c) if c >= self.n_classes => {
                fail(format!("cluster {}: class id {c} out of range", cs.id))
            }
            None if self.n_classes > 0 => {
                fail(format!("cluster {}: missing class id", cs.id))
            }
            _ => Ok(()),
        }
    }
}

fn cluster_snapshot(
    c: &GaussianCluster,
    proto: &PrototypeSpec,
    prior_weight: f64,
) -> Result<ClusterSnapshot> {
    Ok(ClusterSnapshot {
        id: c.id,
        mu: c.mu.clone(),
        sigma_eff: c.effective_covariance(proto, prior_weight)?.to_rows(),
        scatter: c.scatter.to_rows(),
        n: c.n,
        last_activation: c.last_activation,
        class_id: c.class_id,
    })
}

fn restore_cluster(cs: &ClusterSnapshot) -> Result<GaussianCluster> {
    let mut scatter = SquareMat::from_rows(&cs.scatter)?;
    scatter.symmetrize();
    Ok(GaussianCluster {
        id: cs.id,
        mu: cs.mu.clone(),
        scatter,
        n: cs.n,
        last_activation: cs.last_activation,
        class_id: cs.class_id,
    })
}

/// Concatenates owner snapshots into one model (ids remapped, tick = max
/// owner tick), merges candidate pairs to fixpoint, prunes by support, then
/// removes clusters older than the `age_percentile`-th percentile of ages.
pub fn aggregate(
    snapshots: &[ModelSnapshot],
    server_config: &EvolveConfig,
    age_percentile: f64,
) -> Result<EvolvingModel> {
    let first = snapshots.first().ok_or(Error::EmptyInput)?;
    server_config.validate()?;
    if !(age_percentile > 0.0 && age_percentile <= 100.0) {
        return Err(Error::InvalidConfig("age percentile must be in (0, 100]"));
    }
    for snap in snapshots {
        snap.validate()?;
        for (what, ok) in [
            ("dimension", snap.dim == first.dim),
            ("class count", snap.n_classes == first.n_classes),
            ("config", snap.config == first.config),
            ("prototype", snap.proto == first.proto),
        ] {
            if !ok {
                return Err(Error::IncompatibleSnapshots(format!(
                    "{} disagrees between {} and {}",
                    what, first.owner_id, snap.owner_id
                )));
            }
        }
    }
    let proto = PrototypeSpec::new(first.proto.sigma2.clone(), server_config.n_r)?;
    let tick = snapshots.iter().map(|s| s.tick).max().unwrap_or(0);
    let mut clusters = Vec::new();
    for snap in snapshots {
        for cs in &snap.clusters {
            let mut c = restore_cluster(cs)?;
            c.id = clusters.len() as u64;
            clusters.push(c);
        }
    }
    let mut model = EvolvingModel::from_parts(server_config.clone(), proto, clusters, tick)?;
    loop {
        let pairs = model.candidate_pairs(None);
        if pairs.is_empty() || model.merge_step(&pairs) == 0 {
            break;
        }
    }
    model.prune();
    if model.clusters().len() > 1 {
        let mut ages: Vec<u64> = model.clusters().iter().map(|c| c.age(tick)).collect();
        ages.sort_unstable();
        let rank = math::ceil(age_percentile / 100.0 * ages.len() as f64) as usize;
        let cutoff = ages[rank.saturating_sub(1).min(ages.len() - 1)];
        model.retain_clusters(|c| c.age(tick) <= cutoff);
    }
    Ok(model)
}

/// Knobs of one communication round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub n_owners: usize,
    pub seed: u64,
    pub owner_config: EvolveConfig,
    pub server_config: EvolveConfig,
    pub age_percentile: f64,
    /// Fisher feature-selection fraction for classification rounds.
    pub kappa_f: f64,
}

impl RoundConfig {
    /// Round with `config` used by owners and server alike, default age
    /// percentile, and feature selection off.
    pub fn new(n_owners: usize, seed: u64, config: EvolveConfig) -> Self {
        Self {
            n_owners,
            seed,
            owner_config: config.clone(),
            server_config: config,
            age_percentile: DEFAULT_AGE_PERCENTILE,
            kappa_f: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_owners == 0 {
            return Err(Error::InvalidConfig("need at least one owner"));
        }
        self.owner_config.validate()?;
        self.server_config.validate()?;
        if !(self.age_percentile > 0.0 && self.age_percentile <= 100.0) {
            return Err(Error::InvalidConfig("age percentile must be in (0, 100]"));
        }
        if !(self.kappa_f >= 0.0 && self.kappa_f <= 1.0) {
            return Err(Error::InvalidConfig("feature fraction must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Outcome of one federated clustering round.
#[derive(Debug, Clone)]
pub struct ClusteringRound {
    pub partition: FederatedPartition,
    /// Global per-feature variance fixed by the round-0 exchange.
    pub sigma2: Vec<f64>,
    pub owner_snapshots: Vec<ModelSnapshot>,
    pub global: EvolvingModel,
    pub global_snapshot: ModelSnapshot,
}

/// Outcome of one federated classification round.
#[derive(Debug, Clone)]
pub struct ClassificationRound {
    pub partition: FederatedPartition,
    pub sigma2: Vec<f64>,
    /// Global Fisher feature mask shared by all owners.
    pub mask: Vec<bool>,
    pub owner_snapshots: Vec<ModelSnapshot>,
    pub global_snapshot: ModelSnapshot,
    pub classifier: EvolvingClassifier,
}

/// Shared round-0 exchange: per-shard statistics combined in owner order.
fn exchanged_stats(data: &[Vec<f64>], partition: &FederatedPartition) -> Result<StatsSummary> {
    let dim = data[0].len();
    let mut global = StatsSummary::new(dim);
    for shard in &partition.shards {
        let rows: Vec<Vec<f64>> = shard.iter().map(|&i| data[i].clone()).collect();
        global = combine_stats(&global, &local_stats(&rows)?);
    }
    Ok(global)
}

/// One communication round of federated clustering: statistics exchange,
/// fixed-σ² single-pass local training, snapshot exchange, aggregation.
pub fn run_clustering_round(data: &[Vec<f64>], cfg: &RoundConfig) -> Result<ClusteringRound> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let partition = partition_data(data.len(), cfg.n_owners, cfg.seed)?;
    let sigma2 = floored_sigma2(&exchanged_stats(data, &partition)?.variances());
    let mut owner_snapshots = Vec::with_capacity(cfg.n_owners);
    for (k, shard) in partition.shards.iter().enumerate() {
        let mut model = EvolvingModel::with_fixed_sigma(cfg.owner_config.clone(), sigma2.clone())?;
        for &i in shard {
            model.process_sample(&data[i])?;
        }
        owner_snapshots.push(ModelSnapshot::from_model(&model, 0, &format!("owner-{k}"))?);
    }
    let global = aggregate(&owner_snapshots, &cfg.server_config, cfg.age_percentile)?;
    let global_snapshot = ModelSnapshot::from_model(&global, 0, "server")?;
    Ok(ClusteringRound { partition, sigma2, owner_snapshots, global, global_snapshot })
}

/// One communication round of federated classification; the round-0
/// exchange additionally pools per-owner Fisher statistics into the global
/// feature mask when `kappa_f` > 0.
pub fn run_classification_round(
    data: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    cfg: &RoundConfig,
) -> Result<ClassificationRound> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    if data.len() != labels.len() {
        return Err(Error::LengthMismatch { left: data.len(), right: labels.len() });
    }
    if n_classes < 2 {
        return Err(Error::InvalidConfig("need at least two classes"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::InvalidLabel { label: bad, n_classes });
    }
    let dim = data[0].len();
    let partition = partition_data(data.len(), cfg.n_owners, cfg.seed)?;
    let sigma2 = floored_sigma2(&exchanged_stats(data, &partition)?.variances());
    let mask = if cfg.kappa_f > 0.0 {
        let mut fisher = FisherStats::new(n_classes, dim);
        for shard in &partition.shards {
            let mut local = FisherStats::new(n_classes, dim);
            for &i in shard {
                local.update(&data[i], labels[i])?;
            }
            fisher.merge(&local)?;
        }
        match fisher.scores() {
            Ok(scores) => select_features(&scores, cfg.kappa_f),
            Err(Error::InsufficientData) => vec![true; dim],
            Err(e) => return Err(e),
        }
    } else {
        vec![true; dim]
    };
    let mut owner_snapshots = Vec::with_capacity(cfg.n_owners);
    for (k, shard) in partition.shards.iter().enumerate() {
        let mut cls = EvolvingClassifier::new(cfg.owner_config.clone(), dim, n_classes)?
            .with_fixed_sigma(sigma2.clone())?
            .with_mask(mask.clone())?;
        for &i in shard {
            cls.train_sample(&data[i], labels[i])?;
        }
        owner_snapshots.push(ModelSnapshot::from_classifier(&cls, &format!("owner-{k}"))?);
    }
    let global = aggregate(&owner_snapshots, &cfg.server_config, cfg.age_percentile)?;
    let global_snapshot = ModelSnapshot::from_model(&global, n_classes, "server")?;
    let tick = global.tick();
    let proto = global.proto().clone();
    let mut per_class: Vec<Vec<GaussianCluster>> = vec![Vec::new(); n_classes];
    for c in global.clusters() {
        per_class[c.class_id.expect("aggregated classifier cluster")].push(c.clone());
    }
    let models = per_class
        .into_iter()
        .enumerate()
        .map(|(m, clusters)| {
            let mut model =
                EvolvingModel::from_parts(cfg.owner_config.clone(), proto.clone(), clusters, tick)?;
            model.set_class_id(Some(m));
            Ok(model)
        })
        .collect::<Result<Vec<_>>>()?;
    let classifier =
        EvolvingClassifier::from_parts(cfg.owner_config.clone(), cfg.kappa_f, mask.clone(), models, tick)?;
    Ok(ClassificationRound {
        partition,
        sigma2,
        mask,
        owner_snapshots,
        global_snapshot,
        classifier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn blob(center: &[f64], spread: f64, count: usize) -> Vec<Vec<f64>> {
        // deterministic low-discrepancy offsets, no RNG needed
        (0..count)
            .map(|i| {
                let t = i as f64 / count as f64;
                center
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| c + spread * libm::sin(t * 6.28 + j as f64))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn partition_sizes_and_determinism() {
        let p = partition_data(9, 3, 7).unwrap();
        assert!(p.shards.iter().all(|s| s.len() == 3));
        let p = partition_data(10, 3, 7).unwrap();
        let mut sizes: Vec<usize> = p.shards.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
        let mut all: Vec<usize> = p.shards.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(p, partition_data(10, 3, 7).unwrap());
        assert_ne!(p.shards, partition_data(10, 3, 8).unwrap().shards);
    }

    #[test]
    fn partition_rejects_bad_counts() {
        assert!(partition_data(5, 0, 0).is_err());
        assert!(partition_data(2, 3, 0).is_err());
    }

    #[test]
    fn stats_combine_matches_batch() {
        let a = local_stats(&[vec![1.0], vec![2.0]]).unwrap();
        let b = local_stats(&[vec![3.0], vec![4.0]]).unwrap();
        let ab = combine_stats(&a, &b);
        assert_relative_eq!(ab.means()[0], 2.5, epsilon = 1e-12);
        // M2 = 5 over 4 samples → sample variance 5/3
        assert_relative_eq!(ab.variances()[0], 5.0 / 3.0, epsilon = 1e-12);
        let with_empty = combine_stats(&a, &StatsSummary::new(1));
        assert_eq!(with_empty, a);
    }

    fn trained_model(rows: &[Vec<f64>]) -> EvolvingModel {
        let mut model =
            EvolvingModel::with_fixed_sigma(EvolveConfig::new(1.5), vec![1.0; rows[0].len()])
                .unwrap();
        model.fit_stream(rows).unwrap();
        model
    }

    #[test]
    fn snapshot_round_trip_is_exact_and_byte_stable() {
        let rows = blob(&[0.0, 0.0], 0.5, 12);
        let model = trained_model(&rows);
        let snap = ModelSnapshot::from_model(&model, 0, "owner-0").unwrap();
        let json = snap.to_json().unwrap();
        let back = ModelSnapshot::from_json(&json).unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.to_json().unwrap(), json);
        let restored = back.into_model().unwrap();
        assert_eq!(restored.clusters(), model.clusters());
        assert_eq!(restored.tick(), model.tick());
    }

    #[test]
    fn empty_model_round_trips() {
        let model =
            EvolvingModel::with_fixed_sigma(EvolveConfig::new(1.5), vec![1.0, 1.0]).unwrap();
        let snap = ModelSnapshot::from_model(&model, 0, "owner-0").unwrap();
        let back = ModelSnapshot::from_json(&snap.to_json().unwrap()).unwrap();
        assert!(back.into_model().unwrap().clusters().is_empty());
    }

    #[test]
    fn snapshot_rejects_foreign_version_and_bad_schema() {
        let model =
            EvolvingModel::with_fixed_sigma(EvolveConfig::new(1.5), vec![1.0, 1.0]).unwrap();
        let json = ModelSnapshot::from_model(&model, 0, "owner-0").unwrap().to_json().unwrap();
        let newer = json.replace("\"format_version\":1", "\"format_version\":2");
        assert_eq!(
            ModelSnapshot::from_json(&newer).unwrap_err(),
            Error::SnapshotVersion { found: 2 }
        );
        let corrupt = json.replace("\"tick\":0", "\"tick\":\"zero\"");
        assert!(matches!(
            ModelSnapshot::from_json(&corrupt).unwrap_err(),
            Error::SnapshotSchema(_)
        ));
    }

    #[test]
    fn aggregate_single_snapshot_is_identity() {
        let far: Vec<Vec<f64>> =
            blob(&[0.0, 0.0], 0.3, 8).into_iter().chain(blob(&[50.0, 50.0], 0.3, 8)).collect();
        let model = trained_model(&far);
        let snap = ModelSnapshot::from_model(&model, 0, "owner-0").unwrap();
        let global = aggregate(&[snap], model.config(), DEFAULT_AGE_PERCENTILE).unwrap();
        assert_eq!(global.clusters().len(), model.clusters().len());
        for (g, m) in global.clusters().iter().zip(model.clusters()) {
            assert_eq!(g.mu, m.mu);
            assert_eq!(g.n, m.n);
        }
    }

    #[test]
    fn aggregate_merges_duplicate_owners() {
        let rows = blob(&[1.0, -2.0], 0.4, 20);
        let model = trained_model(&rows);
        let a = ModelSnapshot::from_model(&model, 0, "owner-0").unwrap();
        let b = ModelSnapshot::from_model(&model, 0, "owner-1").unwrap();
        let single = aggregate(&[a.clone()], model.config(), DEFAULT_AGE_PERCENTILE).unwrap();
        let dup = aggregate(&[a, b], model.config(), DEFAULT_AGE_PERCENTILE).unwrap();
        assert!(dup.clusters().len() <= single.clusters().len() + 1);
        // support is conserved through merging
        assert_eq!(dup.total_n(), 2 * model.total_n());
    }

    #[test]
    fn aggregate_keeps_disjoint_regions_apart() {
        let a = trained_model(&blob(&[0.0, 0.0], 0.3, 10));
        let b = trained_model(&blob(&[80.0, 80.0], 0.3, 10));
        let snaps = [
            ModelSnapshot::from_model(&a, 0, "owner-0").unwrap(),
            ModelSnapshot::from_model(&b, 0, "owner-1").unwrap(),
        ];
        let global = aggregate(&snaps, a.config(), DEFAULT_AGE_PERCENTILE).unwrap();
        assert_eq!(global.clusters().len(), a.clusters().len() + b.clusters().len());
    }

    #[test]
    fn aggregate_rejects_mismatched_dimensions() {
        let a = trained_model(&blob(&[0.0, 0.0], 0.3, 8));
        let b = trained_model(&blob(&[0.0, 0.0, 0.0], 0.3, 8));
        let snaps = [
            ModelSnapshot::from_model(&a, 0, "owner-0").unwrap(),
            ModelSnapshot::from_model(&b, 0, "owner-1").unwrap(),
        ];
        let err = aggregate(&snaps, a.config(), DEFAULT_AGE_PERCENTILE).unwrap_err();
        match err {
            Error::IncompatibleSnapshots(msg) => assert!(msg.contains("owner-1")),
            other => panic!("expected incompatibility, got {other:?}"),
        }
    }

    #[test]
    fn aggregate_age_percentile_drops_oldest() {
        // three well-separated singleton-ish clusters with distinct ages
        let mut model =
            EvolvingModel::with_fixed_sigma(EvolveConfig::new(1.5), vec![1.0]).unwrap();
        for (t, x) in [(1u64, 0.0f64), (2, 40.0), (3, 80.0)] {
            model.process_sample_at(&[x], t).unwrap();
        }
        let snap = ModelSnapshot::from_model(&model, 0, "owner-0").unwrap();
        // κ_n = 1 keeps singletons, so only the age cut decides
        let config = EvolveConfig::new(1.5);
        let full = aggregate(&[snap.clone()], &config, 100.0).unwrap();
        assert_eq!(full.clusters().len(), 3);
        let trimmed = aggregate(&[snap], &config, 50.0).unwrap();
        assert_eq!(trimmed.clusters().len(), 2);
        assert!(trimmed.clusters().iter().all(|c| c.age(trimmed.tick()) <= 1));
    }

    #[test]
    fn clustering_round_finds_blobs_deterministically() {
        let data: Vec<Vec<f64>> = blob(&[0.0, 0.0], 0.4, 30)
            .into_iter()
            .chain(blob(&[30.0, 0.0], 0.4, 30))
            .chain(blob(&[0.0, 30.0], 0.4, 30))
            .collect();
        let cfg = RoundConfig::new(3, 42, EvolveConfig::new(1.5));
        let round = run_clustering_round(&data, &cfg).unwrap();
        assert_eq!(round.global.clusters().len(), 3);
        assert_eq!(round.owner_snapshots.len(), 3);
        let again = run_clustering_round(&data, &cfg).unwrap();
        assert_eq!(
            again.global_snapshot.to_json().unwrap(),
            round.global_snapshot.to_json().unwrap()
        );
    }

    #[test]
    fn classification_round_predicts_and_round_trips() {
        let mut data = blob(&[0.0, 0.0], 0.5, 30);
        let mut labels = vec![0usize; 30];
        data.extend(blob(&[25.0, 25.0], 0.5, 30));
        labels.extend(vec![1usize; 30]);
        let cfg = RoundConfig::new(3, 9, EvolveConfig::new(1.5));
        let round = run_classification_round(&data, &labels, 2, &cfg).unwrap();
        for (x, &y) in data.iter().zip(&labels) {
            assert_eq!(round.classifier.predict(x).unwrap(), y);
        }
        // global snapshot restores to a classifier with identical outputs
        let restored = round.global_snapshot.into_classifier().unwrap();
        for x in &data {
            assert_eq!(
                restored.predict_scores(x).unwrap(),
                round.classifier.predict_scores(x).unwrap()
            );
        }
    }
}
