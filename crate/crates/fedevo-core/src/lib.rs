//! Self-evolving Gaussian clustering with federated model aggregation.
//!
//! The building block is a Gaussian cluster (mean, scatter matrix, sample
//! count) acting as a fuzzy rule antecedent. Models grow by spawning new
//! clusters when a sample activates nothing, shrink by merging overlapping
//! clusters and pruning stale ones, and learn in a single pass over the
//! data. Because a cluster pair can be merged from its parameters alone,
//! locally trained models can be combined on a server that never sees raw
//! samples.
//!
//! Module map:
//!
//! - [`gaussian`]: per-cluster math — membership, incremental statistics,
//!   ellipsoid volumes, pairwise merging.
//! - [`evolve`]: the single-node model lifecycle (activate/update/birth,
//!   merge, prune).
//! - [`classify`]: one-vs-all evolving classifier with Fisher-score
//!   feature gating.
//! - [`federate`]: data partitioning, parameter snapshots, server-side
//!   aggregation, round orchestration.
//! - [`metrics`]: accuracy, macro-F1, one-vs-rest ROC-AUC, ARI.
//!
//! The crate is `no_std`-compatible (requires `alloc`); disable the
//! default `std` feature for embedded use. File formats, dataset loading
//! and the command-line front-end live in the companion `fedevo` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_debug_implementations)]

extern crate alloc;

mod error;
mod math;

pub mod classify;
pub mod evolve;
pub mod federate;
pub mod gaussian;
pub mod linalg;
pub mod metrics;
pub mod stats;

pub use classify::{select_features, ClassEncoding, EvolvingClassifier, FisherStats};
pub use error::{Error, Result};
pub use evolve::{DetMode, EvolveConfig, EvolvingModel, SampleOutcome};
pub use federate::{
    aggregate, combine_stats, local_stats, partition_data, run_classification_round,
    run_clustering_round, ClassificationRound, ClusteringRound, FederatedPartition,
    ModelSnapshot, RoundConfig,
};
pub use gaussian::{GaussianCluster, PrototypeSpec};
pub use metrics::{EvalReport, FoldMetrics, MetricSummary};
pub use stats::StatsSummary;
