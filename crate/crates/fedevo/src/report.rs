//! Run manifests, report files, and seed derivation shared by the CLI
//! subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use fedevo_core::{EvalReport, EvolveConfig, MetricSummary};

/// Everything that determines a run's numeric output. Echoed into every
/// report file so results stay attributable to their settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub dataset: String,
    pub dataset_path: String,
    pub config: EvolveConfig,
    pub kappa_f: f64,
    pub age_percentile: f64,
    pub n_owners: usize,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub out_dir: String,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed for stream `(a, b)` of a base seed.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(base.wrapping_add(a)) ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// One fold's deterministic results; timing lives in [`TimingFile`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub roc_auc: f64,
    pub n_clusters_global: usize,
}

/// Machine-readable classification report; identical manifests produce
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub manifest: RunManifest,
    pub folds: Vec<FoldResult>,
    pub accuracy: MetricSummary,
    pub macro_f1: MetricSummary,
    pub roc_auc: MetricSummary,
    pub clusters: MetricSummary,
}

impl ResultsFile {
    pub fn new(manifest: RunManifest, report: &EvalReport) -> Self {
        let folds = report
            .folds
            .iter()
            .map(|f| FoldResult {
                repeat: f.repeat,
                fold: f.fold,
                accuracy: f.accuracy,
                macro_f1: f.macro_f1,
                roc_auc: f.roc_auc,
                n_clusters_global: f.n_clusters_global,
            })
            .collect();
        ResultsFile {
            manifest,
            folds,
            accuracy: report.accuracy_summary(),
            macro_f1: report.f1_summary(),
            roc_auc: report.auc_summary(),
            clusters: report.clusters_summary(),
        }
    }
}

/// Wall-clock timing, kept apart from the deterministic report because it
/// varies between runs and machines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingFile {
    pub manifest: RunManifest,
    pub note: String,
    pub train_time_per_sample_ms: MetricSummary,
    pub total_seconds: f64,
}

impl TimingFile {
    pub fn new(manifest: RunManifest, report: &EvalReport, total_seconds: f64) -> Self {
        TimingFile {
            manifest,
            note: "wall-clock timing is hardware-dependent and excluded from determinism \
                   comparisons"
                .to_string(),
            train_time_per_sample_ms: report.time_summary(),
            total_seconds,
        }
    }
}

/// Serializes a value as pretty JSON into `path`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("cannot serialize report")?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Human-readable per-fold table with a mean ± std footer.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>6} {:>4} {:>9} {:>9} {:>8} {:>9}",
        "repeat", "fold", "accuracy", "macro-F1", "ROC-AUC", "clusters"
    );
    for f in &report.folds {
        let _ = writeln!(
            out,
            "{:>6} {:>4} {:>9.4} {:>9.4} {:>8.4} {:>9}",
            f.repeat, f.fold, f.accuracy, f.macro_f1, f.roc_auc, f.n_clusters_global
        );
    }
    let acc = report.accuracy_summary();
    let f1 = report.f1_summary();
    let auc = report.auc_summary();
    let clusters = report.clusters_summary();
    let _ = writeln!(out, "accuracy  {:.4} ± {:.4}", acc.mean, acc.std);
    let _ = writeln!(out, "macro-F1  {:.4} ± {:.4}", f1.mean, f1.std);
    let _ = writeln!(out, "ROC-AUC   {:.4} ± {:.4}", auc.mean, auc.std);
    let _ = writeln!(out, "clusters  {:.1} ± {:.1}", clusters.mean, clusters.std);
    out
}
