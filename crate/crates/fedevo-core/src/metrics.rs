//! Evaluation measures: accuracy, macro-F1, one-vs-rest ROC-AUC, adjusted
//! Rand index, and the per-fold evaluation report.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Fraction of exact matches.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch { left: y_true.len(), right: y_pred.len() });
    }
    if y_true.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// Unweighted mean of per-class F1 scores over all `n_classes` classes; a
/// class absent from both truth and prediction contributes 0.
pub fn macro_f1(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch { left: y_true.len(), right: y_pred.len() });
    }
    if y_true.is_empty() || n_classes == 0 {
        return Err(Error::EmptyInput);
    }
    if let Some(&bad) = y_true.iter().chain(y_pred).find(|&&y| y >= n_classes) {
        return Err(Error::InvalidLabel { label: bad, n_classes });
    }
    let mut tp = vec![0u64; n_classes];
    let mut fp = vec![0u64; n_classes];
    let mut fnn = vec![0u64; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fnn[t] += 1;
        }
    }
    let mut sum = 0.0;
    for m in 0..n_classes {
        let denom = 2 * tp[m] + fp[m] + fnn[m];
        if denom > 0 {
            sum += 2.0 * tp[m] as f64 / denom as f64;
        }
    }
    Ok(sum / n_classes as f64)
}

/// AUC of `scores` against binary labels via the Mann–Whitney rank sum with
/// midrank tie handling; `None` when a side is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    debug_assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; ties share the midrank
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if positive[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Macro one-vs-rest ROC-AUC: per-class AUC of `scores[:][m]` against the
/// class-m indicator, averaged over classes with both positives and
/// negatives present.
pub fn roc_auc_ovr(y_true: &[usize], scores: &[Vec<f64>], n_classes: usize) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::LengthMismatch { left: y_true.len(), right: scores.len() });
    }
    if y_true.is_empty() || n_classes == 0 {
        return Err(Error::EmptyInput);
    }
    for row in scores {
        if row.len() != n_classes {
            return Err(Error::DimensionMismatch { expected: n_classes, found: row.len() });
        }
        if !row.iter().all(|s| s.is_finite()) {
            return Err(Error::NonFiniteSample);
        }
    }
    if let Some(&bad) = y_true.iter().find(|&&y| y >= n_classes) {
        return Err(Error::InvalidLabel { label: bad, n_classes });
    }
    let mut total = 0.0;
    let mut counted = 0;
    for m in 0..n_classes {
        let positive: Vec<bool> = y_true.iter().map(|&y| y == m).collect();
        let col: Vec<f64> = scores.iter().map(|row| row[m]).collect();
        if let Some(auc) = binary_auc(&col, &positive) {
            total += auc;
            counted += 1;
        }
    }
    if counted == 0 {
        return Err(Error::InsufficientData);
    }
    Ok(total / counted as f64)
}

/// Adjusted Rand index between two labelings (values are arbitrary ids).
/// 1 for identical partitions, ~0 for independent ones; degenerate cases
/// where the index is undefined (zero denominator) return 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut cells: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let comb2 = |x: u64| (x * (x - 1) / 2) as f64;
    let index: f64 = cells.values().map(|&v| comb2(v)).sum();
    let sum_rows: f64 = rows.values().map(|&v| comb2(v)).sum();
    let sum_cols: f64 = cols.values().map(|&v| comb2(v)).sum();
    let expected = sum_rows * sum_cols / comb2(a.len() as u64);
    let max_index = 0.5 * (sum_rows + sum_cols);
    let denom = max_index - expected;
    if math::abs(denom) < 1e-12 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// Metrics of one (repeat, fold) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub repeat: usize,
    pub fold: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub roc_auc: f64,
    pub n_clusters_global: usize,
    /// Wall-clock training cost; hardware-dependent, reported but never
    /// part of determinism comparisons.
    pub train_time_per_sample_ms: f64,
}

/// Mean ± sample standard deviation of one measure across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

/// Per-fold metrics in canonical (repeat, fold) order plus mean ± std
/// summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: Vec<FoldMetrics>,
}

impl EvalReport {
    /// Canonicalizes fold order so parallel execution cannot affect output.
    pub fn from_folds(mut folds: Vec<FoldMetrics>) -> Self {
        folds.sort_by_key(|f| (f.repeat, f.fold));
        Self { folds }
    }

    fn summary<F: Fn(&FoldMetrics) -> f64>(&self, get: F) -> MetricSummary {
        let n = self.folds.len();
        if n == 0 {
            return MetricSummary { mean: 0.0, std: 0.0 };
        }
        let mean = self.folds.iter().map(&get).sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            let ss: f64 = self.folds.iter().map(|f| {
                let d = get(f) - mean;
                d * d
            }).sum();
            math::sqrt(ss / (n - 1) as f64)
        };
        MetricSummary { mean, std }
    }

    pub fn accuracy_summary(&self) -> MetricSummary {
        self.summary(|f| f.accuracy)
    }

    pub fn f1_summary(&self) -> MetricSummary {
        self.summary(|f| f.macro_f1)
    }

    pub fn auc_summary(&self) -> MetricSummary {
        self.summary(|f| f.roc_auc)
    }

    pub fn clusters_summary(&self) -> MetricSummary {
        self.summary(|f| f.n_clusters_global as f64)
    }

    pub fn time_summary(&self) -> MetricSummary {
        self.summary(|f| f.train_time_per_sample_ms)
    }
}
