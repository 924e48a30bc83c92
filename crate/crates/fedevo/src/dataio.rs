//! CSV dataset loading with one-hot encoding, z-score normalization, and
//! stratified k-fold splitting.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use fedevo_core::StatsSummary;

/// In-memory dataset: rows, optional labels in `[0, M)`, and the names
/// behind both.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub x: Vec<Vec<f64>>,
    pub y: Option<Vec<usize>>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    /// Rows dropped for missing or non-finite values.
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Labels, or an error for unlabeled data.
    pub fn labels(&self) -> Result<&[usize]> {
        self.y.as_deref().context("dataset has no label column")
    }
}

/// Which column holds the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl LabelColumn {
    /// Parses a CLI-style reference: a number is an index, anything else a
    /// header name.
    pub fn parse(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "?"
}

fn parse_numeric(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Loads a CSV file. Numeric columns become single features; categorical
/// columns are one-hot encoded (categories in first-appearance order); the
/// label column, if named, is factorized to `[0, M)` the same way. Rows
/// with missing or non-finite cells are dropped and counted.
pub fn load_csv(path: &Path, has_header: bool, label: Option<&LabelColumn>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let header: Vec<String> = if has_header {
        reader.headers()?.iter().map(str::to_string).collect()
    } else {
        Vec::new()
    };
    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for record in reader.records() {
        rows.push(record.with_context(|| format!("malformed row in {}", path.display()))?);
    }
    if rows.is_empty() {
        bail!("{} contains no data rows", path.display());
    }
    let n_cols = rows[0].len();
    let column_name = |c: usize| -> String {
        header.get(c).cloned().unwrap_or_else(|| format!("col{c}"))
    };
    let label_col = match label {
        None => None,
        Some(LabelColumn::Index(i)) => {
            if *i >= n_cols {
                bail!("label column index {i} out of range ({n_cols} columns)");
            }
            Some(*i)
        }
        Some(LabelColumn::Name(name)) => Some(
            header
                .iter()
                .position(|h| h == name)
                .with_context(|| format!("no column named {name:?} in {}", path.display()))?,
        ),
    };

    // drop incomplete rows before typing the columns
    let total = rows.len();
    rows.retain(|r| !r.iter().any(is_missing));
    let mut kept: Vec<&csv::StringRecord> = rows.iter().collect();
    let numeric_col: Vec<bool> = (0..n_cols)
        .map(|c| kept.iter().all(|r| parse_numeric(&r[c]).is_some()))
        .collect();
    // a numeric cell that parses to inf/nan is treated as missing too
    kept.retain(|r| {
        (0..n_cols).all(|c| !numeric_col[c] || parse_numeric(&r[c]).is_some())
    });
    let dropped_rows = total - kept.len();
    if kept.is_empty() {
        bail!("{} has no complete rows", path.display());
    }

    // categorical vocabularies in first-appearance order
    let mut vocab: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for c in 0..n_cols {
        if Some(c) == label_col || numeric_col[c] {
            continue;
        }
        let seen = vocab.entry(c).or_default();
        for r in &kept {
            let v = r[c].trim();
            if !seen.iter().any(|s| s == v) {
                seen.push(v.to_string());
            }
        }
    }
    let mut feature_names = Vec::new();
    for c in 0..n_cols {
        if Some(c) == label_col {
            continue;
        }
        if numeric_col[c] {
            feature_names.push(column_name(c));
        } else {
            for v in &vocab[&c] {
                feature_names.push(format!("{}={}", column_name(c), v));
            }
        }
    }

    let mut class_names: Vec<String> = Vec::new();
    let mut x = Vec::with_capacity(kept.len());
    let mut y = label_col.map(|_| Vec::with_capacity(kept.len()));
    for r in &kept {
        let mut row = Vec::with_capacity(feature_names.len());
        for c in 0..n_cols {
            if Some(c) == label_col {
                continue;
            }
            if numeric_col[c] {
                row.push(parse_numeric(&r[c]).expect("checked numeric"));
            } else {
                let v = r[c].trim();
                for name in &vocab[&c] {
                    row.push(if name == v { 1.0 } else { 0.0 });
                }
            }
        }
        x.push(row);
        if let (Some(ys), Some(lc)) = (&mut y, label_col) {
            let v = r[lc].trim();
            let idx = match class_names.iter().position(|s| s == v) {
                Some(i) => i,
                None => {
                    class_names.push(v.to_string());
                    class_names.len() - 1
                }
            };
            ys.push(idx);
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    Ok(Dataset { name, x, y, feature_names, class_names, dropped_rows })
}

/// Z-scores every row with the given (training-fold) statistics using the
/// n−1 standard deviation; zero-variance features are dropped. Returns the
/// transformed rows and the indices of dropped features.
pub fn zscore(x: &[Vec<f64>], stats: &StatsSummary) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let means = stats.means();
    let vars = stats.variances();
    let keep: Vec<usize> = (0..stats.dim()).filter(|&j| vars[j] > 0.0).collect();
    if keep.is_empty() {
        bail!("all features are constant");
    }
    let dropped: Vec<usize> = (0..stats.dim()).filter(|&j| vars[j] <= 0.0).collect();
    let stds: Vec<f64> = keep.iter().map(|&j| vars[j].sqrt()).collect();
    let out = x
        .iter()
        .map(|row| {
            keep.iter()
                .zip(&stds)
                .map(|(&j, sd)| (row[j] - means[j]) / sd)
                .collect()
        })
        .collect();
    Ok((out, dropped))
}

/// K disjoint (train, test) index pairs covering `0..n`; stratified by
/// label when possible.
#[derive(Debug, Clone)]
pub struct KFold {
    pub folds: Vec<(Vec<usize>, Vec<usize>)>,
    /// False when a class was too small and the split fell back to an
    /// unstratified shuffle.
    pub stratified: bool,
}

/// Splits `0..n` into `k` cross-validation folds, deterministically for a
/// given seed. With labels, folds are stratified unless some class has
/// fewer than `k` members (unstratified fallback).
pub fn kfold_split(n: usize, k: usize, seed: u64, labels: Option<&[usize]>) -> Result<KFold> {
    if k < 2 {
        bail!("need at least 2 folds");
    }
    if n < k {
        bail!("cannot split {n} samples into {k} folds");
    }
    if let Some(ys) = labels {
        anyhow::ensure!(ys.len() == n, "have {n} samples but {} labels", ys.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_sets: Vec<Vec<usize>> = vec![Vec::new(); k];
    let stratified = match labels {
        Some(ys) => {
            let n_classes = ys.iter().max().map_or(0, |&m| m + 1);
            let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
            for (i, &y) in ys.iter().enumerate() {
                per_class[y].push(i);
            }
            if per_class.iter().any(|c| !c.is_empty() && c.len() < k) {
                false
            } else {
                for (class, members) in per_class.iter_mut().enumerate() {
                    members.shuffle(&mut rng);
                    for (i, &idx) in members.iter().enumerate() {
                        test_sets[(i + class) % k].push(idx);
                    }
                }
                true
            }
        }
        None => false,
    };
    if !stratified {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for (i, &idx) in order.iter().enumerate() {
            test_sets[i % k].push(idx);
        }
    }
    let folds = test_sets
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; n];
            for &i in &test {
                in_test[i] = true;
            }
            let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
            (train, test)
        })
        .collect();
    Ok(KFold { folds, stratified })
}

/// One entry of `data/manifest.json`.
#[derive(Debug, Clone, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: String,
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub sha256: String,
    pub source: String,
}

/// The bundled-dataset registry.
#[derive(Debug, Clone, Deserialize)]
pub struct DataManifest {
    pub datasets: BTreeMap<String, ManifestEntry>,
}

/// Reads `manifest.json` from the data directory.
pub fn load_manifest(data_dir: &Path) -> Result<DataManifest> {
    let path = data_dir.join("manifest.json");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("bad manifest {}", path.display()))
}

/// Loads a bundled dataset by manifest name, verifying its checksum.
pub fn load_named(data_dir: &Path, name: &str) -> Result<Dataset> {
    let manifest = load_manifest(data_dir)?;
    let entry = manifest.datasets.get(name).with_context(|| {
        format!(
            "dataset {name:?} is not bundled (available: {})",
            manifest.datasets.keys().cloned().collect::<Vec<_>>().join(", ")
        )
    })?;
    let path = data_dir.join(&entry.file);
    let bytes =
        fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let digest = format!("{:x}", Sha256::digest(&bytes));
    anyhow::ensure!(
        digest == entry.sha256,
        "checksum mismatch for {} (expected {}, found {digest})",
        path.display(),
        entry.sha256
    );
    let mut ds = load_csv(&path, true, Some(&LabelColumn::Name(entry.label.clone())))?;
    ds.name = name.to_string();
    anyhow::ensure!(
        ds.n() == entry.n && ds.dim() == entry.d && ds.n_classes() == entry.classes,
        "{name} does not match its manifest shape"
    );
    Ok(ds)
}

/// Resolves a dataset reference: a bundled name first, else a CSV path
/// (label column `class` if present in the header).
pub fn resolve_dataset(data_dir: &Path, name_or_path: &str) -> Result<Dataset> {
    if let Ok(manifest) = load_manifest(data_dir) {
        if manifest.datasets.contains_key(name_or_path) {
            return load_named(data_dir, name_or_path);
        }
    }
    let path = PathBuf::from(name_or_path);
    if !path.exists() {
        bail!("{name_or_path:?} is neither a bundled dataset nor an existing file");
    }
    let head = fs::File::open(&path)
        .and_then(|f| {
            let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(f);
            Ok(rdr.headers()?.clone())
        })
        .with_context(|| format!("cannot read {}", path.display()))?;
    let label = head
        .iter()
        .any(|h| h == "class")
        .then(|| LabelColumn::Name("class".to_string()));
    load_csv(&path, true, label.as_ref())
}

/// Empirically tuned per-dataset initial radii from `tuned_nr.json`.
pub fn tuned_nr(data_dir: &Path, name: &str) -> Option<f64> {
    let text = fs::read_to_string(data_dir.join("tuned_nr.json")).ok()?;
    let table: serde_json::Value = serde_json::from_str(&text).ok()?;
    table.get("n_r")?.get(name)?.as_f64()
}
