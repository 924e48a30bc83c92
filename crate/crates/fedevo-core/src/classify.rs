//! One-vs-all evolving fuzzy classification.
//!
//! The classifier keeps one evolving model per class; a sample trains only
//! its own class's model, and prediction returns the class whose rule
//! attains the globally highest membership. Per-class/per-feature running
//! statistics feed a Fisher score that can gate uninformative features out
//! before the models ever see them.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{floored_sigma2, EvolveConfig, EvolvingModel};
use crate::math;
use crate::stats::StatsSummary;

/// One-hot class consequent θ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassEncoding {
    theta: Vec<u8>,
}

impl ClassEncoding {
    /// Encoding with a single 1 at `class` in an M-length vector.
    pub fn one_hot(class: usize, n_classes: usize) -> Result<Self> {
        if class >= n_classes {
            return Err(Error::InvalidLabel { label: class, n_classes });
        }
        let mut theta = vec![0u8; n_classes];
        theta[class] = 1;
        Ok(Self { theta })
    }

    pub fn theta(&self) -> &[u8] {
        &self.theta
    }

    /// Position of the 1 — the class this encoding decodes to.
    pub fn class_index(&self) -> usize {
        self.theta.iter().position(|&t| t == 1).expect("one-hot invariant")
    }
}

/// Per-class and global per-feature running statistics for Fisher scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherStats {
    per_class: Vec<StatsSummary>,
    global: StatsSummary,
}

impl FisherStats {
    pub fn new(n_classes: usize, dim: usize) -> Self {
        Self {
            per_class: (0..n_classes).map(|_| StatsSummary::new(dim)).collect(),
            global: StatsSummary::new(dim),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.global.dim()
    }

    #[inline]
    pub fn n_classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn update(&mut self, x: &[f64], y: usize) -> Result<()> {
        if y >= self.n_classes() {
            return Err(Error::InvalidLabel { label: y, n_classes: self.n_classes() });
        }
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        self.per_class[y].update(x);
        self.global.update(x);
        Ok(())
    }

    /// Merges statistics gathered elsewhere (e.g. on another owner's shard).
    pub fn merge(&mut self, other: &FisherStats) -> Result<()> {
        if other.n_classes() != self.n_classes() || other.dim() != self.dim() {
            return Err(Error::IncompatibleSnapshots(alloc::string::String::from(
                "Fisher statistics shapes differ",
            )));
        }
        for (mine, theirs) in self.per_class.iter_mut().zip(&other.per_class) {
            mine.merge(theirs);
        }
        self.global.merge(&other.global);
        Ok(())
    }

    /// Fisher score per feature:
    /// `score_j = Σ_m n_m (μ_{m,j} − μ_j)² / Σ_m n_m σ²_{m,j}`,
    /// denominator floored at 1e−12. Needs at least two classes with two or
    /// more samples each.
    pub fn scores(&self) -> Result<Vec<f64>> {
        let populated = self.per_class.iter().filter(|s| s.count() >= 2).count();
        if populated < 2 {
            return Err(Error::InsufficientData);
        }
        let global_mean = self.global.means();
        let dim = self.dim();
        let mut scores = vec![0.0; dim];
        for j in 0..dim {
            let mut between = 0.0;
            let mut within = 0.0;
            for class in &self.per_class {
                let n = class.count() as f64;
                if n == 0.0 {
                    continue;
                }
                let d = class.means()[j] - global_mean[j];
                between += n * d * d;
                within += n * class.variances()[j];
            }
            scores[j] = between / math::max(within, 1e-12);
        }
        Ok(scores)
    }
}

/// Binary keep-mask from Fisher scores: feature j survives when
/// `score_j ≥ κ_F · max(scores)`. κ_F = 0 keeps everything; if the cut
/// would drop every feature, the single top scorer is kept.
pub fn select_features(scores: &[f64], kappa_f: f64) -> Vec<bool> {
    let max = scores.iter().fold(0.0f64, |a, &b| math::max(a, b));
    let cut = kappa_f * max;
    let mut mask: Vec<bool> = scores.iter().map(|&s| s >= cut).collect();
    if !mask.iter().any(|&m| m) {
        let top = scores
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.partial_cmp(b).expect("finite scores"))
            .map(|(i, _)| i)
            .unwrap_or(0);
        mask[top] = true;
    }
    mask
}

/// σ² source for the per-class models.
#[derive(Debug, Clone)]
enum SigmaMode {
    /// Track variance over all training samples (full dimension).
    Adaptive(StatsSummary),
    /// Externally supplied (e.g. federated round-0 exchange), full dimension.
    Fixed(Vec<f64>),
}

/// One-vs-all evolving classifier: M per-class models with a shared config,
/// a shared feature mask, and one-hot consequents.
///
/// With `kappa_f > 0` the first `warmup` samples are buffered while Fisher
/// statistics accumulate; the mask is then frozen and the buffer replayed
/// through the freshly created per-class models, since changing the active
/// dimension mid-stream would invalidate cluster covariances. With
/// `kappa_f = 0` (default) the all-pass mask is frozen immediately and
/// samples flow straight through.
#[derive(Debug, Clone)]
pub struct EvolvingClassifier {
    config: EvolveConfig,
    dim: usize,
    kappa_f: f64,
    warmup: usize,
    sigma: SigmaMode,
    fisher: FisherStats,
    encodings: Vec<ClassEncoding>,
    mask: Option<Vec<bool>>,
    buffer: Vec<(Vec<f64>, usize, u64)>,
    models: Vec<EvolvingModel>,
    tick: u64,
}

/// Mask warm-up length before the feature mask freezes.
pub const DEFAULT_WARMUP: usize = 50;

impl EvolvingClassifier {
    /// Classifier over `dim` features and `n_classes` classes, with online
    /// σ² tracking, κ_F = 0 and the default warm-up.
    pub fn new(config: EvolveConfig, dim: usize, n_classes: usize) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(Error::InvalidConfig("dimension must be at least 1"));
        }
        if n_classes < 2 {
            return Err(Error::InvalidConfig("need at least two classes"));
        }
        let encodings = (0..n_classes)
            .map(|m| ClassEncoding::one_hot(m, n_classes))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            dim,
            kappa_f: 0.0,
            warmup: DEFAULT_WARMUP,
            sigma: SigmaMode::Adaptive(StatsSummary::new(dim)),
            fisher: FisherStats::new(n_classes, dim),
            encodings,
            mask: None,
            buffer: Vec::new(),
            models: Vec::new(),
            tick: 0,
        })
    }

    /// Sets the Fisher threshold κ_F. Call before training.
    pub fn with_kappa_f(mut self, kappa_f: f64) -> Result<Self> {
        if !(kappa_f >= 0.0) || !kappa_f.is_finite() {
            return Err(Error::InvalidConfig("kappa_f must be non-negative"));
        }
        self.assert_untrained()?;
        self.kappa_f = kappa_f;
        Ok(self)
    }

    /// Sets the mask warm-up length. Call before training.
    pub fn with_warmup(mut self, warmup: usize) -> Result<Self> {
        if warmup == 0 {
            return Err(Error::InvalidConfig("warmup must be at least 1"));
        }
        self.assert_untrained()?;
        self.warmup = warmup;
        Ok(self)
    }

    /// Fixes σ² (full input dimension) instead of tracking it online.
    /// Call before training.
    pub fn with_fixed_sigma(mut self, sigma2: Vec<f64>) -> Result<Self> {
        if sigma2.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: sigma2.len() });
        }
        if !sigma2.iter().all(|&v| v.is_finite() && v > 0.0) {
            return Err(Error::InvalidConfig("sigma2 must be positive"));
        }
        self.assert_untrained()?;
        self.sigma = SigmaMode::Fixed(sigma2);
        Ok(self)
    }

    /// Presets the feature mask (e.g. agreed in a federated round), freezing
    /// it immediately. Call before training.
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        self.assert_untrained()?;
        self.freeze(mask)?;
        Ok(self)
    }

    fn assert_untrained(&self) -> Result<()> {
        if self.tick != 0 {
            return Err(Error::InvalidConfig("classifier is already trained"));
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.encodings.len()
    }

    pub fn config(&self) -> &EvolveConfig {
        &self.config
    }

    pub fn kappa_f(&self) -> f64 {
        self.kappa_f
    }

    #[inline]
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn fisher(&self) -> &FisherStats {
        &self.fisher
    }

    pub fn encodings(&self) -> &[ClassEncoding] {
        &self.encodings
    }

    /// Per-class models; empty until the mask freezes.
    pub fn models(&self) -> &[EvolvingModel] {
        &self.models
    }

    /// The frozen feature mask, if frozen yet.
    pub fn feature_mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    fn masked(&self, x: &[f64]) -> Vec<f64> {
        let mask = self.mask.as_ref().expect("mask frozen");
        x.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).collect()
    }

    /// Current full-dimension σ² estimate (floored, in adaptive mode).
    fn sigma2_full(&self) -> Vec<f64> {
        match &self.sigma {
            SigmaMode::Fixed(s) => s.clone(),
            SigmaMode::Adaptive(stats) => floored_sigma2(&stats.variances()),
        }
    }

    /// Freezes the mask, creates the per-class models in the masked
    /// dimension, and replays any buffered samples (with σ² as estimated at
    /// freeze time).
    fn freeze(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: mask.len() });
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::InvalidConfig("feature mask needs an active feature"));
        }
        let sigma_full = self.sigma2_full();
        let sigma_masked: Vec<f64> = sigma_full
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .collect();
        let mut models = Vec::with_capacity(self.n_classes());
        for class in 0..self.n_classes() {
            let mut model =
                EvolvingModel::with_fixed_sigma(self.config.clone(), sigma_masked.clone())?;
            model.set_class_id(Some(class));
            models.push(model);
        }
        self.models = models;
        self.mask = Some(mask);
        let buffered = core::mem::take(&mut self.buffer);
        for (x, y, tick) in buffered {
            let xm = self.masked(&x);
            self.models[y].process_sample_at(&xm, tick)?;
        }
        Ok(())
    }

    /// Pushes the current σ² estimate into the per-class models (no-op when
    /// nothing changed, e.g. in fixed mode).
    fn refresh_model_sigma(&mut self) -> Result<()> {
        if matches!(self.sigma, SigmaMode::Fixed(_)) {
            return Ok(());
        }
        let mask = self.mask.as_ref().expect("mask frozen");
        let sigma_full = match &self.sigma {
            SigmaMode::Adaptive(stats) => floored_sigma2(&stats.variances()),
            SigmaMode::Fixed(_) => unreachable!(),
        };
        let sigma_masked: Vec<f64> = sigma_full
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .collect();
        for model in &mut self.models {
            model.set_sigma2(sigma_masked.clone())?;
        }
        Ok(())
    }

    /// Feeds one labeled sample: Fisher statistics always update; the sample
    /// then trains the class-`y` model (or the warm-up buffer while the mask
    /// is still open). Other class models are untouched.
    pub fn train_sample(&mut self, x: &[f64], y: usize) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteSample);
        }
        if y >= self.n_classes() {
            return Err(Error::InvalidLabel { label: y, n_classes: self.n_classes() });
        }
        self.tick += 1;
        self.fisher.update(x, y)?;
        if let SigmaMode::Adaptive(stats) = &mut self.sigma {
            stats.update(x);
        }
        if self.mask.is_none() && self.kappa_f == 0.0 {
            self.freeze(vec![true; self.dim])?;
        }
        match self.mask {
            Some(_) => {
                self.refresh_model_sigma()?;
                let xm = self.masked(x);
                self.models[y].process_sample_at(&xm, self.tick)?;
            }
            None => {
                self.buffer.push((x.to_vec(), y, self.tick));
                if self.buffer.len() >= self.warmup {
                    self.freeze_from_fisher()?;
                }
            }
        }
        Ok(())
    }

    /// Trains on all rows in order.
    pub fn fit(&mut self, xs: &[Vec<f64>], ys: &[usize]) -> Result<()> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch { left: xs.len(), right: ys.len() });
        }
        for (x, &y) in xs.iter().zip(ys) {
            self.train_sample(x, y)?;
        }
        self.finalize()
    }

    fn freeze_from_fisher(&mut self) -> Result<()> {
        let mask = match self.fisher.scores() {
            Ok(scores) => select_features(&scores, self.kappa_f),
            // too little data to score → all-pass mask
            Err(Error::InsufficientData) => vec![true; self.dim],
            Err(e) => return Err(e),
        };
        self.freeze(mask)
    }

    /// Freezes the mask if the warm-up never filled (short training sets).
    /// Idempotent; call after the last training sample.
    pub fn finalize(&mut self) -> Result<()> {
        if self.mask.is_none() {
            self.freeze_from_fisher()?;
        }
        Ok(())
    }

    /// Per-class score: the highest membership among that class's rules.
    pub fn predict_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        if self.mask.is_none() {
            return Err(Error::NotFinalized);
        }
        let xm = self.masked(x);
        let mut scores = Vec::with_capacity(self.n_classes());
        for model in &self.models {
            match model.best_match(&xm) {
                Ok((_, gamma)) => scores.push(gamma),
                Err(Error::EmptyModel) => return Err(Error::Untrained),
                Err(e) => return Err(e),
            }
        }
        Ok(scores)
    }

    /// Class of the globally best-matching rule (argmax of
    /// [`predict_scores`](Self::predict_scores); ties break toward the
    /// lowest class index).
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let scores = self.predict_scores(x)?;
        let mut best = 0;
        for (m, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = m;
            }
        }
        Ok(self.encodings[best].class_index())
    }

    /// Prunes every per-class model; returns the total removed.
    pub fn prune(&mut self) -> usize {
        self.models.iter_mut().map(|m| m.prune()).sum()
    }

    /// Reassembles a prediction-ready classifier from per-class models in
    /// the masked space plus the full-dimension mask (Fisher statistics are
    /// not restored).
    pub fn from_parts(
        config: EvolveConfig,
        kappa_f: f64,
        mask: Vec<bool>,
        models: Vec<EvolvingModel>,
        tick: u64,
    ) -> Result<Self> {
        config.validate()?;
        if models.len() < 2 {
            return Err(Error::InvalidConfig("need at least two class models"));
        }
        let active = mask.iter().filter(|&&m| m).count();
        if active == 0 {
            return Err(Error::InvalidConfig("feature mask needs an active feature"));
        }
        for model in &models {
            if model.dim() != active {
                return Err(Error::DimensionMismatch { expected: active, found: model.dim() });
            }
        }
        let n_classes = models.len();
        let dim = mask.len();
        let encodings = (0..n_classes)
            .map(|m| ClassEncoding::one_hot(m, n_classes))
            .collect::<Result<Vec<_>>>()?;
        let sigma2 = models[0].proto().sigma2.clone();
        let mut full_sigma = vec![1.0; dim];
        let mut it = sigma2.iter();
        for (slot, &m) in full_sigma.iter_mut().zip(&mask) {
            if m {
                *slot = *it.next().expect("masked sigma length");
            }
        }
        Ok(Self {
            config,
            dim,
            kappa_f,
            warmup: DEFAULT_WARMUP,
            sigma: SigmaMode::Fixed(full_sigma),
            fisher: FisherStats::new(n_classes, dim),
            encodings,
            mask: Some(mask),
            buffer: Vec::new(),
            models,
            tick,
        })
    }
}
