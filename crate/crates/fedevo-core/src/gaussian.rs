//! Gaussian cluster representation and per-cluster mathematics.
//!
//! A cluster is an incrementally maintained Gaussian: center `mu`, scatter
//! matrix `S` (sum of outer products of deviations, so the sample covariance
//! is `S/(n−1)`), sample count `n`, and age bookkeeping. Storing scatter
//! rather than covariance keeps the per-sample update exact; covariance is
//! derived on demand, blended with a diagonal prototype prior so it stays
//! invertible at every `n`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SquareMat;
use crate::math;

/// How the determinant enters the hyperellipsoid volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetMode {
    /// `det(Σ)^{1/2}` — the geometrically correct ellipsoid volume (default).
    #[default]
    SqrtDet,
    /// `det(Σ)` taken literally — compatibility mode.
    LiteralDet,
}

/// Global per-feature variance estimate σ² and quantization number N_r;
/// newborn clusters start with covariance `diag(σ²/N_r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSpec {
    pub sigma2: Vec<f64>,
    pub n_r: f64,
}

impl PrototypeSpec {
    pub fn new(sigma2: Vec<f64>, n_r: f64) -> Result<Self> {
        let spec = Self { sigma2, n_r };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma2.is_empty() {
            return Err(Error::InvalidConfig("prototype needs at least one feature"));
        }
        if !self.sigma2.iter().all(|&v| v.is_finite() && v > 0.0) {
            return Err(Error::InvalidConfig("prototype variances must be positive"));
        }
        if !(self.n_r > 0.0) || !self.n_r.is_finite() {
            return Err(Error::InvalidConfig("quantization number must be positive"));
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.sigma2.len()
    }

    /// Per-feature prototype variances σ²/N_r.
    pub fn diagonal(&self) -> Vec<f64> {
        self.sigma2.iter().map(|&v| v / self.n_r).collect()
    }

    /// Prototype covariance `diag(σ²/N_r)` as a matrix.
    pub fn covariance(&self) -> SquareMat {
        SquareMat::from_diag(&self.diagonal())
    }

    /// Log-volume of the prototype ellipsoid (reference size for merge caps).
    pub fn log_volume(&self, det_mode: DetMode) -> Result<f64> {
        log_volume(&self.covariance(), det_mode)
    }
}

/// One evolving Gaussian cluster (fuzzy rule).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCluster {
    pub id: u64,
    pub mu: Vec<f64>,
    /// Scatter matrix S = Σ (x−μ)(x−μ)ᵀ over absorbed samples; zero at n = 1.
    pub scatter: SquareMat,
    pub n: u64,
    /// Global sample tick of the most recent update.
    pub last_activation: u64,
    /// Class tag in one-vs-all classification; `None` in pure clustering.
    pub class_id: Option<usize>,
}

impl GaussianCluster {
    /// Newborn cluster centered on a single sample.
    pub fn birth(id: u64, x: &[f64], tick: u64, class_id: Option<usize>) -> Self {
        Self {
            id,
            mu: x.to_vec(),
            scatter: SquareMat::zeros(x.len()),
            n: 1,
            last_activation: tick,
            class_id,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Time since the cluster last absorbed a sample.
    #[inline]
    pub fn age(&self, tick: u64) -> u64 {
        tick.saturating_sub(self.last_activation)
    }

    /// Checks structural invariants (used when accepting deserialized state).
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidConfig("cluster sample count must be ≥ 1"));
        }
        if self.scatter.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: self.scatter.dim() });
        }
        if !self.mu.iter().all(|v| v.is_finite()) || !self.scatter.is_finite() {
            return Err(Error::NonFiniteSample);
        }
        let tol = 1e-12 * math::max(self.scatter.max_abs(), 1.0);
        if self.scatter.max_asymmetry() > tol {
            return Err(Error::InvalidConfig("cluster scatter is not symmetric"));
        }
        Ok(())
    }

    /// Covariance used for distances and volumes:
    /// `Σ_eff = (S + w·diag(σ²/N_r)) / (n − 1 + w)` with prior weight `w`.
    ///
    /// At `n = 1` with the default `w = 1` this is exactly the prototype
    /// covariance; as `n` grows it converges to the sample covariance
    /// `S/(n−1)`. With `w = 0` it *is* the sample covariance, which is
    /// undefined for `n < 2`.
    pub fn effective_covariance(&self, proto: &PrototypeSpec, prior_weight: f64) -> Result<SquareMat> {
        if proto.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: proto.dim() });
        }
        if !(prior_weight >= 0.0) {
            return Err(Error::InvalidConfig("prior weight must be non-negative"));
        }
        if prior_weight == 0.0 && self.n < 2 {
            return Err(Error::UndefinedCovariance);
        }
        let mut sigma = self.scatter.clone();
        if prior_weight > 0.0 {
            sigma.add_scaled(&proto.covariance(), prior_weight);
        }
        sigma.scale(1.0 / (self.n as f64 - 1.0 + prior_weight));
        sigma.symmetrize();
        // reject degenerate clusters up front rather than at first use
        sigma.cholesky()?;
        Ok(sigma)
    }

    /// Squared Mahalanobis distance `(x−μ)ᵀ Σ_eff⁻¹ (x−μ)` via Cholesky solve.
    pub fn mahalanobis_sq(&self, x: &[f64], sigma_eff: &SquareMat) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let chol = sigma_eff.cholesky()?;
        let d: Vec<f64> = x.iter().zip(&self.mu).map(|(a, b)| a - b).collect();
        Ok(chol.quad_form(&d))
    }

    /// Membership `γ = exp(−d²/D)`; 1 exactly at the center. Exponent
    /// underflow is clamped to the smallest positive normal so the value
    /// stays strictly positive at any distance.
    pub fn membership(&self, x: &[f64], sigma_eff: &SquareMat) -> Result<f64> {
        let d2 = self.mahalanobis_sq(x, sigma_eff)?;
        Ok(math::max(math::exp(-d2 / self.dim() as f64), f64::MIN_POSITIVE))
    }

    /// Absorbs one sample:
    /// `e = x − μ; μ ← μ + e/(n+1); S ← S + e·(x − μ_new)ᵀ; n ← n + 1`.
    ///
    /// After any update sequence starting from a single point, `mu` is the
    /// batch mean and `S/(n−1)` the batch sample covariance of all absorbed
    /// points. Callers supply a monotone global tick.
    pub fn absorb(&mut self, x: &[f64], tick: u64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteSample);
        }
        debug_assert!(tick >= self.last_activation);
        let e: Vec<f64> = x.iter().zip(&self.mu).map(|(a, b)| a - b).collect();
        let inv = 1.0 / (self.n as f64 + 1.0);
        for (m, ei) in self.mu.iter_mut().zip(&e) {
            *m += ei * inv;
        }
        let e2: Vec<f64> = x.iter().zip(&self.mu).map(|(a, b)| a - b).collect();
        self.scatter.add_outer(&e, &e2, 1.0);
        self.scatter.symmetrize();
        self.n += 1;
        self.last_activation = tick;
        Ok(())
    }

    /// Scatter contribution `(n−1)·Σ_eff` this cluster brings to a merge;
    /// zero for singletons regardless of prior.
    fn merge_contribution(&self, proto: &PrototypeSpec, prior_weight: f64) -> SquareMat {
        if self.n < 2 {
            return SquareMat::zeros(self.dim());
        }
        let mut m = self.scatter.clone();
        if prior_weight > 0.0 {
            m.add_scaled(&proto.covariance(), prior_weight);
        }
        let nm1 = self.n as f64 - 1.0;
        m.scale(nm1 / (nm1 + prior_weight));
        m
    }
}

/// Natural log of the hyperellipsoid volume
/// `V = 2·π^{D/2} / (D·Γ(D/2)) · det(Σ)^{1/2}` (or `· det(Σ)` in
/// literal-det mode), via the Cholesky log-determinant.
pub fn log_volume(sigma: &SquareMat, det_mode: DetMode) -> Result<f64> {
    let d = sigma.dim() as f64;
    let log_det = sigma.cholesky()?.log_det();
    let coef = match det_mode {
        DetMode::SqrtDet => 0.5,
        DetMode::LiteralDet => 1.0,
    };
    Ok(math::ln(2.0) + 0.5 * d * math::ln(core::f64::consts::PI)
        - math::ln(d)
        - math::ln_gamma(0.5 * d)
        + coef * log_det)
}

/// Sample-free merge of two clusters:
/// `μ_pq = (n_p μ_p + n_q μ_q)/n_pq` and
/// `Σ_pq = [(n_p−1)Σ_p + (n_q−1)Σ_q + (n_p n_q/n_pq)·ΔΔᵀ] / (n_pq−1)`
/// with `Δ = μ_p − μ_q`, stored as scatter `S_pq = (n_pq−1)·Σ_pq`.
///
/// With the prior disabled and pure sample statistics on both inputs, the
/// result equals the batch statistics of the pooled underlying samples.
pub fn merge_pair(
    p: &GaussianCluster,
    q: &GaussianCluster,
    proto: &PrototypeSpec,
    prior_weight: f64,
) -> Result<GaussianCluster> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: q.dim() });
    }
    if p.class_id != q.class_id {
        return Err(Error::ClassMismatch);
    }
    let (np, nq) = (p.n as f64, q.n as f64);
    let n_pq = np + nq;
    let mu: Vec<f64> = p
        .mu
        .iter()
        .zip(&q.mu)
        .map(|(a, b)| (np * a + nq * b) / n_pq)
        .collect();
    let delta: Vec<f64> = p.mu.iter().zip(&q.mu).map(|(a, b)| a - b).collect();
    let mut scatter = p.merge_contribution(proto, prior_weight);
    scatter.add_scaled(&q.merge_contribution(proto, prior_weight), 1.0);
    scatter.add_outer(&delta, &delta, np * nq / n_pq);
    scatter.symmetrize();
    Ok(GaussianCluster {
        id: p.id.min(q.id),
        mu,
        scatter,
        n: p.n + q.n,
        last_activation: p.last_activation.max(q.last_activation),
        class_id: p.class_id,
    })
}

/// Log of the merge overlap ratio `V_pq / (V_p + V_q)`, all volumes taken on
/// effective covariances; computed in log space so high dimensions neither
/// overflow nor underflow.
pub fn ln_overlap_ratio(
    p: &GaussianCluster,
    q: &GaussianCluster,
    proto: &PrototypeSpec,
    prior_weight: f64,
    det_mode: DetMode,
) -> Result<f64> {
    let ln_vp = log_volume(&p.effective_covariance(proto, prior_weight)?, det_mode)?;
    let ln_vq = log_volume(&q.effective_covariance(proto, prior_weight)?, det_mode)?;
    let merged = merge_pair(p, q, proto, prior_weight)?;
    let ln_vpq = log_volume(&merged.effective_covariance(proto, prior_weight)?, det_mode)?;
    Ok(ln_vpq - math::log_sum_exp(ln_vp, ln_vq))
}

/// Merge overlap ratio `V_pq / (V_p + V_q)`; the pair qualifies for merging
/// when this falls below `κ_m^D`.
pub fn overlap_ratio(
    p: &GaussianCluster,
    q: &GaussianCluster,
    proto: &PrototypeSpec,
    prior_weight: f64,
    det_mode: DetMode,
) -> Result<f64> {
    Ok(math::exp(ln_overlap_ratio(p, q, proto, prior_weight, det_mode)?))
}
