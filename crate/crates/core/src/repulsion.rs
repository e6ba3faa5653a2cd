//! Repulsion between component coefficients: the saturating map `G`, pairwise
//! distances and the minimum-over-pairs penalty `h_K`.
//!
//! Under the design-induced metric `d(β, β') = (β−β')ᵀ(XᵀX)(β−β')/g`, the map
//! `η = g^{-1/2} Lᵀ β` (with `XᵀX = L Lᵀ`) turns distances into squared
//! Euclidean distances. The samplers embed coefficients once and then work
//! with plain Euclidean geometry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{quad_form, sq_dist, Chol};
use crate::model::Dataset;

/// `G(t) = t / (t + g0)`; constant 1 when `g0 = 0`.
pub fn g_func(t: f64, g0: f64) -> Result<f64> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeInput(t));
    }
    if g0 < 0.0 || g0.is_nan() {
        return Err(Error::NegativeInput(g0));
    }
    Ok(g_unchecked(t, g0))
}

#[inline]
fn g_unchecked(t: f64, g0: f64) -> f64 {
    if g0 == 0.0 {
        1.0
    } else {
        t / (t + g0)
    }
}

/// Metric used to measure separation between coefficient vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Mahalanobis,
    Euclidean,
    None,
}

#[derive(Debug, Clone, PartialEq)]
enum Metric {
    Mahalanobis { gram: Vec<f64>, chol: Chol, g: f64 },
    Euclidean { p: usize },
    None { p: usize },
}

/// Serializable description of a kernel, used for cache keys and output metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub metric: MetricKind,
    pub g0: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub g: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepulsionKernel {
    metric: Metric,
    g0: f64,
}

impl RepulsionKernel {
    /// Design-induced metric `(XᵀX)/g`.
    pub fn mahalanobis(ds: &Dataset, g: f64, g0: f64) -> Result<Self> {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidConfig(format!("g must be positive, got {g}")));
        }
        Self::check_g0(g0)?;
        Ok(Self {
            metric: Metric::Mahalanobis { gram: ds.gram_row_major(), chol: ds.chol().clone(), g },
            g0,
        })
    }

    pub fn euclidean(p: usize, g0: f64) -> Result<Self> {
        Self::check_g0(g0)?;
        Ok(Self { metric: Metric::Euclidean { p }, g0 })
    }

    /// No repulsion: `h ≡ 1`.
    pub fn none(p: usize) -> Self {
        Self { metric: Metric::None { p }, g0: 0.0 }
    }

    fn check_g0(g0: f64) -> Result<()> {
        if !(g0 >= 0.0 && g0.is_finite()) {
            return Err(Error::InvalidConfig(format!("g0 must be nonnegative, got {g0}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match &self.metric {
            Metric::Mahalanobis { chol, .. } => chol.dim(),
            Metric::Euclidean { p } | Metric::None { p } => *p,
        }
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn kind(&self) -> MetricKind {
        match self.metric {
            Metric::Mahalanobis { .. } => MetricKind::Mahalanobis,
            Metric::Euclidean { .. } => MetricKind::Euclidean,
            Metric::None { .. } => MetricKind::None,
        }
    }

    pub fn spec(&self) -> KernelSpec {
        let g = match self.metric {
            Metric::Mahalanobis { g, .. } => Some(g),
            _ => None,
        };
        KernelSpec { metric: self.kind(), g0: self.g0, g }
    }

    /// True when `h` is identically 1, either by construction or because `g0 = 0`.
    pub fn is_trivial(&self) -> bool {
        matches!(self.metric, Metric::None { .. }) || self.g0 == 0.0
    }

    fn check_len(&self, b: &[f64]) -> Result<()> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "coefficient of length {} for a kernel of dimension {}",
                b.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Metric distance between two coefficient vectors (0 for the `none` metric).
    pub fn pair_distance(&self, b1: &[f64], b2: &[f64]) -> Result<f64> {
        self.check_len(b1)?;
        self.check_len(b2)?;
        Ok(match &self.metric {
            Metric::Mahalanobis { gram, g, .. } => {
                let d: Vec<f64> = b1.iter().zip(b2).map(|(a, b)| a - b).collect();
                quad_form(gram, &d).max(0.0) / g
            }
            Metric::Euclidean { .. } => sq_dist(b1, b2),
            Metric::None { .. } => 0.0,
        })
    }

    /// Min over unordered pairs of `G(distance)`; 1 for fewer than two vectors.
    pub fn h_k(&self, betas: &[&[f64]]) -> Result<f64> {
        for b in betas {
            self.check_len(b)?;
        }
        if self.is_trivial() || betas.len() < 2 {
            return Ok(1.0);
        }
        let emb: Vec<Vec<f64>> = betas.iter().map(|b| self.embed(b)).collect();
        Ok(self.h_embedded(&emb))
    }

    /// Map a coefficient vector into the space where the metric is Euclidean.
    pub fn embed(&self, beta: &[f64]) -> Vec<f64> {
        match &self.metric {
            Metric::Mahalanobis { chol, g, .. } => {
                let s = g.sqrt().recip();
                let mut v = chol.mul_lt(beta);
                v.iter_mut().for_each(|x| *x *= s);
                v
            }
            Metric::Euclidean { .. } | Metric::None { .. } => beta.to_vec(),
        }
    }

    /// `G` applied to a squared distance between embedded vectors.
    #[inline]
    pub fn g_of(&self, dist: f64) -> f64 {
        if self.is_trivial() {
            1.0
        } else {
            g_unchecked(dist, self.g0)
        }
    }

    /// Smallest embedded squared distance between any pair; `inf` for fewer than two.
    pub fn min_sq_dist<V: AsRef<[f64]>>(emb: &[V]) -> f64 {
        let mut m = f64::INFINITY;
        for a in 0..emb.len() {
            for b in (a + 1)..emb.len() {
                m = m.min(sq_dist(emb[a].as_ref(), emb[b].as_ref()));
            }
        }
        m
    }

    /// `h` over vectors already passed through [`Self::embed`]. Since `G` is
    /// increasing, the minimum over pairs is `G` of the minimum distance.
    pub fn h_embedded<V: AsRef<[f64]>>(&self, emb: &[V]) -> f64 {
        if self.is_trivial() || emb.len() < 2 {
            return 1.0;
        }
        self.g_of(Self::min_sq_dist(emb))
    }

    /// `min_k G(d(new, existing_k))` over embedded vectors; 1 when `existing` is empty.
    pub fn h_against<V: AsRef<[f64]>>(&self, new: &[f64], existing: &[V]) -> f64 {
        if self.is_trivial() || existing.is_empty() {
            return 1.0;
        }
        let m = existing
            .iter()
            .map(|e| sq_dist(new, e.as_ref()))
            .fold(f64::INFINITY, f64::min);
        self.g_of(m)
    }
}

/// `η = g^{-1/2} Lᵀ β` where `XᵀX = L Lᵀ`.
pub fn whiten(beta: &[f64], ds: &Dataset, g: f64) -> Result<Vec<f64>> {
    if beta.len() != ds.p() {
        return Err(Error::DimensionMismatch(format!(
            "coefficient of length {} for p = {}",
            beta.len(),
            ds.p()
        )));
    }
    let s = g.sqrt().recip();
    Ok(ds.chol().mul_lt(beta).into_iter().map(|v| v * s).collect())
}
