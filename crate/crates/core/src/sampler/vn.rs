//! The coefficients `V_n(t) = Σ_{K≥t} p(K) K!/(K−t)! Γ(αK)/Γ(αK+n)` that
//! govern the new-cluster weight of the collapsed assignment update.

use statrs::function::gamma::ln_gamma;

use crate::dist::log_add_exp;
use crate::error::{Error, Result};
use crate::model::PriorConfig;

/// Series terms evaluated before giving up.
pub const VN_MAX_TERMS: usize = 10_000;

/// `log V_n(t)`, summed in log space until the next term is negligible
/// relative to the partial sum and the terms are decreasing.
pub fn compute_vn(t: usize, n: usize, prior: &PriorConfig) -> Result<f64> {
    if t == 0 || t > n + 1 {
        return Err(Error::InvalidConfig(format!("V_n(t) needs 1 <= t <= n + 1, got t = {t}, n = {n}")));
    }
    let alpha = prior.alpha;
    let log_tol = prior.vn_tol.ln();
    let last = prior.k_support_max();
    if matches!(last, Some(m) if t > m) {
        return Ok(f64::NEG_INFINITY);
    }
    let term = |k: usize| {
        let kf = k as f64;
        prior.log_pk(k) + ln_gamma(kf + 1.0) - ln_gamma((k - t) as f64 + 1.0) + ln_gamma(alpha * kf)
            - ln_gamma(alpha * kf + n as f64)
    };
    let mut sum = f64::NEG_INFINITY;
    let mut prev = f64::NEG_INFINITY;
    for i in 0..VN_MAX_TERMS {
        let k = t + i;
        if matches!(last, Some(m) if k > m) {
            return Ok(sum);
        }
        let v = term(k);
        let decreasing = v <= prev;
        sum = log_add_exp(sum, v);
        if decreasing && v < sum + log_tol {
            return Ok(sum);
        }
        prev = v;
    }
    Err(Error::VnNonConvergence { t, terms: VN_MAX_TERMS })
}

/// Lazily filled `log V_n(t)` for `t = 1..=n+1` with hit/miss counters.
#[derive(Debug, Clone)]
pub struct VnCache {
    n: usize,
    prior: PriorConfig,
    values: Vec<Option<f64>>,
    hits: u64,
    misses: u64,
}

impl VnCache {
    pub fn new(n: usize, prior: &PriorConfig) -> Self {
        Self { n, prior: prior.clone(), values: vec![None; n + 2], hits: 0, misses: 0 }
    }

    pub fn get(&mut self, t: usize) -> Result<f64> {
        if let Some(Some(v)) = self.values.get(t) {
            self.hits += 1;
            return Ok(*v);
        }
        let v = compute_vn(t, self.n, &self.prior)?;
        self.misses += 1;
        self.values[t] = Some(v);
        Ok(v)
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }
}
