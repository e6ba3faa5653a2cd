//! Comparison models: Euclidean repulsion with an isotropic prior (RRM), the
//! same prior without repulsion (MFM), and an overfitted finite mixture with a
//! sparse Dirichlet prior on the weights (SID).

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::dist::{dirichlet, sample_log_categorical};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::{
    BetaPrior, ChainDiagnostics, ComponentParams, Dataset, DrawStats, Draws, DrawsMeta, MixtureState, ModelSpec,
    ModelTag, PriorConfig, SuffStats,
};
use crate::normalizer::{build_zk_table, ZkTable};
use crate::sampler::{run_chain, ChainConfig, Init};
use crate::seed::{rng_from_seed, substream};

/// Stream offset separating normalizer draws from chain draws under one seed.
const ZK_STREAM_SEED_SALT: u64 = 0x5a4b_5441_424c_4531;

/// Settings of the overfitted mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SidConfig {
    pub k_fit: usize,
    /// Total Dirichlet mass; each component gets `alpha_total / k_fit`.
    pub alpha_total: f64,
    pub tau2: f64,
    pub a0: f64,
    pub b0: f64,
    /// Weight above which a component counts towards `K_eff`.
    pub eff_threshold: f64,
}

impl Default for SidConfig {
    fn default() -> Self {
        Self { k_fit: 20, alpha_total: 0.1, tau2: 1.0, a0: 4.0, b0: 4.0, eff_threshold: 1e-3 }
    }
}

impl SidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_fit < 2 {
            return Err(Error::InvalidConfig("k_fit must be at least 2".into()));
        }
        for (name, v) in [("alpha_total", self.alpha_total), ("tau2", self.tau2), ("a0", self.a0), ("b0", self.b0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite")));
            }
        }
        if !(self.eff_threshold > 0.0 && self.eff_threshold < 1.0) {
            return Err(Error::InvalidConfig("eff_threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Normalizer table seeded from the chain seed, for callers that do not
/// supply one.
fn own_table(ds: &Dataset, model: &ModelSpec, chain: &ChainConfig) -> Result<ZkTable> {
    build_zk_table(ds, model, chain.seed ^ ZK_STREAM_SEED_SALT)
}

pub fn run_rrm(ds: &Dataset, prior: &PriorConfig, chain: &ChainConfig) -> Result<Draws> {
    let model = ModelSpec::rrm(ds, prior.clone())?;
    let zk = own_table(ds, &model, chain)?;
    run_chain(ds, &model, chain, &zk)
}

pub fn run_mfm(ds: &Dataset, prior: &PriorConfig, chain: &ChainConfig) -> Result<Draws> {
    let model = ModelSpec::mfm(ds, prior.clone())?;
    let zk = own_table(ds, &model, chain)?;
    run_chain(ds, &model, chain, &zk)
}

/// Number of weights above `threshold`.
pub fn k_eff(weights: &[f64], threshold: f64) -> usize {
    weights.iter().filter(|&&w| w > threshold).count()
}

/// Untruncated inverse-gamma draw via the precision.
fn inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let tau: f64 = Gamma::new(shape, 1.0 / rate).expect("positive parameters").sample(rng);
    (1.0 / tau).clamp(f64::MIN_POSITIVE, f64::MAX)
}

/// Blocked Gibbs sampler for the overfitted mixture with `k_fit` components.
///
/// Components keep their ids for the whole run, so the stored states carry
/// empty slots and each draw lists all `k_fit` weights.
pub fn run_sid(ds: &Dataset, sid: &SidConfig, chain: &ChainConfig) -> Result<Draws> {
    sid.validate()?;
    run_sid_any_k(ds, sid, chain)
}

/// The sampler without the `k_fit ≥ 2` requirement; one component reduces
/// it to Bayesian linear regression.
fn run_sid_any_k(ds: &Dataset, sid: &SidConfig, chain: &ChainConfig) -> Result<Draws> {
    chain.validate()?;
    let n = ds.n();
    let k = sid.k_fit;
    let beta_prior = BetaPrior::Isotropic { tau2: sid.tau2 };
    let conc = sid.alpha_total / k as f64;
    let mut rng = rng_from_seed(chain.seed);
    let mut init_rng = substream(chain.seed, 1);

    let mut z: Vec<usize> = match &chain.init {
        Init::SingleCluster => vec![0; n],
        Init::Random { k: k0 } => {
            let k0 = (*k0).clamp(1, k);
            (0..n).map(|_| init_rng.random_range(0..k0)).collect()
        }
        Init::Given { z } => {
            if z.len() != n {
                return Err(Error::DimensionMismatch(format!("{} initial labels for {n} rows", z.len())));
            }
            let mut map = BTreeMap::new();
            for &c in z {
                let next = map.len();
                map.entry(c).or_insert(next);
            }
            if map.len() > k {
                return Err(Error::InvalidConfig("initial labels exceed k_fit clusters".into()));
            }
            z.iter().map(|c| map[c]).collect()
        }
    };
    let mut comps: Vec<ComponentParams> = Vec::with_capacity(k);
    {
        let stats = cluster_stats(ds, &z, k);
        for st in &stats {
            let s2 = 1.0;
            let beta = beta_prior.posterior(st, s2, ds).sample(&mut init_rng);
            comps.push(ComponentParams { beta, sigma2: s2 });
        }
    }

    let mut diag = ChainDiagnostics::default();
    let mut states = Vec::new();
    let mut weights_out = Vec::new();
    let mut stats_out = Vec::new();
    let mut logw = vec![0.0; k];
    for it in 0..chain.n_iter {
        // weights given labels
        let mut counts = vec![0usize; k];
        for &c in &z {
            counts[c] += 1;
        }
        let alpha: Vec<f64> = counts.iter().map(|&c| conc + c as f64).collect();
        let pi = dirichlet(&alpha, &mut rng);
        let log_pi: Vec<f64> = pi.iter().map(|w| w.ln()).collect();

        // labels given everything else
        for i in 0..n {
            let x = ds.row(i);
            let y = ds.response(i);
            for j in 0..k {
                logw[j] = log_pi[j] + comps[j].log_lik(x, y);
            }
            z[i] = match sample_log_categorical(&logw, &mut rng) {
                Some(j) => j,
                None => {
                    diag.weight_underflow_events += 1;
                    z[i]
                }
            };
        }

        // coefficients, then variances given the new coefficients
        let stats = cluster_stats(ds, &z, k);
        for j in 0..k {
            comps[j].beta = beta_prior.posterior(&stats[j], comps[j].sigma2, ds).sample(&mut rng);
        }
        let mut rss = vec![0.0; k];
        for i in 0..n {
            let r = ds.response(i) - dot(ds.row(i), &comps[z[i]].beta);
            rss[z[i]] += r * r;
        }
        for j in 0..k {
            comps[j].sigma2 = inv_gamma(sid.a0 + stats[j].n as f64 / 2.0, sid.b0 + rss[j] / 2.0, &mut rng);
        }

        if it >= chain.burn_in && (it - chain.burn_in) % chain.thin == 0 {
            let parts: BTreeMap<usize, ComponentParams> = comps.iter().cloned().enumerate().collect();
            states.push(MixtureState::from_parts(z.clone(), parts)?);
            weights_out.push(pi);
            stats_out.push(DrawStats { iteration: it, ..Default::default() });
        }
    }
    let prior = PriorConfig { alpha: conc, a0: sid.a0, b0: sid.b0, tau2: sid.tau2, k_max: k, ..Default::default() };
    Ok(Draws {
        states,
        weights: Some(weights_out),
        stats: stats_out,
        meta: DrawsMeta {
            seed: chain.seed,
            n_iter: chain.n_iter,
            burn_in: chain.burn_in,
            thin: chain.thin,
            model: ModelTag::Sid,
            prior,
            sid: Some(sid.clone()),
            diagnostics: diag,
        },
    })
}

fn cluster_stats(ds: &Dataset, z: &[usize], k: usize) -> Vec<SuffStats> {
    let mut out = vec![SuffStats::zeros(ds.p()); k];
    for (i, &c) in z.iter().enumerate() {
        out[c].add(ds.row(i), ds.response(i));
    }
    out
}
