//! Monte Carlo normalizing constants of the repulsive prior.
//!
//! `Z_K = E[h_K]` under independent joint prior draws of `K` components.
//! Each Monte Carlo sample draws `k_max` components once and reads off
//! `h_1, …, h_{k_max}` from the running minimum pairwise distance, so the
//! whole table costs one pass. Samples are split into fixed-size blocks, each
//! with its own rng substream, and block sums are reduced in block order, so
//! results do not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dist::TruncInvGamma;
use crate::error::{Error, Result};
use crate::linalg::sq_dist;
use crate::model::{BetaPrior, Dataset, MixtureState, ModelSpec, PriorConfig};
use crate::repulsion::KernelSpec;
use crate::seed::{rng_from_seed, substream};

pub const ZK_SCHEMA_VERSION: u32 = 1;

/// Samples per rng substream.
const BLOCK: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZkEntry {
    pub log_estimate: f64,
    pub mc_std_error: f64,
    pub n_samples: usize,
}

impl ZkEntry {
    const EXACT_ONE: ZkEntry = ZkEntry { log_estimate: 0.0, mc_std_error: 0.0, n_samples: 0 };
}

/// `log Z_K` for `K = 2..k_max`; `Z_1 = 1` is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZkTable {
    pub schema_version: u32,
    pub key: String,
    pub seed: u64,
    pub k_max: usize,
    pub kernel: KernelSpec,
    pub entries: BTreeMap<usize, ZkEntry>,
}

impl ZkTable {
    /// `log Z_K`; `None` outside `1..=k_max`.
    pub fn log_z(&self, k: usize) -> Option<f64> {
        match k {
            0 => None,
            1 => Some(0.0),
            _ => self.entries.get(&k).map(|e| e.log_estimate),
        }
    }

    pub fn entry(&self, k: usize) -> Option<ZkEntry> {
        if k == 1 {
            Some(ZkEntry::EXACT_ONE)
        } else {
            self.entries.get(&k).copied()
        }
    }
}

/// Running sums of `h_K` for every `K` in a batch of samples.
#[derive(Debug, Clone)]
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    zeros: Vec<usize>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self { sum: vec![0.0; len], sum_sq: vec![0.0; len], zeros: vec![0; len] }
    }

    fn push(&mut self, idx: usize, h: f64) {
        self.sum[idx] += h;
        self.sum_sq[idx] += h * h;
        if h == 0.0 {
            self.zeros[idx] += 1;
        }
    }

    fn merge(&mut self, o: &Moments) {
        for i in 0..self.sum.len() {
            self.sum[i] += o.sum[i];
            self.sum_sq[i] += o.sum_sq[i];
            self.zeros[i] += o.zeros[i];
        }
    }

    /// Log of the mean with its delta-method standard error.
    fn log_mean(&self, idx: usize, n: usize) -> Result<ZkEntry> {
        let nf = n as f64;
        let mean = self.sum[idx] / nf;
        if !(mean > 0.0) {
            return Err(Error::EstimateUnderflow { zero_draws: self.zeros[idx], n_samples: n });
        }
        let var = if n > 1 {
            ((self.sum_sq[idx] - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        Ok(ZkEntry {
            log_estimate: mean.ln().min(0.0),
            mc_std_error: var.sqrt() / (nf.sqrt() * mean),
            n_samples: n,
        })
    }
}

/// Draw `count` embedded prior components in sequence, calling `visit(k, h_k)`
/// after the k-th (1-based) with `h` over the first k.
fn prefix_pass<R: Rng + ?Sized>(
    model: &ModelSpec,
    ds: &Dataset,
    s2_prior: &TruncInvGamma,
    count: usize,
    rng: &mut R,
    mut visit: impl FnMut(usize, f64),
) {
    let mut emb: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut min_d = f64::INFINITY;
    for k in 1..=count {
        let c = model.draw_prior_component(s2_prior, ds, rng);
        let e = model.kernel.embed(&c.beta);
        for prev in &emb {
            min_d = min_d.min(sq_dist(prev, &e));
        }
        emb.push(e);
        let h = if k < 2 { 1.0 } else { model.kernel.g_of(min_d) };
        visit(k, h);
    }
}

/// Monte Carlo moments of `h_2..h_{k_max}` under the joint prior.
fn prior_moments(ds: &Dataset, model: &ModelSpec, k_max: usize, n: usize, seed: u64) -> Moments {
    let s2_prior = model.sigma2_prior();
    let blocks = n.div_ceil(BLOCK);
    let parts: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, b as u64);
            let mut m = Moments::new(k_max + 1);
            let len = BLOCK.min(n - b * BLOCK);
            for _ in 0..len {
                prefix_pass(model, ds, &s2_prior, k_max, &mut rng, |k, h| m.push(k, h));
            }
            m
        })
        .collect();
    let mut total = Moments::new(k_max + 1);
    for p in &parts {
        total.merge(p);
    }
    total
}

/// `log Z_K` and its standard error from `prior.zk_samples` joint prior draws.
pub fn estimate_zk(k: usize, ds: &Dataset, model: &ModelSpec, seed: u64) -> Result<ZkEntry> {
    if k == 0 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    if k == 1 || model.kernel.is_trivial() {
        return Ok(ZkEntry { n_samples: model.prior.zk_samples, ..ZkEntry::EXACT_ONE });
    }
    let n = model.prior.zk_samples;
    prior_moments(ds, model, k, n, seed).log_mean(k, n)
}

/// Build the table for `K = 2..=prior.k_max` from one nested pass.
pub fn build_zk_table(ds: &Dataset, model: &ModelSpec, seed: u64) -> Result<ZkTable> {
    let (table, mut underflows) = build_zk_table_partial(ds, model, seed);
    match underflows.is_empty() {
        true => Ok(table),
        false => Err(underflows.swap_remove(0).1),
    }
}

/// Like [`build_zk_table`], but leaves out the `K` whose estimate underflows
/// and reports them instead of failing.
pub fn build_zk_table_partial(ds: &Dataset, model: &ModelSpec, seed: u64) -> (ZkTable, Vec<(usize, Error)>) {
    let k_max = model.prior.k_max;
    let n = model.prior.zk_samples;
    let mut entries = BTreeMap::new();
    let mut underflows = Vec::new();
    if model.kernel.is_trivial() {
        for k in 2..=k_max {
            entries.insert(k, ZkEntry { n_samples: n, ..ZkEntry::EXACT_ONE });
        }
    } else if k_max >= 2 {
        let m = prior_moments(ds, model, k_max, n, seed);
        for k in 2..=k_max {
            match m.log_mean(k, n) {
                Ok(e) => {
                    entries.insert(k, e);
                }
                Err(e) => underflows.push((k, e)),
            }
        }
    }
    let table = ZkTable {
        schema_version: ZK_SCHEMA_VERSION,
        key: zk_cache_key(ds, model, seed),
        seed,
        k_max,
        kernel: model.kernel.spec(),
        entries,
    };
    (table, underflows)
}

/// Content hash of everything the table depends on.
pub fn zk_cache_key(ds: &Dataset, model: &ModelSpec, seed: u64) -> String {
    #[derive(Serialize)]
    struct KeyMaterial<'a> {
        prior: &'a PriorConfig,
        beta_prior: &'a BetaPrior,
        kernel: KernelSpec,
        seed: u64,
    }
    let mut h = Sha256::new();
    for v in ds.gram_row_major() {
        h.update(v.to_bits().to_le_bytes());
    }
    let km = KeyMaterial { prior: &model.prior, beta_prior: &model.beta_prior, kernel: model.kernel.spec(), seed };
    h.update(serde_json::to_vec(&km).expect("key material serializes"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Load the table from `dir` when a file with the matching key exists,
/// otherwise build and store it.
pub fn load_or_build_zk_table(dir: &Path, ds: &Dataset, model: &ModelSpec, seed: u64) -> Result<ZkTable> {
    let key = zk_cache_key(ds, model, seed);
    let path: PathBuf = dir.join(format!("zk-{}.json", &key[..16]));
    if let Ok(bytes) = std::fs::read(&path) {
        if let Ok(t) = serde_json::from_slice::<ZkTable>(&bytes) {
            if t.key == key && t.schema_version == ZK_SCHEMA_VERSION {
                return Ok(t);
            }
        }
    }
    let t = build_zk_table(ds, model, seed)?;
    std::fs::create_dir_all(dir)?;
    std::fs::write(&path, serde_json::to_vec_pretty(&t)?)?;
    Ok(t)
}

/// Per-cluster pieces of the posterior draw that stay fixed across samples.
struct ClusterPosterior {
    beta: crate::model::ConditionalFamily,
    s2: TruncInvGamma,
}

/// `log Z̃_K` for every `K` in `ks` (ascending, each ≥ ℓ) using common draws.
///
/// Occupied clusters draw `σ²` from their truncated inverse-gamma conditional
/// given the current coefficients, then `β` from its Gaussian conditional
/// given that `σ²`; the remaining `K − ℓ` slots draw from the prior. Entries
/// whose draws all give `h = 0` come back as `-inf`.
pub fn ztilde_window<R: Rng + ?Sized>(
    state: &MixtureState,
    ds: &Dataset,
    model: &ModelSpec,
    ks: &[usize],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let occ = state.occupied();
    let ell = occ.len();
    if ks.iter().any(|&k| k < ell.max(1)) {
        return Err(Error::InvalidState(format!("candidate K below the {ell} occupied clusters")));
    }
    if model.kernel.is_trivial() || ks.iter().all(|&k| k <= 1) {
        return Ok(vec![0.0; ks.len()]);
    }
    let prior = &model.prior;
    let members = state.members();
    let clusters: Vec<ClusterPosterior> = occ
        .iter()
        .map(|id| {
            let idx = &members[id];
            let beta = &state.component(*id).expect("occupied id").beta;
            let rss: f64 = idx
                .iter()
                .map(|&i| {
                    let r = ds.response(i) - crate::linalg::dot(ds.row(i), beta);
                    r * r
                })
                .sum();
            ClusterPosterior {
                beta: model.beta_prior.conditional_family(&ds.suff_stats(idx.iter().copied()), ds),
                s2: TruncInvGamma::new(
                    prior.a0 + idx.len() as f64 / 2.0,
                    prior.b0 + rss / 2.0,
                    prior.sigma2_lo,
                    prior.sigma2_hi,
                ),
            }
        })
        .collect();
    let s2_prior = model.sigma2_prior();
    let k_top = *ks.iter().max().expect("non-empty window");
    let n = prior.ztilde_samples;
    let mut sums = vec![0.0; k_top + 1];
    let mut emb: Vec<Vec<f64>> = Vec::with_capacity(k_top);
    for _ in 0..n {
        emb.clear();
        for c in &clusters {
            let s2 = c.s2.sample(rng);
            let beta = c.beta.sample(s2, ds, rng);
            emb.push(model.kernel.embed(&beta));
        }
        let mut min_d = crate::repulsion::RepulsionKernel::min_sq_dist(&emb);
        if ell >= 1 {
            sums[ell] += if ell < 2 { 1.0 } else { model.kernel.g_of(min_d) };
        }
        for k in (ell + 1)..=k_top {
            let c = model.draw_prior_component(&s2_prior, ds, rng);
            let e = model.kernel.embed(&c.beta);
            for prev in &emb {
                min_d = min_d.min(sq_dist(prev, &e));
            }
            emb.push(e);
            sums[k] += if k < 2 { 1.0 } else { model.kernel.g_of(min_d) };
        }
    }
    Ok(ks
        .iter()
        .map(|&k| {
            let m = sums[k] / n as f64;
            if m > 0.0 {
                m.ln().min(0.0)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect())
}

/// `log Z̃_K` for a single `K` with its own seeded rng.
pub fn estimate_ztilde(state: &MixtureState, ds: &Dataset, model: &ModelSpec, k: usize, seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(seed);
    let v = ztilde_window(state, ds, model, &[k], &mut rng)?[0];
    if v == f64::NEG_INFINITY {
        return Err(Error::EstimateUnderflow { zero_draws: model.prior.ztilde_samples, n_samples: model.prior.ztilde_samples });
    }
    Ok(v)
}

/// Linear-growth check on `-log Z_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthDiagnostic {
    /// `max_K (-log Z_K)/K`.
    pub c1_hat: f64,
    /// `(K, -log Z_K / K)` for every tabulated `K ≥ 2`.
    pub per_k_ratios: Vec<(usize, f64)>,
    /// Every `-log Z_K ≥ -2 SE`.
    pub nonnegative_within_error: bool,
    /// `K` values where the estimate rises above its predecessor by more than 2 SE.
    pub monotonicity_flags: Vec<usize>,
    /// `c1_hat` divided by the median ratio; `None` when the median is 0.
    pub max_over_median: Option<f64>,
}

pub fn growth_diagnostic(table: &ZkTable) -> GrowthDiagnostic {
    let mut ratios = Vec::new();
    let mut nonneg = true;
    let mut flags = Vec::new();
    let mut prev: Option<ZkEntry> = Some(ZkEntry::EXACT_ONE);
    for (&k, e) in &table.entries {
        let nl = -e.log_estimate;
        if nl < -2.0 * e.mc_std_error {
            nonneg = false;
        }
        ratios.push((k, nl / k as f64));
        if let Some(p) = prev {
            let se = (p.mc_std_error.powi(2) + e.mc_std_error.powi(2)).sqrt();
            if e.log_estimate > p.log_estimate + 2.0 * se {
                flags.push(k);
            }
        }
        prev = Some(*e);
    }
    let c1_hat = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    let mut sorted: Vec<f64> = ratios.iter().map(|r| r.1).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = if sorted.is_empty() {
        0.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    GrowthDiagnostic {
        c1_hat,
        per_k_ratios: ratios,
        nonnegative_within_error: nonneg,
        monotonicity_flags: flags,
        max_over_median: if median > 0.0 { Some(c1_hat / median) } else { None },
    }
}
