//! Blocked, collapsed Gibbs sampler for repulsive regression mixtures.
//!
//! One iteration runs the assignment sweep (mixing weights integrated out),
//! the update of the total component count, and the variance and coefficient
//! updates. Repulsion enters through exact resample-until-accept loops.

pub mod vn;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dist::{sample_log_categorical, TruncInvGamma};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::{
    ChainDiagnostics, ComponentParams, Dataset, DrawStats, Draws, DrawsMeta, KWeight, MixtureState, ModelSpec,
    SuffStats,
};
use crate::normalizer::{ztilde_window, ZkTable};
use crate::seed::{rng_from_seed, ChainRng};

pub use vn::{compute_vn, VnCache};

/// How the first state of a chain is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// Every observation in one cluster.
    SingleCluster,
    /// Observations spread uniformly at random over `k` clusters.
    Random { k: usize },
    /// Caller-supplied labels (any integers; relabeled compactly).
    Given { z: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub init: Init,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { n_iter: 2000, burn_in: 1000, thin: 1, seed: 1, init: Init::SingleCluster }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 || self.thin == 0 {
            return Err(Error::InvalidConfig("n_iter and thin must be positive".into()));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::InvalidConfig("burn_in must be smaller than n_iter".into()));
        }
        Ok(())
    }
}

/// Per-iteration counters folded into [`DrawStats`].
#[derive(Debug, Clone, Default)]
struct IterStats {
    aux_proposals: u64,
    aux_draws: u64,
    coef_attempts: usize,
    cap_events: u64,
}

/// Mutable chain: current state, rng, caches and counters.
pub struct Sampler<'a> {
    ds: &'a Dataset,
    model: &'a ModelSpec,
    zk: &'a ZkTable,
    vn: VnCache,
    rng: ChainRng,
    s2_prior: TruncInvGamma,
    state: MixtureState,
    diag: ChainDiagnostics,
    iter: IterStats,
}

impl<'a> Sampler<'a> {
    pub fn new(ds: &'a Dataset, model: &'a ModelSpec, zk: &'a ZkTable, state: MixtureState, seed: u64) -> Result<Self> {
        model.prior.validate()?;
        state.validate(ds.n(), ds.p())?;
        if zk.k_max < model.prior.k_max {
            return Err(Error::InvalidConfig(format!(
                "normalizer table covers K <= {} but k_max is {}",
                zk.k_max, model.prior.k_max
            )));
        }
        Ok(Self {
            ds,
            model,
            zk,
            vn: VnCache::new(ds.n(), &model.prior),
            rng: rng_from_seed(seed),
            s2_prior: model.sigma2_prior(),
            state,
            diag: ChainDiagnostics::default(),
            iter: IterStats::default(),
        })
    }

    /// Initial state per `init`, with parameters drawn from each cluster's
    /// conditional posterior at a unit variance (clamped to the bounds).
    pub fn initial_state(ds: &Dataset, model: &ModelSpec, init: &Init, rng: &mut ChainRng) -> Result<MixtureState> {
        let n = ds.n();
        let z: Vec<usize> = match init {
            Init::SingleCluster => vec![0; n],
            Init::Random { k } => {
                let k = (*k).clamp(1, model.prior.k_max);
                (0..n).map(|_| rng.random_range(0..k)).collect()
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
                if map.len() > model.prior.k_max {
                    return Err(Error::InvalidConfig("initial labels exceed k_max clusters".into()));
                }
                z.iter().map(|c| map[c]).collect()
            }
        };
        let s2 = 1.0f64.clamp(model.prior.sigma2_lo, model.prior.sigma2_hi);
        let mut comps = BTreeMap::new();
        let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &c) in z.iter().enumerate() {
            members.entry(c).or_default().push(i);
        }
        for (c, idx) in &members {
            let stats = ds.suff_stats(idx.iter().copied());
            let beta = model.beta_prior.posterior(&stats, s2, ds).sample(rng);
            comps.insert(*c, ComponentParams { beta, sigma2: s2 });
        }
        MixtureState::from_parts(z, comps)
    }

    pub fn state(&self) -> &MixtureState {
        &self.state
    }

    pub fn into_state(self) -> MixtureState {
        self.state
    }

    pub fn diagnostics(&self) -> ChainDiagnostics {
        let mut d = self.diag.clone();
        d.vn_cache_hits = self.vn.hits();
        d.vn_cache_misses = self.vn.misses();
        d
    }

    pub fn rng(&mut self) -> &mut ChainRng {
        &mut self.rng
    }

    /// Draw from the prior tilted by repulsion against the occupied
    /// coefficients (embedded in `occ_emb`).
    ///
    /// The target is `prior(β) · min(c, m(β))` where `c` is `h` over the
    /// occupied set and `m(β)` is the smallest `G` between β and any of them.
    /// Since `c` is fixed, accepting with probability `min(1, m/c)` targets the
    /// same law as accepting with probability `h_{K+1}` and wastes fewer draws.
    pub fn draw_auxiliary_component(&mut self, occ_emb: &[&[f64]], c: f64) -> (ComponentParams, Vec<f64>) {
        let model = self.model;
        let cap = model.prior.max_rejection_iters;
        let mut last = None;
        for _ in 0..cap {
            let comp = model.draw_prior_component(&self.s2_prior, self.ds, &mut self.rng);
            let e = model.kernel.embed(&comp.beta);
            self.iter.aux_proposals += 1;
            self.diag.aux_proposals += 1;
            let accept = if model.kernel.is_trivial() || occ_emb.is_empty() || c <= 0.0 {
                1.0
            } else {
                (model.kernel.h_against(&e, occ_emb) / c).min(1.0)
            };
            if accept >= 1.0 || self.rng.random::<f64>() < accept {
                self.iter.aux_draws += 1;
                self.diag.aux_draws += 1;
                return (comp, e);
            }
            last = Some((comp, e));
        }
        self.iter.aux_draws += 1;
        self.diag.aux_draws += 1;
        self.iter.cap_events += 1;
        self.diag.aux_cap_events += 1;
        last.expect("at least one proposal")
    }

    /// One pass over observations, reassigning each given everything else.
    pub fn assignment_sweep(&mut self) -> Result<()> {
        self.state.remove_empty();
        let n = self.ds.n();
        let alpha = self.model.prior.alpha;
        let k_max = self.model.prior.k_max;
        let mut emb: Vec<Option<Vec<f64>>> = Vec::new();
        let embed_all = |state: &MixtureState, model: &ModelSpec, emb: &mut Vec<Option<Vec<f64>>>| {
            emb.clear();
            for id in state.ids() {
                if emb.len() <= id {
                    emb.resize(id + 1, None);
                }
                emb[id] = Some(model.kernel.embed(&state.component(id).expect("live").beta));
            }
        };
        embed_all(&self.state, self.model, &mut emb);
        // h over the occupied set only changes when a cluster appears or vanishes
        let mut occ_h: Option<f64> = None;
        let mut logw: Vec<f64> = Vec::with_capacity(k_max + 1);
        for i in 0..n {
            let old = self.state.detach(i);
            if self.state.size(old) == 0 {
                self.state.remove(old);
                emb[old] = None;
                occ_h = None;
            }
            let occ = self.state.occupied();
            let ell = occ.len();
            let x = self.ds.row(i);
            let y = self.ds.response(i);
            logw.clear();
            for &c in &occ {
                let comp = self.state.component(c).expect("occupied");
                logw.push((self.state.size(c) as f64 + alpha).ln() + comp.log_lik(x, y));
            }
            let mut aux = None;
            if ell < k_max {
                let occ_emb: Vec<&[f64]> = occ.iter().map(|&c| emb[c].as_deref().expect("embedded")).collect();
                let c = *occ_h.get_or_insert_with(|| self.model.kernel.h_embedded(&occ_emb));
                let (comp, e) = self.draw_auxiliary_component(&occ_emb, c);
                let log_ratio = if ell == 0 { 0.0 } else { self.vn.get(ell + 1)? - self.vn.get(ell)? };
                logw.push(alpha.ln() + log_ratio + comp.log_lik(x, y));
                aux = Some((comp, e));
            }
            let pick = match sample_log_categorical(&logw, &mut self.rng) {
                Some(j) => j,
                None => {
                    self.diag.weight_underflow_events += 1;
                    if ell == 0 {
                        logw.len() - 1
                    } else {
                        self.rng.random_range(0..ell)
                    }
                }
            };
            if pick < ell {
                self.state.attach(i, occ[pick]);
            } else {
                let (comp, e) = aux.expect("new-cluster option present");
                let id = self.state.insert(comp);
                if emb.len() <= id {
                    emb.resize(id + 1, None);
                }
                emb[id] = Some(e);
                self.state.attach(i, id);
                occ_h = None;
            }
        }
        Ok(())
    }

    /// Log-weights of the candidate totals `K` for the current occupied set.
    pub fn k_log_weights(&mut self) -> Result<(Vec<usize>, Vec<f64>)> {
        let prior = &self.model.prior;
        let ell = self.state.occupied_count();
        if ell == 0 {
            return Err(Error::InvalidState("no occupied clusters".into()));
        }
        let top = (ell + prior.m_window).min(prior.k_max);
        let ks: Vec<usize> = (ell..=top).collect();
        if ks.len() == 1 {
            return Ok((ks, vec![0.0]));
        }
        let n = self.ds.n() as f64;
        let zt = ztilde_window(&self.state, self.ds, self.model, &ks, &mut self.rng)?;
        let mut w = Vec::with_capacity(ks.len());
        for (j, &k) in ks.iter().enumerate() {
            let kf = k as f64;
            let log_z = self.zk.log_z(k).ok_or_else(|| Error::InvalidState(format!("no normalizer for K = {k}")))?;
            let falling = ln_gamma(kf + 1.0) - ln_gamma((k - ell) as f64 + 1.0);
            let base = match prior.k_weight {
                KWeight::Factorial => falling - ln_gamma(kf + n + 1.0),
                KWeight::General => {
                    let a = prior.alpha * kf;
                    prior.log_pk(k) + falling + ln_gamma(a) - ln_gamma(a + n)
                }
            };
            w.push(zt[j] - log_z + base);
        }
        Ok((ks, w))
    }

    /// Resample the total number of components and instantiate the empty ones
    /// from the untilted prior.
    pub fn sample_k(&mut self) -> Result<usize> {
        self.state.remove_empty();
        let ell = self.state.occupied_count();
        let (ks, w) = self.k_log_weights()?;
        let k = match sample_log_categorical(&w, &mut self.rng) {
            Some(j) => ks[j],
            None => {
                self.diag.k_underflow_events += 1;
                ell
            }
        };
        for _ in ell..k {
            let c = self.model.draw_prior_component(&self.s2_prior, self.ds, &mut self.rng);
            self.state.insert(c);
        }
        Ok(k)
    }

    /// Residual sums of squares per component id under the current coefficients.
    fn rss_by_id(&self) -> Vec<f64> {
        let mut rss = vec![0.0; self.state.ids().last().map(|l| l + 1).unwrap_or(0)];
        for i in 0..self.ds.n() {
            let c = self.state.z()[i];
            let b = &self.state.component(c).expect("assigned").beta;
            let r = self.ds.response(i) - dot(self.ds.row(i), b);
            rss[c] += r * r;
        }
        rss
    }

    /// Redraw every component variance from its truncated inverse-gamma conditional.
    pub fn variance_sweep(&mut self) {
        let prior = &self.model.prior;
        let rss = self.rss_by_id();
        for id in self.state.ids() {
            let size = self.state.size(id);
            let d = if size == 0 {
                self.s2_prior.clone()
            } else {
                TruncInvGamma::new(
                    prior.a0 + size as f64 / 2.0,
                    prior.b0 + rss[id] / 2.0,
                    prior.sigma2_lo,
                    prior.sigma2_hi,
                )
            };
            if d.is_clamped() {
                self.diag.variance_clamp_events += 1;
            }
            let s2 = d.sample(&mut self.rng);
            self.state.component_mut(id).expect("live").sigma2 = s2;
        }
    }

    fn stats_by_id(&self) -> BTreeMap<usize, SuffStats> {
        let p = self.ds.p();
        let mut out: BTreeMap<usize, SuffStats> = self.state.ids().into_iter().map(|id| (id, SuffStats::zeros(p))).collect();
        for i in 0..self.ds.n() {
            out.get_mut(&self.state.z()[i])
                .expect("assigned id")
                .add(self.ds.row(i), self.ds.response(i));
        }
        out
    }

    /// Propose all coefficients jointly from their untilted conditionals and
    /// accept the block with probability `h_K`; returns the attempts used.
    pub fn coefficient_sweep(&mut self) -> usize {
        let stats = self.stats_by_id();
        let ids: Vec<usize> = stats.keys().copied().collect();
        let posts: Vec<_> = ids
            .iter()
            .map(|id| {
                let s2 = self.state.component(*id).expect("live").sigma2;
                self.model.beta_prior.posterior(&stats[id], s2, self.ds)
            })
            .collect();
        let cap = self.model.prior.max_rejection_iters;
        self.diag.coef_sweeps += 1;
        let trivial = self.model.kernel.is_trivial();
        let mut emb: Vec<Vec<f64>> = Vec::with_capacity(ids.len());
        for attempt in 1..=cap {
            let betas: Vec<Vec<f64>> = posts.iter().map(|g| g.sample(&mut self.rng)).collect();
            self.diag.coef_proposals += 1;
            let accept = if trivial || betas.len() < 2 {
                true
            } else {
                emb.clear();
                emb.extend(betas.iter().map(|b| self.model.kernel.embed(b)));
                let h = self.model.kernel.h_embedded(&emb);
                self.rng.random::<f64>() < h
            };
            if accept {
                for (id, b) in ids.iter().zip(betas) {
                    self.state.component_mut(*id).expect("live").beta = b;
                }
                self.iter.coef_attempts = attempt;
                return attempt;
            }
        }
        self.diag.coef_cap_events += 1;
        self.iter.cap_events += 1;
        self.iter.coef_attempts = cap;
        cap
    }

    /// One full iteration.
    pub fn step(&mut self) -> Result<()> {
        self.iter = IterStats::default();
        self.assignment_sweep()?;
        self.sample_k()?;
        self.variance_sweep();
        self.coefficient_sweep();
        Ok(())
    }

    fn iter_stats(&self, iteration: usize) -> DrawStats {
        DrawStats {
            iteration,
            aux_attempts_mean: if self.iter.aux_draws > 0 {
                self.iter.aux_proposals as f64 / self.iter.aux_draws as f64
            } else {
                0.0
            },
            coef_attempts: self.iter.coef_attempts,
            cap_events: self.iter.cap_events,
        }
    }
}

/// Run a chain and keep post-burn-in, thinned states.
pub fn run_chain(ds: &Dataset, model: &ModelSpec, chain: &ChainConfig, zk: &ZkTable) -> Result<Draws> {
    chain.validate()?;
    let mut init_rng = crate::seed::substream(chain.seed, 1);
    let state = Sampler::initial_state(ds, model, &chain.init, &mut init_rng)?;
    let mut s = Sampler::new(ds, model, zk, state, chain.seed)?;
    let mut states = Vec::new();
    let mut stats = Vec::new();
    for it in 0..chain.n_iter {
        s.step()?;
        if it >= chain.burn_in && (it - chain.burn_in) % chain.thin == 0 {
            states.push(s.state().clone());
            stats.push(s.iter_stats(it));
        }
    }
    Ok(Draws {
        states,
        weights: None,
        stats,
        meta: DrawsMeta {
            seed: chain.seed,
            n_iter: chain.n_iter,
            burn_in: chain.burn_in,
            thin: chain.thin,
            model: model.tag,
            prior: model.prior.clone(),
            sid: None,
            diagnostics: s.diagnostics(),
        },
    })
}

/// Occupied-count mode over draws (ties go to the smaller count).
pub fn mode_occupied(draws: &Draws) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for s in &draws.states {
        *counts.entry(s.occupied_count()).or_default() += 1;
    }
    counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(k, _)| *k).unwrap_or(0)
}
