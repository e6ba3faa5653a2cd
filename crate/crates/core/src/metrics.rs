//! Label-switching relabeling, point partitions, partition agreement scores,
//! component-count summaries and prediction error.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use pathfinding::prelude::{kuhn_munkres, Matrix};
use serde::{Deserialize, Serialize};

use crate::baselines::k_eff;
use crate::error::{Error, Result};
use crate::linalg::{dot, Chol};
use crate::model::{Dataset, Draws, ModelTag, SuffStats};

/// Relative ridge penalty for clusters too small for an OLS fit.
pub const RIDGE_SCALE: f64 = 1e-6;

/// Which fitted values enter the RMSE.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmseMode {
    /// Least-squares refit inside each estimated cluster.
    #[default]
    OlsRefit,
    /// Posterior mean of `x_iᵀ β_{z_i}` over draws.
    Draws,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ari: f64,
    pub purity: f64,
    /// Posterior mean of the component count.
    pub k_hat: f64,
    pub k_mode: usize,
    pub rmse: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KHat {
    pub mean: f64,
    pub mode: usize,
}

/// Sparse contingency counts plus the marginals.
struct Contingency {
    cells: HashMap<(usize, usize), usize>,
    rows: HashMap<usize, usize>,
    cols: HashMap<usize, usize>,
}

fn contingency(a: &[usize], b: &[usize]) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("partitions of length {} and {}", a.len(), b.len())));
    }
    let mut t = Contingency { cells: HashMap::new(), rows: HashMap::new(), cols: HashMap::new() };
    for (&x, &y) in a.iter().zip(b) {
        *t.cells.entry((x, y)).or_default() += 1;
        *t.rows.entry(x).or_default() += 1;
        *t.cols.entry(y).or_default() += 1;
    }
    Ok(t)
}

fn pairs(m: usize) -> f64 {
    let m = m as f64;
    m * (m - 1.0) / 2.0
}

/// Adjusted Rand index.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = contingency(a, b)?;
    let index: f64 = t.cells.values().map(|&c| pairs(c)).sum();
    let ra: f64 = t.rows.values().map(|&c| pairs(c)).sum();
    let rb: f64 = t.cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(a.len());
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = ra * rb / total;
    let max = 0.5 * (ra + rb);
    if max == expected {
        // only reachable when both partitions are all-singletons or both a single block
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Share of observations that belong to the dominant truth class of their
/// predicted cluster.
pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = contingency(pred, truth)?;
    if pred.is_empty() {
        return Err(Error::InvalidState("purity of an empty partition".into()));
    }
    let mut best: HashMap<usize, usize> = HashMap::new();
    for (&(p, _), &c) in &t.cells {
        let e = best.entry(p).or_default();
        *e = (*e).max(c);
    }
    Ok(best.values().sum::<usize>() as f64 / pred.len() as f64)
}

/// Posterior co-clustering frequencies, upper triangle packed row-wise.
fn similarity(draws: &Draws) -> Vec<f64> {
    let n = draws.states[0].n();
    let mut s = vec![0.0; n * (n.saturating_sub(1)) / 2];
    for st in &draws.states {
        let z = st.z();
        let mut idx = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if z[i] == z[j] {
                    s[idx] += 1.0;
                }
                idx += 1;
            }
        }
    }
    let d = draws.len() as f64;
    s.iter_mut().for_each(|v| *v /= d);
    s
}

/// Draw whose co-assignment pattern agrees best, on average, with all draws.
pub fn reference_draw(draws: &Draws) -> usize {
    let sim = similarity(draws);
    let n = draws.states[0].n();
    let mut best = (0, f64::NEG_INFINITY);
    for (d, st) in draws.states.iter().enumerate() {
        let z = st.z();
        let mut score = 0.0;
        let mut idx = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                let p = sim[idx];
                score += if z[i] == z[j] { p } else { 1.0 - p };
                idx += 1;
            }
        }
        if score > best.1 {
            best = (d, score);
        }
    }
    best.0
}

/// Map the ids of `z` onto `reference` ids by maximum-overlap matching.
///
/// Ids left unmatched, and ids listed in `extra` that never appear in `z`,
/// get the lowest ids not already taken.
fn matching_map(z: &[usize], reference: &[usize], extra: &[usize]) -> BTreeMap<usize, usize> {
    let own: Vec<usize> = z.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let refs: Vec<usize> = reference.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let size = own.len().max(refs.len());
    let own_pos: HashMap<usize, usize> = own.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let ref_pos: HashMap<usize, usize> = refs.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut w = Matrix::new(size, size, 0i64);
    for (&a, &b) in z.iter().zip(reference) {
        w[(own_pos[&a], ref_pos[&b])] += 1;
    }
    let (_, assign) = kuhn_munkres(&w);
    let mut map = BTreeMap::new();
    let mut taken = BTreeSet::new();
    let mut pending = Vec::new();
    for (row, &col) in assign.iter().enumerate().take(own.len()) {
        // a zero-overlap pairing carries no information; treat it as unmatched
        if col < refs.len() && w[(row, col)] > 0 {
            map.insert(own[row], refs[col]);
            taken.insert(refs[col]);
        } else {
            pending.push(own[row]);
        }
    }
    pending.extend(extra.iter().copied().filter(|c| !own_pos.contains_key(c)));
    let mut next = 0;
    for c in pending {
        while taken.contains(&next) {
            next += 1;
        }
        map.insert(c, next);
        taken.insert(next);
    }
    map
}

/// Permute each draw's labels to agree with a reference draw.
pub fn relabel_draws(draws: &Draws) -> Result<Draws> {
    if draws.is_empty() {
        return Err(Error::InvalidState("no draws to relabel".into()));
    }
    let r = reference_draw(draws);
    let reference = draws.states[r].z().to_vec();
    let mut out = draws.clone();
    for (d, st) in draws.states.iter().enumerate() {
        let map = matching_map(st.z(), &reference, &st.ids());
        out.states[d] = st.relabel(&map)?;
        if let (Some(w_in), Some(w_out)) = (&draws.weights, out.weights.as_mut()) {
            let len = map.values().max().map(|m| m + 1).unwrap_or(0).max(w_in[d].len());
            let mut w = vec![0.0; len];
            for (&old, &new) in &map {
                w[new] = w_in[d][old];
            }
            w.truncate(map.values().max().map(|m| m + 1).unwrap_or(0));
            w_out[d] = w;
        }
    }
    Ok(out)
}

/// Most frequent label of each observation across draws; ties go to the
/// smaller id.
pub fn point_assignments(draws: &Draws) -> Result<Vec<usize>> {
    if draws.is_empty() {
        return Err(Error::InvalidState("no draws".into()));
    }
    let n = draws.states[0].n();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for st in &draws.states {
            *counts.entry(st.z()[i]).or_default() += 1;
        }
        let mut best = (usize::MAX, 0);
        for (&c, &k) in &counts {
            if k > best.1 {
                best = (c, k);
            }
        }
        out.push(best.0);
    }
    Ok(out)
}

/// Posterior mean and mode of the component count: weights above the
/// threshold for the overfitted mixture, occupied clusters otherwise.
pub fn k_hat(draws: &Draws) -> KHat {
    let counts: Vec<usize> = match (draws.meta.model, &draws.weights, &draws.meta.sid) {
        (ModelTag::Sid, Some(w), sid) => {
            let thr = sid.as_ref().map(|s| s.eff_threshold).unwrap_or(1e-3);
            w.iter().map(|row| k_eff(row, thr)).collect()
        }
        _ => draws.states.iter().map(|s| s.occupied_count()).collect(),
    };
    let mean = counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64;
    let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
    for c in &counts {
        *freq.entry(*c).or_default() += 1;
    }
    let mut mode = (0, 0);
    for (&k, &f) in &freq {
        if f > mode.1 {
            mode = (k, f);
        }
    }
    KHat { mean, mode: mode.0 }
}

/// Least-squares coefficients for one cluster; ridge when the cluster is too
/// small or its design is singular.
fn refit(stats: &SuffStats, p: usize, ridge: f64) -> Vec<f64> {
    if stats.n > p {
        if let Some(ch) = Chol::factor(&stats.xtx, p) {
            let b = ch.solve(&stats.xty);
            if b.iter().all(|v| v.is_finite()) {
                return b;
            }
        }
    }
    let mut a = stats.xtx.clone();
    for j in 0..p {
        a[j * p + j] += ridge;
    }
    Chol::factor(&a, p).map(|c| c.solve(&stats.xty)).unwrap_or_else(|| vec![0.0; p])
}

/// Root mean squared residual after refitting least squares inside each
/// cluster of `z_hat`.
pub fn rmse_posthoc(ds: &Dataset, z_hat: &[usize]) -> Result<f64> {
    if z_hat.len() != ds.n() {
        return Err(Error::DimensionMismatch(format!("{} labels for {} rows", z_hat.len(), ds.n())));
    }
    let p = ds.p();
    let ridge = RIDGE_SCALE * ds.gram_trace() / p as f64;
    let mut stats: BTreeMap<usize, SuffStats> = BTreeMap::new();
    for (i, &c) in z_hat.iter().enumerate() {
        stats.entry(c).or_insert_with(|| SuffStats::zeros(p)).add(ds.row(i), ds.response(i));
    }
    let coefs: BTreeMap<usize, Vec<f64>> = stats.iter().map(|(&c, s)| (c, refit(s, p, ridge))).collect();
    let sse: f64 = (0..ds.n())
        .map(|i| {
            let r = ds.response(i) - dot(ds.row(i), &coefs[&z_hat[i]]);
            r * r
        })
        .sum();
    Ok((sse / ds.n() as f64).sqrt())
}

/// RMSE of the posterior mean fit `E[x_iᵀ β_{z_i}]` over draws.
pub fn rmse_draws(ds: &Dataset, draws: &Draws) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::InvalidState("no draws".into()));
    }
    let n = ds.n();
    let mut fit = vec![0.0; n];
    for st in &draws.states {
        for (i, f) in fit.iter_mut().enumerate() {
            let c = st.component(st.z()[i]).ok_or_else(|| Error::InvalidState("dangling label".into()))?;
            *f += dot(ds.row(i), &c.beta);
        }
    }
    let d = draws.len() as f64;
    let sse: f64 = (0..n).map(|i| (ds.response(i) - fit[i] / d).powi(2)).sum();
    Ok((sse / n as f64).sqrt())
}

/// Relabel, form the point partition and score it against the truth.
pub fn evaluate(ds: &Dataset, draws: &Draws, truth: &[usize], mode: RmseMode) -> Result<EvalReport> {
    let relabeled = relabel_draws(draws)?;
    let z_hat = point_assignments(&relabeled)?;
    let kh = k_hat(&relabeled);
    let rmse = match mode {
        RmseMode::OlsRefit => rmse_posthoc(ds, &z_hat)?,
        RmseMode::Draws => rmse_draws(ds, &relabeled)?,
    };
    Ok(EvalReport {
        ari: ari(&z_hat, truth)?,
        purity: purity(&z_hat, truth)?,
        k_hat: kh.mean,
        k_mode: kh.mode,
        rmse,
        n: ds.n(),
    })
}
