//! Domain types shared by every sampler: the validated design, prior
//! hyperparameters, mixture states and collected draws.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dist::standard_normals;
use crate::error::{Error, Result};
use crate::linalg::{dot, Chol};

/// Relative pivot floor for the Gram factorization.
pub const GRAM_PIVOT_FLOOR: f64 = 1e-12;

/// Design matrix and response with cached Gram factorizations.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    gram: DMatrix<f64>,
    gram_chol: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    rows: Vec<f64>,
    chol: Chol,
}

/// Validate `x`/`y` and factor `XᵀX`.
pub fn build_dataset(x: DMatrix<f64>, y: DVector<f64>) -> Result<Dataset> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(Error::DimensionMismatch(format!("design is {n}x{p}; need n >= 1 and p >= 1")));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows but response has {} entries",
            y.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("design or response contains non-finite values".into()));
    }
    let mut rows = vec![0.0; n * p];
    for i in 0..n {
        for j in 0..p {
            rows[i * p + j] = x[(i, j)];
        }
    }
    let mut g = vec![0.0; p * p];
    for i in 0..n {
        let r = &rows[i * p..(i + 1) * p];
        for a in 0..p {
            for b in a..p {
                g[a * p + b] += r[a] * r[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            g[a * p + b] = g[b * p + a];
        }
    }
    let trace: f64 = (0..p).map(|j| g[j * p + j]).sum();
    let floor = GRAM_PIVOT_FLOOR * trace / p as f64;
    let chol = Chol::factor_with_floor(&g, p, floor).map_err(|f| Error::SingularDesign {
        column: f.column,
        pivot: f.pivot,
        floor,
    })?;
    let inv = chol.inverse();
    let gram = DMatrix::from_row_slice(p, p, &g);
    let gram_chol = DMatrix::from_row_slice(p, p, chol.lower());
    let gram_inv = DMatrix::from_row_slice(p, p, &inv);
    Ok(Dataset { x, y, gram, gram_chol, gram_inv, rows, chol })
}

impl Dataset {
    /// Build from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let p = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch("ragged design rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        build_dataset(DMatrix::from_row_slice(rows.len(), p, &flat), DVector::from_column_slice(y))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_chol(&self) -> &DMatrix<f64> {
        &self.gram_chol
    }

    pub fn gram_inv(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    /// Covariates of observation `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.rows[i * p..(i + 1) * p]
    }

    #[inline]
    pub fn response(&self, i: usize) -> f64 {
        self.y[i]
    }

    /// Factor of the Gram matrix in the crate's row-major form.
    pub fn chol(&self) -> &Chol {
        &self.chol
    }

    /// Gram matrix, row-major.
    pub fn gram_row_major(&self) -> Vec<f64> {
        let p = self.p();
        let mut out = vec![0.0; p * p];
        for a in 0..p {
            for b in 0..p {
                out[a * p + b] = self.gram[(a, b)];
            }
        }
        out
    }

    pub fn gram_trace(&self) -> f64 {
        self.gram.trace()
    }

    /// Sufficient statistics of the rows selected by `members`.
    pub fn suff_stats<I: IntoIterator<Item = usize>>(&self, members: I) -> SuffStats {
        let p = self.p();
        let mut s = SuffStats::zeros(p);
        for i in members {
            s.add(self.row(i), self.response(i));
        }
        s
    }
}

/// `Σ xxᵀ`, `Σ x y`, `Σ y²` and the count over a set of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub n: usize,
    pub xtx: Vec<f64>,
    pub xty: Vec<f64>,
    pub yty: f64,
}

impl SuffStats {
    pub fn zeros(p: usize) -> Self {
        Self { n: 0, xtx: vec![0.0; p * p], xty: vec![0.0; p], yty: 0.0 }
    }

    pub fn add(&mut self, x: &[f64], y: f64) {
        let p = x.len();
        self.n += 1;
        for a in 0..p {
            self.xty[a] += x[a] * y;
            for b in 0..p {
                self.xtx[a * p + b] += x[a] * x[b];
            }
        }
        self.yty += y * y;
    }
}

/// Prior on the number of components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KPrior {
    /// Poisson(λ) conditioned on K ≥ 1; λ comes from [`PriorConfig::lambda`].
    Poisson,
    PointMass { k: usize },
    /// Geometric on {1, 2, ...} with success probability `p`.
    Geometric { p: f64 },
}

/// Which discrete weight drives the K update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KWeight {
    /// `K! / ((K-ℓ)! (K+n)!)`, with no `p(K)` factor.
    Factorial,
    /// `p(K) K!/(K-ℓ)! Γ(αK)/Γ(αK+n)`.
    General,
}

/// Hyperparameters of the mixture prior and Monte Carlo budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// g-prior scale; `None` means the unit-information choice g = n.
    pub g: Option<f64>,
    pub g0: f64,
    pub alpha: f64,
    pub a0: f64,
    pub b0: f64,
    pub sigma2_lo: f64,
    pub sigma2_hi: f64,
    pub k_prior: KPrior,
    pub lambda: f64,
    pub k_max: usize,
    pub zk_samples: usize,
    pub ztilde_samples: usize,
    pub m_window: usize,
    pub tau2: f64,
    pub max_rejection_iters: usize,
    pub k_weight: KWeight,
    pub vn_tol: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            g: None,
            g0: 1.0,
            alpha: 1.0,
            a0: 4.0,
            b0: 4.0,
            sigma2_lo: 1e-4,
            sigma2_hi: 1e4,
            k_prior: KPrior::Poisson,
            lambda: 1.0,
            k_max: 20,
            zk_samples: 20_000,
            ztilde_samples: 2_000,
            m_window: 2,
            tau2: 1.0,
            max_rejection_iters: 1000,
            k_weight: KWeight::Factorial,
            vn_tol: 1e-15,
        }
    }
}

impl PriorConfig {
    /// Resolved g for a dataset with `n` rows.
    pub fn g_for(&self, n: usize) -> f64 {
        self.g.unwrap_or(n as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if let Some(g) = self.g {
            if !(g > 0.0 && g.is_finite()) {
                return bad("g must be positive");
            }
        }
        if !(self.g0 >= 0.0 && self.g0.is_finite()) {
            return bad("g0 must be nonnegative");
        }
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !(self.a0 > 0.0 && self.b0 > 0.0) {
            return bad("a0 and b0 must be positive");
        }
        if !(self.sigma2_lo > 0.0 && self.sigma2_lo < self.sigma2_hi && self.sigma2_hi.is_finite()) {
            return bad("variance bounds need 0 < sigma2_lo < sigma2_hi < inf");
        }
        if !(self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if self.k_max == 0 || self.zk_samples == 0 || self.ztilde_samples == 0 {
            return bad("k_max, zk_samples and ztilde_samples must be positive");
        }
        if !(self.tau2 > 0.0) {
            return bad("tau2 must be positive");
        }
        if self.max_rejection_iters == 0 {
            return bad("max_rejection_iters must be positive");
        }
        if !(self.vn_tol > 0.0 && self.vn_tol < 1.0) {
            return bad("vn_tol must lie in (0, 1)");
        }
        match self.k_prior {
            KPrior::PointMass { k } if k == 0 => return bad("point-mass K prior needs k >= 1"),
            KPrior::Geometric { p } if !(p > 0.0 && p <= 1.0) => {
                return bad("geometric K prior needs p in (0, 1]")
            }
            _ => {}
        }
        Ok(())
    }

    /// Largest `K` with positive prior mass, when finite.
    pub fn k_support_max(&self) -> Option<usize> {
        match self.k_prior {
            KPrior::PointMass { k } => Some(k),
            KPrior::Geometric { p } if p >= 1.0 => Some(1),
            _ => None,
        }
    }

    /// `log p(K)`.
    pub fn log_pk(&self, k: usize) -> f64 {
        if k == 0 {
            return f64::NEG_INFINITY;
        }
        match self.k_prior {
            KPrior::Poisson => {
                let l = self.lambda;
                k as f64 * l.ln() - ln_gamma(k as f64 + 1.0) - l.exp_m1().ln()
            }
            KPrior::PointMass { k: k0 } => {
                if k == k0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            KPrior::Geometric { p } => {
                if p >= 1.0 {
                    if k == 1 {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    p.ln() + (k as f64 - 1.0) * (1.0 - p).ln()
                }
            }
        }
    }
}

/// Base prior on regression coefficients given σ².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaPrior {
    /// `N(0, g σ² (XᵀX)⁻¹)`.
    GPrior { g: f64 },
    /// `N(0, τ² I)`.
    Isotropic { tau2: f64 },
}

impl BetaPrior {
    pub fn sample<R: Rng + ?Sized>(&self, sigma2: f64, ds: &Dataset, rng: &mut R) -> Vec<f64> {
        let mut xi = standard_normals(ds.p(), rng);
        match *self {
            BetaPrior::GPrior { g } => {
                ds.chol().solve_upper_t_in_place(&mut xi);
                let s = (g * sigma2).sqrt();
                xi.iter_mut().for_each(|v| *v *= s);
            }
            BetaPrior::Isotropic { tau2 } => {
                let s = tau2.sqrt();
                xi.iter_mut().for_each(|v| *v *= s);
            }
        }
        xi
    }

    /// Conditional posterior of β given σ² and the cluster's statistics.
    pub fn posterior(&self, stats: &SuffStats, sigma2: f64, ds: &Dataset) -> GaussianDraw {
        let p = ds.p();
        let mut q = vec![0.0; p * p];
        match *self {
            BetaPrior::GPrior { g } => {
                let gram = ds.gram();
                for a in 0..p {
                    for b in 0..p {
                        q[a * p + b] = (stats.xtx[a * p + b] + gram[(a, b)] / g) / sigma2;
                    }
                }
            }
            BetaPrior::Isotropic { tau2 } => {
                for a in 0..p {
                    for b in 0..p {
                        q[a * p + b] = stats.xtx[a * p + b] / sigma2;
                    }
                    q[a * p + a] += 1.0 / tau2;
                }
            }
        }
        let chol = Chol::factor(&q, p).expect("posterior precision is positive definite");
        let rhs: Vec<f64> = stats.xty.iter().map(|v| v / sigma2).collect();
        let mean = chol.solve(&rhs);
        GaussianDraw { mean, prec_chol: chol }
    }
}

/// The conditional posterior of β as a function of σ², with whatever does
/// not depend on σ² factored once.
#[derive(Debug, Clone)]
pub enum ConditionalFamily {
    /// Precision `A / σ²` with a fixed mean: the g-prior case.
    Scaled { mean: Vec<f64>, chol: Chol },
    /// Anything else is refactored for every σ².
    General { prior: BetaPrior, stats: SuffStats },
}

impl ConditionalFamily {
    pub fn sample<R: Rng + ?Sized>(&self, sigma2: f64, ds: &Dataset, rng: &mut R) -> Vec<f64> {
        match self {
            ConditionalFamily::Scaled { mean, chol } => {
                let mut xi = standard_normals(mean.len(), rng);
                chol.solve_upper_t_in_place(&mut xi);
                let s = sigma2.sqrt();
                xi.iter_mut().zip(mean).for_each(|(v, m)| *v = m + s * *v);
                xi
            }
            ConditionalFamily::General { prior, stats } => prior.posterior(stats, sigma2, ds).sample(rng),
        }
    }
}

impl BetaPrior {
    pub fn conditional_family(&self, stats: &SuffStats, ds: &Dataset) -> ConditionalFamily {
        match *self {
            BetaPrior::GPrior { .. } => {
                let d = self.posterior(stats, 1.0, ds);
                ConditionalFamily::Scaled { mean: d.mean, chol: d.prec_chol }
            }
            BetaPrior::Isotropic { .. } => ConditionalFamily::General { prior: *self, stats: stats.clone() },
        }
    }
}

/// Gaussian in mean / precision-factor form.
#[derive(Debug, Clone)]
pub struct GaussianDraw {
    pub mean: Vec<f64>,
    pub prec_chol: Chol,
}

impl GaussianDraw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut xi = standard_normals(self.mean.len(), rng);
        self.prec_chol.solve_upper_t_in_place(&mut xi);
        xi.iter_mut().zip(&self.mean).for_each(|(v, m)| *v += m);
        xi
    }

    pub fn covariance(&self) -> Vec<f64> {
        self.prec_chol.inverse()
    }
}

/// Everything a sampler needs to know about the model besides the data:
/// hyperparameters, the coefficient base prior and the repulsion kernel.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub prior: PriorConfig,
    pub beta_prior: BetaPrior,
    pub kernel: crate::repulsion::RepulsionKernel,
    pub tag: ModelTag,
}

impl ModelSpec {
    /// g-prior coefficients with design-metric repulsion.
    pub fn rgrm(ds: &Dataset, prior: PriorConfig) -> Result<Self> {
        prior.validate()?;
        let g = prior.g_for(ds.n());
        let kernel = crate::repulsion::RepulsionKernel::mahalanobis(ds, g, prior.g0)?;
        Ok(Self { prior, beta_prior: BetaPrior::GPrior { g }, kernel, tag: ModelTag::Rgrm })
    }

    /// Isotropic coefficients with Euclidean repulsion.
    pub fn rrm(ds: &Dataset, prior: PriorConfig) -> Result<Self> {
        prior.validate()?;
        let kernel = crate::repulsion::RepulsionKernel::euclidean(ds.p(), prior.g0)?;
        Ok(Self { beta_prior: BetaPrior::Isotropic { tau2: prior.tau2 }, prior, kernel, tag: ModelTag::Rrm })
    }

    /// Isotropic coefficients without repulsion.
    pub fn mfm(ds: &Dataset, prior: PriorConfig) -> Result<Self> {
        prior.validate()?;
        let kernel = crate::repulsion::RepulsionKernel::none(ds.p());
        Ok(Self { beta_prior: BetaPrior::Isotropic { tau2: prior.tau2 }, prior, kernel, tag: ModelTag::Mfm })
    }

    /// Truncated inverse-gamma prior on component variances.
    pub fn sigma2_prior(&self) -> crate::dist::TruncInvGamma {
        crate::dist::TruncInvGamma::new(self.prior.a0, self.prior.b0, self.prior.sigma2_lo, self.prior.sigma2_hi)
    }

    /// One joint prior draw of a component, untilted.
    pub fn draw_prior_component<R: Rng + ?Sized>(
        &self,
        sigma2_prior: &crate::dist::TruncInvGamma,
        ds: &Dataset,
        rng: &mut R,
    ) -> ComponentParams {
        let sigma2 = sigma2_prior.sample(rng);
        let beta = self.beta_prior.sample(sigma2, ds, rng);
        ComponentParams { beta, sigma2 }
    }
}

/// One mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentParams {
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

impl ComponentParams {
    #[inline]
    pub fn log_lik(&self, x: &[f64], y: f64) -> f64 {
        crate::dist::log_normal_pdf(y, dot(x, &self.beta), self.sigma2)
    }
}

/// Assignments plus component parameters for one sweep.
///
/// Component ids index `slots`; a freed id is reused by the next insertion
/// (lowest free id first). A component present in `slots` with no members is
/// an empty component and still counts toward `k_total`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    z: Vec<usize>,
    slots: Vec<Option<ComponentParams>>,
    sizes: Vec<usize>,
}

impl MixtureState {
    /// A state with no observations or components, as before initialization.
    pub fn empty() -> Self {
        Self { z: Vec::new(), slots: Vec::new(), sizes: Vec::new() }
    }

    /// Build from assignments and parameters keyed by component id.
    pub fn from_parts(z: Vec<usize>, components: BTreeMap<usize, ComponentParams>) -> Result<Self> {
        let len = components.keys().next_back().map(|k| k + 1).unwrap_or(0);
        let mut slots = vec![None; len];
        for (id, c) in components {
            slots[id] = Some(c);
        }
        let mut sizes = vec![0; len];
        for (i, &c) in z.iter().enumerate() {
            if c >= len || slots[c].is_none() {
                return Err(Error::InvalidState(format!("observation {i} refers to missing component {c}")));
            }
            sizes[c] += 1;
        }
        Ok(Self { z, slots, sizes })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self) -> &[usize] {
        &self.z
    }

    pub fn component(&self, id: usize) -> Option<&ComponentParams> {
        self.slots.get(id).and_then(|s| s.as_ref())
    }

    pub fn component_mut(&mut self, id: usize) -> Option<&mut ComponentParams> {
        self.slots.get_mut(id).and_then(|s| s.as_mut())
    }

    pub fn size(&self, id: usize) -> usize {
        self.sizes.get(id).copied().unwrap_or(0)
    }

    /// Ids of all live components (occupied and empty), ascending.
    pub fn ids(&self) -> Vec<usize> {
        (0..self.slots.len()).filter(|&i| self.slots[i].is_some()).collect()
    }

    /// Occupied component ids, ascending.
    pub fn occupied(&self) -> Vec<usize> {
        (0..self.slots.len())
            .filter(|&i| self.slots[i].is_some() && self.sizes[i] > 0)
            .collect()
    }

    pub fn empty_ids(&self) -> Vec<usize> {
        (0..self.slots.len())
            .filter(|&i| self.slots[i].is_some() && self.sizes[i] == 0)
            .collect()
    }

    pub fn occupied_count(&self) -> usize {
        (0..self.slots.len())
            .filter(|&i| self.slots[i].is_some() && self.sizes[i] > 0)
            .count()
    }

    pub fn k_total(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    /// Insert a component under the lowest free id.
    pub fn insert(&mut self, c: ComponentParams) -> usize {
        match self.slots.iter().position(|s| s.is_none()) {
            Some(id) => {
                self.slots[id] = Some(c);
                self.sizes[id] = 0;
                id
            }
            None => {
                self.slots.push(Some(c));
                self.sizes.push(0);
                self.slots.len() - 1
            }
        }
    }

    /// Remove a component; it must have no members.
    pub fn remove(&mut self, id: usize) -> Option<ComponentParams> {
        debug_assert_eq!(self.size(id), 0, "removing an occupied component");
        let out = self.slots.get_mut(id).and_then(|s| s.take());
        while matches!(self.slots.last(), Some(None)) {
            self.slots.pop();
            self.sizes.pop();
        }
        out
    }

    pub fn remove_empty(&mut self) {
        for id in self.empty_ids() {
            self.remove(id);
        }
    }

    /// Detach observation `i` from its component; returns the old id.
    pub(crate) fn detach(&mut self, i: usize) -> usize {
        let c = self.z[i];
        self.sizes[c] -= 1;
        c
    }

    pub(crate) fn attach(&mut self, i: usize, c: usize) {
        self.z[i] = c;
        self.sizes[c] += 1;
    }

    /// Member indices per component id.
    pub fn members(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &c) in self.z.iter().enumerate() {
            m.entry(c).or_default().push(i);
        }
        m
    }

    /// Apply a relabeling `old id -> new id` to both assignments and components.
    pub fn relabel(&self, map: &BTreeMap<usize, usize>) -> Result<Self> {
        let mut comps = BTreeMap::new();
        for id in self.ids() {
            let new = *map
                .get(&id)
                .ok_or_else(|| Error::InvalidState(format!("relabel map misses component {id}")))?;
            if comps.insert(new, self.slots[id].clone().expect("live id")).is_some() {
                return Err(Error::InvalidState(format!("relabel map sends two components to {new}")));
            }
        }
        let z = self.z.iter().map(|c| map[c]).collect();
        Self::from_parts(z, comps)
    }

    /// Check the bookkeeping invariants against a dataset shape.
    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        if self.z.len() != n {
            return Err(Error::InvalidState(format!("state has {} assignments, data has {n}", self.z.len())));
        }
        let mut counts = vec![0usize; self.slots.len()];
        for (i, &c) in self.z.iter().enumerate() {
            if c >= self.slots.len() || self.slots[c].is_none() {
                return Err(Error::InvalidState(format!("observation {i} refers to missing component {c}")));
            }
            counts[c] += 1;
        }
        if counts != self.sizes {
            return Err(Error::InvalidState("cached cluster sizes are stale".into()));
        }
        for c in self.slots.iter().flatten() {
            if c.beta.len() != p {
                return Err(Error::InvalidState(format!("coefficient of length {} for p = {p}", c.beta.len())));
            }
            if !(c.sigma2 > 0.0) {
                return Err(Error::InvalidState("non-positive variance".into()));
            }
        }
        Ok(())
    }
}

/// Cluster counts of a state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSummary {
    pub k_total: usize,
    pub occupied_count: usize,
    pub cluster_sizes: BTreeMap<usize, usize>,
}

pub fn state_summary(state: &MixtureState) -> Result<StateSummary> {
    if state.n() == 0 || state.k_total() == 0 {
        return Err(Error::InvalidState("state has not been initialized".into()));
    }
    let cluster_sizes: BTreeMap<usize, usize> =
        state.occupied().into_iter().map(|id| (id, state.size(id))).collect();
    Ok(StateSummary {
        k_total: state.k_total(),
        occupied_count: cluster_sizes.len(),
        cluster_sizes,
    })
}

/// Which model produced a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    Rgrm,
    Rrm,
    Mfm,
    Sid,
}

impl ModelTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelTag::Rgrm => "rgrm",
            ModelTag::Rrm => "rrm",
            ModelTag::Mfm => "mfm",
            ModelTag::Sid => "sid",
        }
    }
}

/// Event counters accumulated over a whole chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub aux_proposals: u64,
    pub aux_draws: u64,
    pub aux_cap_events: u64,
    pub coef_proposals: u64,
    pub coef_sweeps: u64,
    pub coef_cap_events: u64,
    pub weight_underflow_events: u64,
    pub k_underflow_events: u64,
    pub variance_clamp_events: u64,
    pub vn_cache_hits: u64,
    pub vn_cache_misses: u64,
}

/// Per-draw acceptance statistics for the iteration that produced a kept state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DrawStats {
    pub iteration: usize,
    /// Mean auxiliary proposals per accepted auxiliary component in the assignment sweep.
    pub aux_attempts_mean: f64,
    /// Block proposals needed in the coefficient step (capped at max_rejection_iters).
    pub coef_attempts: usize,
    pub cap_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsMeta {
    pub seed: u64,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub model: ModelTag,
    pub prior: PriorConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sid: Option<crate::baselines::SidConfig>,
    pub diagnostics: ChainDiagnostics,
}

/// Post-burn-in thinned states of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    pub states: Vec<MixtureState>,
    /// Explicit mixture weights per draw (overfitted finite mixture only).
    pub weights: Option<Vec<Vec<f64>>>,
    pub stats: Vec<DrawStats>,
    pub meta: DrawsMeta,
}

impl Draws {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::InvalidState("no draws".into()));
        }
        for s in &self.states {
            s.validate(ds.n(), ds.p())?;
        }
        Ok(())
    }
}
