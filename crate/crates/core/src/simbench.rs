//! Simulation scenarios, the replicated benchmark runner and the coefficient
//! geometry report.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_sid, SidConfig};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport, RmseMode};
use crate::model::{Dataset, Draws, ModelSpec, PriorConfig};
use crate::normalizer::build_zk_table;
use crate::repulsion::RepulsionKernel;
use crate::sampler::{run_chain, ChainConfig};
use crate::seed::{derive_seed, rng_from_seed};

pub const BENCH_SCHEMA_VERSION: u32 = 1;
pub const GEOMETRY_SCHEMA_VERSION: u32 = 1;

/// Share of failed replicates above which a cell is reported invalid.
pub const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    Toy,
    S1,
    S2,
    S3,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [ScenarioId::Toy, ScenarioId::S1, ScenarioId::S2, ScenarioId::S3];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioId::Toy => "toy",
            ScenarioId::S1 => "s1",
            ScenarioId::S2 => "s2",
            ScenarioId::S3 => "s3",
        }
    }

    /// Per-cluster sample size used when none is given.
    pub fn default_n_per(&self) -> usize {
        match self {
            ScenarioId::Toy => 1000,
            _ => 50,
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scenario {s:?}; expected toy, s1, s2 or s3")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub n_per: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per == 0 {
            return Err(Error::InvalidConfig("n_per must be positive".into()));
        }
        Ok(())
    }

    /// True coefficients, one row per cluster.
    pub fn coefficients(&self) -> Vec<Vec<f64>> {
        match self.id {
            ScenarioId::Toy => vec![vec![-5.0, 2.5], vec![0.0, 1.0], vec![-1.0, 1.5]],
            ScenarioId::S1 => (0..4).map(|k| (0..4).map(|j| f64::from(u8::from(j == k))).collect()).collect(),
            ScenarioId::S2 => (0..4)
                .map(|k| (0..4).map(|j| if j != k { 0.0 } else if k == 3 { 0.01 } else { 1.0 }).collect())
                .collect(),
            ScenarioId::S3 => vec![
                vec![1.0, 1.0, 0.0, 0.0],
                vec![0.0, 1.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.01],
                vec![1.0, 0.0, 0.0, 0.01],
            ],
        }
    }

    /// Covariate covariance of the Gaussian scenarios.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        match self.id {
            ScenarioId::Toy => None,
            ScenarioId::S1 => Some(DMatrix::from_diagonal_element(4, 4, 100.0)),
            ScenarioId::S2 | ScenarioId::S3 => {
                let sd = [10.0, 10.0, 10.0, 100.0];
                let rho: f64 = 0.5;
                Some(DMatrix::from_fn(4, 4, |i, j| sd[i] * sd[j] * rho.powi((i as i32 - j as i32).abs())))
            }
        }
    }

    pub fn k_true(&self) -> usize {
        self.coefficients().len()
    }
}

/// Simulated data plus the generating labels, cluster by cluster.
pub fn gen_scenario(spec: &ScenarioSpec) -> Result<(Dataset, Vec<usize>)> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let betas = spec.coefficients();
    let chol = spec.covariance().map(|s| s.cholesky().expect("scenario covariance is positive definite").l());
    let mut rows = Vec::with_capacity(betas.len() * spec.n_per);
    let mut y = Vec::with_capacity(rows.capacity());
    let mut truth = Vec::with_capacity(rows.capacity());
    for (k, b) in betas.iter().enumerate() {
        for _ in 0..spec.n_per {
            let x: Vec<f64> = match &chol {
                None => vec![1.0, rng.random_range(0.0..10.0)],
                Some(l) => {
                    let e: Vec<f64> = (0..l.nrows()).map(|_| rng.sample(StandardNormal)).collect();
                    (0..l.nrows()).map(|i| 1.0 + (0..=i).map(|j| l[(i, j)] * e[j]).sum::<f64>()).collect()
                }
            };
            let eps: f64 = rng.sample(StandardNormal);
            y.push(crate::linalg::dot(&x, b) + eps);
            rows.push(x);
            truth.push(k);
        }
    }
    Ok((Dataset::from_rows(&rows, &y)?, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rgrm,
    Rrm,
    Mfm,
    /// Overfitted mixture with total Dirichlet mass 0.1.
    Sid1,
    /// Overfitted mixture with total Dirichlet mass 0.02.
    Sid2,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Rgrm, Method::Rrm, Method::Mfm, Method::Sid1, Method::Sid2];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Rgrm => "rgrm",
            Method::Rrm => "rrm",
            Method::Mfm => "mfm",
            Method::Sid1 => "sid1",
            Method::Sid2 => "sid2",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}; expected rgrm, rrm, mfm, sid1 or sid2")))
    }
}

/// Fit one method with the given chain and prior settings.
///
/// The overfitted mixture takes its component count from `prior.k_max`.
pub fn fit_method(
    ds: &Dataset,
    method: Method,
    prior: &PriorConfig,
    sid: &SidConfig,
    chain: &ChainConfig,
    zk_seed: u64,
) -> Result<Draws> {
    let model = match method {
        Method::Rgrm => ModelSpec::rgrm(ds, prior.clone())?,
        Method::Rrm => ModelSpec::rrm(ds, prior.clone())?,
        Method::Mfm => ModelSpec::mfm(ds, prior.clone())?,
        Method::Sid1 | Method::Sid2 => {
            let alpha_total = if method == Method::Sid1 { 0.1 } else { 0.02 };
            let cfg = SidConfig { alpha_total, ..sid.clone() };
            return run_sid(ds, &cfg, chain);
        }
    };
    let zk = build_zk_table(ds, &model, zk_seed)?;
    run_chain(ds, &model, chain, &zk)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub scenarios: Vec<ScenarioId>,
    /// Per-cluster sample sizes; every scenario runs at each.
    pub n_per: Vec<usize>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub base_seed: u64,
    pub chain: ChainConfig,
    pub prior: PriorConfig,
    pub sid: SidConfig,
    pub rmse: RmseMode,
    /// Reuse replicate 0's seeds for every replicate.
    pub same_seed_all_reps: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![ScenarioId::S1],
            n_per: vec![50],
            methods: Method::ALL.to_vec(),
            reps: 20,
            base_seed: 2024,
            chain: ChainConfig { n_iter: 2000, burn_in: 1000, thin: 1, seed: 0, init: crate::sampler::Init::Random { k: 20 } },
            prior: PriorConfig::default(),
            sid: SidConfig::default(),
            rmse: RmseMode::OlsRefit,
            same_seed_all_reps: false,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(Error::InvalidConfig("reps must be at least 2".into()));
        }
        if self.scenarios.is_empty() || self.methods.is_empty() || self.n_per.is_empty() {
            return Err(Error::InvalidConfig("scenarios, methods and n_per must be non-empty".into()));
        }
        if self.n_per.contains(&0) {
            return Err(Error::InvalidConfig("n_per entries must be positive".into()));
        }
        self.prior.validate()?;
        self.sid.validate()?;
        ChainConfig { seed: 0, ..self.chain.clone() }.validate()
    }
}

/// Data seed for one replicate; shared by all methods so they see the same data.
pub fn data_seed(base: u64, scenario: ScenarioId, n_per: usize, rep: usize) -> u64 {
    derive_seed(&["data", &base.to_string(), scenario.as_str(), &n_per.to_string(), &rep.to_string()])
}

/// Chain seed for one replicate of one method.
pub fn chain_seed(base: u64, scenario: ScenarioId, n_per: usize, method: Method, rep: usize) -> u64 {
    derive_seed(&["chain", &base.to_string(), scenario.as_str(), &n_per.to_string(), method.as_str(), &rep.to_string()])
}

/// One replicate's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRow {
    pub scenario: ScenarioId,
    pub n: usize,
    pub method: Method,
    pub rep: usize,
    pub data_seed: u64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub report: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

fn mean_se(v: &[f64]) -> MeanSe {
    let n = v.len() as f64;
    if v.is_empty() {
        return MeanSe { mean: f64::NAN, se: f64::NAN };
    }
    let mean = v.iter().sum::<f64>() / n;
    let se = if v.len() < 2 {
        f64::NAN
    } else {
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    MeanSe { mean, se }
}

/// Aggregates for one (scenario, n, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scenario: ScenarioId,
    pub n: usize,
    pub method: Method,
    pub reps: usize,
    pub failures: usize,
    pub valid: bool,
    pub ari: MeanSe,
    pub rmse: MeanSe,
    pub k_hat: MeanSe,
    pub k_mode: MeanSe,
    pub purity: MeanSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub schema_version: u32,
    pub config: BenchConfig,
    pub cells: Vec<CellSummary>,
    pub rows: Vec<RepRow>,
}

impl BenchResult {
    pub fn all_valid(&self) -> bool {
        self.cells.iter().all(|c| c.valid)
    }

    pub fn cell(&self, scenario: ScenarioId, n: usize, method: Method) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.scenario == scenario && c.n == n && c.method == method)
    }

    /// Table-style CSV: one row per cell, each metric followed by its standard error.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "scenario", "n", "method", "reps", "failures", "valid", "ari", "ari_se", "rmse", "rmse_se", "k_hat",
            "k_hat_se", "k_mode", "k_mode_se", "purity", "purity_se",
        ])?;
        for c in &self.cells {
            let f = |m: MeanSe| [format!("{:.6}", m.mean), format!("{:.6}", m.se)];
            let mut rec = vec![
                c.scenario.to_string(),
                c.n.to_string(),
                c.method.to_string(),
                c.reps.to_string(),
                c.failures.to_string(),
                c.valid.to_string(),
            ];
            for m in [c.ari, c.rmse, c.k_hat, c.k_mode, c.purity] {
                rec.extend(f(m));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Task {
    scenario: ScenarioId,
    n_per: usize,
    method: Method,
    rep: usize,
}

fn run_task(cfg: &BenchConfig, t: &Task) -> RepRow {
    let seed_rep = if cfg.same_seed_all_reps { 0 } else { t.rep };
    let dseed = data_seed(cfg.base_seed, t.scenario, t.n_per, seed_rep);
    let cseed = chain_seed(cfg.base_seed, t.scenario, t.n_per, t.method, seed_rep);
    let spec = ScenarioSpec { id: t.scenario, n_per: t.n_per, seed: dseed };
    let outcome = (|| {
        let (ds, truth) = gen_scenario(&spec)?;
        let chain = ChainConfig { seed: cseed, ..cfg.chain.clone() };
        let sid = SidConfig { k_fit: cfg.prior.k_max.max(2), ..cfg.sid.clone() };
        let draws = fit_method(&ds, t.method, &cfg.prior, &sid, &chain, cseed ^ 0x7a6b)?;
        evaluate(&ds, &draws, &truth, cfg.rmse)
    })();
    let (report, error) = match outcome {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    RepRow {
        scenario: t.scenario,
        n: t.n_per * spec.k_true(),
        method: t.method,
        rep: t.rep,
        data_seed: dseed,
        seed: cseed,
        report,
        error,
    }
}

/// Run every (scenario, n, method, replicate) task on a pool of `jobs`
/// threads and aggregate in fixed order.
pub fn run_benchmark(cfg: &BenchConfig, jobs: usize) -> Result<BenchResult> {
    cfg.validate()?;
    let mut tasks = Vec::new();
    for &scenario in &cfg.scenarios {
        for &n_per in &cfg.n_per {
            for &method in &cfg.methods {
                for rep in 0..cfg.reps {
                    tasks.push(Task { scenario, n_per, method, rep });
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let rows: Vec<RepRow> = pool.install(|| tasks.par_iter().map(|t| run_task(cfg, t)).collect());

    let mut cells = Vec::new();
    for chunk in rows.chunks(cfg.reps) {
        let ok: Vec<&EvalReport> = chunk.iter().filter_map(|r| r.report.as_ref()).collect();
        let failures = chunk.len() - ok.len();
        let col = |f: fn(&EvalReport) -> f64| mean_se(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
        cells.push(CellSummary {
            scenario: chunk[0].scenario,
            n: chunk[0].n,
            method: chunk[0].method,
            reps: ok.len(),
            failures,
            valid: !ok.is_empty() && failures as f64 <= MAX_FAILURE_RATE * chunk.len() as f64,
            ari: col(|r| r.ari),
            rmse: col(|r| r.rmse),
            k_hat: col(|r| r.k_hat),
            k_mode: col(|r| r.k_mode as f64),
            purity: col(|r| r.purity),
        });
    }
    Ok(BenchResult { schema_version: BENCH_SCHEMA_VERSION, config: cfg.clone(), cells, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub schema_version: u32,
    /// Index pairs in the order of the distance lists.
    pub pairs: Vec<(usize, usize)>,
    pub beta_space_dists: Vec<f64>,
    pub mean_space_dists: Vec<f64>,
    /// Pairs of entries ordered one way in coefficient space and the other
    /// way in fitted-mean space.
    pub ordering_flips: usize,
}

/// Compare squared Euclidean coefficient distances with the design-metric
/// distances used by the repulsion.
pub fn geometry_report(ds: &Dataset, betas: &[Vec<f64>], g: f64) -> Result<GeometryReport> {
    if betas.len() < 2 {
        return Err(Error::InvalidConfig("geometry needs at least two coefficient vectors".into()));
    }
    let kernel = RepulsionKernel::mahalanobis(ds, g, 1.0)?;
    let mut pairs = Vec::new();
    let mut eu = Vec::new();
    let mut ma = Vec::new();
    for a in 0..betas.len() {
        for b in (a + 1)..betas.len() {
            if betas[a].len() != ds.p() || betas[b].len() != ds.p() {
                return Err(Error::DimensionMismatch(format!("coefficient vectors must have length {}", ds.p())));
            }
            pairs.push((a, b));
            eu.push(crate::linalg::sq_dist(&betas[a], &betas[b]));
            ma.push(kernel.pair_distance(&betas[a], &betas[b])?);
        }
    }
    let mut flips = 0;
    for i in 0..eu.len() {
        for j in (i + 1)..eu.len() {
            let de = eu[i] - eu[j];
            let dm = ma[i] - ma[j];
            if de * dm < 0.0 {
                flips += 1;
            }
        }
    }
    Ok(GeometryReport {
        schema_version: GEOMETRY_SCHEMA_VERSION,
        pairs,
        beta_space_dists: eu,
        mean_space_dists: ma,
        ordering_flips: flips,
    })
}
