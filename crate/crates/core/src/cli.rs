//! The `repmix` command line: configuration loading, overrides and the five
//! subcommands.
//!
//! Each command reads an optional JSON config, applies dotted overrides such
//! as `--prior.g0=0.5`, validates everything, computes, and only then writes
//! its output files. Failures print one JSON line on stderr.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::baselines::{run_sid, SidConfig};
use crate::error::{Error, Result};
use crate::io::{read_dataset_file, write_dataset, write_draws};
use crate::metrics::{ari, k_hat, point_assignments, purity, relabel_draws, rmse_draws, rmse_posthoc, RmseMode};
use crate::model::{Dataset, ModelSpec, PriorConfig};
use crate::normalizer::{build_zk_table_partial, growth_diagnostic, load_or_build_zk_table, ZkTable};
use crate::sampler::{run_chain, ChainConfig, Init};
use crate::seed::derive_seed;
use crate::simbench::{gen_scenario, geometry_report, run_benchmark, BenchConfig, ScenarioId, ScenarioSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BENCH_INVALID: i32 = 3;

pub const ZK_FILE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "repmix", version, about = "Repulsive g-prior mixtures of regressions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the command's random streams (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one model to a CSV dataset.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV (x1..xp, y, optional z_true).
        data: Option<PathBuf>,
    },
    /// Write a simulated scenario dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the replicated benchmark.
    Bench {
        #[command(flatten)]
        common: Common,
    },
    /// Build the normalizing-constant table and its growth diagnostic.
    Zk {
        #[command(flatten)]
        common: Common,
    },
    /// Compare coefficient-space and design-metric distances.
    Geometry {
        #[command(flatten)]
        common: Common,
        /// Coefficient vectors, one per row.
        betas: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Rgrm,
    Rrm,
    Mfm,
    Sid,
}

impl FitMethod {
    fn as_str(&self) -> &'static str {
        match self {
            FitMethod::Rgrm => "rgrm",
            FitMethod::Rrm => "rrm",
            FitMethod::Mfm => "mfm",
            FitMethod::Sid => "sid",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub method: FitMethod,
    pub data: Option<PathBuf>,
    pub prior: PriorConfig,
    pub chain: ChainConfig,
    pub sid: SidConfig,
    pub rmse: RmseMode,
    /// Seed of the normalizer table; derived from the chain seed when absent.
    pub zk_seed: Option<u64>,
    /// Directory for cached normalizer tables.
    pub zk_cache_dir: Option<PathBuf>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: FitMethod::Rgrm,
            data: None,
            prior: PriorConfig::default(),
            chain: ChainConfig { init: Init::Random { k: 20 }, ..ChainConfig::default() },
            sid: SidConfig::default(),
            rmse: RmseMode::OlsRefit,
            zk_seed: None,
            zk_cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: ScenarioId,
    /// Per-cluster size; the scenario default when absent.
    pub n_per: Option<usize>,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { scenario: ScenarioId::Toy, n_per: None, seed: 1 }
    }
}

impl SimulateConfig {
    fn spec(&self) -> ScenarioSpec {
        ScenarioSpec { id: self.scenario, n_per: self.n_per.unwrap_or(self.scenario.default_n_per()), seed: self.seed }
    }
}

/// Where the design comes from for commands that only need `X`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSource {
    /// Dataset CSV; takes precedence over the scenario.
    pub data: Option<PathBuf>,
    pub scenario: SimulateConfig,
}

impl Default for DesignSource {
    fn default() -> Self {
        Self { data: None, scenario: SimulateConfig::default() }
    }
}

impl DesignSource {
    fn load(&self) -> Result<Dataset> {
        match &self.data {
            Some(p) => Ok(read_dataset_file(p)?.0),
            None => {
                let spec = self.scenario.spec();
                spec.validate()?;
                Ok(gen_scenario(&spec)?.0)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZkConfig {
    pub design: DesignSource,
    /// Model whose repulsion the table normalizes (rgrm, rrm or mfm).
    pub method: FitMethod,
    pub prior: PriorConfig,
    pub seed: u64,
}

impl Default for ZkConfig {
    fn default() -> Self {
        Self { design: DesignSource::default(), method: FitMethod::Rgrm, prior: PriorConfig::default(), seed: 1 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub design: DesignSource,
    pub betas: Option<PathBuf>,
    /// Scale of the design metric; the sample size when absent.
    pub g: Option<f64>,
}

/// Flags handled by the argument parser; any other `--key=value` is a
/// configuration override.
const PARSER_FLAGS: [&str; 4] = ["config", "seed", "jobs", "out"];

/// Split `--a.b=value` overrides from the arguments clap should see.
fn split_overrides(args: Vec<OsString>) -> (Vec<OsString>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        if let Some(s) = a.to_str() {
            if let Some(body) = s.strip_prefix("--") {
                if let Some((k, v)) = body.split_once('=') {
                    if !PARSER_FLAGS.contains(&k) {
                        overrides.push((k.to_string(), v.to_string()));
                        continue;
                    }
                }
            }
        }
        rest.push(a);
    }
    (rest, overrides)
}

/// Set a dotted path in a JSON object; the value is parsed as JSON when
/// possible and kept as a string otherwise.
fn apply_override(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        if key.is_empty() {
            return Err(Error::InvalidConfig(format!("bad override path {path:?}")));
        }
        if !cur.is_object() {
            if cur.is_null() {
                *cur = Value::Object(Default::default());
            } else {
                return Err(Error::InvalidConfig(format!("override {path:?} descends into a non-object")));
            }
        }
        let obj = cur.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

/// Overlay `patch` onto `base`, descending into objects present in both.
fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Defaults of `T`, overlaid by the config file, then by command-line values.
fn load_config<T: DeserializeOwned + Serialize + Default>(
    path: Option<&Path>,
    overrides: &[(String, String)],
    extra: &[(&str, Value)],
) -> Result<T> {
    let mut root = serde_json::to_value(T::default())?;
    if let Some(p) = path {
        let file = serde_json::from_slice::<Value>(&fs::read(p)?)?;
        if !file.is_object() {
            return Err(Error::InvalidConfig("configuration must be a JSON object".into()));
        }
        merge_json(&mut root, file);
    }
    for (k, v) in extra {
        apply_override(&mut root, k, &v.to_string())?;
    }
    for (k, v) in overrides {
        apply_override(&mut root, k, v)?;
    }
    Ok(serde_json::from_value(root)?)
}

fn seed_override(path: &'static str, seed: Option<u64>) -> Vec<(&'static str, Value)> {
    seed.map(|s| vec![(path, json!(s))]).unwrap_or_default()
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn model_for(ds: &Dataset, method: FitMethod, prior: &PriorConfig) -> Result<ModelSpec> {
    match method {
        FitMethod::Rgrm => ModelSpec::rgrm(ds, prior.clone()),
        FitMethod::Rrm => ModelSpec::rrm(ds, prior.clone()),
        FitMethod::Mfm => ModelSpec::mfm(ds, prior.clone()),
        FitMethod::Sid => Err(Error::InvalidConfig("the overfitted mixture has no normalizer table".into())),
    }
}

fn cmd_fit(common: &Common, data: Option<PathBuf>, overrides: &[(String, String)]) -> Result<()> {
    let mut extra = seed_override("chain.seed", common.seed);
    if let Some(d) = &data {
        extra.push(("data", json!(d)));
    }
    let cfg: FitConfig = load_config(common.config.as_deref(), overrides, &extra)?;
    cfg.prior.validate()?;
    cfg.chain.validate()?;
    if cfg.method == FitMethod::Sid {
        cfg.sid.validate()?;
    }
    let path = cfg.data.clone().ok_or_else(|| Error::InvalidConfig("no dataset given".into()))?;
    let (ds, truth) = read_dataset_file(&path)?;
    if let Some(t) = &truth {
        if t.len() != ds.n() {
            return Err(Error::Data("z_true length differs from the data".into()));
        }
    }
    let draws = match cfg.method {
        FitMethod::Sid => run_sid(&ds, &cfg.sid, &cfg.chain)?,
        m => {
            let model = model_for(&ds, m, &cfg.prior)?;
            let zk_seed = cfg.zk_seed.unwrap_or_else(|| derive_seed(&["zk", &cfg.chain.seed.to_string()]));
            let zk: ZkTable = match &cfg.zk_cache_dir {
                Some(dir) => load_or_build_zk_table(dir, &ds, &model, zk_seed)?,
                None => crate::normalizer::build_zk_table(&ds, &model, zk_seed)?,
            };
            run_chain(&ds, &model, &cfg.chain, &zk)?
        }
    };
    let relabeled = relabel_draws(&draws)?;
    let z_hat = point_assignments(&relabeled)?;
    let kh = k_hat(&relabeled);
    let rmse = match cfg.rmse {
        RmseMode::OlsRefit => rmse_posthoc(&ds, &z_hat)?,
        RmseMode::Draws => rmse_draws(&ds, &relabeled)?,
    };
    let scenario = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut header = vec!["scenario", "n", "method", "seed"];
    let mut row = vec![scenario, ds.n().to_string(), cfg.method.as_str().to_string(), cfg.chain.seed.to_string()];
    let scores = match &truth {
        Some(t) => Some((ari(&z_hat, t)?, purity(&z_hat, t)?)),
        None => None,
    };
    if let Some((a, _)) = scores {
        header.push("ari");
        row.push(format!("{a:.6}"));
    }
    header.extend(["rmse", "k_hat_mean", "k_hat_mode"]);
    row.extend([format!("{rmse:.6}"), format!("{:.6}", kh.mean), kh.mode.to_string()]);
    if let Some((_, p)) = scores {
        header.push("purity");
        row.push(format!("{p:.6}"));
    }

    prepare_out(&common.out)?;
    let f = fs::File::create(common.out.join("draws.jsonl"))?;
    write_draws(std::io::BufWriter::new(f), &relabeled)?;
    let mut w = csv::Writer::from_path(common.out.join("report.csv"))?;
    w.write_record(&header)?;
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

fn cmd_simulate(common: &Common, overrides: &[(String, String)]) -> Result<()> {
    let cfg: SimulateConfig = load_config(common.config.as_deref(), overrides, &seed_override("seed", common.seed))?;
    let spec = cfg.spec();
    let (ds, truth) = gen_scenario(&spec)?;
    prepare_out(&common.out)?;
    let f = fs::File::create(common.out.join("data.csv"))?;
    write_dataset(std::io::BufWriter::new(f), &ds, Some(&truth))
}

/// Returns whether every cell is valid.
fn cmd_bench(common: &Common, overrides: &[(String, String)]) -> Result<bool> {
    let cfg: BenchConfig = load_config(common.config.as_deref(), overrides, &seed_override("base_seed", common.seed))?;
    cfg.validate()?;
    let res = run_benchmark(&cfg, common.jobs)?;
    prepare_out(&common.out)?;
    res.write_csv(fs::File::create(common.out.join("results.csv"))?)?;
    write_json(&common.out.join("results.json"), &res)?;
    if !res.all_valid() {
        let cells: Vec<Value> = res
            .cells
            .iter()
            .filter(|c| !c.valid)
            .map(|c| json!({"scenario": c.scenario, "n": c.n, "method": c.method, "failures": c.failures}))
            .collect();
        eprintln!("{}", json!({"error": "bench", "message": "benchmark cells exceeded the failure limit", "cells": cells}));
    }
    Ok(res.all_valid())
}

fn cmd_zk(common: &Common, overrides: &[(String, String)]) -> Result<()> {
    let cfg: ZkConfig = load_config(common.config.as_deref(), overrides, &seed_override("seed", common.seed))?;
    cfg.prior.validate()?;
    let ds = cfg.design.load()?;
    let model = model_for(&ds, cfg.method, &cfg.prior)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let (table, underflows) = pool.install(|| build_zk_table_partial(&ds, &model, cfg.seed));
    let warnings: Vec<String> = underflows.iter().map(|(k, e)| format!("K = {k}: {e}")).collect();
    for w in &warnings {
        eprintln!("{}", json!({"warning": "underflow", "message": w}));
    }
    let diagnostic = growth_diagnostic(&table);
    prepare_out(&common.out)?;
    write_json(
        &common.out.join("zk.json"),
        &json!({
            "schema_version": ZK_FILE_SCHEMA_VERSION,
            "table": table,
            "growth_diagnostic": diagnostic,
            "warnings": warnings,
        }),
    )
}

fn read_betas(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        out.push(row.map_err(|_| Error::Data(format!("non-numeric coefficient in {}", path.display())))?);
    }
    Ok(out)
}

fn cmd_geometry(common: &Common, betas: Option<PathBuf>, overrides: &[(String, String)]) -> Result<()> {
    let mut extra = seed_override("design.scenario.seed", common.seed);
    if let Some(b) = &betas {
        extra.push(("betas", json!(b)));
    }
    let cfg: GeometryConfig = load_config(common.config.as_deref(), overrides, &extra)?;
    let path = cfg.betas.clone().ok_or_else(|| Error::InvalidConfig("no coefficient file given".into()))?;
    let ds = cfg.design.load()?;
    let betas = read_betas(&path)?;
    let g = cfg.g.unwrap_or(ds.n() as f64);
    if !(g > 0.0) {
        return Err(Error::InvalidConfig("g must be positive".into()));
    }
    let report = geometry_report(&ds, &betas, g)?;
    prepare_out(&common.out)?;
    write_json(&common.out.join("geometry.json"), &report)
}

fn error_line(kind: &str, message: &str) -> String {
    json!({"error": kind, "message": message}).to_string()
}

/// Run the command line and return the process exit status.
pub fn run<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let (args, overrides) = split_overrides(args.into_iter().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return EXIT_USAGE;
        }
    };
    let outcome = match cli.command {
        Command::Fit { common, data } => cmd_fit(&common, data, &overrides).map(|_| true),
        Command::Simulate { common } => cmd_simulate(&common, &overrides).map(|_| true),
        Command::Bench { common } => cmd_bench(&common, &overrides),
        Command::Zk { common } => cmd_zk(&common, &overrides).map(|_| true),
        Command::Geometry { common, betas } => cmd_geometry(&common, betas, &overrides).map(|_| true),
    };
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_BENCH_INVALID,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            EXIT_USAGE
        }
    }
}
