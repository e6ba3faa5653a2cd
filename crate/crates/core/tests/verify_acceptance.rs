//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! `ACCEPTANCE_ONLY=1,2,7` restricts the run to the listed criteria.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use repmix::metrics::{ari, purity};
use repmix::model::{ComponentParams, KPrior};
use repmix::normalizer::build_zk_table;
use repmix::sampler::{compute_vn, Sampler};
use repmix::seed::rng_from_seed;
use repmix::simbench::{
    data_seed, fit_method, gen_scenario, run_benchmark, BenchConfig, BenchResult, Method, ScenarioId, ScenarioSpec,
};
use repmix::{ChainConfig, Dataset, Init, MixtureState, ModelSpec, PriorConfig};
use statrs::function::gamma::ln_gamma;

use common::*;

const BASE_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn one_cluster(n: usize, beta: Vec<f64>, sigma2: f64) -> MixtureState {
    let comps = BTreeMap::from([(0, ComponentParams { beta, sigma2 })]);
    MixtureState::from_parts(vec![0; n], comps).unwrap()
}

fn bench_chain() -> ChainConfig {
    ChainConfig { n_iter: 2000, burn_in: 1000, thin: 1, seed: 0, init: Init::Random { k: 20 } }
}

/// Conjugate one-cluster check: Gibbs marginals against grid quadrature.
fn criterion_1() -> Outcome {
    let mut rng = rng_from_seed(101);
    let x: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: Vec<f64> = x.iter().map(|&v| 1.5 * v + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let ds = Dataset::from_rows(&x.iter().map(|&v| vec![v]).collect::<Vec<_>>(), &y).unwrap();
    let prior = PriorConfig::default();
    let model = ModelSpec::mfm(&ds, prior.clone()).unwrap();
    let zk = build_zk_table(&ds, &model, 1).unwrap();
    let mut s = Sampler::new(&ds, &model, &zk, one_cluster(20, vec![0.0], 1.0), 7).unwrap();
    let draws = 100_000;
    let (mut betas, mut s2s) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
    for it in 0..draws + 1000 {
        s.variance_sweep();
        s.coefficient_sweep();
        if it >= 1000 {
            let c = s.state().component(0).unwrap();
            betas.push(c.beta[0]);
            s2s.push(c.sigma2);
        }
    }
    let [eb, vb, es, vs] =
        regression_posterior_moments(&x, &y, prior.tau2, prior.a0, prior.b0, prior.sigma2_lo, prior.sigma2_hi);
    let (mb, ms) = (mean(&betas), mean(&s2s));
    let (seb, ses) = (batch_means_se(&betas, 100), batch_means_se(&s2s, 100));
    let (rvb, rvs) = (variance(&betas) / vb - 1.0, variance(&s2s) / vs - 1.0);
    let pass = (mb - eb).abs() < 3.0 * seb && (ms - es).abs() < 3.0 * ses && rvb.abs() < 0.05 && rvs.abs() < 0.05;
    outcome(
        pass,
        format!(
            "beta mean {mb:.5} vs {eb:.5} ({:.2} SE), var ratio {:+.4}; sigma2 mean {ms:.5} vs {es:.5} ({:.2} SE), var ratio {:+.4}",
            (mb - eb).abs() / seb,
            rvb,
            (ms - es).abs() / ses,
            rvs
        ),
    )
}

/// Two-component coefficient step against a 2-D grid of the tilted density.
fn criterion_2() -> Outcome {
    let y = [0.2, -0.1, 0.3, 0.1];
    let ds = Dataset::from_rows(&vec![vec![1.0]; 4], &y).unwrap();
    let prior = PriorConfig { k_max: 2, ..Default::default() };
    let g = prior.g_for(4);
    let g0 = prior.g0;
    let model = ModelSpec::rgrm(&ds, prior).unwrap();
    let zk = build_zk_table(&ds, &model, 1).unwrap();
    let comps = BTreeMap::from([
        (0, ComponentParams { beta: vec![0.0], sigma2: 1.0 }),
        (1, ComponentParams { beta: vec![0.0], sigma2: 1.0 }),
    ]);
    let st = MixtureState::from_parts(vec![0, 0, 1, 1], comps).unwrap();
    let mut s = Sampler::new(&ds, &model, &zk, st, 13).unwrap();

    // Unit variance, XᵀX = 4, two rows per cluster: precision 2 + 4/g, and
    // the design distance is (4/g)(β1 − β2)².
    let prec = 2.0 + 4.0 / g;
    let sd = prec.powf(-0.5);
    let m = [(y[0] + y[1]) / prec, (y[2] + y[3]) / prec];
    let bins = 16usize;
    let half = 4.0 * sd;
    let bin_of = |v: f64, c: f64| -> Option<usize> {
        let u = (v - (c - half)) / (2.0 * half) * bins as f64;
        (u >= 0.0 && u < bins as f64).then(|| u as usize)
    };
    let fine = 1280usize;
    let step = 4.0 * half / fine as f64;
    let mut grid = vec![0.0; bins * bins + 1];
    for i in 0..fine {
        let b1 = m[0] - 2.0 * half + (i as f64 + 0.5) * step;
        for j in 0..fine {
            let b2 = m[1] - 2.0 * half + (j as f64 + 0.5) * step;
            let d = 4.0 / g * (b1 - b2).powi(2);
            let w = (-0.5 * prec * ((b1 - m[0]).powi(2) + (b2 - m[1]).powi(2))).exp() * d / (d + g0);
            let cell = match (bin_of(b1, m[0]), bin_of(b2, m[1])) {
                (Some(a), Some(b)) => a * bins + b,
                _ => bins * bins,
            };
            grid[cell] += w;
        }
    }
    let total: f64 = grid.iter().sum();
    let n_draws = 100_000;
    let mut counts = vec![0.0; bins * bins + 1];
    let mut attempts = 0;
    for _ in 0..n_draws {
        attempts += s.coefficient_sweep();
        let b1 = s.state().component(0).unwrap().beta[0];
        let b2 = s.state().component(1).unwrap().beta[0];
        let cell = match (bin_of(b1, m[0]), bin_of(b2, m[1])) {
            (Some(a), Some(b)) => a * bins + b,
            _ => bins * bins,
        };
        counts[cell] += 1.0;
    }
    let tv: f64 = 0.5 * grid.iter().zip(&counts).map(|(p, c)| (p / total - c / n_draws as f64).abs()).sum::<f64>();
    outcome(
        tv < 0.03,
        format!("TV {tv:.4} over {} cells, mean attempts {:.3}", bins * bins + 1, attempts as f64 / n_draws as f64),
    )
}

/// Growth of the prior normalizer on the toy design.
fn criterion_3() -> Outcome {
    let (ds, _) = gen_scenario(&ScenarioSpec { id: ScenarioId::Toy, n_per: 1000, seed: 1 }).unwrap();
    let model = ModelSpec::rgrm(&ds, PriorConfig { k_max: 15, ..Default::default() }).unwrap();
    let table = build_zk_table(&ds, &model, 11).unwrap();
    let mut nonneg = true;
    let mut ratios = Vec::new();
    for k in 2..=15 {
        let e = table.entries[&k];
        let v = -e.log_estimate;
        nonneg &= v >= -2.0 * e.mc_std_error;
        ratios.push(v / k as f64);
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let median = 0.5 * (sorted[6] + sorted[7]);
    let max = sorted[sorted.len() - 1];
    let ratio = max / median;
    outcome(
        nonneg && ratio < 3.0,
        format!(
            "-log Z_K within 2 SE of nonnegative: {nonneg}; -log Z_K / K from {:.4} (K=2) to {:.4} (K=15); max/median {ratio:.3}",
            ratios[0], ratios[13]
        ),
    )
}

fn modes(r: &BenchResult, method: Method) -> Vec<usize> {
    r.rows.iter().filter(|x| x.method == method).map(|x| x.report.as_ref().map(|e| e.k_mode).unwrap_or(0)).collect()
}

/// Toy data, ten replicates per method.
fn criterion_4() -> Outcome {
    let cfg = BenchConfig {
        scenarios: vec![ScenarioId::Toy],
        n_per: vec![1000],
        methods: vec![Method::Rgrm, Method::Mfm, Method::Rrm],
        reps: 10,
        base_seed: BASE_SEED,
        chain: bench_chain(),
        ..Default::default()
    };
    let r = run_benchmark(&cfg, 1).unwrap();
    let (rgrm, mfm, rrm) = (modes(&r, Method::Rgrm), modes(&r, Method::Mfm), modes(&r, Method::Rrm));
    let a = rgrm.iter().filter(|&&k| k == 3).count();
    let b = mfm.iter().filter(|&&k| k >= 6).count();
    let c = rrm.iter().filter(|&&k| k <= 3 && k > 0).count();
    outcome(
        a >= 7 && b >= 7 && c >= 7,
        format!(
            "RgRM mode=3 in {a}/10 {rgrm:?}; MFM mode>=6 in {b}/10 {mfm:?}; RRM mode<=3 in {c}/10 {rrm:?}"
        ),
    )
}

/// Benchmark cells at n = 200 with twenty replicates.
fn criterion_5() -> Outcome {
    let base = BenchConfig { n_per: vec![50], reps: 20, base_seed: BASE_SEED, chain: bench_chain(), ..Default::default() };
    let s1 = run_benchmark(&BenchConfig { scenarios: vec![ScenarioId::S1], methods: vec![Method::Rgrm], ..base.clone() }, 1)
        .unwrap();
    let s2 = run_benchmark(
        &BenchConfig { scenarios: vec![ScenarioId::S2], methods: vec![Method::Rgrm, Method::Rrm, Method::Mfm], ..base },
        1,
    )
    .unwrap();
    let c1 = s1.cell(ScenarioId::S1, 200, Method::Rgrm).unwrap();
    let c2 = |m| s2.cell(ScenarioId::S2, 200, m).unwrap();
    let checks = [
        ("S1 RgRM ARI in [0.49, 0.73]", (0.49..=0.73).contains(&c1.ari.mean), format!("{:.3} ± {:.3}", c1.ari.mean, c1.ari.se)),
        ("S1 RgRM K̂ in [3.8, 4.2]", (3.8..=4.2).contains(&c1.k_hat.mean), format!("{:.3} ± {:.3}", c1.k_hat.mean, c1.k_hat.se)),
        ("S1 RgRM RMSE in [0.9, 1.2]", (0.9..=1.2).contains(&c1.rmse.mean), format!("{:.3} ± {:.3}", c1.rmse.mean, c1.rmse.se)),
        ("S2 MFM K̂ > 6", c2(Method::Mfm).k_hat.mean > 6.0, format!("{:.3} ± {:.3}", c2(Method::Mfm).k_hat.mean, c2(Method::Mfm).k_hat.se)),
        (
            "S2 RgRM ARI > RRM ARI",
            c2(Method::Rgrm).ari.mean > c2(Method::Rrm).ari.mean,
            format!("{:.3} vs {:.3}", c2(Method::Rgrm).ari.mean, c2(Method::Rrm).ari.mean),
        ),
    ];
    let valid = s1.all_valid() && s2.all_valid();
    let pass = valid && checks.iter().all(|c| c.1);
    let detail = checks
        .iter()
        .map(|(name, ok, v)| format!("{name}: {v} [{}]", if *ok { "ok" } else { "miss" }))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, format!("{detail}; all cells valid: {valid}"))
}

/// Posterior mass on six or more clusters falls as repulsion strengthens.
fn criterion_6() -> Outcome {
    let spec = ScenarioSpec { id: ScenarioId::S2, n_per: 50, seed: data_seed(BASE_SEED, ScenarioId::S2, 50, 0) };
    let (ds, _) = gen_scenario(&spec).unwrap();
    let tail = |g0: f64| -> f64 {
        let prior = PriorConfig { g0, ..Default::default() };
        let mut total = 0.0;
        for seed in 0..5u64 {
            let chain = ChainConfig { seed: 500 + seed, ..bench_chain() };
            let d = fit_method(&ds, Method::Rgrm, &prior, &Default::default(), &chain, 900 + seed).unwrap();
            total += d.states.iter().filter(|s| s.occupied_count() >= 6).count() as f64 / d.len() as f64;
        }
        total / 5.0
    };
    let strong = tail(1.0);
    let weak = tail(1e-9);
    outcome(strong < weak, format!("P(K >= 6): g0 = 1 gives {strong:.4}, g0 = 1e-9 gives {weak:.4}"))
}

/// `log V_n(t)` by a fixed 5000-term sum, shifted by its largest term.
fn vn_oracle(t: usize, n: usize, ln_pk: impl Fn(usize) -> f64, alpha: f64) -> f64 {
    let terms: Vec<f64> = (t..t + 5000)
        .map(|k| {
            let kf = k as f64;
            ln_pk(k) + ln_gamma(kf + 1.0) - ln_gamma((k - t) as f64 + 1.0) + ln_gamma(alpha * kf) - ln_gamma(alpha * kf + n as f64)
        })
        .collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Kahan summation of the scaled terms.
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in &terms {
        let y = (v - top).exp() - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    top + sum.ln()
}

/// Partition scores against brute force, and the series coefficients against a direct sum.
fn criterion_7() -> Outcome {
    let mut rng = rng_from_seed(77);
    let mut worst_ari: f64 = 0.0;
    let mut worst_purity: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let ka = rng.random_range(1..=n);
        let kb = rng.random_range(1..=n);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..ka)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..kb)).collect();
        worst_ari = worst_ari.max((ari(&a, &b).unwrap() - ari_pairs(&a, &b)).abs());
        worst_purity = worst_purity.max((purity(&a, &b).unwrap() - purity_direct(&a, &b)).abs());
    }
    let mut worst_vn: f64 = 0.0;
    let priors = [
        PriorConfig::default(),
        PriorConfig { lambda: 3.0, alpha: 0.5, ..Default::default() },
        PriorConfig { k_prior: KPrior::Geometric { p: 0.3 }, ..Default::default() },
    ];
    for prior in &priors {
        let ln_pk = |k: usize| match prior.k_prior {
            KPrior::Geometric { p } => p.ln() + (k as f64 - 1.0) * (1.0 - p).ln(),
            _ => {
                let l = prior.lambda;
                k as f64 * l.ln() - l - ln_gamma(k as f64 + 1.0) - (1.0 - (-l).exp()).ln()
            }
        };
        for n in [5usize, 50, 200, 3000] {
            for t in [1usize, 2, 3, 4, 5] {
                let got = compute_vn(t, n, prior).unwrap();
                let want = vn_oracle(t, n, ln_pk, prior.alpha);
                worst_vn = worst_vn.max((got - want).exp_m1().abs());
            }
        }
    }
    let pass = worst_ari < 1e-12 && worst_purity == 0.0 && worst_vn < 1e-10;
    outcome(
        pass,
        format!("max |ARI diff| {worst_ari:.2e}, max |purity diff| {worst_purity:.2e}, max V_n relative error {worst_vn:.2e}"),
    )
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_repmix")).args(args).output().map(|o| o.status.success()).unwrap_or(false)
}

fn read_all(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        if e.path().is_file() {
            out.insert(e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap());
        }
    }
    out
}

/// Every command twice with the same inputs, and the benchmark at 1 and 8 workers.
fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let bench_cfg = root.join("bench.json");
    fs::write(
        &bench_cfg,
        r#"{"scenarios":["s1","s2"],"n_per":[15],"reps":2,"chain":{"n_iter":60,"burn_in":20},"prior":{"k_max":10,"zk_samples":4000,"ztilde_samples":300}}"#,
    )
    .unwrap();
    let betas = root.join("betas.csv");
    fs::write(&betas, "b1,b2,b3,b4\n1,0,0,0\n0,1,0,0\n0,0,1,0\n0,0,0,0.01\n").unwrap();
    let data = root.join("sim1").join("data.csv");

    let mut report = Vec::new();
    let mut all_ok = true;
    let mut compare = |name: &str, a: &Path, b: &Path, ok_a: bool, ok_b: bool| {
        let same = ok_a && ok_b && {
            let (x, y) = (read_all(a), read_all(b));
            !x.is_empty() && x == y
        };
        all_ok &= same;
        report.push(format!("{name} {}", if same { "identical" } else { "DIFFERENT" }));
    };

    let sim = |d: &str| run_cli(&["simulate", "--scenario=s1", "--n_per=30", "--seed", "9", "--out", &s(&root.join(d))]);
    let (a, b) = (sim("sim1"), sim("sim2"));
    compare("simulate", &root.join("sim1"), &root.join("sim2"), a, b);

    let fit = |d: &str| {
        run_cli(&["fit", &s(&data), "--chain.n_iter=200", "--chain.burn_in=100", "--seed", "3", "--out", &s(&root.join(d))])
    };
    let (a, b) = (fit("fit1"), fit("fit2"));
    compare("fit", &root.join("fit1"), &root.join("fit2"), a, b);

    let zk = |d: &str| run_cli(&["zk", "--prior.k_max=8", "--seed", "4", "--out", &s(&root.join(d))]);
    let (a, b) = (zk("zk1"), zk("zk2"));
    compare("zk", &root.join("zk1"), &root.join("zk2"), a, b);

    let geo = |d: &str| {
        run_cli(&["geometry", &s(&betas), "--design.scenario.scenario=s1", "--seed", "5", "--out", &s(&root.join(d))])
    };
    let (a, b) = (geo("geo1"), geo("geo2"));
    compare("geometry", &root.join("geo1"), &root.join("geo2"), a, b);

    let bench = |d: &str, jobs: &str| {
        run_cli(&["bench", "--config", &s(&bench_cfg), "--jobs", jobs, "--out", &s(&root.join(d))])
    };
    let (a, b, c) = (bench("bench1", "1"), bench("bench1b", "1"), bench("bench8", "8"));
    compare("bench rerun", &root.join("bench1"), &root.join("bench1b"), a, b);
    compare("bench --jobs 1 vs 8", &root.join("bench1"), &root.join("bench8"), a, c);

    outcome(all_ok, report.join(", "))
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria: [(usize, fn() -> Outcome); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    let mut failed = Vec::new();
    for (id, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {id}: {} ({secs:.1}s) {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
