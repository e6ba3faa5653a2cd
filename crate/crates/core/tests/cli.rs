use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn repmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repmix")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.lines().last().expect("stderr line")).expect("JSON error line")
}

fn simulate(dir: &Path, extra: &[&str]) -> String {
    let mut args = vec!["simulate", "--out", path(dir)];
    args.extend_from_slice(extra);
    let o = repmix(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fs::read_to_string(dir.join("data.csv")).unwrap()
}

#[test]
fn simulate_sizes_labels_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let a = simulate(&tmp.path().join("a"), &["--scenario=s1", "--n_per=25", "--seed", "7"]);
    let b = simulate(&tmp.path().join("b"), &["--scenario=s1", "--n_per=25", "--seed", "7"]);
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "x1,x2,x3,x4,y,z_true");
    assert_eq!(lines.len(), 101);
    for label in 0..4 {
        let count = lines[1..].iter().filter(|l| l.ends_with(&format!(",{label}"))).count();
        assert_eq!(count, 25);
    }
    let toy = simulate(&tmp.path().join("toy"), &["--seed", "3"]);
    assert_eq!(toy.lines().count(), 3001);
    let c = simulate(&tmp.path().join("c"), &["--scenario=s1", "--n_per=25", "--seed", "8"]);
    assert_ne!(a, c);
}

#[test]
fn fit_reports_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--scenario=s1", "--n_per=10", "--seed", "2"]);
    let data = tmp.path().join("data.csv");
    let run = |out: &str| {
        let dir = tmp.path().join(out);
        let o = repmix(&["fit", path(&data), "--out", path(&dir), "--chain.n_iter=40", "--chain.burn_in=20", "--seed", "5"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read_to_string(dir.join("report.csv")).unwrap(), fs::read(dir.join("draws.jsonl")).unwrap())
    };
    let (ra, da) = run("a");
    let (rb, db) = run("b");
    assert_eq!(ra, rb);
    assert_eq!(da, db);
    assert!(ra.starts_with("scenario,n,method,seed,ari,rmse,k_hat_mean,k_hat_mode,purity\ndata,40,rgrm,5,"));
    let first: Value = serde_json::from_str(std::str::from_utf8(&da).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["schema_version"], 1);
    assert_eq!(std::str::from_utf8(&da).unwrap().lines().count(), 21);
}

#[test]
fn fit_without_truth_omits_agreement_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("plain.csv");
    let mut text = String::from("x1,x2,y\n");
    for i in 0..30 {
        let x = i as f64 / 10.0;
        let y = if i % 2 == 0 { 1.0 + 2.0 * x } else { -1.0 - x };
        text.push_str(&format!("1,{x},{y}\n"));
    }
    fs::write(&data, text).unwrap();
    let out = tmp.path().join("out");
    let o = repmix(&["fit", path(&data), "--out", path(&out), "--method=sid", "--chain.n_iter=30", "--chain.burn_in=10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("scenario,n,method,seed,rmse,k_hat_mean,k_hat_mode\nplain,30,sid,"), "{report}");
}

#[test]
fn errors_exit_with_status_two_and_a_json_line() {
    let tmp = tempfile::tempdir().unwrap();
    let o = repmix(&["fit", path(&tmp.path().join("missing.csv")), "--out", path(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "io");

    simulate(tmp.path(), &["--scenario=s1", "--n_per=5"]);
    let o = repmix(&["fit", path(&tmp.path().join("data.csv")), "--method=kmeans"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "config");

    let o = repmix(&["bench", "--methods=[\"rgrm\",\"kmeans\"]", "--out", path(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));

    let o = repmix(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "x1,y\n1,2\n2,oops\n").unwrap();
    let o = repmix(&["fit", path(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "data");
}

#[test]
fn bench_writes_one_row_per_method() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bench.json");
    fs::write(
        &cfg,
        r#"{"scenarios":["s1"],"n_per":[25],"reps":2,
            "chain":{"n_iter":30,"burn_in":10},
            "prior":{"k_max":8,"zk_samples":2000,"ztilde_samples":200}}"#,
    )
    .unwrap();
    let o = repmix(&["bench", "--config", path(&cfg), "--out", path(tmp.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("results.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    for (row, m) in rows.iter().zip(["rgrm", "rrm", "mfm", "sid1", "sid2"]) {
        assert!(row.starts_with(&format!("s1,100,{m},2,0,true,")), "{row}");
    }
    let json: Value = serde_json::from_slice(&fs::read(tmp.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 10);
}

#[test]
fn zk_tables_for_trivial_and_small_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("none");
    let o = repmix(&["zk", "--method=mfm", "--prior.k_max=6", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&fs::read(out.join("zk.json")).unwrap()).unwrap();
    let entries = v["table"]["entries"].as_object().unwrap();
    assert_eq!(entries.len(), 5);
    assert!(entries.values().all(|e| e["log_estimate"] == 0.0));

    let out = tmp.path().join("one");
    let o = repmix(&["zk", "--prior.k_max=1", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&fs::read(out.join("zk.json")).unwrap()).unwrap();
    assert!(v["table"]["entries"].as_object().unwrap().is_empty());
    assert_eq!(v["table"]["k_max"], 1);
}

#[test]
fn geometry_counts_ordering_flips() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("design.csv");
    // Second covariate has a much larger spread, so a gap along it weighs more.
    let mut text = String::from("x1,x2,y\n");
    for i in 0..20 {
        text.push_str(&format!("1,{},0\n", (i as f64 - 9.5) * 10.0));
    }
    fs::write(&data, text).unwrap();
    let betas = tmp.path().join("betas.csv");
    fs::write(&betas, "b1,b2\n0,0\n2,0\n0,0.5\n").unwrap();
    let design = format!("--design.data={}", path(&data));
    let o = repmix(&["geometry", path(&betas), &design, "--out", path(tmp.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&fs::read(tmp.path().join("geometry.json")).unwrap()).unwrap();
    assert_eq!(v["pairs"].as_array().unwrap().len(), 3);
    assert!(v["ordering_flips"].as_u64().unwrap() >= 1);
}
