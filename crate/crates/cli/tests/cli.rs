use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::time::Instant;

use serde_json::Value;
use sqd_core::estimation::ObservedDataset;
use sqd_core::io::{default_item_names, write_design, write_responses, ParamsFile};
use sqd_core::pattern::{enumerate_patterns, srs_design, DesignDistribution, Pattern};
use sqd_core::simulation::{block_sigma, gen_population};
use sqd_core::{DMatrix, ModelKind, ModelParams, MvnParams, StructuredPopSpec, DVector};
use tempfile::TempDir;

fn sqd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqd")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", stderr(o));
}

fn assert_error(o: &Output, code: &str) {
    assert!(!o.status.success());
    let err = stderr(o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("sqd: error: {code}: ")), "{err}");
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn pilot_csv(dir: &TempDir, rho1: f64, rho2: f64, n: usize) -> PathBuf {
    let pop = StructuredPopSpec {
        g: 2,
        q: 4,
        rho1,
        rho2,
        model: ModelKind::Mvn,
        lambda_profile: Vec::new(),
        population_size: n,
    };
    let values = gen_population(&pop, 11).unwrap();
    let data = ObservedDataset::complete(values).unwrap();
    let p = path(dir, "pilot.csv");
    write_responses(fs::File::create(&p).unwrap(), &default_item_names(8), &data).unwrap();
    p
}

fn table3_params(dir: &TempDir) -> PathBuf {
    let sigma = block_sigma(2, 4, 0.8, 0.4).unwrap();
    let params = ModelParams::Mvn(MvnParams::new(DVector::zeros(8), sigma).unwrap());
    let p = path(dir, "params.json");
    fs::write(&p, serde_json::to_string(&ParamsFile::from_params(&params)).unwrap()).unwrap();
    p
}

#[test]
fn theory_emits_curves() {
    let o = sqd(&["theory", "--q", "2,500", "--rho1", "0.8", "--rho2", "0.2"]);
    assert_ok(&o);
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "q,rho1,rho2,pi_srs,pi_opt,A_srs,A_opt,re,re_limit");
    assert_eq!(lines.len(), 3);
    let last: Vec<f64> = lines[2].split(',').map(|x| x.parse().unwrap()).collect();
    assert!((last[7] / last[8] - 1.0).abs() < 0.02);
}

#[test]
fn theory_rejects_invalid_region() {
    assert_error(&sqd(&["theory", "--q", "4", "--rho1", "0.2", "--rho2", "0.8"]), "invalid-argument");
}

#[test]
fn missing_flags_are_a_usage_error() {
    let o = sqd(&["design"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("sqd: error: usage: "));
}

#[test]
fn design_then_evaluate_round_trip() {
    let dir = TempDir::new().unwrap();
    let pilot = pilot_csv(&dir, 0.8, 0.2, 2000);
    let out = path(&dir, "design.json");
    assert_ok(&sqd(&["design", "--pilot", s(&pilot), "--m", "2", "--out", s(&out)]));
    let report = read_json(&path(&dir, "design.json.report.json"));
    assert!(report["re_a"].as_f64().unwrap() > 1.0);
    let design = read_json(&out);
    assert_eq!(design["K"], 8);
    let sum: f64 = design["probs"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-9);

    let params = path(&dir, "design.json.params.json");
    let eval = path(&dir, "eval.json");
    assert_ok(&sqd(&["evaluate", "--design", s(&out), "--params", s(&params), "--out", s(&eval)]));
    let got = read_json(&eval)["criterion"].as_f64().unwrap();
    let want = report["criterion_opt"].as_f64().unwrap();
    assert!(((got - want) / want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn design_is_deterministic_across_threads() {
    let dir = TempDir::new().unwrap();
    let pilot = pilot_csv(&dir, 0.8, 0.2, 500);
    let a = path(&dir, "a.json");
    let b = path(&dir, "b.json");
    let bayes = ["--variant", "bayes", "--bayes-draws", "20", "--seed", "7"];
    let run = |out: &Path, threads: &str| {
        let mut args = vec!["--threads", threads, "design", "--pilot", s(&pilot), "--out", s(out)];
        args.extend_from_slice(&bayes);
        assert_ok(&sqd(&args));
    };
    run(&a, "1");
    run(&b, "2");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn minimax_variant_runs() {
    let dir = TempDir::new().unwrap();
    let pilot = pilot_csv(&dir, 0.8, 0.4, 500);
    let out = path(&dir, "mm.json");
    assert_ok(&sqd(&[
        "design", "--pilot", s(&pilot), "--variant", "minimax", "--minimax-grid", "0.25", "--out", s(&out),
    ]));
    let report = read_json(&path(&dir, "mm.json.report.json"));
    assert_eq!(report["variant"]["variant"], "minimax");
}

#[test]
fn exchangeable_pilot_gives_no_gain() {
    let dir = TempDir::new().unwrap();
    let pilot = pilot_csv(&dir, 0.5, 0.4999, 20_000);
    let out = path(&dir, "d.json");
    assert_ok(&sqd(&["design", "--pilot", s(&pilot), "--out", s(&out)]));
    let re = read_json(&path(&dir, "d.json.report.json"))["re_a"].as_f64().unwrap();
    assert!((1.0..1.02).contains(&re), "{re}");
}

#[test]
fn holdout_evaluation_favours_optimized_design() {
    let dir = TempDir::new().unwrap();
    let pilot = pilot_csv(&dir, 0.8, 0.2, 2000);
    let out = path(&dir, "d.json");
    assert_ok(&sqd(&["design", "--pilot", s(&pilot), "--holdout", "0.5", "--out", s(&out)]));
    let h = &read_json(&path(&dir, "d.json.report.json"))["holdout"];
    assert_eq!(h["n"], 1000);
    assert!(h["criterion_opt"].as_f64().unwrap() <= h["criterion_srs"].as_f64().unwrap());
}

#[test]
fn evaluate_srs_at_table3_parameters() {
    let dir = TempDir::new().unwrap();
    let params = table3_params(&dir);
    let design = path(&dir, "srs.json");
    write_design(&design, &srs_design(Arc::new(enumerate_patterns(8, 2).unwrap())).unwrap()).unwrap();
    let o = sqd(&["evaluate", "--design", s(&design), "--params", s(&params)]);
    assert_ok(&o);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["criterion"].as_f64().unwrap() - 20.5173).abs() < 5e-5);
    assert_eq!(v["item_variances"].as_array().unwrap().len(), 8);
}

#[test]
fn evaluate_full_pattern_is_trace() {
    let dir = TempDir::new().unwrap();
    let params = table3_params(&dir);
    let ps = Arc::new(enumerate_patterns(8, 8).unwrap());
    let full = DesignDistribution::point_mass(ps, &Pattern::new((0..8).collect(), 8).unwrap()).unwrap();
    let design = path(&dir, "full.json");
    write_design(&design, &full).unwrap();
    let o = sqd(&["evaluate", "--design", s(&design), "--params", s(&params)]);
    assert_ok(&o);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["criterion"].as_f64().unwrap() - 8.0).abs() < 1e-12);
}

#[test]
fn evaluate_reports_uncovered_item() {
    let dir = TempDir::new().unwrap();
    let params = table3_params(&dir);
    let ps = Arc::new(enumerate_patterns(8, 2).unwrap());
    let d = DesignDistribution::point_mass(ps, &Pattern::new(vec![0, 1], 8).unwrap()).unwrap();
    let design = path(&dir, "d.json");
    write_design(&design, &d).unwrap();
    assert_error(&sqd(&["evaluate", "--design", s(&design), "--params", s(&params)]), "uncovered-item");
}

#[test]
fn bad_csv_row_is_reported() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "bad.csv");
    fs::write(&p, "a,b\n1,2\n3,x\n").unwrap();
    let o = sqd(&["design", "--pilot", s(&p), "--out", s(&path(&dir, "d.json"))]);
    assert_error(&o, "parse");
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn oversized_design_space_is_refused() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "wide.csv");
    let values = DMatrix::from_fn(40, 30, |i, j| ((i * 31 + j * 17) % 13) as f64);
    let data = ObservedDataset::complete(values).unwrap();
    write_responses(fs::File::create(&p).unwrap(), &default_item_names(30), &data).unwrap();
    let o = sqd(&["design", "--pilot", s(&p), "--m", "10", "--out", s(&path(&dir, "d.json"))]);
    assert_error(&o, "design-space-too-large");
}

#[test]
fn simulate_smoke_is_fast_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = path(&dir, "a");
    let b = path(&dir, "b");
    let run = |out: &Path, threads: &str| {
        let start = Instant::now();
        assert_ok(&sqd(&[
            "--threads", threads, "simulate", "--preset", "sim1-g2-q4", "--replications", "1", "--out", s(out),
        ]));
        start.elapsed().as_secs_f64()
    };
    let secs = run(&a, "1");
    assert!(secs < 5.0, "{secs} s");
    run(&b, "2");
    for ext in ["json", "csv"] {
        let x = fs::read(a.with_extension(ext)).unwrap();
        let y = fs::read(b.with_extension(ext)).unwrap();
        assert_eq!(x, y, "{ext} differs");
    }
    let csv = fs::read_to_string(a.with_extension("csv")).unwrap();
    assert!(csv.starts_with("label,design,n,mse,mse_total,re_mse,se_re,criterion,re_a"));
}

#[test]
fn simulate_scenario_file() {
    let dir = TempDir::new().unwrap();
    let scenario = path(&dir, "sc.json");
    fs::write(
        &scenario,
        r#"{"label":"tiny","pop":{"g":2,"q":2,"rho1":0.8,"rho2":0.2,"model":"mvn","N":2000},
            "n":200,"designs":["SRS","OPT"],"replications":4,"seed":3}"#,
    )
    .unwrap();
    let out = path(&dir, "res");
    assert_ok(&sqd(&["simulate", "--scenario", s(&scenario), "--out", s(&out)]));
    let v = read_json(&out.with_extension("json"));
    assert_eq!(v[0]["label"], "tiny");
    assert_eq!(v[0]["designs"].as_array().unwrap().len(), 2);
}
