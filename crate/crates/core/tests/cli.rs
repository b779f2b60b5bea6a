use std::path::Path;
use std::process::{Command, Output};

use fastperm::RunReport;

fn fastperm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fastperm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fastperm(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_full_fast_and_model_reuse() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    ok(&["synth", "--subjects", "8", "--features", "1500", "--seed", "3", "--out", s(&data)]);

    let full = RunReport::from_json(&ok(&["full", "--data", s(&data), "--trials", "120"])).unwrap();
    assert_eq!(full.null_maxima.len(), 120);
    assert_eq!(full.features, 1500);

    let model = dir.path().join("model.json");
    let report = dir.path().join("fast.json");
    let thresholds = dir.path().join("thresholds.csv");
    let null_csv = dir.path().join("null.csv");
    let null_json = dir.path().join("null.json");
    ok(&[
        "fast", "--data", s(&data), "--trials", "150", "--rate", "0.05", "--alpha", "0.05", "--alpha", "0.1",
        "--save-model", s(&model), "--out", s(&report), "--thresholds-csv", s(&thresholds),
        "--null-csv", s(&null_csv), "--null-json", s(&null_json),
    ]);
    let fast = fastperm::io::read_report(&report).unwrap();
    assert_eq!(fast.config.alpha_levels, vec![0.05, 0.1]);
    assert_eq!(fast.null_maxima[..100], full.null_maxima[..100]);
    assert!(std::fs::read_to_string(&thresholds).unwrap().lines().count() == 3);
    assert!(std::fs::read_to_string(&null_csv).unwrap().starts_with("bin_left,bin_right,count"));
    assert!(null_json.exists());

    let reused = RunReport::from_json(&ok(&[
        "fast", "--data", s(&data), "--trials", "150", "--rate", "0.05", "--model", s(&model),
    ]))
    .unwrap();
    assert!(reused.training.unwrap().preloaded);
    assert_eq!(reused.evaluations.full_columns, 0);
}

#[test]
fn binary_input_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.bin");
    ok(&["synth", "--subjects", "10", "--features", "800", "--out", s(&data)]);
    assert!(dir.path().join("data.labels").exists());

    let config = dir.path().join("run.toml");
    std::fs::write(&config, "trial_count = 140\nsampling_rate = 0.1\nmaster_seed = 9\ntail = \"two_sided\"\n").unwrap();
    let report = RunReport::from_json(&ok(&[
        "fast", "--data", s(&data), "--labels", s(&dir.path().join("data.labels")),
        "--config", s(&config), "--seed", "10",
    ]))
    .unwrap();
    assert_eq!(report.trial_count, 140);
    assert_eq!(report.config.master_seed, 10);
    assert_eq!(report.config.sampling_rate, 0.1);
}

#[test]
fn compare_single_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    ok(&["synth", "--subjects", "6", "--features", "4000", "--out", s(&data)]);

    let report = RunReport::from_json(&ok(&["compare", "--data", s(&data), "--trials", "200", "--rate", "0.02"])).unwrap();
    let m = report.compare.unwrap();
    assert_eq!(m.full_evaluations, 4000 * 200);

    let sweep_csv = dir.path().join("sweep.csv");
    let json = ok(&[
        "compare", "--data", s(&data), "--trials", "200", "--rates", "0.01,0.05", "--sweep-csv", s(&sweep_csv),
    ]);
    let sweep: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(sweep["rows"].as_array().unwrap().len(), 2);
    assert_eq!(std::fs::read_to_string(&sweep_csv).unwrap().lines().count(), 3);
}

#[test]
fn rmt_sweep_from_toml() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    std::fs::write(
        &config,
        "v = 80\nt = 600\nlambdas = [300.0, 150.0]\ndelta = 0.5\nsigma2_fractions = [0.5, 2.0]\ndraws = 3\n",
    )
    .unwrap();
    let csv = dir.path().join("rmt.csv");
    let rows: serde_json::Value =
        serde_json::from_str(&ok(&["rmt", "--config", s(&config), "--out-csv", s(&csv)])).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["premise"], true);
    assert_eq!(rows[1]["premise"], false);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);
}

#[test]
fn errors_are_json_with_category_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = fastperm(&["full", "--data", s(&missing)]);
    assert_eq!(out.status.code(), Some(5));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["category"], "io");

    let data = dir.path().join("data.csv");
    ok(&["synth", "--subjects", "6", "--features", "300", "--out", s(&data)]);
    let out = fastperm(&["fast", "--data", s(&data), "--trials", "50"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    std::fs::write(&data, "a,b,label\n1.0,oops,0\n").unwrap();
    let out = fastperm(&["full", "--data", s(&data)]);
    assert_eq!(out.status.code(), Some(3));

    let out = Command::new(env!("CARGO_BIN_EXE_fastperm"))
        .args(["full", "--data", s(&data)])
        .env("FASTPERM_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
