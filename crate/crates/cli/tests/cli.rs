use std::process::{Command, Output};

use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multidyadic"))
        .args(args)
        .env_remove("MULTIDYADIC_THREADS")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn fixed_reconstruction_is_exact() {
    let out = cli(&["reconstruct", "--fixed", "--L", "4", "--n", "3", "--kernel", "hilbert3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!(v["reports"][0]["relative_error"].as_f64().unwrap() <= 1e-10);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn monte_carlo_within_three_standard_errors() {
    let out = cli(&["reconstruct", "--mc", "--N", "200", "--L", "5", "--n", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let r = &json(&out)["reports"][0];
    let dev = (r["reconstructed"].as_f64().unwrap() - r["direct"].as_f64().unwrap()).abs();
    assert!(dev <= 3.0 * r["stderr"].as_f64().unwrap());
}

#[test]
fn tolerance_failure_exits_three() {
    let out = cli(&["reconstruct", "--mc", "--N", "4", "--L", "4", "--n", "2", "--z-tolerance", "0"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["verdict"], "tolerance-exceeded");
}

#[test]
fn unknown_kernel_is_a_usage_error() {
    let out = cli(&["reconstruct", "--kernel", "nonesuch"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonesuch"));
    assert_eq!(cli(&["reconstruct", "--bogus"]).status.code(), Some(2));
}

#[test]
fn certify_verdicts() {
    let ok = cli(&["certify", "--n", "2", "--L", "4", "--kernel", "hilbert2", "--samples", "500"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert_eq!(json(&ok)["report"]["passed"], true);
    let bad = cli(&["certify", "--n", "1", "--kernel", "rough(3/2)", "--samples", "500"]);
    assert_eq!(bad.status.code(), Some(1));
    let w = &json(&bad)["worst_failure"]["witness"];
    assert!(w["separation"][0].as_f64().unwrap() <= (-20f64).exp2());
}

#[test]
fn missing_kernel_file_is_a_usage_error() {
    let out = cli(&["certify", "--n", "1", "--kernel-file", "/definitely/not/here.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tabulated_kernel_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let size = 16;
    let values: Vec<f64> = (0..size * size).map(|k| if k % (size + 1) == 0 { 1.0 / size as f64 } else { 0.0 }).collect();
    let desc = serde_json::json!([{ "kind": "tabulated", "size": size, "values": values }]);
    let path = dir.path().join("k.json");
    std::fs::write(&path, desc.to_string()).unwrap();
    let out = cli(&["reconstruct", "--n", "1", "--L", "4", "--kernel-file", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

fn strip_workers(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("workers");
    v
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let args = ["reconstruct", "--mc", "--fixed", "--buckets", "--N", "20", "--L", "4", "--n", "2", "--grid-seed", "5"];
    let one = Command::new(env!("CARGO_BIN_EXE_multidyadic")).args(args).env("MULTIDYADIC_THREADS", "1").output().unwrap();
    let many = Command::new(env!("CARGO_BIN_EXE_multidyadic")).args(args).arg("--threads").arg("4").output().unwrap();
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(strip_workers(json(&one)), strip_workers(json(&many)));
}

#[test]
fn reports_and_csv_land_in_out_dir_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let first = cli(&["reconstruct", "--fixed", "--buckets", "--truncate", "1", "--L", "4", "--out", out]);
    assert_eq!(first.status.code(), Some(0));
    let report = dir.path().join("reconstruct.json");
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("fixed_buckets.csv")).unwrap();
    assert!(csv.starts_with("cases,value\n"));
    assert!(csv.lines().count() > 2);
    assert!(dir.path().join("truncated_buckets.csv").exists());

    let again = cli(&["run", report.to_str().unwrap(), "--out", dir.path().join("again").to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(0));
    let rerun: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("again/reconstruct.json")).unwrap()).unwrap();
    assert_eq!(saved["config_hash"], rerun["config_hash"]);
    assert_eq!(saved["reports"], rerun["reports"]);
}

#[test]
fn bench_emits_csv() {
    let out = cli(&["bench", "--n", "2", "--min-depth", "3", "--max-depth", "4", "--reps", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("operation,n,L,cells,seconds,cells_per_sec"));
    let ops: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ops.len(), 8);
    assert!(ops.contains(&"haar_forward") && ops.contains(&"mc_reconstruct"));
}
