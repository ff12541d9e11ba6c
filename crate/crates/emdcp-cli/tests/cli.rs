use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", name].iter().collect();
    p.display().to_string()
}

fn run(args: &[&str]) -> (i32, Value, Output) {
    let out = Command::new(env!("CARGO_BIN_EXE_emdcp")).args(args).output().expect("binary runs");
    let code = out.status.code().expect("exit code");
    let report = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (code, report, out)
}

fn run_ok(args: &[&str]) -> Value {
    let (code, report, out) = run(args);
    assert_eq!(code, 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report["schema"], 1);
    report["result"].clone()
}

#[test]
fn exact_matching_two_points() {
    let r = run_ok(&["exact", "--x", &fixture("x1.txt"), "--y", &fixture("y1.txt")]);
    assert_eq!(r["emd"], 3.0);
}

#[test]
fn exact_supply_demand() {
    let r = run_ok(&["exact", "--x", &fixture("support.txt"), "--b", &fixture("supply.txt")]);
    assert_eq!(r["emd"], 3.0);
}

#[test]
fn approx_is_within_the_end_to_end_band() {
    let r = run_ok(&["approx", "--x", &fixture("x16.txt"), "--y", &fixture("y16.txt")]);
    let ratio = r["ratio"].as_f64().unwrap();
    assert!((1.0 / 2.25..=2.25).contains(&ratio), "ratio {ratio}");
    assert!(r["lower_bound"].as_f64().unwrap() <= r["exact"].as_f64().unwrap() + 1e-6);
}

#[test]
fn reports_are_byte_identical_for_a_fixed_seed() {
    let args = ["--seed", "7", "approx", "--x", &fixture("x16.txt"), "--y", &fixture("y16.txt")];
    let (_, _, a) = run(&args);
    let (_, _, b) = run(&args);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn out_flag_writes_the_report() {
    let path = std::env::temp_dir().join(format!("emdcp-cli-test-{}.json", std::process::id()));
    let (code, _, out) = run(&["exact", "--x", &fixture("x1.txt"), "--y", &fixture("y1.txt"), "--out", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.stdout.is_empty());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert_eq!(report["result"]["emd"], 3.0);
}

#[test]
fn input_errors_exit_2_with_a_located_message() {
    let (code, r, _) = run(&["exact", "--x", &fixture("ragged.txt"), "--y", &fixture("y1.txt")]);
    assert_eq!(code, 2);
    assert_eq!(r["error"]["kind"], "input");
    assert!(r["error"]["message"].as_str().unwrap().contains("ragged.txt:2:"));

    let (code, _, _) = run(&["exact", "--x", &fixture("missing.txt"), "--y", &fixture("y1.txt")]);
    assert_eq!(code, 2);

    let (code, r, _) = run(&["--eps", "0.7", "exact", "--x", &fixture("x1.txt"), "--y", &fixture("y1.txt")]);
    assert_eq!(code, 2);
    assert!(r["error"]["message"].as_str().unwrap().contains("--eps"));

    let (code, _, _) = run(&["frobnicate"]);
    assert_eq!(code, 2);
}

#[test]
fn mismatched_sizes_are_input_errors() {
    let (code, _, _) = run(&["approx", "--x", &fixture("x1.txt"), "--y", &fixture("y16.txt")]);
    assert_eq!(code, 2);
}

#[test]
fn faithful_approx_refuses_astronomical_round_counts() {
    let (code, r, _) = run(&["--mode", "faithful", "approx", "--x", &fixture("x16.txt"), "--y", &fixture("y16.txt")]);
    assert_eq!(code, 3);
    assert!(r["error"]["message"].as_str().unwrap().contains("practical"));
}

#[test]
fn tree_bracket_contains_the_tree_estimate() {
    let r = run_ok(&["tree", "--x", &fixture("x16.txt"), "--y", &fixture("y16.txt")]);
    let (lo, t, hi) = (r["lower"].as_f64().unwrap(), r["tree_emd"].as_f64().unwrap(), r["upper"].as_f64().unwrap());
    assert!(lo <= t && t <= hi);
    assert!(r["tree_emd"].as_f64().unwrap() >= r["exact"].as_f64().unwrap() * r["parts"][0]["d_l"].as_f64().unwrap());
}

#[test]
fn closepairs_recovers_the_prefix_set() {
    let r = run_ok(&["closepairs", "--x", &fixture("x16.txt"), "--y", &fixture("y16.txt")]);
    assert_eq!(r["complete"], true);
    assert_eq!(r["pairs"].as_array().unwrap().len() as u64, r["prefix_size"].as_u64().unwrap());
}

#[test]
fn sample_emits_the_requested_triples() {
    let r = run_ok(&["sample", "--x", &fixture("x16.txt"), "--y", &fixture("y16.txt"), "--trials", "3000"]);
    let samples = r["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 3000);
    for t in samples {
        let t = t.as_array().unwrap();
        assert!(t[0].as_u64().unwrap() < 16 && t[1].as_u64().unwrap() < 16);
        assert!(matches!(t[2].as_i64().unwrap(), -1 | 1));
    }
    assert!(r["tv_to_explicit"].as_f64().unwrap() < 0.25);
    assert!(r["uniform_chi2_p"].as_f64().is_some());
}

#[test]
fn bench_reports_rows_and_an_exponent() {
    let r = run_ok(&["bench", "--n", "4,8", "--trials", "1"]);
    assert_eq!(r["rows"].as_array().unwrap().len(), 2);
    assert!(r["fitted_exponent"].as_f64().is_some());
    assert_eq!(r["within_band"], 2);
}

#[test]
fn selftest_single_criterion_passes() {
    let (code, r, out) = run(&["selftest", "--only", "1"]);
    assert_eq!(code, 0);
    assert_eq!(r["result"]["criteria"][0]["pass"], true);
    assert!(String::from_utf8_lossy(&out.stderr).contains("PASS [ 1]"));
}
