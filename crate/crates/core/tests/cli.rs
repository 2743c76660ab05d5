mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isac_core::experiments::{compare_arms, EXIT_INFEASIBLE, EXIT_USAGE};
use isac_core::metrics::{matching_error_samples, read_beampattern_csv};
use isac_core::par::Execution;
use isac_core::scenario::ScenarioConfig;
use serde_json::Value;

fn standard_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/default.toml")
}

fn isac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_scenario(dir: &Path, cfg: &ScenarioConfig) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path.display().to_string()
}

fn small() -> ScenarioConfig {
    common::small_scenario(6, 3, &[-40.0, 10.0, 45.0], 1)
}

#[test]
fn missing_scenario_is_a_usage_error_naming_the_path() {
    let out = isac(&["solve", "--scenario", "/definitely/not/here.toml", "--out", "/tmp"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/definitely/not/here.toml"), "{err}");
}

#[test]
fn malformed_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), &small());
    let out_dir = dir.path().join("o").display().to_string();
    let cases: [&[&str]; 4] = [
        &["sweep-secrecy", "--scenario", &scenario, "--out", &out_dir],
        &["solve", "--scenario", &scenario, "--lambda-grid", "1,0.1,5"],
        &["solve", "--scenario", &scenario, "--g", "6"],
        &["sweep-power", "--scenario", &scenario, "--g", "3", "--values", "30,25"],
    ];
    for args in cases {
        assert_eq!(isac(args).status.code(), Some(EXIT_USAGE), "{args:?}");
    }
    assert_eq!(isac(&["frobnicate"]).status.code(), Some(EXIT_USAGE));
}

#[test]
fn infeasible_scenario_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small().with_total_power(1.0);
    cfg.secrecy_floor = 30.0;
    let scenario = write_scenario(dir.path(), &cfg);
    let out_dir = dir.path().join("o").display().to_string();
    let out = isac(&["solve", "--scenario", &scenario, "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(EXIT_INFEASIBLE), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn shipped_scenario_report_and_beampattern() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().display().to_string();
    let scenario = standard_scenario().display().to_string();
    let out = isac(&["solve", "--scenario", &scenario, "--out", &out_dir]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["target_illumination"].as_array().unwrap().len(), 6);
    assert_eq!(report["eavesdroppers"].as_array().unwrap().len(), 2);

    let csv = std::fs::read_to_string(dir.path().join("beampattern.csv")).unwrap();
    assert!(csv.starts_with("angle_deg,desired,radiated_mw\n"));
    let (angles, desired, radiated) = read_beampattern_csv(&csv).unwrap();
    assert_eq!(angles.len(), 181);
    let centers = [0.0, -60.0, 60.0, -40.0, 40.0, -20.0, 20.0];
    let mut in_band = vec![false; angles.len()];
    for (q, &a) in angles.iter().enumerate() {
        let inside = centers.iter().any(|c: &f64| (a - c).abs() <= 5.0);
        assert_eq!(desired[q], if inside { 1.0 } else { 0.0 }, "angle {a}");
        in_band[q] = inside;
    }
    assert_eq!(in_band.iter().filter(|&&b| b).count(), 7 * 11);
    assert!(radiated.iter().all(|&r| r >= 0.0));

    let mu = report["mu_mw"].as_f64().unwrap();
    let k = report["matching_error_mw2"].as_f64().unwrap();
    let recomputed = matching_error_samples(&radiated, &desired, mu);
    assert!((recomputed - k).abs() <= 1e-6 * k, "{recomputed} vs {k}");

    let trace = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    for line in trace.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        for key in ["stage", "outer", "lambda", "status", "objective", "binariness", "wall_ms"] {
            assert!(rec.get(key).is_some(), "{key} missing in {line}");
        }
    }
}

#[test]
fn identical_inputs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), &small());
    let mut reports = Vec::new();
    for (run, workers) in [("a", "1"), ("b", "3")] {
        let out_dir = dir.path().join(run).display().to_string();
        let out = isac(&["solve", "--scenario", &scenario, "--out", &out_dir, "--seed", "7", "--workers", workers]);
        assert!(out.status.success());
        reports.push(std::fs::read(dir.path().join(run).join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn secrecy_sweep_writes_one_row_per_floor() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.untrusted_indices = vec![1, 3];
    let scenario = write_scenario(dir.path(), &cfg);
    let out_dir = dir.path().join("o");
    let out = isac(&[
        "sweep-secrecy",
        "--scenario",
        &scenario,
        "--out",
        &out_dir.display().to_string(),
        "--g",
        "3",
        "--values",
        "1,3,40",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("secrecy_floor,status,eavesdropper_1_power_mw,eavesdropper_3_power_mw,"));
    assert!(lines[1].starts_with("1,optimal,"));
    assert!(lines[3].starts_with("40,infeasible"), "{}", lines[3]);
    assert!(out_dir.join("trace.jsonl").exists());
}

#[test]
fn compare_writes_all_arms() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), &small());
    let out_dir = dir.path().join("o");
    let out = isac(&["compare-aa", "--scenario", &scenario, "--out", &out_dir.display().to_string(), "--g", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let arms: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(arms, ["aa", "baseline", "full_array"]);
    for f in ["report.json", "beampattern.csv", "beampattern_baseline.csv", "beampattern_full_array.csv", "trace.jsonl"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn full_array_arms_share_the_support() {
    let mut cfg = small();
    cfg.num_rf_links = 6;
    let rows = compare_arms(&cfg, 0, Execution::default());
    assert!(rows.iter().all(|r| r.status == "optimal"));
    assert_eq!(rows[0].support, rows[1].support);
    assert_eq!(rows[0].support, (1..=6).collect::<Vec<_>>());
}
