use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn swaproute(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swaproute"))
        .args(args)
        .env("SWAPROUTE_ROOT", dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = swaproute(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Device, plan, records and calibration for a fixture, written into a fresh root.
fn calibrated(args: &[&str]) -> TempDir {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let mut dev = vec!["device"];
    dev.extend_from_slice(args);
    dev.extend_from_slice(&["--out", "dev.json"]);
    ok(d, &dev);
    ok(d, &["plan", "--device", "dev.json", "--out", "plan.jsonl"]);
    ok(d, &["run", "--device", "dev.json", "--plan", "plan.jsonl", "--seed", "5", "--out", "rec.jsonl"]);
    ok(d, &["calibrate", "--device", "dev.json", "--results", "rec.jsonl", "--out", "cal.json"]);
    dir
}

#[test]
fn five_qubit_line_plan_has_58_circuits() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["device", "line", "--qubits", "5", "--out", "dev.json"]);
    let summary = ok(d, &["plan", "--device", "dev.json", "--out", "plan.jsonl"]);
    assert!(summary.contains("circuits 58 (gate 48, readout 10)"), "{summary}");
    assert!(summary.contains("shots 475136"), "{summary}");
    assert_eq!(fs::read_to_string(d.join("plan.jsonl")).unwrap().lines().count(), 58);
}

#[test]
fn empty_gate_set_is_rejected() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["device", "line", "--out", "dev.json"]);
    let out = swaproute(d, &["plan", "--device", "dev.json", "--gates", ""]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no gates"));
}

#[test]
fn plan_output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["device", "boeblingen", "--out", "dev.json"]);
    let a = ok(d, &["plan", "--device", "dev.json"]);
    let b = ok(d, &["plan", "--device", "dev.json"]);
    assert_eq!(a, b);
}

#[test]
fn runs_with_the_same_seed_are_byte_identical() {
    let dir = calibrated(&["line", "--qubits", "4"]);
    let d = dir.path();
    let a = ok(d, &["run", "--device", "dev.json", "--plan", "plan.jsonl", "--seed", "5"]);
    assert_eq!(a, fs::read_to_string(d.join("rec.jsonl")).unwrap());
    let b = ok(d, &["run", "--device", "dev.json", "--plan", "plan.jsonl", "--seed", "6"]);
    assert_ne!(a, b);
}

#[test]
fn missing_records_and_bad_lines_exit_differently() {
    let dir = calibrated(&["line", "--qubits", "4"]);
    let d = dir.path();
    let records = fs::read_to_string(d.join("rec.jsonl")).unwrap();
    let kept: Vec<&str> = records.lines().skip(4).collect();
    fs::write(d.join("partial.jsonl"), kept.join("\n") + "\n").unwrap();
    let missing = swaproute(d, &["calibrate", "--device", "dev.json", "--results", "partial.jsonl", "--plan", "plan.jsonl"]);
    assert_eq!(code(&missing), 3);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing"));

    fs::write(d.join("bad.jsonl"), format!("{}not json\n", records)).unwrap();
    let bad = swaproute(d, &["calibrate", "--device", "dev.json", "--results", "bad.jsonl"]);
    assert_eq!(code(&bad), 4);
    let line = records.lines().count() + 1;
    assert!(String::from_utf8_lossy(&bad.stderr).contains(&format!("line {line}")));
}

#[test]
fn line_route_takes_four_hops() {
    let dir = calibrated(&["line", "--qubits", "5"]);
    let d = dir.path();
    let text = ok(d, &["route", "--device", "dev.json", "--calib", "cal.json", "--src", "0", "--dst", "4", "--bits", "10"]);
    let route: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(route["path"], serde_json::json!([0, 1, 2, 3, 4]));
    assert_eq!(route["per_hop"].as_array().unwrap().len(), 4);
    let f = route["predicted_fidelity"].as_f64().unwrap();
    assert!(f > 0.0 && f < 1.0);
}

#[test]
fn weight_modes_disagree_on_the_two_path_fixture() {
    let dir = calibrated(&["two-path"]);
    let d = dir.path();
    let path = |mode: &str| {
        let text = ok(d, &["route", "--device", "dev.json", "--calib", "cal.json", "--src", "0", "--dst", "3", "--bits", "11", "--mode", mode]);
        serde_json::from_str::<serde_json::Value>(&text).unwrap()["path"].clone()
    };
    assert_eq!(path("state-independent"), serde_json::json!([0, 2, 3]));
    assert_eq!(path("state-dependent"), serde_json::json!([0, 1, 3]));
}

#[test]
fn unreachable_destination_fails() {
    let dir = calibrated(&["line", "--qubits", "4"]);
    let d = dir.path();
    let mut calib: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("cal.json")).unwrap()).unwrap();
    let tables = calib["tables"].as_array_mut().expect("tables array");
    tables.retain(|t| t["pair"] != serde_json::json!([1, 2]) && t["pair"] != serde_json::json!([2, 1]));
    fs::write(d.join("cut.json"), calib.to_string()).unwrap();
    let out = swaproute(d, &["route", "--device", "dev.json", "--calib", "cut.json", "--src", "0", "--dst", "3"]);
    assert_eq!(code(&out), 3);
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_device_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = swaproute(dir.path(), &["plan"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn verify_emits_one_row_per_input_and_hop() {
    let dir = calibrated(&["line", "--qubits", "4"]);
    let d = dir.path();
    let csv = ok(d, &["verify", "--device", "dev.json", "--calib", "cal.json", "--src", "0", "--dst", "3", "--shots", "2048"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("bits,hops,predicted,predicted_pair,tomographic,abs_diff,clipped_mass"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4 * 3);
    for r in &rows {
        assert_eq!(r.len(), 7);
        let diff: f64 = r[5].parse().unwrap();
        assert!(diff < 0.03, "{r:?}");
    }
}

#[test]
fn tomography_of_a_swapped_bit() {
    let dir = calibrated(&["line", "--qubits", "3"]);
    let d = dir.path();
    fs::write(d.join("p.txt"), "prepare q0 1\nswap q0 q1\nmeasure\n").unwrap();
    let out = swaproute(d, &["tomo", "--device", "dev.json", "--program", "p.txt", "--qubits", "0,1", "--calib", "cal.json", "--expect", "01"]);
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    let f: f64 = err.lines().find_map(|l| l.strip_prefix("fidelity ")).unwrap().parse().unwrap();
    assert!(f > 0.9, "{err}");
}

#[test]
fn off_graph_program_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["device", "line", "--qubits", "4", "--out", "dev.json"]);
    fs::write(d.join("p.txt"), "prepare q0 1\ncnot q0 q3\nmeasure\n").unwrap();
    let out = swaproute(d, &["run", "--device", "dev.json", "--program", "p.txt"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn noiseless_plan_counts_are_concentrated() {
    let dir = calibrated(&["noiseless-line", "--qubits", "3"]);
    let records = fs::read_to_string(dir.path().join("rec.jsonl")).unwrap();
    for line in records.lines() {
        let r: serde_json::Value = serde_json::from_str(line).unwrap();
        let counts = r["counts"]["counts"].as_object().unwrap();
        let nonzero = counts.values().filter(|c| c.as_u64().unwrap() > 0).count();
        assert_eq!(nonzero, 1, "{line}");
    }
}

#[test]
fn default_line_plan_runs_quickly() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["device", "line", "--qubits", "5", "--out", "dev.json"]);
    ok(d, &["plan", "--device", "dev.json", "--out", "plan.jsonl"]);
    let start = std::time::Instant::now();
    ok(d, &["run", "--device", "dev.json", "--plan", "plan.jsonl", "--out", "rec.jsonl"]);
    assert!(start.elapsed().as_secs_f64() < 10.0, "{:?}", start.elapsed());
    assert_eq!(fs::read_to_string(d.join("rec.jsonl")).unwrap().lines().count(), 58);
}
