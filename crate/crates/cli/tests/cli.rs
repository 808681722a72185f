use std::fs;
use std::path::Path;

use assert_cmd::Command;
use serde_json::Value;
use tempfile::TempDir;

fn sgen(dir: &Path) -> Command {
    let mut c = Command::cargo_bin("sgen").unwrap();
    c.current_dir(dir).env_remove("SGEN_OUT_DIR");
    c
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn simulate(dir: &Path, n: usize, seed: u64, p_v: f64, out: &str) {
    sgen(dir)
        .args(["simulate", "--n", &n.to_string(), "--seed", &seed.to_string(), "--p-v", &p_v.to_string(), "--out", out])
        .assert()
        .success();
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let d = TempDir::new().unwrap();
    simulate(d.path(), 200, 11, 0.2, "a.jsonl");
    simulate(d.path(), 200, 11, 0.2, "b.jsonl");
    simulate(d.path(), 200, 12, 0.2, "c.jsonl");
    let read = |f: &str| fs::read(d.path().join(f)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
    assert_eq!(read("a.jsonl").iter().filter(|&&b| b == b'\n').count(), 200);
}

#[test]
fn manifest_records_the_split_budget_exactly() {
    let d = TempDir::new().unwrap();
    simulate(d.path(), 1500, 1, 0.3, "data.jsonl");
    let status = sgen(d.path())
        .args(["calibrate", "--data", "data.jsonl", "--method", "semi-single", "--delta", "0.03", "--delta-w", "0.0001"])
        .assert()
        .get_output()
        .status
        .code();
    assert!(matches!(status, Some(0) | Some(3)));
    let m = json(d.path().join("manifest-calibrate.json"));
    let b = &m["resolved"]["budget"];
    let half = (0.03_f64 - 0.0001) / 2.0;
    assert_eq!(b["delta_s"].as_f64().unwrap(), half);
    assert_eq!(b["delta_e"].as_f64().unwrap(), half);
    assert_eq!(b["delta_w"].as_f64().unwrap(), 0.0001);
    assert_eq!(b["eps_s"].as_f64().unwrap(), 0.25);
    let input = &m["inputs"][0];
    assert_eq!(input["bytes"].as_u64().unwrap(), fs::metadata(d.path().join("data.jsonl")).unwrap().len());
    assert_eq!(input["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["command"], "calibrate");
}

#[test]
fn unreachable_eps_exits_3_and_still_writes_the_bound() {
    let d = TempDir::new().unwrap();
    simulate(d.path(), 800, 2, 0.5, "data.jsonl");
    sgen(d.path())
        .args(["calibrate", "--data", "data.jsonl", "--method", "sup", "--eps", "1e-9"])
        .assert()
        .code(3);
    let r = json(d.path().join("result.json"));
    assert_eq!(r["bounded"], "fail");
    let u = r["u_hat"].as_f64().unwrap();
    assert!(u > 1e-9 && u <= 1.0);
}

#[test]
fn apply_and_evaluate_agree() {
    let d = TempDir::new().unwrap();
    simulate(d.path(), 2000, 3, 1.0, "cal.jsonl");
    simulate(d.path(), 1000, 4, 1.0, "test.jsonl");
    sgen(d.path())
        .args(["calibrate", "--data", "cal.jsonl", "--method", "sup"])
        .assert()
        .success();
    sgen(d.path())
        .args(["apply", "--selector", "result.json", "--data", "test.jsonl"])
        .assert()
        .success();
    sgen(d.path())
        .args(["evaluate", "--selector", "result.json", "--data", "test.jsonl"])
        .assert()
        .success();
    let decisions = fs::read_to_string(d.path().join("decisions.jsonl")).unwrap();
    let lines: Vec<Value> = decisions.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 1000);
    assert_eq!(lines[0]["id"], "sim-0");
    let accepted = lines.iter().filter(|v| v["decision"] == "accept").count();
    let eval = json(d.path().join("eval.json"));
    assert_eq!(eval["n_test"], 1000);
    assert_eq!(eval["n_selected"].as_u64().unwrap() as usize, accepted);
    assert_eq!(eval["efficiency"].as_f64().unwrap(), accepted as f64 / 1000.0);
    assert_eq!(eval["method"], "sup:f_m1");
}

#[test]
fn bare_selector_files_are_accepted() {
    let d = TempDir::new().unwrap();
    simulate(d.path(), 50, 5, 1.0, "test.jsonl");
    fs::write(d.path().join("sel.json"), r#"{"terms":[{"key":"f_m1","threshold":2.0}]}"#).unwrap();
    sgen(d.path())
        .args(["evaluate", "--selector", "sel.json", "--data", "test.jsonl"])
        .assert()
        .success();
    let eval = json(d.path().join("eval.json"));
    assert_eq!(eval["n_selected"], 0);
    assert!(eval["fdr_e"].is_null());
}

#[test]
fn report_writes_one_csv_row_per_split() {
    let d = TempDir::new().unwrap();
    simulate(d.path(), 1200, 6, 0.5, "data.jsonl");
    sgen(d.path())
        .args(["report", "--data", "data.jsonl", "--method", "sup", "--splits", "7", "--seed", "9"])
        .assert()
        .success();
    let csv = fs::read_to_string(d.path().join("splits.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "split,method,fdr_e,efficiency");
    assert_eq!(rows.len(), 8);
    let study = json(d.path().join("splits.json"));
    assert_eq!(study["summary"]["n_splits"], 7);
    assert!(d.path().join("manifest-report.json").exists());
}

#[test]
fn out_dir_comes_from_the_environment() {
    let d = TempDir::new().unwrap();
    let out = d.path().join("artifacts");
    sgen(d.path())
        .env("SGEN_OUT_DIR", &out)
        .args(["simulate", "--n", "10"])
        .assert()
        .success();
    assert!(out.join("data.jsonl").exists());
    assert!(out.join("manifest-simulate.json").exists());
}

#[test]
fn bad_inputs_exit_2() {
    let d = TempDir::new().unwrap();
    sgen(d.path()).args(["calibrate", "--data", "missing.jsonl"]).assert().code(2);
    fs::write(d.path().join("bad.jsonl"), "{\"id\":\"a\",\"f_m1\":0.5,\"f_e\":0.5,\"v\":0}\n{\"id\":\"b\"}\n").unwrap();
    let out = sgen(d.path()).args(["calibrate", "--data", "bad.jsonl"]).assert().code(2);
    let err = String::from_utf8_lossy(&out.get_output().stderr).to_string();
    assert!(err.contains("line 2"), "{err}");
    // semi-ms needs f_m2 on every record
    fs::write(d.path().join("no_m2.jsonl"), "{\"id\":\"a\",\"f_m1\":0.5,\"f_e\":0.5,\"e\":1,\"v\":1}\n").unwrap();
    sgen(d.path()).args(["calibrate", "--data", "no_m2.jsonl", "--method", "semi-ms"]).assert().code(2);
    sgen(d.path()).args(["calibrate", "--data", "no_m2.jsonl", "--delta", "0.00001"]).assert().code(2);
    sgen(d.path()).args(["simulate", "--n", "5", "--p-v", "1.5"]).assert().code(2);
    sgen(d.path()).args(["verify-pac", "--claim", "nonsense"]).assert().code(2);
}

#[test]
fn theorem1_audit_passes_on_the_identity_world() {
    let d = TempDir::new().unwrap();
    sgen(d.path())
        .args(["verify-pac", "--claim", "theorem1", "--trials", "200", "--n-e", "300", "--n-u", "1000", "--seed", "5"])
        .assert()
        .success();
    let a = json(d.path().join("audit.json"));
    assert_eq!(a["pass"], true);
    assert_eq!(a["trials"], 200);
    assert!(a["violations"].as_u64().unwrap() <= 9);
}

#[test]
fn theorem2_audit_is_reproducible() {
    let d = TempDir::new().unwrap();
    for out in ["a.json", "b.json"] {
        sgen(d.path())
            .args(["verify-pac", "--claim", "theorem2", "--trials", "500", "--n-e", "50", "--seed", "3", "--out", out])
            .assert()
            .success();
    }
    assert_eq!(json(d.path().join("a.json")), json(d.path().join("b.json")));
}
