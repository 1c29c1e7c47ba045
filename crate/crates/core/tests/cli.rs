use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_berrygrip"));
    c.env_remove("BERRYGRIP_CONFIG");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

#[test]
fn missing_subcommand_is_usage_error() {
    assert_eq!(run(&mut bin()).status.code(), Some(2));
    assert_eq!(run(bin().args(["sweep-cut", "--trials", "many"])).status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let out = run(bin().arg("--help"));
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("simulate"));
}

#[test]
fn zero_trials_is_usage_error() {
    assert_eq!(run(bin().args(["measure-test", "--n", "0"])).status.code(), Some(2));
    assert_eq!(run(bin().args(["kinematics-table", "--step-deg", "0"])).status.code(), Some(2));
    assert_eq!(run(bin().arg("simulate")).status.code(), Some(2));
}

#[test]
fn missing_or_malformed_files_are_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = run(bin().arg("simulate").arg("--scenario").arg(&missing));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"berries\": [\n    {\"id\": \"x\"}\n  ]\n}\n").unwrap();
    let out = run(bin().arg("simulate").arg("--scenario").arg(&bad));
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("line 3") && err.contains("berries[0]"), "{err}");

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"capture_r": "wide"}"#).unwrap();
    let out = run(bin().args(["config", "--dump"]).arg("--config").arg(&cfg));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_env_variable_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"capture_r": 4.5}"#).unwrap();
    let out = run(bin().args(["config", "--dump"]).env("BERRYGRIP_CONFIG", &cfg));
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["capture_r"], 4.5);
    assert_eq!(v["container_capacity"], 10);
}

#[test]
fn simulate_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        run(bin().arg("simulate").arg("--scenario").arg(scenario("three_berry.json")).arg("--out").arg(dir.path()));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.jsonl", "summary.csv", "report.json", "centering_0.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 42);
    assert_eq!(report["std_convention"], "population");
    for line in std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap().lines() {
        let ev: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(ev["t_ms"].is_u64() && ev["state"].is_string());
    }
}

#[test]
fn kinematics_table_to_stdout() {
    let out = run(bin().args(["kinematics-table", "--step-deg", "1"]));
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("phi_deg,theta_deg,r_mm,beta_deg"));
    assert!(lines.count() > 50);
}

#[test]
fn sweep_accepts_negative_offsets() {
    let out = run(bin().args(["sweep-cut", "--offsets", "-4,0,4", "--trials", "5", "--seed", "3"]));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 4);
}

#[test]
fn calibrate_fits_samples() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cal.csv");
    let mut csv = String::from("analog,distance_mm\n");
    for v in [60.0, 100.0, 200.0, 400.0, 800.0] {
        csv.push_str(&format!("{v},{}\n", 4000.0 / v - 1.0));
    }
    std::fs::write(&p, csv).unwrap();
    let out = run(bin().arg("calibrate").arg("--input").arg(&p));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let a = v["curve"]["a"].as_f64().unwrap();
    assert!((a - 4000.0).abs() < 1e-3, "{v}");
}
