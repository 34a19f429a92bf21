use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn slalab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slalab"))
        .args(args)
        .output()
        .expect("spawn slalab")
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/paper3ue.json")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = slalab(&["run", "--config", arg(&fixture()), "--policy", "strict", "--out", arg(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("time_s,ue_id,throughput_mbps,prbs_avg,violation_mbps,policy,contention\n"));
    assert_eq!(trace.lines().count(), 1 + 100 * 3);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["policy"], "strict");
    assert_eq!(summary["schema"], 1);
}

#[test]
fn plotdata_from_a_run() {
    let dir = tempfile::tempdir().unwrap();
    assert!(slalab(&["run", "--config", arg(&fixture()), "--out", arg(dir.path())]).status.success());
    let plots = dir.path().join("plots");
    let out = slalab(&["plotdata", "--trace", arg(&dir.path().join("trace.csv")), "--out", arg(&plots)]);
    assert!(out.status.success());
    for f in ["ue1.dat", "ue2.dat", "ue3.dat", "violation_bars.dat"] {
        assert!(plots.join(f).is_file(), "{f}");
    }
}

#[test]
fn invalid_config_exits_2_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"policy":"soft","duration_s":5,"ues":[{"ue_id":1,"gbr_mbps":-1,"bits_per_prb_per_slot":200}]}"#,
    )
    .unwrap();
    let out = slalab(&["run", "--config", arg(&cfg), "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ues[0].gbr_mbps"));
}

#[test]
fn missing_config_exits_2() {
    let out = slalab(&["run", "--config", "/nonexistent/scenario.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_policy_is_a_usage_error() {
    let out = slalab(&["run", "--config", arg(&fixture()), "--policy", "fair"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreadable_trace_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = slalab(&["plotdata", "--trace", arg(&dir.path().join("none.csv")), "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}
