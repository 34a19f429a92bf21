use super::*;
use crate::sla_xapp::PolicyKind;

const PAPER3UE: &str = include_str!("../../../../fixtures/paper3ue.json");

fn scenario(policy: PolicyKind) -> ScenarioConfig {
    let mut cfg = parse_scenario(PAPER3UE).unwrap();
    cfg.policy = policy;
    cfg
}

fn steady(out: &RunOutput) -> Vec<f64> {
    out.summary.steady_throughputs()
}

fn near(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol)
}

#[test]
fn shipped_scenario_loads() {
    let cfg = scenario(PolicyKind::Soft);
    assert_eq!(cfg.ues.len(), 3);
    assert_eq!(cfg.cell.total_prbs, 65);
    let long = cfg.with_paper_timeline().unwrap();
    assert_eq!(long.duration_s, 30.0);
    assert_eq!(long.ues[1].traffic[0].start_s, 19.0);
}

#[test]
fn negative_gbr_names_the_field() {
    let text = PAPER3UE.replacen("\"gbr_mbps\": 15.0", "\"gbr_mbps\": -1.0", 1);
    let err = parse_scenario(&text).unwrap_err().to_string();
    assert!(err.starts_with("ues[0].gbr_mbps"), "{err}");
}

#[test]
fn unknown_policy_lists_choices() {
    let text = PAPER3UE.replacen("\"soft\"", "\"fair\"", 1);
    let err = parse_scenario(&text).unwrap_err().to_string();
    assert!(err.contains("policy") && err.contains("soft") && err.contains("strict") && err.contains("baseline"), "{err}");
}

#[test]
fn type_errors_carry_a_path() {
    let text = PAPER3UE.replacen("\"bits_per_prb_per_slot\": 200", "\"bits_per_prb_per_slot\": \"x\"", 1);
    let err = parse_scenario(&text).unwrap_err().to_string();
    assert!(err.starts_with("ues[0].bits_per_prb_per_slot"), "{err}");
}

#[test]
fn traffic_past_duration_is_rejected() {
    let text = PAPER3UE.replacen("\"stop_s\": 10.0", "\"stop_s\": 12.0", 1);
    let err = parse_scenario(&text).unwrap_err().to_string();
    assert!(err.starts_with("ues[0].traffic[0]"), "{err}");
}

#[test]
fn soft_steady_state() {
    let out = run_deterministic(&scenario(PolicyKind::Soft)).unwrap();
    assert!(near(&steady(&out), &[14.8, 10.0, 1.2], 1e-9), "{:?}", steady(&out));
}

#[test]
fn strict_steady_state() {
    let out = run_deterministic(&scenario(PolicyKind::Strict)).unwrap();
    assert!(near(&steady(&out), &[10.8, 10.0, 5.2], 1e-9), "{:?}", steady(&out));
}

#[test]
fn baseline_steady_state() {
    let out = run_deterministic(&scenario(PolicyKind::Baseline)).unwrap();
    assert!(near(&steady(&out), &[65.0 * 0.4 / 3.0; 3], 0.3), "{:?}", steady(&out));
    assert_eq!(out.sim_counters.commands_applied, out.summary.command_count);
}

#[test]
fn pre_contention_traces_match_across_policies() {
    let soft = run_deterministic(&scenario(PolicyKind::Soft)).unwrap();
    let strict = run_deterministic(&scenario(PolicyKind::Strict)).unwrap();
    let early = |o: &RunOutput| -> Vec<(f64, u16, f64, f64)> {
        o.rows
            .iter()
            .filter(|r| r.time_s <= 4.0 + 1e-9)
            .map(|r| (r.time_s, r.ue_id.0, r.throughput_mbps, r.prbs_avg))
            .collect()
    };
    assert_eq!(early(&soft), early(&strict));
}

#[test]
fn trace_and_summary_are_consistent() {
    let out = run_deterministic(&scenario(PolicyKind::Soft)).unwrap();
    assert_eq!(out.rows.len(), 100 * 3);
    let csv = out.trace_csv();
    assert!(csv.starts_with(TRACE_HEADER));
    assert_eq!(csv.lines().count(), 301);
    let s = &out.summary;
    assert_eq!(s.schema, 1);
    let sum: f64 = s.ues.iter().map(|u| u.mean_violation_mbps).sum();
    assert!((s.total_violation_mbps - sum).abs() < 1e-12);
    assert!(s.ues.iter().all(|u| u.mean_violation_mbps >= 0.0));
    assert_eq!(s.ue(1).unwrap().active_windows, 60);
    assert!(s.contention_duration_s > 5.0);
}

#[test]
fn plotdata_bars_match_summary() {
    let out = run_deterministic(&scenario(PolicyKind::Strict)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (trace, _) = out.write(dir.path()).unwrap();
    let files = emit_plotdata(&trace, &dir.path().join("plot")).unwrap();
    assert_eq!(files.len(), 4);
    let bars = std::fs::read_to_string(dir.path().join("plot/violation_bars.dat")).unwrap();
    let total: f64 = bars
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - out.summary.total_violation_mbps).abs() < 1e-5);
}

#[test]
fn plotdata_of_empty_trace_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    std::fs::write(&trace, format!("{TRACE_HEADER}\n")).unwrap();
    let files = emit_plotdata(&trace, &dir.path().join("p")).unwrap();
    assert_eq!(files.len(), 1);
    assert_eq!(std::fs::read_to_string(&files[0]).unwrap().lines().count(), 1);
}
