use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ScenarioConfig;
use crate::domain::{violation, UeId};
use crate::e2_codec::KpmReport;
use crate::sla_xapp::{DecisionRecord, PolicyKind};

pub const TRACE_HEADER: &str = "time_s,ue_id,throughput_mbps,prbs_avg,violation_mbps,policy,contention";
pub const SUMMARY_SCHEMA: u32 = 1;
/// Tail of the run averaged into the steady-state figures.
pub const STEADY_WINDOW_S: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub time_s: f64,
    pub ue_id: UeId,
    pub throughput_mbps: f64,
    pub prbs_avg: f64,
    /// Empty while the UE has no traffic.
    pub violation_mbps: Option<f64>,
    pub policy: PolicyKind,
    pub contention: bool,
}

/// One row per (window, UE) from the scheduler's own reports.
pub fn build_trace(cfg: &ScenarioConfig, windows: &[(u64, KpmReport)], decisions: &[DecisionRecord]) -> Vec<TraceRow> {
    let slot_s = cfg.cell.slot_duration_s();
    let per_window = cfg.cell.slots_per_report();
    let period_s = cfg.cell.report_period_s();
    let traffic = cfg.traffic();
    let contention: BTreeMap<u64, bool> = decisions.iter().map(|d| (d.window, d.contention)).collect();
    let mut rows = Vec::new();
    for (end_slot, report) in windows {
        let end_s = *end_slot as f64 * slot_s;
        let index = end_slot / per_window;
        for ue in &cfg.ues {
            let id = UeId(ue.ue_id);
            let (prb_slots, bits) = report.record(id).map_or((0, 0), |r| (r.prb_slots, r.tbs_bits));
            let throughput = bits as f64 / period_s / 1e6;
            let active = traffic.active_during(id, end_s - period_s, end_s);
            rows.push(TraceRow {
                time_s: end_s,
                ue_id: id,
                throughput_mbps: throughput,
                prbs_avg: f64::from(prb_slots) / per_window as f64,
                violation_mbps: active.then(|| violation(ue.gbr_mbps, throughput)),
                policy: cfg.policy,
                contention: contention.get(&index).copied().unwrap_or(false),
            });
        }
    }
    rows
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let v = r.violation_mbps.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{:.3},{},{:.6},{:.4},{},{},{}",
            r.time_s,
            r.ue_id.0,
            r.throughput_mbps,
            r.prbs_avg,
            v,
            r.policy,
            u8::from(r.contention)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeSummary {
    pub ue_id: u16,
    pub gbr_mbps: f64,
    pub active_windows: u64,
    /// Means over the windows where the UE had traffic.
    pub mean_throughput_mbps: f64,
    pub mean_violation_mbps: f64,
    /// Mean throughput over the final seconds of the run.
    pub steady_throughput_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveStats {
    pub control_cycles: u64,
    pub intervals_within_tolerance: u64,
    pub intervals_total: u64,
    pub indications_expected: u64,
    pub indications_received: u64,
    pub max_apply_delay_ms: f64,
    /// Controls whose grants show up exactly in the next whole window.
    pub controls_checked: u64,
    pub controls_visible: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: u32,
    pub policy: PolicyKind,
    pub mode: String,
    pub duration_s: f64,
    pub windows: u64,
    pub ues: Vec<UeSummary>,
    pub total_violation_mbps: f64,
    pub command_count: u64,
    pub contention_duration_s: f64,
    pub steady_window_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub live: Option<LiveStats>,
}

impl RunSummary {
    pub fn ue(&self, id: u16) -> Option<&UeSummary> {
        self.ues.iter().find(|u| u.ue_id == id)
    }

    pub fn steady_throughputs(&self) -> Vec<f64> {
        self.ues.iter().map(|u| u.steady_throughput_mbps).collect()
    }
}

pub fn summarize(
    cfg: &ScenarioConfig,
    rows: &[TraceRow],
    decisions: &[DecisionRecord],
    command_count: u64,
) -> RunSummary {
    let last_time = rows.iter().map(|r| r.time_s).fold(0.0, f64::max);
    let steady_from = last_time - STEADY_WINDOW_S;
    let ues: Vec<UeSummary> = cfg
        .ues
        .iter()
        .map(|ue| {
            let mine: Vec<&TraceRow> = rows.iter().filter(|r| r.ue_id.0 == ue.ue_id).collect();
            let active: Vec<&TraceRow> = mine.iter().copied().filter(|r| r.violation_mbps.is_some()).collect();
            let steady: Vec<f64> = mine
                .iter()
                .filter(|r| r.time_s > steady_from + 1e-9)
                .map(|r| r.throughput_mbps)
                .collect();
            UeSummary {
                ue_id: ue.ue_id,
                gbr_mbps: ue.gbr_mbps,
                active_windows: active.len() as u64,
                mean_throughput_mbps: mean(active.iter().map(|r| r.throughput_mbps)),
                mean_violation_mbps: mean(active.iter().filter_map(|r| r.violation_mbps)),
                steady_throughput_mbps: mean(steady.into_iter()),
            }
        })
        .collect();
    let windows = rows.len() as u64 / cfg.ues.len().max(1) as u64;
    RunSummary {
        schema: SUMMARY_SCHEMA,
        policy: cfg.policy,
        mode: cfg.mode.to_string(),
        duration_s: cfg.duration_s,
        windows,
        total_violation_mbps: ues.iter().map(|u| u.mean_violation_mbps).sum(),
        ues,
        command_count,
        contention_duration_s: decisions.iter().filter(|d| d.contention).count() as f64 * cfg.cell.report_period_s(),
        steady_window_s: STEADY_WINDOW_S,
        live: None,
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (n, s) = it.fold((0u64, 0.0), |(n, s), x| (n + 1, s + x));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PlotdataError {
    #[error("cannot read {0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("cannot write {0}: {1}")]
    Write(PathBuf, std::io::Error),
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

/// Turn a trace into one series file per UE plus a violation bar file.
/// Returns the files written.
pub fn emit_plotdata(trace: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, PlotdataError> {
    let text = std::fs::read_to_string(trace).map_err(|e| PlotdataError::Read(trace.to_path_buf(), e))?;
    let bad = |line: usize, message: &str| PlotdataError::Format {
        path: trace.to_path_buf(),
        line,
        message: message.to_string(),
    };

    // ue -> rows of (time, throughput, violation, prbs)
    let mut series: BTreeMap<u16, Vec<[String; 4]>> = BTreeMap::new();
    let mut bars: BTreeMap<u16, (u64, f64)> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if n == 0 {
            if !line.is_empty() && line != TRACE_HEADER {
                return Err(bad(1, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(bad(n + 1, "expected 7 columns"));
        }
        let ue: u16 = cols[1].parse().map_err(|_| bad(n + 1, "bad ue_id"))?;
        let bar = bars.entry(ue).or_default();
        if !cols[4].is_empty() {
            let v: f64 = cols[4].parse().map_err(|_| bad(n + 1, "bad violation_mbps"))?;
            bar.0 += 1;
            bar.1 += v;
        }
        let v = if cols[4].is_empty() { "nan" } else { cols[4] };
        series
            .entry(ue)
            .or_default()
            .push([cols[0].into(), cols[2].into(), v.into(), cols[3].into()]);
    }

    std::fs::create_dir_all(out_dir).map_err(|e| PlotdataError::Write(out_dir.to_path_buf(), e))?;
    let mut written = Vec::new();
    for (ue, rows) in &series {
        let mut body = String::from("# time_s throughput_mbps violation_mbps prbs_avg\n");
        for r in rows {
            let _ = writeln!(body, "{} {} {} {}", r[0], r[1], r[2], r[3]);
        }
        let path = out_dir.join(format!("ue{ue}.dat"));
        std::fs::write(&path, body).map_err(|e| PlotdataError::Write(path.clone(), e))?;
        written.push(path);
    }
    let mut body = String::from("# ue_id mean_violation_mbps\n");
    for (ue, (n, sum)) in &bars {
        let m = if *n == 0 { 0.0 } else { sum / *n as f64 };
        let _ = writeln!(body, "{ue} {m:.6}");
    }
    let path = out_dir.join("violation_bars.dat");
    std::fs::write(&path, body).map_err(|e| PlotdataError::Write(path.clone(), e))?;
    written.push(path);
    Ok(written)
}
