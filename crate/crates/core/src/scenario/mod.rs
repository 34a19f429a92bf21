//! Experiment runner: scenario files, the two closed-loop drivers, traces and
//! summaries.

mod config;
mod det;
mod live;
mod report;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{load_scenario, parse_scenario, ChannelChange, ConfigError, Mode, ScenarioConfig, UeConfig};
pub use det::run_deterministic;
pub use live::{live_stats, run_live, GnbNode, GnbOutcome, RicNode, RicOutcome};
pub use report::{
    build_trace, emit_plotdata, summarize, trace_csv, LiveStats, PlotdataError, RunSummary, TraceRow, UeSummary,
    STEADY_WINDOW_S, SUMMARY_SCHEMA, TRACE_HEADER,
};

use crate::e2_codec::KpmReport;
use crate::mac_sim::SimCounters;
use crate::sla_xapp::DecisionRecord;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("startup failed: {0}")]
    Startup(String),
    #[error("run failed: {0}")]
    Runtime(String),
    #[error("cannot write {0}: {1}")]
    Output(PathBuf, std::io::Error),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub rows: Vec<TraceRow>,
    pub decisions: Vec<DecisionRecord>,
    pub windows: Vec<(u64, KpmReport)>,
    pub sim_counters: SimCounters,
}

impl RunOutput {
    pub(crate) fn assemble(
        cfg: &ScenarioConfig,
        windows: Vec<(u64, KpmReport)>,
        decisions: Vec<DecisionRecord>,
        command_count: u64,
        sim_counters: SimCounters,
    ) -> Self {
        let rows = build_trace(cfg, &windows, &decisions);
        let summary = summarize(cfg, &rows, &decisions, command_count);
        Self {
            summary,
            rows,
            decisions,
            windows,
            sim_counters,
        }
    }

    pub fn trace_csv(&self) -> String {
        trace_csv(&self.rows)
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }

    /// Write `trace.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf), RunError> {
        std::fs::create_dir_all(dir).map_err(|e| RunError::Output(dir.to_path_buf(), e))?;
        let trace = dir.join("trace.csv");
        let summary = dir.join("summary.json");
        std::fs::write(&trace, self.trace_csv()).map_err(|e| RunError::Output(trace.clone(), e))?;
        std::fs::write(&summary, self.summary_json()).map_err(|e| RunError::Output(summary.clone(), e))?;
        Ok((trace, summary))
    }
}

pub fn run_experiment(cfg: &ScenarioConfig) -> Result<RunOutput, RunError> {
    match cfg.mode {
        Mode::Det => run_deterministic(cfg),
        Mode::Live => run_live(cfg),
    }
}

#[cfg(test)]
mod tests;
