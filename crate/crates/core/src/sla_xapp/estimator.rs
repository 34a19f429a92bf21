use std::collections::BTreeMap;

use crate::domain::{CellConfig, UeEstimate, UeId};
use crate::e2_codec::KpmReport;

/// Per-UE rate estimates, rebuilt from the most recent window only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatorState {
    estimates: BTreeMap<UeId, UeEstimate>,
    windows_seen: u64,
}

impl EstimatorState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold one report in. UEs without PRBs this window keep their previous
    /// rate (if any) and are marked inactive.
    pub fn update(&mut self, report: &KpmReport, cell: &CellConfig) {
        if report.period_ms == 0 {
            return;
        }
        self.windows_seen += 1;
        for est in self.estimates.values_mut() {
            est.active = false;
        }
        let slot_us = f64::from(cell.slot_duration_us);
        for rec in &report.records {
            let est = self.estimates.entry(rec.ue_id).or_insert(UeEstimate {
                ue_id: rec.ue_id,
                eta_mbps_per_prb: None,
                active: false,
            });
            if rec.prb_slots > 0 {
                // bits per microsecond per PRB == Mbps per PRB
                est.eta_mbps_per_prb = Some(rec.tbs_bits as f64 / (f64::from(rec.prb_slots) * slot_us));
            }
            est.active = rec.tbs_bits > 0;
        }
    }

    pub fn get(&self, ue_id: UeId) -> Option<&UeEstimate> {
        self.estimates.get(&ue_id)
    }

    pub fn eta(&self, ue_id: UeId) -> Option<f64> {
        self.get(ue_id).and_then(|e| e.eta_mbps_per_prb)
    }

    pub fn is_active(&self, ue_id: UeId) -> bool {
        self.get(ue_id).is_some_and(|e| e.active)
    }

    pub fn iter(&self) -> impl Iterator<Item = &UeEstimate> {
        self.estimates.values()
    }

    pub fn windows_seen(&self) -> u64 {
        self.windows_seen
    }
}

/// Free-function form of [`EstimatorState::update`].
pub fn update_estimates(state: &mut EstimatorState, report: &KpmReport, cell: &CellConfig) {
    state.update(report, cell);
}
