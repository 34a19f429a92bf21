//! Slot-driven downlink MAC scheduler.
//!
//! Each slot the simulator latches pending SPS commands, serves SPS grants,
//! hands the remaining PRBs to the proportional-fair scheduler and adds the
//! result to the telemetry window. Commands enter through a [`SimInbox`];
//! reports and acknowledgements leave through a [`SimOutbox`]. The slot loop
//! is the only writer of scheduler state.

mod pf;

pub use pf::{pf_schedule, update_ewma, PfCandidate, PF_EWMA_FLOOR_BPS, PF_HORIZON_SLOTS};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::domain::{CellConfig, DomainError, LeftoverMode, UeId};
use crate::e2_codec::{KpmRecord, KpmReport, SpsAction, SpsEntry};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimConfigError {
    #[error(transparent)]
    Cell(#[from] DomainError),
    #[error("duplicate ue_id {0}")]
    DuplicateUe(UeId),
    #[error("bits_per_prb_per_slot for {0} must be positive")]
    ZeroRate(UeId),
    #[error("channel steps must be sorted by slot_index")]
    UnsortedSteps,
    #[error("channel step references unknown {0}")]
    UnknownStepUe(UeId),
    #[error("traffic intervals for {0} must be ordered, non-overlapping and have start < stop")]
    BadTraffic(UeId),
    #[error("traffic configured for unknown {0}")]
    UnknownTrafficUe(UeId),
}

/// A change of one UE's per-PRB rate taking effect at `slot_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelStep {
    pub slot_index: u64,
    pub ue_id: UeId,
    pub bits_per_prb_per_slot: u32,
}

/// Per-UE bits delivered by one PRB in one slot, with optional step changes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChannelModel {
    pub bits_per_prb_per_slot: BTreeMap<UeId, u32>,
    pub steps: Vec<ChannelStep>,
}

impl ChannelModel {
    pub fn constant(rates: impl IntoIterator<Item = (UeId, u32)>) -> Self {
        Self {
            bits_per_prb_per_slot: rates.into_iter().collect(),
            steps: Vec::new(),
        }
    }

    pub fn with_step(mut self, slot_index: u64, ue_id: UeId, bits: u32) -> Self {
        self.steps.push(ChannelStep {
            slot_index,
            ue_id,
            bits_per_prb_per_slot: bits,
        });
        self
    }

    fn validate(&self) -> Result<(), SimConfigError> {
        for (id, bits) in &self.bits_per_prb_per_slot {
            if *bits == 0 {
                return Err(SimConfigError::ZeroRate(*id));
            }
        }
        if self.steps.windows(2).any(|w| w[0].slot_index > w[1].slot_index) {
            return Err(SimConfigError::UnsortedSteps);
        }
        for s in &self.steps {
            if !self.bits_per_prb_per_slot.contains_key(&s.ue_id) {
                return Err(SimConfigError::UnknownStepUe(s.ue_id));
            }
            if s.bits_per_prb_per_slot == 0 {
                return Err(SimConfigError::ZeroRate(s.ue_id));
            }
        }
        Ok(())
    }
}

/// A full-buffer traffic interval `[start_s, stop_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficInterval {
    pub start_s: f64,
    pub stop_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrafficSchedule {
    pub intervals: BTreeMap<UeId, Vec<TrafficInterval>>,
}

impl TrafficSchedule {
    pub fn full_buffer(mut self, ue_id: UeId, start_s: f64, stop_s: f64) -> Self {
        self.intervals
            .entry(ue_id)
            .or_default()
            .push(TrafficInterval { start_s, stop_s });
        self
    }

    fn validate(&self) -> Result<(), SimConfigError> {
        for (id, ivs) in &self.intervals {
            let bad_interval = ivs
                .iter()
                .any(|iv| !(iv.start_s >= 0.0 && iv.start_s < iv.stop_s));
            let overlapping = ivs.windows(2).any(|w| w[0].stop_s > w[1].start_s);
            if bad_interval || overlapping {
                return Err(SimConfigError::BadTraffic(*id));
            }
        }
        Ok(())
    }

    /// Whether `ue_id` has traffic at any point of `[from_s, to_s)`.
    pub fn active_during(&self, ue_id: UeId, from_s: f64, to_s: f64) -> bool {
        self.intervals
            .get(&ue_id)
            .is_some_and(|ivs| ivs.iter().any(|iv| iv.start_s < to_s && iv.stop_s > from_s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub cell: CellConfig,
    pub channel: ChannelModel,
    pub traffic: TrafficSchedule,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimConfigError> {
        self.cell.validate()?;
        self.channel.validate()?;
        self.traffic.validate()?;
        for id in self.traffic.intervals.keys() {
            if !self.channel.bits_per_prb_per_slot.contains_key(id) {
                return Err(SimConfigError::UnknownTrafficUe(*id));
            }
        }
        Ok(())
    }
}

/// Grants and bits of one UE in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UeGrant {
    pub ue_id: UeId,
    pub prbs_granted: u32,
    pub tbs_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TtiOutcome {
    pub slot_index: u64,
    pub grants: Vec<UeGrant>,
}

impl TtiOutcome {
    pub fn total_prbs(&self) -> u64 {
        self.grants.iter().map(|g| u64::from(g.prbs_granted)).sum()
    }

    pub fn grant(&self, ue_id: UeId) -> Option<&UeGrant> {
        self.grants.iter().find(|g| g.ue_id == ue_id)
    }
}

/// An SPS directive batch awaiting the next slot boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpsCommand {
    pub seq: u64,
    pub entries: Vec<SpsEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AckStatus {
    Ok,
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpsAck {
    pub seq: u64,
    pub status: AckStatus,
    /// Entries naming UEs the cell does not know.
    pub ignored: Vec<UeId>,
    /// First slot served under the new grants.
    pub effective_slot: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimOutput {
    Report {
        /// Slot index one past the window's last slot.
        window_end_slot: u64,
        report: KpmReport,
    },
    Ack(SpsAck),
}

/// Sending side of the simulator's command queue; cheap to clone and `Send`.
#[derive(Debug, Clone)]
pub struct SimInbox(pub(crate) mpsc::Sender<SpsCommand>);

impl SimInbox {
    /// Queue a command; false once the simulator is gone.
    pub fn send(&self, cmd: SpsCommand) -> bool {
        self.0.send(cmd).is_ok()
    }
}

/// Receiving side of the simulator's outputs.
#[derive(Debug)]
pub struct SimOutbox(mpsc::Receiver<SimOutput>);

impl SimOutbox {
    pub fn try_recv(&self) -> Option<SimOutput> {
        self.0.try_recv().ok()
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<SimOutput> {
        self.0.recv_timeout(timeout).ok()
    }

    pub fn drain(&self) -> Vec<SimOutput> {
        self.0.try_iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunMode {
    /// Caller-driven clock; runs as fast as possible.
    Deterministic,
    /// One slot every `slot_duration / speed` of wall time.
    Live { speed: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimCounters {
    /// Slots in which SPS grants exceeded capacity and were truncated.
    pub sps_truncations: u64,
    /// Times live pacing fell more than one report period behind.
    pub lag_warnings: u64,
    pub commands_applied: u64,
    pub commands_rejected: u64,
}

/// Reports emitted during a [`MacSimulator::run`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub slot_duration_us: u32,
    pub windows: Vec<(u64, KpmReport)>,
}

impl SimTrace {
    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("window_end_s,ue_id,prb_slots,tbs_bits\n");
        for (end_slot, report) in &self.windows {
            let end_us = end_slot * u64::from(self.slot_duration_us);
            for r in &report.records {
                let _ = writeln!(
                    out,
                    "{}.{:06},{},{},{}",
                    end_us / 1_000_000,
                    end_us % 1_000_000,
                    r.ue_id.0,
                    r.prb_slots,
                    r.tbs_bits
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct UeState {
    ue_id: UeId,
    bits_per_prb: u32,
    /// Half-open slot ranges with full-buffer traffic.
    active_slots: Vec<(u64, u64)>,
    sps_prbs: Option<u32>,
    ewma_bps: f64,
    window_prb_slots: u64,
    window_tbs_bits: u64,
}

impl UeState {
    fn is_active(&self, slot: u64) -> bool {
        self.active_slots.iter().any(|&(a, b)| a <= slot && slot < b)
    }
}

/// The gNB downlink MAC.
#[derive(Debug)]
pub struct MacSimulator {
    cell: CellConfig,
    ues: Vec<UeState>,
    steps: Vec<ChannelStep>,
    next_step: usize,
    slot_index: u64,
    window_start: u64,
    inbox_rx: mpsc::Receiver<SpsCommand>,
    inbox_tx: mpsc::Sender<SpsCommand>,
    outbox_tx: mpsc::Sender<SimOutput>,
    outbox_rx: Option<mpsc::Receiver<SimOutput>>,
    counters: SimCounters,
    last_report: Option<(u64, KpmReport)>,
}

fn seconds_to_slot(s: f64, slot_us: u32) -> u64 {
    let us = (s * 1e6).round() as u64;
    us.div_ceil(u64::from(slot_us))
}

impl MacSimulator {
    pub fn new(config: SimConfig) -> Result<Self, SimConfigError> {
        config.validate()?;
        let slot_us = config.cell.slot_duration_us;
        let ues = config
            .channel
            .bits_per_prb_per_slot
            .iter()
            .map(|(&ue_id, &bits)| UeState {
                ue_id,
                bits_per_prb: bits,
                active_slots: config
                    .traffic
                    .intervals
                    .get(&ue_id)
                    .map(|ivs| {
                        ivs.iter()
                            .map(|iv| {
                                (
                                    seconds_to_slot(iv.start_s, slot_us),
                                    seconds_to_slot(iv.stop_s, slot_us),
                                )
                            })
                            .collect()
                    })
                    .unwrap_or_default(),
                sps_prbs: None,
                ewma_bps: PF_EWMA_FLOOR_BPS,
                window_prb_slots: 0,
                window_tbs_bits: 0,
            })
            .collect();
        let (inbox_tx, inbox_rx) = mpsc::channel();
        let (outbox_tx, outbox_rx) = mpsc::channel();
        Ok(Self {
            cell: config.cell,
            ues,
            steps: config.channel.steps,
            next_step: 0,
            slot_index: 0,
            window_start: 0,
            inbox_rx,
            inbox_tx,
            outbox_tx,
            outbox_rx: Some(outbox_rx),
            counters: SimCounters::default(),
            last_report: None,
        })
    }

    pub fn cell(&self) -> &CellConfig {
        &self.cell
    }

    pub fn inbox(&self) -> SimInbox {
        SimInbox(self.inbox_tx.clone())
    }

    /// The output queue; can be taken once.
    pub fn take_outbox(&mut self) -> Option<SimOutbox> {
        self.outbox_rx.take().map(SimOutbox)
    }

    pub fn slot_index(&self) -> u64 {
        self.slot_index
    }

    pub fn counters(&self) -> &SimCounters {
        &self.counters
    }

    pub fn ue_ids(&self) -> Vec<UeId> {
        self.ues.iter().map(|u| u.ue_id).collect()
    }

    pub fn sps_grant(&self, ue_id: UeId) -> Option<u32> {
        self.ues.iter().find(|u| u.ue_id == ue_id)?.sps_prbs
    }

    /// Latch one SPS batch. Unknown UEs are ignored and listed; a batch with
    /// a duplicate UE or a grant above the cell size is rejected whole.
    pub fn apply_sps_command(&mut self, cmd: &SpsCommand) -> SpsAck {
        let mut ack = SpsAck {
            seq: cmd.seq,
            status: AckStatus::Ok,
            ignored: Vec::new(),
            effective_slot: self.slot_index,
        };
        let mut seen = Vec::with_capacity(cmd.entries.len());
        for e in &cmd.entries {
            if seen.contains(&e.ue_id) {
                ack.status = AckStatus::Rejected(format!("duplicate entry for {}", e.ue_id));
                break;
            }
            seen.push(e.ue_id);
            if let SpsAction::Fixed(p) = e.action {
                if p > self.cell.total_prbs {
                    ack.status = AckStatus::Rejected(format!(
                        "{} PRBs for {} exceeds cell size {}",
                        p, e.ue_id, self.cell.total_prbs
                    ));
                    break;
                }
            }
        }
        if ack.status != AckStatus::Ok {
            self.counters.commands_rejected += 1;
            return ack;
        }
        for e in &cmd.entries {
            match self.ues.iter_mut().find(|u| u.ue_id == e.ue_id) {
                Some(ue) => {
                    ue.sps_prbs = match e.action {
                        SpsAction::Fixed(p) => Some(p),
                        SpsAction::Release => None,
                    }
                }
                None => ack.ignored.push(e.ue_id),
            }
        }
        self.counters.commands_applied += 1;
        debug!(seq = cmd.seq, slot = self.slot_index, "sps command latched");
        ack
    }

    /// Advance exactly one slot.
    pub fn step_tti(&mut self) -> TtiOutcome {
        let slot = self.slot_index;

        while let Ok(cmd) = self.inbox_rx.try_recv() {
            let ack = self.apply_sps_command(&cmd);
            let _ = self.outbox_tx.send(SimOutput::Ack(ack));
        }
        while let Some(step) = self.steps.get(self.next_step) {
            if step.slot_index > slot {
                break;
            }
            if let Some(ue) = self.ues.iter_mut().find(|u| u.ue_id == step.ue_id) {
                ue.bits_per_prb = step.bits_per_prb_per_slot;
            }
            self.next_step += 1;
        }

        let total = self.cell.total_prbs;
        let mut grants = vec![0u32; self.ues.len()];
        let active: Vec<bool> = self.ues.iter().map(|u| u.is_active(slot)).collect();

        // SPS first, ascending ue_id (ues are kept sorted)
        let mut free = total;
        let mut truncated = false;
        for (i, ue) in self.ues.iter().enumerate() {
            if let (true, Some(f)) = (active[i], ue.sps_prbs) {
                let g = f.min(free);
                truncated |= g < f;
                grants[i] = g;
                free -= g;
            }
        }
        if truncated {
            self.counters.sps_truncations += 1;
        }

        let dynamic: Vec<usize> = (0..self.ues.len())
            .filter(|&i| active[i] && self.ues[i].sps_prbs.is_none())
            .collect();
        let pool = if !dynamic.is_empty() {
            dynamic
        } else if self.cell.leftover_mode == LeftoverMode::Pf {
            (0..self.ues.len()).filter(|&i| active[i]).collect()
        } else {
            Vec::new()
        };
        if !pool.is_empty() && free > 0 {
            let slot_s = self.cell.slot_duration_s();
            let candidates: Vec<PfCandidate> = pool
                .iter()
                .map(|&i| PfCandidate {
                    ue_id: self.ues[i].ue_id,
                    inst_rate_bps: f64::from(self.ues[i].bits_per_prb) / slot_s,
                    ewma_bps: self.ues[i].ewma_bps,
                })
                .collect();
            for (k, g) in pf_schedule(&candidates, free, slot).into_iter().enumerate() {
                grants[pool[k]] += g;
            }
        }

        let slot_s = self.cell.slot_duration_s();
        let mut outcome = TtiOutcome {
            slot_index: slot,
            grants: Vec::with_capacity(self.ues.len()),
        };
        for (i, ue) in self.ues.iter_mut().enumerate() {
            let tbs = if active[i] {
                u64::from(grants[i]) * u64::from(ue.bits_per_prb)
            } else {
                grants[i] = 0;
                0
            };
            ue.ewma_bps = update_ewma(ue.ewma_bps, tbs as f64 / slot_s);
            ue.window_prb_slots += u64::from(grants[i]);
            ue.window_tbs_bits += tbs;
            outcome.grants.push(UeGrant {
                ue_id: ue.ue_id,
                prbs_granted: grants[i],
                tbs_bits: tbs,
            });
        }
        debug_assert!(outcome.total_prbs() <= u64::from(total));

        self.slot_index += 1;
        if self.slot_index % self.cell.slots_per_report() == 0 {
            let report = self.collect_report();
            self.last_report = Some((self.slot_index, report.clone()));
            let _ = self.outbox_tx.send(SimOutput::Report {
                window_end_slot: self.slot_index,
                report,
            });
        }
        outcome
    }

    /// Window totals since the last collection; resets the accumulator.
    pub fn collect_report(&mut self) -> KpmReport {
        let slots = self.slot_index - self.window_start;
        self.window_start = self.slot_index;
        let period_ms = slots * u64::from(self.cell.slot_duration_us) / 1000;
        KpmReport {
            period_ms: period_ms as u32,
            records: self
                .ues
                .iter_mut()
                .map(|ue| KpmRecord {
                    ue_id: ue.ue_id,
                    prb_slots: std::mem::take(&mut ue.window_prb_slots) as u32,
                    tbs_bits: std::mem::take(&mut ue.window_tbs_bits),
                })
                .collect(),
        }
    }

    /// Drive the slot loop for `duration` of simulated time, or until `stop`
    /// is raised. Reports go to the outbox as usual and are also returned.
    pub fn run(&mut self, mode: RunMode, duration: Duration, stop: Option<&AtomicBool>) -> SimTrace {
        let slot_us = u64::from(self.cell.slot_duration_us);
        let slots = duration.as_micros() as u64 / slot_us;
        let mut trace = SimTrace {
            slot_duration_us: self.cell.slot_duration_us,
            windows: Vec::new(),
        };
        let started = Instant::now();
        let mut lagging = false;
        for k in 0..slots {
            if stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
                break;
            }
            if let RunMode::Live { speed } = mode {
                let target = started + Duration::from_secs_f64((k * slot_us) as f64 * 1e-6 / speed);
                let now = Instant::now();
                if target > now {
                    std::thread::sleep(target - now);
                    lagging = false;
                } else {
                    let behind = now - target;
                    let limit = Duration::from_secs_f64(self.cell.report_period_s() / speed);
                    if behind > limit && !lagging {
                        lagging = true;
                        self.counters.lag_warnings += 1;
                        warn!(behind_ms = behind.as_millis() as u64, "slot loop behind wall clock");
                    }
                }
            }
            self.last_report = None;
            self.step_tti();
            if let Some(window) = self.last_report.take() {
                trace.windows.push(window);
            }
        }
        trace
    }
}
