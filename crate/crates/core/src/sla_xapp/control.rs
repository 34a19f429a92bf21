use std::collections::BTreeMap;
use std::time::Duration;

use tracing::{debug, info, warn};

use super::{decide, Contender, EstimatorState, PolicyKind};
use crate::domain::{CellConfig, GnbId, UeAllocation, UeId, UeProfile};
use crate::e2_codec::{decode_sm_payload, SmPayload, SpsAction, SpsEntry};
use crate::ric::{ControlOutcome, ControlToken, RxMsg, SubscriptionId};
use crate::xapp_sdk::{SdkError, XappHandle};

#[derive(Debug, Clone)]
pub struct SlaXappConfig {
    pub gnb_id: GnbId,
    pub policy: PolicyKind,
    pub profiles: Vec<UeProfile>,
    pub cell: CellConfig,
}

/// One decision cycle, logged for traces and summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    /// Index of the last base window covered by the telemetry, from 1.
    pub window: u64,
    /// Telemetry time at the end of that window.
    pub time_s: f64,
    /// Controller clock when the cycle ran.
    pub at: Duration,
    pub policy: PolicyKind,
    pub contention: bool,
    pub allocations: Vec<UeAllocation>,
    /// Control issued by this cycle, if any.
    pub issued: Option<(ControlToken, Vec<SpsEntry>)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct XappCounters {
    pub indications: u64,
    pub controls_issued: u64,
    pub control_errors: u64,
    pub acks_ok: u64,
    pub acks_failed: u64,
    pub stale_cycles: u64,
    pub subscription_failures: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SubState {
    Idle,
    Requested(SubscriptionId),
    Active(SubscriptionId),
}

#[derive(Debug)]
pub struct SlaXapp {
    config: SlaXappConfig,
    handle: XappHandle,
    estimator: EstimatorState,
    sub: SubState,
    /// Grants the scheduler is believed to hold. `None` forces the next cycle to issue.
    last_issued: Option<BTreeMap<UeId, SpsAction>>,
    last_token: Option<ControlToken>,
    telemetry_ms: u64,
    last_indication: Option<Duration>,
    stale: bool,
    decisions: Vec<DecisionRecord>,
    counters: XappCounters,
}

impl SlaXapp {
    pub fn new(config: SlaXappConfig, handle: XappHandle) -> Self {
        Self {
            config,
            handle,
            estimator: EstimatorState::new(),
            sub: SubState::Idle,
            last_issued: None,
            last_token: None,
            telemetry_ms: 0,
            last_indication: None,
            stale: false,
            decisions: Vec::new(),
            counters: XappCounters::default(),
        }
    }

    pub fn handle(&self) -> &XappHandle {
        &self.handle
    }

    pub fn estimator(&self) -> &EstimatorState {
        &self.estimator
    }

    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }

    pub fn counters(&self) -> &XappCounters {
        &self.counters
    }

    pub fn is_subscribed(&self) -> bool {
        matches!(self.sub, SubState::Active(_))
    }

    pub fn subscription_pending(&self) -> bool {
        matches!(self.sub, SubState::Requested(_))
    }

    /// Ask the node for reports at the cell's report period.
    pub fn subscribe(&mut self) -> Result<SubscriptionId, SdkError> {
        let id = self
            .handle
            .e2ap_subscribe(self.config.gnb_id, self.config.cell.report_period_ms)?;
        self.sub = SubState::Requested(id);
        Ok(id)
    }

    fn period(&self) -> Duration {
        Duration::from_millis(u64::from(self.config.cell.report_period_ms))
    }

    /// Drain the queue, fold in telemetry, and issue at most one control.
    pub fn control_step(&mut self, now: Duration) -> Option<ControlToken> {
        let mut desired = None;
        while let Some(msg) = self.handle.get_queued_rx_msg() {
            match msg {
                RxMsg::Indication {
                    subscription_id,
                    payload,
                    ..
                } => {
                    if !matches!(self.sub, SubState::Active(id) if id == subscription_id) {
                        debug!(%subscription_id, "indication for another subscription");
                        continue;
                    }
                    if let Some(d) = self.on_indication(&payload, now) {
                        desired = Some(d);
                    }
                }
                RxMsg::SubscriptionResponse {
                    subscription_id,
                    outcome,
                    ..
                } => match (self.sub, outcome) {
                    (SubState::Requested(id), Ok(())) if id == subscription_id => {
                        info!(%subscription_id, "subscription active");
                        self.sub = SubState::Active(id);
                    }
                    (SubState::Requested(id), Err(cause)) if id == subscription_id => {
                        warn!(?cause, "subscription refused");
                        self.counters.subscription_failures += 1;
                        self.sub = SubState::Idle;
                    }
                    _ => {}
                },
                RxMsg::SubscriptionLost { subscription_id, .. } => {
                    if matches!(self.sub, SubState::Active(id) | SubState::Requested(id) if id == subscription_id) {
                        warn!(%subscription_id, "subscription lost");
                        self.sub = SubState::Idle;
                        self.last_issued = None;
                    }
                }
                RxMsg::ControlAck { token, outcome, .. } => {
                    if outcome == ControlOutcome::Ok {
                        self.counters.acks_ok += 1;
                    } else {
                        self.counters.acks_failed += 1;
                        warn!(?token, ?outcome, "control failed");
                        if self.last_token == Some(token) {
                            self.last_issued = None;
                        }
                    }
                }
            }
        }

        let Some(desired) = desired else {
            self.check_staleness(now);
            return None;
        };
        if self.last_issued.as_ref() == Some(&desired) {
            return None;
        }
        let entries: Vec<SpsEntry> = desired
            .iter()
            .map(|(&ue_id, &action)| SpsEntry { ue_id, action })
            .collect();
        match self
            .handle
            .e2ap_control_request(self.config.gnb_id, &SmPayload::SpsControl(entries.clone()))
        {
            Ok(token) => {
                self.counters.controls_issued += 1;
                self.last_issued = Some(desired);
                self.last_token = Some(token);
                if let Some(rec) = self.decisions.last_mut() {
                    rec.issued = Some((token, entries));
                }
                Some(token)
            }
            Err(e) => {
                self.counters.control_errors += 1;
                warn!(error = %e, "control request not sent");
                None
            }
        }
    }

    fn check_staleness(&mut self, now: Duration) {
        let Some(last) = self.last_indication else { return };
        if self.is_subscribed() && now > last + 3 * self.period() {
            self.counters.stale_cycles += 1;
            if !self.stale {
                warn!(silent_ms = (now - last).as_millis() as u64, "telemetry stale; holding allocation");
                self.stale = true;
            }
        }
    }

    fn on_indication(&mut self, payload: &[u8], now: Duration) -> Option<BTreeMap<UeId, SpsAction>> {
        let report = match decode_sm_payload(payload) {
            Ok(SmPayload::KpmReport(r)) => r,
            Ok(_) | Err(_) => {
                warn!("indication without a report");
                return None;
            }
        };
        self.counters.indications += 1;
        self.last_indication = Some(now);
        self.stale = false;
        self.telemetry_ms += u64::from(report.period_ms);
        self.estimator.update(&report, &self.config.cell);

        let contenders: Vec<Contender> = self
            .config
            .profiles
            .iter()
            .filter(|p| self.estimator.is_active(p.ue_id))
            .map(|p| Contender {
                profile: *p,
                eta_mbps_per_prb: self.estimator.eta(p.ue_id),
            })
            .collect();
        let decision = decide(self.config.policy, &contenders, self.config.cell.total_prbs);

        // every UE the xApp is responsible for and the cell has reported
        let mut desired: BTreeMap<UeId, SpsAction> = self
            .config
            .profiles
            .iter()
            .filter(|p| self.estimator.get(p.ue_id).is_some())
            .map(|p| (p.ue_id, SpsAction::Release))
            .collect();
        let allocations = decision.solution.map(|s| s.entries).unwrap_or_default();
        for a in &allocations {
            desired.insert(a.ue_id, SpsAction::Fixed(a.prbs));
        }

        let base = u64::from(self.config.cell.report_period_ms.max(1));
        self.decisions.push(DecisionRecord {
            window: self.telemetry_ms / base,
            time_s: self.telemetry_ms as f64 / 1000.0,
            at: now,
            policy: self.config.policy,
            contention: decision.contention,
            allocations,
            issued: None,
        });
        Some(desired)
    }
}
