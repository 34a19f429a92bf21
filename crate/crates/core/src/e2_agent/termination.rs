//! E2AP side of the agent: session lifecycle with the controller,
//! subscriptions, and relaying of service-model payloads across the boundary.

use std::collections::{BTreeMap, VecDeque};
use std::time::Duration;

use tracing::{debug, info, warn};

use super::{AgentConfig, Backoff, BoundaryMsg};
use crate::e2_codec::{decode_sm_payload, Cause, E2Frame, KpmReport, MsgType, SmPayload};

/// Slowest cadence accepted for a report subscription is unbounded; this is the fastest.
pub const MIN_REPORT_PERIOD_MS: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentAction {
    ToRic(E2Frame),
    ToBoundary(BoundaryMsg),
    /// Open the stream to the controller, then report back with
    /// [`E2Termination::on_connected`] or [`E2Termination::on_connect_failed`].
    Connect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkState {
    Down { retry_at: Duration },
    Connecting,
    AwaitingSetup,
    SetupBackoff { retry_at: Duration },
    Established,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AgentCounters {
    pub connect_attempts: u64,
    pub setup_attempts: u64,
    pub setup_rejects: u64,
    pub stream_losses: u64,
    pub reports_received: u64,
    pub indications_sent: u64,
    pub controls_forwarded: u64,
    pub malformed_controls: u64,
    pub boundary_timeouts: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentSubscription {
    pub id: u32,
    pub period_ms: u32,
    windows_per_indication: u32,
    pending: Option<KpmReport>,
    pending_windows: u32,
    /// Base report windows seen since the subscription was granted.
    pub windows_seen: u64,
    pub indications_sent: u64,
}

#[derive(Debug, Clone)]
struct PendingControl {
    txid: u16,
    payload: Vec<u8>,
    sent_at: Option<Duration>,
}

#[derive(Debug)]
pub struct E2Termination {
    config: AgentConfig,
    state: LinkState,
    backoff: Backoff,
    subs: BTreeMap<u32, AgentSubscription>,
    next_sub_id: u32,
    next_txid: u16,
    controls: VecDeque<PendingControl>,
    counters: AgentCounters,
}

impl E2Termination {
    pub fn new(config: AgentConfig) -> Self {
        Self {
            config,
            state: LinkState::Down {
                retry_at: Duration::ZERO,
            },
            backoff: Backoff::default(),
            subs: BTreeMap::new(),
            next_sub_id: 1,
            next_txid: 0,
            controls: VecDeque::new(),
            counters: AgentCounters::default(),
        }
    }

    pub fn state(&self) -> LinkState {
        self.state
    }

    pub fn is_established(&self) -> bool {
        self.state == LinkState::Established
    }

    pub fn counters(&self) -> &AgentCounters {
        &self.counters
    }

    pub fn subscriptions(&self) -> impl Iterator<Item = &AgentSubscription> {
        self.subs.values()
    }

    fn control_timeout(&self) -> Duration {
        Duration::from_millis(2 * u64::from(self.config.base_report_period_ms))
    }

    fn txid(&mut self) -> u16 {
        let t = self.next_txid;
        self.next_txid = self.next_txid.wrapping_add(1);
        t
    }

    fn setup_request(&mut self) -> AgentAction {
        self.counters.setup_attempts += 1;
        self.state = LinkState::AwaitingSetup;
        let txid = self.txid();
        AgentAction::ToRic(
            E2Frame::new(MsgType::SetupReq, txid)
                .with_gnb_id(self.config.gnb_id.0)
                .with_ran_function_id(self.config.ran_function_id),
        )
    }

    /// Timers: connection retries, setup retries, boundary ack timeouts.
    pub fn poll(&mut self, now: Duration) -> Vec<AgentAction> {
        let mut out = Vec::new();
        match self.state {
            LinkState::Down { retry_at } if now >= retry_at => {
                self.counters.connect_attempts += 1;
                self.state = LinkState::Connecting;
                out.push(AgentAction::Connect);
            }
            LinkState::SetupBackoff { retry_at } if now >= retry_at => {
                out.push(self.setup_request());
            }
            _ => {}
        }
        if let Some(head) = self.controls.front() {
            if head.sent_at.is_some_and(|t| now >= t + self.control_timeout()) {
                let head = self.controls.pop_front().expect("front checked");
                self.counters.boundary_timeouts += 1;
                warn!(txid = head.txid, "no ACK_STATUS from the SM task; failing control");
                out.push(AgentAction::ToRic(
                    E2Frame::new(MsgType::Error, head.txid).with_cause(Cause::Reject),
                ));
                self.dispatch_control(now, &mut out);
            }
        }
        out
    }

    pub fn on_connected(&mut self, _now: Duration) -> Vec<AgentAction> {
        vec![self.setup_request()]
    }

    pub fn on_connect_failed(&mut self, now: Duration) {
        let delay = self.backoff.next_delay();
        debug!(retry_in_ms = delay.as_millis() as u64, "controller unreachable");
        self.state = LinkState::Down {
            retry_at: now + delay,
        };
    }

    /// The stream dropped: forget session state and start over.
    pub fn on_stream_lost(&mut self, now: Duration) {
        self.counters.stream_losses += 1;
        self.subs.clear();
        self.controls.clear();
        self.backoff.reset();
        let delay = self.backoff.next_delay();
        warn!(retry_in_ms = delay.as_millis() as u64, "stream to controller lost");
        self.state = LinkState::Down {
            retry_at: now + delay,
        };
    }

    pub fn on_ric_frame(&mut self, frame: E2Frame, now: Duration) -> Vec<AgentAction> {
        let mut out = Vec::new();
        match frame.msg_type {
            MsgType::SetupResp if self.state == LinkState::AwaitingSetup => {
                if frame.cause() == Some(Cause::Ok) {
                    info!(gnb = %self.config.gnb_id, "E2 setup complete");
                    self.state = LinkState::Established;
                    self.backoff.reset();
                } else {
                    self.counters.setup_rejects += 1;
                    let delay = self.backoff.next_delay();
                    warn!(cause = ?frame.cause(), retry_in_ms = delay.as_millis() as u64, "E2 setup rejected");
                    self.state = LinkState::SetupBackoff {
                        retry_at: now + delay,
                    };
                }
            }
            _ if !self.is_established() => {
                debug!(msg = ?frame.msg_type, "frame before setup ignored");
            }
            MsgType::SubReq => out.push(self.handle_subscription(&frame)),
            MsgType::ControlReq => self.handle_control(&frame, now, &mut out),
            MsgType::Error => warn!(txid = frame.txid, cause = ?frame.cause(), "controller reported error"),
            other => {
                debug!(msg = ?other, "unexpected frame from controller");
                out.push(AgentAction::ToRic(
                    E2Frame::new(MsgType::Error, frame.txid).with_cause(Cause::Malformed),
                ));
            }
        }
        out
    }

    fn handle_subscription(&mut self, frame: &E2Frame) -> AgentAction {
        let reply = |id: u32, cause: Cause| {
            AgentAction::ToRic(
                E2Frame::new(MsgType::SubResp, frame.txid)
                    .with_subscription_id(id)
                    .with_cause(cause),
            )
        };
        if frame.ran_function_id() != self.config.ran_function_id {
            return reply(0, Cause::UnknownFunction);
        }
        let base = self.config.base_report_period_ms;
        let period = frame.report_period_ms().unwrap_or(0);
        if period < MIN_REPORT_PERIOD_MS || base == 0 || period % base != 0 {
            return reply(0, Cause::Reject);
        }
        if frame.gnb_id() != Some(self.config.gnb_id.0) {
            return reply(0, Cause::Reject);
        }
        let id = self.next_sub_id;
        self.next_sub_id += 1;
        self.subs.insert(
            id,
            AgentSubscription {
                id,
                period_ms: period,
                windows_per_indication: period / base,
                pending: None,
                pending_windows: 0,
                windows_seen: 0,
                indications_sent: 0,
            },
        );
        info!(subscription = id, period_ms = period, "subscription granted");
        reply(id, Cause::Ok)
    }

    fn handle_control(&mut self, frame: &E2Frame, now: Duration, out: &mut Vec<AgentAction>) {
        let payload = frame.sm_payload().unwrap_or_default();
        let valid = matches!(decode_sm_payload(payload), Ok(SmPayload::SpsControl(_)));
        if !valid {
            self.counters.malformed_controls += 1;
            out.push(AgentAction::ToRic(
                E2Frame::new(MsgType::ControlAck, frame.txid).with_cause(Cause::Malformed),
            ));
            return;
        }
        if frame.gnb_id() != Some(self.config.gnb_id.0) {
            out.push(AgentAction::ToRic(
                E2Frame::new(MsgType::ControlAck, frame.txid).with_cause(Cause::Reject),
            ));
            return;
        }
        self.controls.push_back(PendingControl {
            txid: frame.txid,
            payload: payload.to_vec(),
            sent_at: None,
        });
        self.dispatch_control(now, out);
    }

    /// Forward the head control if nothing is in flight across the boundary.
    fn dispatch_control(&mut self, now: Duration, out: &mut Vec<AgentAction>) {
        if let Some(head) = self.controls.front_mut() {
            if head.sent_at.is_none() {
                head.sent_at = Some(now);
                self.counters.controls_forwarded += 1;
                out.push(AgentAction::ToBoundary(BoundaryMsg::SmDownlink(head.payload.clone())));
            }
        }
    }

    pub fn on_boundary(&mut self, msg: BoundaryMsg, now: Duration) -> Vec<AgentAction> {
        let mut out = Vec::new();
        match msg {
            BoundaryMsg::SmUplink(bytes) => {
                let report = match decode_sm_payload(&bytes) {
                    Ok(SmPayload::KpmReport(r)) => r,
                    Ok(other) => {
                        warn!(kind = ?other.sm_type(), "unexpected uplink payload");
                        return out;
                    }
                    Err(e) => {
                        warn!(error = %e, "undecodable uplink payload");
                        return out;
                    }
                };
                if !self.is_established() {
                    return out;
                }
                self.counters.reports_received += 1;
                let gnb = self.config.gnb_id.0;
                let mut ready = Vec::new();
                for sub in self.subs.values_mut() {
                    sub.windows_seen += 1;
                    match &mut sub.pending {
                        Some(acc) => acc.merge(&report),
                        None => sub.pending = Some(report.clone()),
                    }
                    sub.pending_windows += 1;
                    if sub.pending_windows == sub.windows_per_indication {
                        let window = sub.pending.take().expect("accumulated above");
                        sub.pending_windows = 0;
                        sub.indications_sent += 1;
                        ready.push((sub.id, window));
                    }
                }
                for (id, window) in ready {
                    let Ok(payload) = crate::e2_codec::encode_sm_payload(&SmPayload::KpmReport(window)) else {
                        continue;
                    };
                    let txid = self.txid();
                    self.counters.indications_sent += 1;
                    out.push(AgentAction::ToRic(
                        E2Frame::new(MsgType::Indication, txid)
                            .with_gnb_id(gnb)
                            .with_subscription_id(id)
                            .with_sm_payload(payload),
                    ));
                }
            }
            BoundaryMsg::AckStatus { ok } => {
                match self.controls.front() {
                    Some(head) if head.sent_at.is_some() => {
                        let head = self.controls.pop_front().expect("front checked");
                        let cause = if ok { Cause::Ok } else { Cause::Reject };
                        out.push(AgentAction::ToRic(
                            E2Frame::new(MsgType::ControlAck, head.txid).with_cause(cause),
                        ));
                    }
                    _ => debug!("ACK_STATUS with no control in flight"),
                }
                self.dispatch_control(now, &mut out);
            }
            BoundaryMsg::SmDownlink(_) => warn!("downlink datagram received on the E2 side"),
        }
        out
    }
}
