//! Near-real-time controller.
//!
//! Terminates E2 sessions, keeps the node registry (R-NIB), forwards
//! subscription and control requests from xApps to agents, and routes
//! indications and acknowledgements back into per-xApp queues.
//!
//! [`Ric`] is transport agnostic: bytes arrive through [`Ric::on_bytes`] and
//! leave through a [`SessionTransport`]. xApps never run on a session's
//! thread; they poll their queue through the SDK.

mod queue;
mod transport;

pub use queue::{XappQueue, XAPP_QUEUE_CAPACITY};
pub use transport::{serve_tcp, MemoryTransport, SessionTransport, TcpTransport};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use thiserror::Error;
use tracing::{debug, info, warn};

use crate::clock::Clock;
use crate::domain::GnbId;
use crate::e2_codec::{encode_frame, Cause, E2Frame, FrameReader, MsgType};
use crate::xapp_sdk::XappHandle;

pub type SessionId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct XappId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubscriptionId(pub u32);

impl fmt::Display for SubscriptionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sub{}", self.0)
    }
}

/// Identifies one control request issued through the SDK.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ControlToken(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlOutcome {
    Ok,
    Rejected(Cause),
    /// No acknowledgement within the control timeout.
    Timeout,
    /// The node's session went away before the acknowledgement.
    SessionLost,
}

impl ControlOutcome {
    pub fn is_ok(self) -> bool {
        self == ControlOutcome::Ok
    }
}

/// A message delivered to an xApp queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RxMsg {
    Indication {
        subscription_id: SubscriptionId,
        gnb_id: GnbId,
        /// Encoded service-model payload.
        payload: Vec<u8>,
    },
    SubscriptionResponse {
        subscription_id: SubscriptionId,
        gnb_id: GnbId,
        outcome: Result<(), Cause>,
    },
    SubscriptionLost {
        subscription_id: SubscriptionId,
        gnb_id: GnbId,
    },
    ControlAck {
        token: ControlToken,
        gnb_id: GnbId,
        outcome: ControlOutcome,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectionState {
    Connected,
    Lost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnibEntry {
    pub gnb_id: GnbId,
    pub session: SessionId,
    pub ran_function_ids: Vec<u16>,
    pub state: ConnectionState,
    pub connected_at: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubscriptionState {
    Pending,
    Active,
    Failed(Cause),
    Lost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    pub subscription_id: SubscriptionId,
    pub xapp_id: XappId,
    pub gnb_id: GnbId,
    pub period_ms: u32,
    pub state: SubscriptionState,
    session: SessionId,
    /// Identifier granted by the agent.
    agent_sub_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RicError {
    #[error("unknown E2 node {0}")]
    UnknownNode(GnbId),
    #[error("E2 node {0} is not connected")]
    NodeNotConnected(GnbId),
}

#[derive(Debug, Clone, Copy)]
pub struct RicConfig {
    /// Failure ack is synthesized when no CONTROL_ACK arrives in this time.
    pub control_timeout: Duration,
    pub ran_function_id: u16,
}

impl Default for RicConfig {
    fn default() -> Self {
        Self {
            control_timeout: Duration::from_millis(200),
            ran_function_id: 1,
        }
    }
}

#[derive(Debug, Default)]
pub struct RicStats {
    pub indications_routed: AtomicU64,
    pub malformed_frames: AtomicU64,
    pub control_timeouts: AtomicU64,
}

struct Session {
    gnb_id: Option<GnbId>,
    reader: FrameReader,
}

struct PendingControl {
    token: ControlToken,
    xapp_id: XappId,
    gnb_id: GnbId,
    deadline: Duration,
}

#[derive(Default)]
pub(crate) struct Core {
    sessions: HashMap<SessionId, Session>,
    subs: BTreeMap<SubscriptionId, Subscription>,
    pending_subs: HashMap<(SessionId, u16), SubscriptionId>,
    pending_controls: HashMap<(SessionId, u16), PendingControl>,
    next_session: SessionId,
    next_txid: u16,
    next_sub: u32,
    next_token: u64,
    next_xapp: u32,
}

impl Core {
    fn txid(&mut self) -> u16 {
        let t = self.next_txid;
        self.next_txid = self.next_txid.wrapping_add(1);
        t
    }
}

/// Side effects gathered under the core lock and applied after it is released.
#[derive(Default)]
struct Effects {
    sends: Vec<(SessionId, E2Frame)>,
    closes: Vec<SessionId>,
    deliveries: Vec<(XappId, RxMsg)>,
}

struct Inner {
    config: RicConfig,
    core: Mutex<Core>,
    rnib: RwLock<BTreeMap<GnbId, RnibEntry>>,
    queues: RwLock<HashMap<XappId, Arc<Mutex<XappQueue>>>>,
    transport: Arc<dyn SessionTransport>,
    clock: Arc<dyn Clock>,
    stats: RicStats,
}

/// Shared handle to one controller instance.
#[derive(Clone)]
pub struct Ric {
    inner: Arc<Inner>,
}

impl fmt::Debug for Ric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ric").field("config", &self.inner.config).finish()
    }
}

impl Ric {
    pub fn new(config: RicConfig, transport: Arc<dyn SessionTransport>, clock: Arc<dyn Clock>) -> Self {
        Self {
            inner: Arc::new(Inner {
                config,
                core: Mutex::new(Core {
                    next_session: 1,
                    next_sub: 1,
                    next_token: 1,
                    next_xapp: 1,
                    ..Core::default()
                }),
                rnib: RwLock::new(BTreeMap::new()),
                queues: RwLock::new(HashMap::new()),
                transport,
                clock,
                stats: RicStats::default(),
            }),
        }
    }

    pub fn config(&self) -> &RicConfig {
        &self.inner.config
    }

    pub fn stats(&self) -> &RicStats {
        &self.inner.stats
    }

    /// Connected node ids, ascending.
    pub fn gnb_id_list(&self) -> Vec<GnbId> {
        self.inner
            .rnib
            .read()
            .unwrap()
            .values()
            .filter(|e| e.state == ConnectionState::Connected)
            .map(|e| e.gnb_id)
            .collect()
    }

    pub fn rnib_entry(&self, gnb_id: GnbId) -> Option<RnibEntry> {
        self.inner.rnib.read().unwrap().get(&gnb_id).cloned()
    }

    pub fn rnib_len(&self) -> usize {
        self.inner.rnib.read().unwrap().len()
    }

    pub fn subscription(&self, id: SubscriptionId) -> Option<Subscription> {
        self.inner.core.lock().unwrap().subs.get(&id).cloned()
    }

    /// Attach an in-process xApp and return its SDK handle.
    pub fn register_xapp(&self) -> XappHandle {
        let xapp_id = {
            let mut core = self.inner.core.lock().unwrap();
            let id = XappId(core.next_xapp);
            core.next_xapp += 1;
            id
        };
        let queue = Arc::new(Mutex::new(XappQueue::default()));
        self.inner
            .queues
            .write()
            .unwrap()
            .insert(xapp_id, queue.clone());
        XappHandle::new(xapp_id, queue, self.clone())
    }

    /// A new agent stream; frames are fed with [`Ric::on_bytes`].
    pub fn on_connect(&self) -> SessionId {
        let mut core = self.inner.core.lock().unwrap();
        let id = core.next_session;
        core.next_session += 1;
        core.sessions.insert(
            id,
            Session {
                gnb_id: None,
                reader: FrameReader::new(),
            },
        );
        id
    }

    /// Feed stream bytes. Returns false once the session has been closed.
    pub fn on_bytes(&self, session: SessionId, bytes: &[u8]) -> bool {
        let mut fx = Effects::default();
        let open = {
            let mut core = self.inner.core.lock().unwrap();
            let now = self.inner.clock.now();
            self.feed(&mut core, session, bytes, now, &mut fx)
        };
        self.apply(fx);
        open
    }

    pub fn on_disconnect(&self, session: SessionId) {
        let mut fx = Effects::default();
        {
            let mut core = self.inner.core.lock().unwrap();
            self.drop_session(&mut core, session, &mut fx);
        }
        self.apply(fx);
    }

    /// Expire overdue control requests.
    pub fn poll_timeouts(&self) {
        let now = self.inner.clock.now();
        let mut fx = Effects::default();
        {
            let mut core = self.inner.core.lock().unwrap();
            let expired: Vec<(SessionId, u16)> = core
                .pending_controls
                .iter()
                .filter(|(_, p)| now >= p.deadline)
                .map(|(k, _)| *k)
                .collect();
            for key in expired {
                let p = core.pending_controls.remove(&key).expect("key just listed");
                self.inner.stats.control_timeouts.fetch_add(1, Ordering::Relaxed);
                warn!(token = p.token.0, gnb = %p.gnb_id, "control request timed out");
                fx.deliveries.push((
                    p.xapp_id,
                    RxMsg::ControlAck {
                        token: p.token,
                        gnb_id: p.gnb_id,
                        outcome: ControlOutcome::Timeout,
                    },
                ));
            }
        }
        self.apply(fx);
    }

    pub(crate) fn subscribe(
        &self,
        xapp_id: XappId,
        gnb_id: GnbId,
        period_ms: u32,
    ) -> Result<SubscriptionId, RicError> {
        let entry = self.live_entry(gnb_id)?;
        let mut fx = Effects::default();
        let id = {
            let mut core = self.inner.core.lock().unwrap();
            let id = SubscriptionId(core.next_sub);
            core.next_sub += 1;
            let txid = core.txid();
            core.subs.insert(
                id,
                Subscription {
                    subscription_id: id,
                    xapp_id,
                    gnb_id,
                    period_ms,
                    state: SubscriptionState::Pending,
                    session: entry.session,
                    agent_sub_id: None,
                },
            );
            core.pending_subs.insert((entry.session, txid), id);
            fx.sends.push((
                entry.session,
                E2Frame::new(MsgType::SubReq, txid)
                    .with_gnb_id(gnb_id.0)
                    .with_ran_function_id(self.inner.config.ran_function_id)
                    .with_report_period_ms(period_ms),
            ));
            id
        };
        self.apply(fx);
        Ok(id)
    }

    /// Send a control request; the outcome arrives later in the xApp queue.
    pub(crate) fn route_control(
        &self,
        xapp_id: XappId,
        gnb_id: GnbId,
        sm_payload: Vec<u8>,
    ) -> ControlToken {
        let mut fx = Effects::default();
        let token = {
            let mut core = self.inner.core.lock().unwrap();
            let token = ControlToken(core.next_token);
            core.next_token += 1;
            match self.live_entry(gnb_id) {
                Ok(entry) => {
                    let txid = core.txid();
                    core.pending_controls.insert(
                        (entry.session, txid),
                        PendingControl {
                            token,
                            xapp_id,
                            gnb_id,
                            deadline: self.inner.clock.now() + self.inner.config.control_timeout,
                        },
                    );
                    fx.sends.push((
                        entry.session,
                        E2Frame::new(MsgType::ControlReq, txid)
                            .with_gnb_id(gnb_id.0)
                            .with_sm_payload(sm_payload),
                    ));
                }
                Err(e) => {
                    debug!(error = %e, "control to unreachable node");
                    fx.deliveries.push((
                        xapp_id,
                        RxMsg::ControlAck {
                            token,
                            gnb_id,
                            outcome: ControlOutcome::SessionLost,
                        },
                    ));
                }
            }
            token
        };
        self.apply(fx);
        token
    }

    pub(crate) fn knows_node(&self, gnb_id: GnbId) -> bool {
        self.inner.rnib.read().unwrap().contains_key(&gnb_id)
    }

    fn live_entry(&self, gnb_id: GnbId) -> Result<RnibEntry, RicError> {
        match self.inner.rnib.read().unwrap().get(&gnb_id) {
            None => Err(RicError::UnknownNode(gnb_id)),
            Some(e) if e.state != ConnectionState::Connected => Err(RicError::NodeNotConnected(gnb_id)),
            Some(e) => Ok(e.clone()),
        }
    }

    fn feed(&self, core: &mut Core, session: SessionId, bytes: &[u8], now: Duration, fx: &mut Effects) -> bool {
        let Some(s) = core.sessions.get_mut(&session) else {
            return false;
        };
        s.reader.push(bytes);
        loop {
            let Some(s) = core.sessions.get_mut(&session) else {
                return false;
            };
            match s.reader.next_frame() {
                Ok(Some(frame)) => self.handle_frame(core, session, frame, now, fx),
                Ok(None) => return true,
                Err(e) => {
                    warn!(session, error = %e, "malformed frame from agent; closing session");
                    self.inner.stats.malformed_frames.fetch_add(1, Ordering::Relaxed);
                    fx.sends.push((session, E2Frame::new(MsgType::Error, 0).with_cause(Cause::Malformed)));
                    fx.closes.push(session);
                    self.drop_session(core, session, fx);
                    return false;
                }
            }
        }
    }

    fn handle_frame(&self, core: &mut Core, session: SessionId, frame: E2Frame, now: Duration, fx: &mut Effects) {
        let registered = core.sessions.get(&session).and_then(|s| s.gnb_id);
        match (frame.msg_type, registered) {
            (MsgType::SetupReq, _) => self.accept_e2_node(core, session, &frame, now, fx),
            (_, None) => {
                warn!(session, msg = ?frame.msg_type, "frame before setup; closing session");
                fx.sends.push((session, E2Frame::new(MsgType::Error, frame.txid).with_cause(Cause::Malformed)));
                fx.closes.push(session);
                self.drop_session(core, session, fx);
            }
            (MsgType::SubResp, Some(gnb_id)) => {
                let Some(id) = core.pending_subs.remove(&(session, frame.txid)) else {
                    debug!(txid = frame.txid, "unsolicited SUB_RESP");
                    return;
                };
                let cause = frame.cause().unwrap_or(Cause::Malformed);
                if let Some(sub) = core.subs.get_mut(&id) {
                    let outcome = if cause == Cause::Ok {
                        sub.state = SubscriptionState::Active;
                        sub.agent_sub_id = frame.subscription_id();
                        Ok(())
                    } else {
                        sub.state = SubscriptionState::Failed(cause);
                        Err(cause)
                    };
                    fx.deliveries.push((
                        sub.xapp_id,
                        RxMsg::SubscriptionResponse {
                            subscription_id: id,
                            gnb_id,
                            outcome,
                        },
                    ));
                }
            }
            (MsgType::Indication, Some(gnb_id)) => {
                let agent_sub = frame.subscription_id();
                let payload = frame.sm_payload().unwrap_or_default();
                for sub in core.subs.values() {
                    if sub.session == session
                        && sub.state == SubscriptionState::Active
                        && sub.agent_sub_id == agent_sub
                    {
                        self.inner.stats.indications_routed.fetch_add(1, Ordering::Relaxed);
                        fx.deliveries.push((
                            sub.xapp_id,
                            RxMsg::Indication {
                                subscription_id: sub.subscription_id,
                                gnb_id,
                                payload: payload.to_vec(),
                            },
                        ));
                    }
                }
            }
            (MsgType::ControlAck | MsgType::Error, Some(_)) => {
                match core.pending_controls.remove(&(session, frame.txid)) {
                    Some(p) => {
                        let outcome = match frame.cause() {
                            Some(Cause::Ok) if frame.msg_type == MsgType::ControlAck => ControlOutcome::Ok,
                            Some(Cause::Ok) | None => ControlOutcome::Rejected(Cause::Reject),
                            Some(c) => ControlOutcome::Rejected(c),
                        };
                        fx.deliveries.push((
                            p.xapp_id,
                            RxMsg::ControlAck {
                                token: p.token,
                                gnb_id: p.gnb_id,
                                outcome,
                            },
                        ));
                    }
                    None => debug!(txid = frame.txid, msg = ?frame.msg_type, "no pending control for frame"),
                }
            }
            (other, Some(_)) => {
                warn!(session, msg = ?other, "unexpected frame from agent");
                fx.sends.push((session, E2Frame::new(MsgType::Error, frame.txid).with_cause(Cause::Malformed)));
            }
        }
    }

    fn accept_e2_node(&self, core: &mut Core, session: SessionId, frame: &E2Frame, now: Duration, fx: &mut Effects) {
        let gnb_id = match frame.gnb_id() {
            Some(id) if id > 0 => GnbId(id),
            _ => {
                fx.sends.push((session, E2Frame::new(MsgType::SetupResp, frame.txid).with_cause(Cause::Reject)));
                return;
            }
        };
        let previous = self.inner.rnib.read().unwrap().get(&gnb_id).cloned();
        if let Some(prev) = previous {
            if prev.session != session && prev.state == ConnectionState::Connected {
                info!(gnb = %gnb_id, old = prev.session, new = session, "setup supersedes existing session");
                fx.closes.push(prev.session);
                self.drop_session(core, prev.session, fx);
            }
        }
        if let Some(s) = core.sessions.get_mut(&session) {
            s.gnb_id = Some(gnb_id);
        }
        self.inner.rnib.write().unwrap().insert(
            gnb_id,
            RnibEntry {
                gnb_id,
                session,
                ran_function_ids: vec![frame.ran_function_id()],
                state: ConnectionState::Connected,
                connected_at: now,
            },
        );
        info!(gnb = %gnb_id, session, "E2 node registered");
        fx.sends.push((session, E2Frame::new(MsgType::SetupResp, frame.txid).with_cause(Cause::Ok)));
    }

    fn drop_session(&self, core: &mut Core, session: SessionId, fx: &mut Effects) {
        let Some(s) = core.sessions.remove(&session) else { return };
        if let Some(gnb_id) = s.gnb_id {
            let mut rnib = self.inner.rnib.write().unwrap();
            if let Some(entry) = rnib.get_mut(&gnb_id) {
                if entry.session == session {
                    entry.state = ConnectionState::Lost;
                    info!(gnb = %gnb_id, session, "E2 node lost");
                }
            }
        }
        let lost: Vec<(SessionId, u16)> = core
            .pending_controls
            .keys()
            .filter(|(sid, _)| *sid == session)
            .copied()
            .collect();
        for key in lost {
            let p = core.pending_controls.remove(&key).expect("key just listed");
            fx.deliveries.push((
                p.xapp_id,
                RxMsg::ControlAck {
                    token: p.token,
                    gnb_id: p.gnb_id,
                    outcome: ControlOutcome::SessionLost,
                },
            ));
        }
        core.pending_subs.retain(|(sid, _), _| *sid != session);
        for sub in core.subs.values_mut() {
            if sub.session == session
                && matches!(sub.state, SubscriptionState::Active | SubscriptionState::Pending)
            {
                sub.state = SubscriptionState::Lost;
                fx.deliveries.push((
                    sub.xapp_id,
                    RxMsg::SubscriptionLost {
                        subscription_id: sub.subscription_id,
                        gnb_id: sub.gnb_id,
                    },
                ));
            }
        }
    }

    fn apply(&self, fx: Effects) {
        for (session, frame) in fx.sends {
            match encode_frame(&frame) {
                Ok(bytes) => self.inner.transport.send(session, bytes),
                Err(e) => warn!(error = %e, "dropping unencodable frame"),
            }
        }
        for session in fx.closes {
            self.inner.transport.close(session);
        }
        if fx.deliveries.is_empty() {
            return;
        }
        let queues = self.inner.queues.read().unwrap();
        for (xapp, msg) in fx.deliveries {
            if let Some(q) = queues.get(&xapp) {
                q.lock().unwrap().push(msg);
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn lock_core_for_test(&self) -> std::sync::MutexGuard<'_, Core> {
        self.inner.core.lock().unwrap()
    }
}

#[cfg(test)]
mod tests;
