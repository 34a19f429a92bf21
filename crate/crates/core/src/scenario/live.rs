//! Wall-clock closed loop: controller and xApp on one side of a TCP stream,
//! the agent's two halves on either side of a loopback UDP boundary, and the
//! scheduler paced in its own thread.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use tracing::{debug, info, warn};

use super::{RunError, RunOutput, ScenarioConfig};
use crate::clock::{Clock, WallClock};
use crate::e2_agent::{AgentAction, AgentConfig, AgentCounters, BoundaryMsg, E2Termination, SmTask};
use crate::e2_codec::{encode_frame, FrameReader, SpsAction};
use crate::mac_sim::{AckStatus, MacSimulator, RunMode, SimCounters, SimOutbox, SimOutput, SimTrace, SpsAck};
use super::report::LiveStats;
use crate::ric::{serve_tcp, Ric, RicConfig, TcpTransport};
use crate::sla_xapp::{DecisionRecord, SlaXapp, SlaXappConfig, XappCounters};

const IDLE_POLL: Duration = Duration::from_millis(1);

fn io_err(context: &str, e: std::io::Error) -> RunError {
    RunError::Startup(format!("{context}: {e}"))
}

/// Controller plus the SLA xApp, serving agents on a TCP listener.
pub struct RicNode {
    pub addr: SocketAddr,
    pub ric: Ric,
    stop: Arc<AtomicBool>,
    accept: JoinHandle<()>,
    xapp: JoinHandle<SlaXapp>,
}

pub struct RicOutcome {
    pub decisions: Vec<DecisionRecord>,
    pub counters: XappCounters,
}

impl RicNode {
    pub fn start(cfg: &ScenarioConfig, listener: TcpListener) -> Result<Self, RunError> {
        let addr = listener.local_addr().map_err(|e| io_err("listener address", e))?;
        let stop = Arc::new(AtomicBool::new(false));
        let clock = Arc::new(WallClock::new());
        let transport = Arc::new(TcpTransport::new());
        let ric = Ric::new(RicConfig::default(), transport.clone(), clock.clone());
        let accept = serve_tcp(ric.clone(), transport, listener, stop.clone()).map_err(|e| io_err("serve", e))?;

        let mut xapp = SlaXapp::new(
            SlaXappConfig {
                gnb_id: cfg.gnb(),
                policy: cfg.policy,
                profiles: cfg.profiles(),
                cell: cfg.cell,
            },
            ric.register_xapp(),
        );
        let gnb = cfg.gnb();
        let xapp_stop = stop.clone();
        let xapp = thread::Builder::new()
            .name("sla-xapp".into())
            .spawn(move || {
                while !xapp_stop.load(Ordering::Relaxed) {
                    let now = clock.now();
                    if !xapp.is_subscribed()
                        && !xapp.subscription_pending()
                        && xapp.handle().get_gnb_id_list().contains(&gnb)
                    {
                        if let Err(e) = xapp.subscribe() {
                            debug!(error = %e, "subscribe failed; will retry");
                        }
                    }
                    xapp.control_step(now);
                    thread::sleep(IDLE_POLL);
                }
                xapp
            })
            .map_err(|e| io_err("spawn xApp", e))?;
        info!(%addr, "controller listening");
        Ok(Self {
            addr,
            ric,
            stop,
            accept,
            xapp,
        })
    }

    pub fn stop(self) -> RicOutcome {
        self.stop.store(true, Ordering::Relaxed);
        let _ = self.accept.join();
        let xapp = self.xapp.join().expect("xApp thread panicked");
        RicOutcome {
            decisions: xapp.decisions().to_vec(),
            counters: xapp.counters().clone(),
        }
    }
}

enum AgentEvent {
    Ric(u64, Vec<u8>),
    RicClosed(u64),
    Boundary(Vec<u8>),
}

/// One gNB: scheduler thread, SM task thread, E2 termination thread.
pub struct GnbNode {
    stop: Arc<AtomicBool>,
    started: Arc<AtomicBool>,
    sim: JoinHandle<(SimTrace, SimCounters)>,
    sm: JoinHandle<Vec<SpsAck>>,
    agent: JoinHandle<AgentCounters>,
}

pub struct GnbOutcome {
    pub trace: SimTrace,
    pub sim_counters: SimCounters,
    pub acks: Vec<SpsAck>,
    pub agent_counters: AgentCounters,
}

impl GnbNode {
    /// The scheduler starts once the first report subscription is granted.
    pub fn start(cfg: &ScenarioConfig, ric_addr: SocketAddr) -> Result<Self, RunError> {
        let mut sim = MacSimulator::new(cfg.sim_config()).map_err(|e| RunError::Startup(e.to_string()))?;
        let outbox = sim.take_outbox().expect("fresh simulator");
        let agent_cfg =
            AgentConfig::new(cfg.gnb(), cfg.cell.report_period_ms).map_err(|e| RunError::Startup(e.to_string()))?;
        let e2_udp = UdpSocket::bind("127.0.0.1:0").map_err(|e| io_err("bind boundary socket", e))?;
        let sm_udp = UdpSocket::bind("127.0.0.1:0").map_err(|e| io_err("bind boundary socket", e))?;
        let e2_addr = e2_udp.local_addr().map_err(|e| io_err("boundary address", e))?;
        let sm_addr = sm_udp.local_addr().map_err(|e| io_err("boundary address", e))?;

        let stop = Arc::new(AtomicBool::new(false));
        let started = Arc::new(AtomicBool::new(false));
        let sm_task = SmTask::new(sim.inbox());

        let (s1, g1) = (stop.clone(), started.clone());
        let mode = RunMode::Live { speed: cfg.speed };
        let duration = Duration::from_secs_f64(cfg.duration_s);
        let sim = thread::Builder::new()
            .name("mac-sim".into())
            .spawn(move || {
                while !g1.load(Ordering::Acquire) {
                    if s1.load(Ordering::Relaxed) {
                        return (SimTrace::default(), sim.counters().clone());
                    }
                    thread::sleep(IDLE_POLL);
                }
                info!("scheduler started");
                let trace = sim.run(mode, duration, Some(&s1));
                (trace, sim.counters().clone())
            })
            .map_err(|e| io_err("spawn scheduler", e))?;

        let s2 = stop.clone();
        let sm = thread::Builder::new()
            .name("sm-task".into())
            .spawn(move || sm_loop(sm_task, outbox, sm_udp, e2_addr, s2))
            .map_err(|e| io_err("spawn SM task", e))?;

        let (s3, g3) = (stop.clone(), started.clone());
        let agent = thread::Builder::new()
            .name("e2-term".into())
            .spawn(move || agent_loop(agent_cfg, ric_addr, e2_udp, sm_addr, g3, s3))
            .map_err(|e| io_err("spawn E2 termination", e))?;

        Ok(Self {
            stop,
            started,
            sim,
            sm,
            agent,
        })
    }

    pub fn started(&self) -> bool {
        self.started.load(Ordering::Acquire)
    }

    pub fn sim_finished(&self) -> bool {
        self.sim.is_finished()
    }

    pub fn stop(self) -> GnbOutcome {
        self.stop.store(true, Ordering::Relaxed);
        let (trace, sim_counters) = self.sim.join().expect("scheduler thread panicked");
        let acks = self.sm.join().expect("SM task panicked");
        let agent_counters = self.agent.join().expect("E2 termination panicked");
        GnbOutcome {
            trace,
            sim_counters,
            acks,
            agent_counters,
        }
    }
}

fn sm_loop(mut sm: SmTask, outbox: SimOutbox, udp: UdpSocket, peer: SocketAddr, stop: Arc<AtomicBool>) -> Vec<SpsAck> {
    let mut acks = Vec::new();
    let _ = udp.set_nonblocking(true);
    let mut buf = vec![0u8; 64 * 1024];
    let send = |msg: BoundaryMsg| {
        if let Err(e) = udp.send_to(&msg.encode(), peer) {
            warn!(error = %e, "boundary send failed");
        }
    };
    loop {
        loop {
            match udp.recv_from(&mut buf) {
                Ok((n, _)) => match BoundaryMsg::decode(&buf[..n]) {
                    Ok(msg) => {
                        if let Some(reply) = sm.on_boundary(msg) {
                            send(reply);
                        }
                    }
                    Err(e) => warn!(error = %e, "bad boundary datagram"),
                },
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => break,
                Err(e) => {
                    debug!(error = %e, "boundary receive error");
                    break;
                }
            }
        }
        match outbox.recv_timeout(IDLE_POLL) {
            Some(out) => {
                if let SimOutput::Ack(ack) = &out {
                    acks.push(ack.clone());
                }
                if let Some(msg) = sm.on_sim_output(out) {
                    send(msg);
                }
            }
            None if stop.load(Ordering::Relaxed) => return acks,
            None => {}
        }
    }
}

fn agent_loop(
    cfg: AgentConfig,
    ric_addr: SocketAddr,
    udp: UdpSocket,
    sm_addr: SocketAddr,
    started: Arc<AtomicBool>,
    stop: Arc<AtomicBool>,
) -> AgentCounters {
    let (tx, rx) = mpsc::channel();
    if let Ok(reader) = udp.try_clone() {
        let _ = reader.set_read_timeout(Some(Duration::from_millis(20)));
        let (tx, stop) = (tx.clone(), stop.clone());
        let _ = thread::Builder::new().name("e2-boundary-rx".into()).spawn(move || {
            let mut buf = vec![0u8; 64 * 1024];
            while !stop.load(Ordering::Relaxed) {
                if let Ok((n, _)) = reader.recv_from(&mut buf) {
                    if tx.send(AgentEvent::Boundary(buf[..n].to_vec())).is_err() {
                        break;
                    }
                }
            }
        });
    }

    let clock = WallClock::new();
    let mut term = E2Termination::new(cfg);
    let mut link: Option<(u64, TcpStream)> = None;
    let mut generation = 0u64;
    let mut reader = FrameReader::new();

    while !stop.load(Ordering::Relaxed) {
        let now = clock.now();
        let mut actions: VecDeque<AgentAction> = term.poll(now).into();
        match rx.recv_timeout(Duration::from_millis(2)) {
            Ok(AgentEvent::Ric(g, bytes)) if link.as_ref().is_some_and(|l| l.0 == g) => {
                reader.push(&bytes);
                loop {
                    match reader.next_frame() {
                        Ok(Some(frame)) => actions.extend(term.on_ric_frame(frame, now)),
                        Ok(None) => break,
                        Err(e) => {
                            warn!(error = %e, "malformed frame from controller; dropping link");
                            if let Some((_, s)) = link.take() {
                                let _ = s.shutdown(Shutdown::Both);
                            }
                            term.on_stream_lost(now);
                            break;
                        }
                    }
                }
            }
            Ok(AgentEvent::RicClosed(g)) if link.as_ref().is_some_and(|l| l.0 == g) => {
                link = None;
                term.on_stream_lost(now);
            }
            Ok(AgentEvent::Boundary(bytes)) => match BoundaryMsg::decode(&bytes) {
                Ok(msg) => actions.extend(term.on_boundary(msg, now)),
                Err(e) => warn!(error = %e, "bad boundary datagram"),
            },
            _ => {}
        }

        while let Some(action) = actions.pop_front() {
            match action {
                AgentAction::Connect => match TcpStream::connect_timeout(&ric_addr, Duration::from_millis(250)) {
                    Ok(stream) => {
                        let _ = stream.set_nodelay(true);
                        generation += 1;
                        match stream.try_clone() {
                            Ok(rd) => spawn_stream_reader(rd, generation, tx.clone(), stop.clone()),
                            Err(e) => {
                                warn!(error = %e, "cannot clone stream");
                                term.on_connect_failed(now);
                                continue;
                            }
                        }
                        link = Some((generation, stream));
                        reader = FrameReader::new();
                        actions.extend(term.on_connected(now));
                    }
                    Err(e) => {
                        debug!(error = %e, "controller not reachable");
                        term.on_connect_failed(now);
                    }
                },
                AgentAction::ToRic(frame) => {
                    let Some((_, stream)) = link.as_mut() else { continue };
                    let bytes = match encode_frame(&frame) {
                        Ok(b) => b,
                        Err(e) => {
                            warn!(error = %e, "dropping unencodable frame");
                            continue;
                        }
                    };
                    if let Err(e) = stream.write_all(&bytes) {
                        warn!(error = %e, "write to controller failed");
                        link = None;
                        term.on_stream_lost(now);
                    }
                }
                AgentAction::ToBoundary(msg) => {
                    if let Err(e) = udp.send_to(&msg.encode(), sm_addr) {
                        warn!(error = %e, "boundary send failed");
                    }
                }
            }
        }
        if !started.load(Ordering::Relaxed) && term.subscriptions().next().is_some() {
            started.store(true, Ordering::Release);
        }
    }
    if let Some((_, s)) = link {
        let _ = s.shutdown(Shutdown::Both);
    }
    term.counters().clone()
}

fn spawn_stream_reader(mut stream: TcpStream, generation: u64, tx: mpsc::Sender<AgentEvent>, stop: Arc<AtomicBool>) {
    let _ = stream.set_read_timeout(Some(Duration::from_millis(50)));
    let _ = thread::Builder::new().name("e2-stream-rx".into()).spawn(move || {
        let mut buf = [0u8; 4096];
        while !stop.load(Ordering::Relaxed) {
            match stream.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    if tx.send(AgentEvent::Ric(generation, buf[..n].to_vec())).is_err() {
                        return;
                    }
                }
                Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
                Err(_) => break,
            }
        }
        let _ = tx.send(AgentEvent::RicClosed(generation));
    });
}

/// Timing and delivery figures for a live run.
pub fn live_stats(cfg: &ScenarioConfig, trace: &SimTrace, decisions: &[DecisionRecord], acks: &[SpsAck], indications: u64) -> LiveStats {
    let period = cfg.cell.report_period_s() / cfg.speed;
    let tol = 0.2 * period;
    let gaps: Vec<f64> = decisions
        .windows(2)
        .map(|w| w[1].at.as_secs_f64() - w[0].at.as_secs_f64())
        .collect();
    let within = gaps.iter().filter(|g| (**g - period).abs() <= tol).count() as u64;

    // controls are applied in issue order; pair the n-th issued with the n-th ack
    let issued: Vec<&DecisionRecord> = decisions.iter().filter(|d| d.issued.is_some()).collect();
    let applied: Vec<&SpsAck> = acks.iter().filter(|a| a.status == AckStatus::Ok).collect();
    let per_window = cfg.cell.slots_per_report();
    let slot_ms = cfg.cell.slot_duration_s() * 1e3;
    let traffic = cfg.traffic();
    let mut max_delay: f64 = 0.0;
    let (mut checked, mut visible) = (0u64, 0u64);
    for (i, (d, ack)) in issued.iter().zip(&applied).enumerate() {
        let delay = ack.effective_slot.saturating_sub(d.window * per_window) as f64 * slot_ms;
        max_delay = max_delay.max(delay);

        // first whole window under the new grants, unless superseded inside it
        let first = ack.effective_slot.div_ceil(per_window) * per_window;
        let end = first + per_window;
        if applied.get(i + 1).is_some_and(|next| next.effective_slot < end) {
            continue;
        }
        let Some((_, report)) = trace.windows.iter().find(|(e, _)| *e == end) else { continue };
        let (from_s, to_s) = (first as f64 * slot_ms / 1e3, end as f64 * slot_ms / 1e3);
        let entries = &d.issued.as_ref().expect("filtered on issued").1;
        checked += 1;
        let ok = entries.iter().all(|e| match e.action {
            SpsAction::Fixed(p) if traffic.active_during(e.ue_id, from_s, to_s) => {
                report.record(e.ue_id).is_some_and(|r| u64::from(r.prb_slots) == u64::from(p) * per_window)
            }
            _ => true,
        });
        visible += u64::from(ok);
    }
    LiveStats {
        control_cycles: decisions.len() as u64,
        intervals_within_tolerance: within,
        intervals_total: gaps.len() as u64,
        indications_expected: trace.windows.len() as u64,
        indications_received: indications,
        max_apply_delay_ms: max_delay,
        controls_checked: checked,
        controls_visible: visible,
    }
}

pub fn run_live(cfg: &ScenarioConfig) -> Result<RunOutput, RunError> {
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| io_err("bind controller", e))?;
    let ric = RicNode::start(cfg, listener)?;
    let gnb = GnbNode::start(cfg, ric.addr)?;

    let deadline = Instant::now() + Duration::from_secs(10);
    while !gnb.started() {
        if Instant::now() > deadline {
            gnb.stop();
            ric.stop();
            return Err(RunError::Startup("no report subscription within 10 s".into()));
        }
        thread::sleep(Duration::from_millis(5));
    }
    while !gnb.sim_finished() {
        thread::sleep(Duration::from_millis(20));
    }
    // let the final indication reach the xApp
    thread::sleep(Duration::from_secs_f64(2.0 * cfg.cell.report_period_s() / cfg.speed).max(Duration::from_millis(50)));
    let g = gnb.stop();
    let r = ric.stop();

    let stats = live_stats(cfg, &g.trace, &r.decisions, &g.acks, r.counters.indications);
    let mut out = RunOutput::assemble(cfg, g.trace.windows, r.decisions, r.counters.controls_issued, g.sim_counters);
    out.summary.live = Some(stats);
    Ok(out)
}
