//! Single-threaded closed loop. Every component is the real state machine and
//! every hop goes through the real codecs; only time and transport are faked.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Duration;

use super::{RunError, RunOutput, ScenarioConfig};
use crate::clock::ManualClock;
use crate::e2_agent::{AgentAction, AgentConfig, BoundaryMsg, E2Termination, SmTask};
use crate::e2_codec::{encode_frame, FrameReader};
use crate::mac_sim::{MacSimulator, SimOutbox, SimOutput};
use crate::ric::{MemoryTransport, Ric, RicConfig, SessionId};
use crate::sla_xapp::{SlaXapp, SlaXappConfig};

struct Fused {
    clock: ManualClock,
    transport: Arc<MemoryTransport>,
    ric: Ric,
    xapp: SlaXapp,
    term: E2Termination,
    sm: SmTask,
    outbox: SimOutbox,
    session: Option<SessionId>,
    reader: FrameReader,
    windows: Vec<(u64, crate::e2_codec::KpmReport)>,
}

impl Fused {
    fn now(&self) -> Duration {
        use crate::clock::Clock;
        self.clock.now()
    }

    fn boundary(msg: BoundaryMsg) -> Result<BoundaryMsg, RunError> {
        BoundaryMsg::decode(&msg.encode()).map_err(|e| RunError::Runtime(e.to_string()))
    }

    /// Move messages between components until nothing is in flight.
    fn pump(&mut self) -> Result<(), RunError> {
        loop {
            let now = self.now();
            let mut actions: VecDeque<AgentAction> = self.term.poll(now).into();
            let mut moved = !actions.is_empty();

            for out in self.outbox.drain() {
                moved = true;
                if let SimOutput::Report {
                    window_end_slot,
                    report,
                } = &out
                {
                    self.windows.push((*window_end_slot, report.clone()));
                }
                if let Some(msg) = self.sm.on_sim_output(out) {
                    actions.extend(self.term.on_boundary(Self::boundary(msg)?, now));
                }
            }

            if let Some(s) = self.session {
                for bytes in self.transport.take(s) {
                    moved = true;
                    self.reader.push(&bytes);
                }
                while let Some(frame) = self.reader.next_frame().map_err(|e| RunError::Runtime(e.to_string()))? {
                    actions.extend(self.term.on_ric_frame(frame, now));
                }
            }

            while let Some(action) = actions.pop_front() {
                match action {
                    AgentAction::Connect => {
                        let s = self.ric.on_connect();
                        self.session = Some(s);
                        self.reader = FrameReader::new();
                        actions.extend(self.term.on_connected(now));
                    }
                    AgentAction::ToRic(frame) => {
                        let session = self.session.ok_or_else(|| RunError::Runtime("no E2 session".into()))?;
                        let bytes = encode_frame(&frame).map_err(|e| RunError::Runtime(e.to_string()))?;
                        if !self.ric.on_bytes(session, &bytes) {
                            return Err(RunError::Runtime(format!("controller closed the session on {frame:?}")));
                        }
                    }
                    AgentAction::ToBoundary(msg) => {
                        if let Some(reply) = self.sm.on_boundary(Self::boundary(msg)?) {
                            actions.extend(self.term.on_boundary(Self::boundary(reply)?, now));
                        }
                    }
                }
            }

            self.ric.poll_timeouts();
            if self.xapp.control_step(now).is_some() {
                moved = true;
            }
            if !moved {
                return Ok(());
            }
        }
    }
}

pub fn run_deterministic(cfg: &ScenarioConfig) -> Result<RunOutput, RunError> {
    let mut sim = MacSimulator::new(cfg.sim_config()).map_err(|e| RunError::Startup(e.to_string()))?;
    let outbox = sim.take_outbox().expect("fresh simulator");
    let clock = ManualClock::new();
    let transport = Arc::new(MemoryTransport::new());
    let ric = Ric::new(RicConfig::default(), transport.clone(), Arc::new(clock.clone()));
    let xapp = SlaXapp::new(
        SlaXappConfig {
            gnb_id: cfg.gnb(),
            policy: cfg.policy,
            profiles: cfg.profiles(),
            cell: cfg.cell,
        },
        ric.register_xapp(),
    );
    let agent_cfg =
        AgentConfig::new(cfg.gnb(), cfg.cell.report_period_ms).map_err(|e| RunError::Startup(e.to_string()))?;
    let mut f = Fused {
        clock,
        transport,
        ric,
        xapp,
        term: E2Termination::new(agent_cfg),
        sm: SmTask::new(sim.inbox()),
        outbox,
        session: None,
        reader: FrameReader::new(),
        windows: Vec::new(),
    };

    f.pump()?;
    if !f.term.is_established() {
        return Err(RunError::Startup("E2 setup did not complete".into()));
    }
    f.xapp.subscribe().map_err(|e| RunError::Startup(e.to_string()))?;
    f.pump()?;
    if !f.xapp.is_subscribed() {
        return Err(RunError::Startup("report subscription was refused".into()));
    }

    let slots = (cfg.duration_s * 1e6).round() as u64 / u64::from(cfg.cell.slot_duration_us);
    for k in 0..slots {
        sim.step_tti();
        f.clock.set(Duration::from_micros(u64::from(cfg.cell.slot_duration_us) * (k + 1)));
        f.pump()?;
    }

    let decisions = f.xapp.decisions().to_vec();
    let commands = f.xapp.counters().controls_issued;
    Ok(RunOutput::assemble(cfg, f.windows, decisions, commands, sim.counters().clone()))
}
