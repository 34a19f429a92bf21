//! Split E2 agent for one gNB: an E2AP termination that owns the session with
//! the controller and a service-model task next to the scheduler. The two
//! halves only exchange [`BoundaryMsg`] datagrams.

mod boundary;
mod sm_task;
mod termination;

use std::time::Duration;

use thiserror::Error;

pub use boundary::{BoundaryError, BoundaryMsg};
pub use sm_task::SmTask;
pub use termination::{AgentAction, AgentCounters, AgentSubscription, E2Termination, LinkState, MIN_REPORT_PERIOD_MS};

use crate::domain::GnbId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentConfig {
    pub gnb_id: GnbId,
    pub ran_function_id: u16,
    /// Cadence at which the scheduler emits reports.
    pub base_report_period_ms: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentConfigError {
    #[error("gnb_id must be positive")]
    ZeroGnbId,
    #[error("report period must be positive")]
    ZeroPeriod,
}

impl AgentConfig {
    pub fn new(gnb_id: GnbId, base_report_period_ms: u32) -> Result<Self, AgentConfigError> {
        if gnb_id.0 == 0 {
            return Err(AgentConfigError::ZeroGnbId);
        }
        if base_report_period_ms == 0 {
            return Err(AgentConfigError::ZeroPeriod);
        }
        Ok(Self {
            gnb_id,
            ran_function_id: 1,
            base_report_period_ms,
        })
    }
}

/// Exponential retry delay: 500 ms doubling up to 8 s.
#[derive(Debug, Clone)]
pub struct Backoff {
    base: Duration,
    cap: Duration,
    attempt: u32,
}

impl Default for Backoff {
    fn default() -> Self {
        Self::new(Duration::from_millis(500), Duration::from_secs(8))
    }
}

impl Backoff {
    pub fn new(base: Duration, cap: Duration) -> Self {
        Self { base, cap, attempt: 0 }
    }

    pub fn next_delay(&mut self) -> Duration {
        let d = self.base.saturating_mul(1u32 << self.attempt.min(16)).min(self.cap);
        self.attempt = self.attempt.saturating_add(1);
        d
    }

    pub fn reset(&mut self) {
        self.attempt = 0;
    }
}
