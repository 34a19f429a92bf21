//! Closed-loop SLA enforcement over a simulated 5G cell: a slot-level MAC
//! scheduler, an E2 agent, a near-real-time controller with an xApp SDK, and
//! the SLA xApp itself.

pub mod clock;
pub mod domain;
pub mod e2_agent;
pub mod e2_codec;
pub mod mac_sim;
pub mod ric;
pub mod scenario;
pub mod sla_xapp;
pub mod xapp_sdk;

pub use domain::{
    approx_eq, approx_le, required_prbs, violation, CellConfig, DomainError, GnbId, LeftoverMode, PolicySolution,
    UeAllocation, UeEstimate, UeId, UeProfile,
};
pub use sla_xapp::PolicyKind;
