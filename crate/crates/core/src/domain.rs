//! Shared vocabulary types and SLA arithmetic.
//!
//! Rates are carried as `f64` Mbps and PRB counts as integers throughout the
//! crate. Floating comparisons go through [`approx_eq`] / [`approx_le`] with a
//! relative tolerance of [`REL_TOL`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used for every floating comparison in the crate.
pub const REL_TOL: f64 = 1e-9;

/// `a == b` up to [`REL_TOL`] relative to the larger magnitude (absolute near zero).
pub fn approx_eq(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs()).max(1.0);
    (a - b).abs() <= REL_TOL * scale
}

/// `a <= b` up to [`REL_TOL`].
pub fn approx_le(a: f64, b: f64) -> bool {
    a <= b || approx_eq(a, b)
}

/// RNTI-like UE identifier, unique within a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UeId(pub u16);

impl fmt::Display for UeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UE{}", self.0)
    }
}

/// E2 node (gNB) identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GnbId(pub u32);

impl fmt::Display for GnbId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "gNB{}", self.0)
    }
}

/// SLA contract of one UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeProfile {
    pub ue_id: UeId,
    /// Guaranteed bit rate, Mbps.
    pub gbr_mbps: f64,
    /// Strict-policy priority weight, > 0.
    pub weight: f64,
}

impl UeProfile {
    pub fn new(ue_id: u16, gbr_mbps: f64, weight: f64) -> Result<Self, DomainError> {
        let profile = Self {
            ue_id: UeId(ue_id),
            gbr_mbps,
            weight,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.gbr_mbps.is_finite() && self.gbr_mbps >= 0.0) {
            return Err(DomainError::NegativeGbr(self.ue_id, self.gbr_mbps));
        }
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(DomainError::NonPositiveWeight(self.ue_id, self.weight));
        }
        Ok(())
    }
}

/// Whether PRBs left over after SPS grants go idle or back to the PF pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeftoverMode {
    #[default]
    Cap,
    Pf,
}

/// Static cell parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellConfig {
    /// Schedulable PRBs per slot.
    pub total_prbs: u32,
    pub slot_duration_us: u32,
    #[serde(default = "default_report_period_ms")]
    pub report_period_ms: u32,
    #[serde(default)]
    pub leftover_mode: LeftoverMode,
}

fn default_report_period_ms() -> u32 {
    100
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            total_prbs: 65,
            slot_duration_us: 500,
            report_period_ms: 100,
            leftover_mode: LeftoverMode::Cap,
        }
    }
}

impl CellConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.total_prbs == 0 {
            return Err(DomainError::InvalidCell("total_prbs must be at least 1".into()));
        }
        if self.slot_duration_us == 0 {
            return Err(DomainError::InvalidCell("slot_duration_us must be positive".into()));
        }
        if self.report_period_ms == 0 {
            return Err(DomainError::InvalidCell("report_period_ms must be positive".into()));
        }
        if (u64::from(self.report_period_ms) * 1000) % u64::from(self.slot_duration_us) != 0 {
            return Err(DomainError::InvalidCell(format!(
                "report_period_ms {} is not a whole number of {} us slots",
                self.report_period_ms, self.slot_duration_us
            )));
        }
        Ok(())
    }

    pub fn slots_per_report(&self) -> u64 {
        u64::from(self.report_period_ms) * 1000 / u64::from(self.slot_duration_us)
    }

    pub fn slot_duration_s(&self) -> f64 {
        f64::from(self.slot_duration_us) * 1e-6
    }

    pub fn report_period_s(&self) -> f64 {
        f64::from(self.report_period_ms) * 1e-3
    }
}

/// Per-UE throughput estimate derived from one telemetry window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UeEstimate {
    pub ue_id: UeId,
    /// Per-PRB throughput, Mbps per continuously held PRB. `None` until the UE is first served.
    pub eta_mbps_per_prb: Option<f64>,
    pub active: bool,
}

impl UeEstimate {
    /// PRBs needed to meet `gbr_mbps` at the estimated rate.
    pub fn demand_prbs(&self, gbr_mbps: f64) -> Result<u32, DomainError> {
        match self.eta_mbps_per_prb {
            Some(eta) => required_prbs(gbr_mbps, eta),
            None => Err(DomainError::UnsatisfiableDemand(self.ue_id)),
        }
    }
}

/// One UE's line of a policy decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UeAllocation {
    pub ue_id: UeId,
    pub prbs: u32,
    pub expected_violation_mbps: f64,
    /// Knapsack selection; always true for the Soft policy.
    pub selected: bool,
}

/// Output of a policy solver, entries sorted by `ue_id`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PolicySolution {
    pub entries: Vec<UeAllocation>,
}

impl PolicySolution {
    pub fn total_prbs(&self) -> u64 {
        self.entries.iter().map(|e| u64::from(e.prbs)).sum()
    }

    pub fn total_violation_mbps(&self) -> f64 {
        self.entries.iter().map(|e| e.expected_violation_mbps).sum()
    }

    pub fn get(&self, ue_id: UeId) -> Option<&UeAllocation> {
        self.entries.iter().find(|e| e.ue_id == ue_id)
    }

    pub fn prbs(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.prbs).collect()
    }

    pub fn selected_ids(&self) -> Vec<UeId> {
        self.entries
            .iter()
            .filter(|e| e.selected)
            .map(|e| e.ue_id)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("unsatisfiable demand for {0}: per-PRB throughput is zero or unknown")]
    UnsatisfiableDemand(UeId),
    #[error("gbr_mbps for {0} must be a finite non-negative number, got {1}")]
    NegativeGbr(UeId, f64),
    #[error("weight for {0} must be a finite positive number, got {1}")]
    NonPositiveWeight(UeId, f64),
    #[error("invalid cell configuration: {0}")]
    InvalidCell(String),
}

/// Shortfall of `throughput_mbps` below `sla_mbps`, clamped at zero.
pub fn violation(sla_mbps: f64, throughput_mbps: f64) -> f64 {
    let shortfall = sla_mbps - throughput_mbps;
    if shortfall <= 0.0 || approx_eq(sla_mbps, throughput_mbps) {
        0.0
    } else {
        shortfall
    }
}

/// Smallest PRB count whose throughput at `eta` covers `sla_mbps`.
///
/// Quotients within [`REL_TOL`] of an integer are treated as exact, so
/// `10 / 0.4` yields 25 rather than 26.
pub fn required_prbs(sla_mbps: f64, eta_mbps_per_prb: f64) -> Result<u32, DomainError> {
    required_prbs_for(UeId(0), sla_mbps, eta_mbps_per_prb)
}

pub(crate) fn required_prbs_for(ue_id: UeId, sla_mbps: f64, eta: f64) -> Result<u32, DomainError> {
    if sla_mbps <= 0.0 {
        return Ok(0);
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(DomainError::UnsatisfiableDemand(ue_id));
    }
    let quotient = sla_mbps / eta;
    let nearest = quotient.round();
    let prbs = if approx_eq(quotient, nearest) {
        nearest
    } else {
        quotient.ceil()
    };
    Ok(prbs.min(f64::from(u32::MAX)) as u32)
}
