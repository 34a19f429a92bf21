//! SLA enforcement xApp: per-PRB rate estimation, contention detection, the
//! two enforcement policies and a PF no-op baseline.

mod control;
mod estimator;
mod soft;
mod strict;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use control::{DecisionRecord, SlaXapp, SlaXappConfig, XappCounters};
pub use estimator::{update_estimates, EstimatorState};
pub use soft::solve_soft;
pub use strict::{knapsack, solve_strict, KnapsackChoice};

use crate::domain::{required_prbs_for, violation, PolicySolution, UeAllocation, UeProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Soft,
    Strict,
    Baseline,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Soft, PolicyKind::Strict, PolicyKind::Baseline];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Soft => "soft",
            PolicyKind::Strict => "strict",
            PolicyKind::Baseline => "baseline",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown policy `{s}`, expected one of: soft, strict, baseline"))
    }
}

/// A UE competing for PRBs in one decision cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contender {
    pub profile: UeProfile,
    pub eta_mbps_per_prb: Option<f64>,
}

/// Sum of PRB demands of the contenders that have a usable estimate.
/// Contenders without one are left out (they are bootstrapping).
pub fn total_demand(contenders: &[Contender]) -> u64 {
    contenders
        .iter()
        .filter_map(|c| {
            let eta = c.eta_mbps_per_prb?;
            required_prbs_for(c.profile.ue_id, c.profile.gbr_mbps, eta).ok()
        })
        .map(u64::from)
        .sum()
}

pub fn detect_contention(contenders: &[Contender], capacity: u32) -> bool {
    total_demand(contenders) > u64::from(capacity)
}

/// Outcome of one decision cycle over the active UEs.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub contention: bool,
    /// PRBs to hold per UE; `None` for the baseline, which releases everything.
    pub solution: Option<PolicySolution>,
}

/// Pure decision rule: grant demands when they fit, otherwise run the policy.
pub fn decide(policy: PolicyKind, contenders: &[Contender], capacity: u32) -> Decision {
    let usable: Vec<Contender> = contenders
        .iter()
        .copied()
        .filter(|c| c.eta_mbps_per_prb.is_some_and(|e| e > 0.0))
        .collect();
    let contention = detect_contention(&usable, capacity);
    let solution = match (policy, contention) {
        (PolicyKind::Baseline, _) => None,
        (PolicyKind::Soft, true) => Some(solve_soft(&usable, capacity)),
        (PolicyKind::Strict, true) => Some(solve_strict(&usable, capacity)),
        (_, false) => Some(grant_demands(&usable)),
    };
    Decision { contention, solution }
}

fn grant_demands(contenders: &[Contender]) -> PolicySolution {
    let mut entries: Vec<UeAllocation> = contenders
        .iter()
        .filter_map(|c| {
            let eta = c.eta_mbps_per_prb?;
            let prbs = required_prbs_for(c.profile.ue_id, c.profile.gbr_mbps, eta).ok()?;
            Some(UeAllocation {
                ue_id: c.profile.ue_id,
                prbs,
                expected_violation_mbps: violation(c.profile.gbr_mbps, f64::from(prbs) * eta),
                selected: true,
            })
        })
        .collect();
    entries.sort_by_key(|e| e.ue_id);
    PolicySolution { entries }
}

#[cfg(test)]
mod tests;
