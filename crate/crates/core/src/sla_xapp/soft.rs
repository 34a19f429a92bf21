//! Soft policy: minimize the summed SLA violation under the PRB budget.
//!
//! Each UE's served throughput `min(p·η, SLA)` is concave and separable in
//! its PRB count, so granting PRBs one at a time to the largest marginal gain
//! `min(η, residual)` reaches the integer optimum.

use crate::domain::{approx_eq, violation, PolicySolution, UeAllocation, UeProfile};

use super::Contender;

pub fn solve_soft(contenders: &[Contender], capacity: u32) -> PolicySolution {
    struct Slot {
        profile: UeProfile,
        eta: f64,
        prbs: u32,
        residual: f64,
    }

    let mut slots: Vec<Slot> = contenders
        .iter()
        .map(|c| Slot {
            profile: c.profile,
            eta: c.eta_mbps_per_prb.filter(|e| *e > 0.0).unwrap_or(0.0),
            prbs: 0,
            residual: c.profile.gbr_mbps,
        })
        .collect();

    let gain = |s: &Slot| s.eta.min(s.residual);
    for _ in 0..capacity {
        let best = slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.eta > 0.0 && s.residual > 0.0)
            .max_by(|(_, a), (_, b)| {
                let (ga, gb) = (gain(a), gain(b));
                if !approx_eq(ga, gb) {
                    return ga.total_cmp(&gb);
                }
                // max_by keeps the last maximum, so "better" must compare Greater
                a.eta
                    .total_cmp(&b.eta)
                    .then(a.profile.gbr_mbps.total_cmp(&b.profile.gbr_mbps))
                    .then(b.profile.ue_id.cmp(&a.profile.ue_id))
            })
            .map(|(i, _)| i);
        let Some(i) = best else { break };
        let s = &mut slots[i];
        s.prbs += 1;
        let served = f64::from(s.prbs) * s.eta;
        s.residual = if approx_eq(served, s.profile.gbr_mbps) {
            0.0
        } else {
            (s.profile.gbr_mbps - served).max(0.0)
        };
    }

    let mut entries: Vec<UeAllocation> = slots
        .iter()
        .map(|s| UeAllocation {
            ue_id: s.profile.ue_id,
            prbs: s.prbs,
            expected_violation_mbps: violation(s.profile.gbr_mbps, f64::from(s.prbs) * s.eta),
            selected: true,
        })
        .collect();
    entries.sort_by(|a, b| a.ue_id.cmp(&b.ue_id));
    PolicySolution { entries }
}
