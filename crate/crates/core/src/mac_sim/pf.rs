//! Proportional-fair PRB scheduling for one slot.

use crate::domain::{approx_eq, UeId};

/// EWMA horizon of the PF average, in slots.
pub const PF_HORIZON_SLOTS: f64 = 100.0;
/// Floor applied to the PF average, bits/s.
pub const PF_EWMA_FLOOR_BPS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfCandidate {
    pub ue_id: UeId,
    /// Rate one PRB would deliver this slot, bits/s.
    pub inst_rate_bps: f64,
    /// Long-run average served rate, bits/s.
    pub ewma_bps: f64,
}

/// Grant `free_prbs` to the candidates with the highest `inst_rate / ewma`.
///
/// Ties within tolerance split the PRBs as evenly as integers allow; the
/// remainder goes to winners in rotating order `(slot_index + ue_id) mod n`.
/// Returns one grant per candidate, in input order.
pub fn pf_schedule(candidates: &[PfCandidate], free_prbs: u32, slot_index: u64) -> Vec<u32> {
    let mut grants = vec![0u32; candidates.len()];
    if candidates.is_empty() || free_prbs == 0 {
        return grants;
    }
    let metric = |c: &PfCandidate| c.inst_rate_bps / c.ewma_bps.max(PF_EWMA_FLOOR_BPS);
    let best = candidates.iter().map(metric).fold(f64::NEG_INFINITY, f64::max);

    let n = candidates.len() as u64;
    let mut winners: Vec<usize> = (0..candidates.len())
        .filter(|&i| approx_eq(metric(&candidates[i]), best))
        .collect();
    winners.sort_by_key(|&i| {
        let id = candidates[i].ue_id.0;
        ((slot_index + u64::from(id)) % n, id)
    });

    let share = free_prbs / winners.len() as u32;
    let extra = free_prbs as usize % winners.len();
    for (rank, &i) in winners.iter().enumerate() {
        grants[i] = share + u32::from(rank < extra);
    }
    grants
}

/// One EWMA step with horizon [`PF_HORIZON_SLOTS`], floored at [`PF_EWMA_FLOOR_BPS`].
pub fn update_ewma(ewma_bps: f64, served_bps: f64) -> f64 {
    let alpha = 1.0 / PF_HORIZON_SLOTS;
    ((1.0 - alpha) * ewma_bps + alpha * served_bps).max(PF_EWMA_FLOOR_BPS)
}
