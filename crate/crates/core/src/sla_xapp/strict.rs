//! Strict policy: pick the maximum-weight set of UEs whose full PRB demands
//! fit the cell, then share what is left among the rest.

use crate::domain::{
    approx_eq, required_prbs_for, violation, PolicySolution, UeAllocation, UeId,
};

use super::Contender;

/// Winning subset of a 0/1 knapsack instance.
#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackChoice {
    /// Indices into the item list, ascending.
    pub selected: Vec<usize>,
    pub weight: f64,
    pub cost: u32,
}

#[derive(Debug, Clone)]
struct Cell {
    weight: f64,
    ids: Vec<UeId>,
    picks: Vec<usize>,
}

/// `a` beats `b`: heavier, or equally heavy with a lexicographically smaller id set.
fn beats(a_weight: f64, a_ids: &[UeId], b: &Cell) -> bool {
    if approx_eq(a_weight, b.weight) {
        a_ids < b.ids.as_slice()
    } else {
        a_weight > b.weight
    }
}

/// Exact 0/1 knapsack over integer costs.
///
/// Among maximum-weight subsets the one with the smallest total cost wins,
/// then the lexicographically smallest id list. `items` are
/// `(ue_id, cost, weight)` and must be sorted by `ue_id`.
pub fn knapsack(items: &[(UeId, u32, f64)], capacity: u32) -> KnapsackChoice {
    debug_assert!(items.windows(2).all(|w| w[0].0 < w[1].0));
    let cap = capacity as usize;
    // best[c]: best subset of the items seen so far with total cost exactly c
    let mut best: Vec<Option<Cell>> = vec![None; cap + 1];
    best[0] = Some(Cell {
        weight: 0.0,
        ids: Vec::new(),
        picks: Vec::new(),
    });

    for (i, &(id, cost, weight)) in items.iter().enumerate() {
        let cost = cost as usize;
        if cost > cap {
            continue;
        }
        for c in (cost..=cap).rev() {
            let Some(prev) = &best[c - cost] else { continue };
            let w = prev.weight + weight;
            let mut ids = prev.ids.clone();
            ids.push(id);
            let better = match &best[c] {
                None => true,
                Some(cur) => beats(w, &ids, cur),
            };
            if better {
                let mut picks = prev.picks.clone();
                picks.push(i);
                best[c] = Some(Cell {
                    weight: w,
                    ids,
                    picks,
                });
            }
        }
    }

    // ascending cost: a later cell only wins with strictly more weight
    let mut choice: Option<(usize, &Cell)> = None;
    for (c, cell) in best.iter().enumerate() {
        let Some(cell) = cell else { continue };
        let take = match choice {
            None => true,
            Some((_, cur)) => !approx_eq(cell.weight, cur.weight) && cell.weight > cur.weight,
        };
        if take {
            choice = Some((c, cell));
        }
    }
    let (cost, cell) = choice.expect("empty subset is always feasible");
    KnapsackChoice {
        selected: cell.picks.clone(),
        weight: cell.weight,
        cost: cost as u32,
    }
}

pub fn solve_strict(contenders: &[Contender], capacity: u32) -> PolicySolution {
    let mut sorted: Vec<&Contender> = contenders.iter().collect();
    sorted.sort_by_key(|c| c.profile.ue_id);

    // UEs without a usable rate cannot be costed; they get nothing
    let mut items = Vec::new();
    let mut costed = Vec::new();
    for c in &sorted {
        let eta = c.eta_mbps_per_prb.unwrap_or(0.0);
        if let Ok(cost) = required_prbs_for(c.profile.ue_id, c.profile.gbr_mbps, eta) {
            if eta > 0.0 || cost == 0 {
                items.push((c.profile.ue_id, cost, c.profile.weight));
                costed.push(*c);
            }
        }
    }
    let choice = knapsack(&items, capacity);

    let mut prbs: Vec<u32> = vec![0; costed.len()];
    let mut selected = vec![false; costed.len()];
    for &i in &choice.selected {
        selected[i] = true;
        prbs[i] = items[i].1;
    }
    let leftover = capacity - choice.cost;
    let others: Vec<usize> = (0..costed.len())
        .filter(|&i| !selected[i] && costed[i].eta_mbps_per_prb.unwrap_or(0.0) > 0.0)
        .collect();
    if !others.is_empty() {
        let share = leftover / others.len() as u32;
        let extra = (leftover as usize) % others.len();
        for (rank, &i) in others.iter().enumerate() {
            prbs[i] = share + u32::from(rank < extra);
        }
    }

    let mut entries: Vec<UeAllocation> = sorted
        .iter()
        .map(|c| {
            let pos = costed.iter().position(|k| k.profile.ue_id == c.profile.ue_id);
            let (p, x) = pos.map_or((0, false), |i| (prbs[i], selected[i]));
            let eta = c.eta_mbps_per_prb.unwrap_or(0.0);
            UeAllocation {
                ue_id: c.profile.ue_id,
                prbs: p,
                expected_violation_mbps: violation(c.profile.gbr_mbps, f64::from(p) * eta),
                selected: x,
            }
        })
        .collect();
    entries.sort_by_key(|e| e.ue_id);
    PolicySolution { entries }
}
