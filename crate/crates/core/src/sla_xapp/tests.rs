use std::sync::Arc;
use std::time::Duration;

use proptest::prelude::*;

use super::*;
use crate::clock::ManualClock;
use crate::domain::{approx_eq, CellConfig, GnbId, UeId, UeProfile};
use crate::e2_codec::{decode_frame, decode_sm_payload, encode_frame, encode_sm_payload};
use crate::e2_codec::{Cause, E2Frame, KpmRecord, KpmReport, MsgType, SmPayload, SpsEntry};
use crate::ric::{MemoryTransport, Ric, RicConfig, SessionId};

fn ue(id: u16, gbr: f64) -> UeProfile {
    UeProfile::new(id, gbr, 1.0).unwrap()
}

fn contenders(slas: &[f64], eta: f64) -> Vec<Contender> {
    slas.iter()
        .enumerate()
        .map(|(i, &s)| Contender {
            profile: ue(i as u16 + 1, s),
            eta_mbps_per_prb: Some(eta),
        })
        .collect()
}

fn prbs(sol: &PolicySolution) -> Vec<u32> {
    sol.entries.iter().map(|e| e.prbs).collect()
}

fn violations(sol: &PolicySolution) -> Vec<f64> {
    sol.entries.iter().map(|e| e.expected_violation_mbps).collect()
}

/// Best total served rate over every integer allocation with sum <= cap.
fn exhaustive_best_served(cs: &[Contender], cap: u32) -> f64 {
    fn go(cs: &[Contender], left: u32) -> f64 {
        let Some((c, rest)) = cs.split_first() else { return 0.0 };
        let eta = c.eta_mbps_per_prb.unwrap_or(0.0);
        (0..=left)
            .map(|p| (f64::from(p) * eta).min(c.profile.gbr_mbps) + go(rest, left - p))
            .fold(f64::MIN, f64::max)
    }
    go(cs, cap)
}

/// Max weight over all subsets whose summed cost fits.
fn subset_best(items: &[(UeId, u32, f64)], cap: u32) -> f64 {
    (0u32..1 << items.len())
        .filter_map(|mask| {
            let (mut c, mut w) = (0u32, 0.0);
            for (i, it) in items.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    c += it.1;
                    w += it.2;
                }
            }
            (c <= cap).then_some(w)
        })
        .fold(0.0, f64::max)
}

#[test]
fn policy_names_parse() {
    assert_eq!("strict".parse::<PolicyKind>(), Ok(PolicyKind::Strict));
    let err = "fair".parse::<PolicyKind>().unwrap_err();
    assert!(err.contains("soft, strict, baseline"), "{err}");
    assert_eq!(serde_json::to_string(&PolicyKind::Baseline).unwrap(), "\"baseline\"");
}

#[test]
fn contention_examples() {
    assert!(!detect_contention(&contenders(&[15.0, 10.0], 0.4)[1..], 65));
    assert!(!detect_contention(&contenders(&[15.0, 10.0], 0.4), 65));
    assert!(detect_contention(&contenders(&[15.0, 10.0, 5.0], 0.4), 65));
    assert!(!detect_contention(&[], 65));
    let mut boot = contenders(&[15.0, 10.0, 5.0], 0.4);
    boot[0].eta_mbps_per_prb = None;
    assert!(!detect_contention(&boot, 65));
}

#[test]
fn soft_three_ue_example() {
    let sol = solve_soft(&contenders(&[15.0, 10.0, 5.0], 0.4), 65);
    assert_eq!(prbs(&sol), vec![37, 25, 3]);
    let v = violations(&sol);
    for (got, want) in v.iter().zip([0.2, 0.0, 3.8]) {
        assert!(approx_eq(*got, want), "{v:?}");
    }
    assert!(approx_eq(sol.total_violation_mbps(), 4.0));
}

#[test]
fn soft_without_contention_meets_everything() {
    let sol = solve_soft(&contenders(&[15.0, 10.0, 5.0], 0.4), 80);
    assert_eq!(prbs(&sol), vec![38, 25, 13]);
    assert_eq!(sol.total_violation_mbps(), 0.0);
}

#[test]
fn soft_singleton_capacity_bound() {
    let cs = vec![Contender {
        profile: ue(1, 5.0),
        eta_mbps_per_prb: Some(0.5),
    }];
    let sol = solve_soft(&cs, 3);
    assert_eq!(prbs(&sol), vec![3]);
    assert!(approx_eq(sol.total_violation_mbps(), 3.5));
}

#[test]
fn soft_zero_rate_ue_gets_nothing() {
    let mut cs = contenders(&[5.0, 5.0], 0.5);
    cs[1].eta_mbps_per_prb = Some(0.0);
    let sol = solve_soft(&cs, 30);
    assert_eq!(prbs(&sol), vec![10, 0]);
    assert!(approx_eq(violations(&sol)[1], 5.0));
}

#[test]
fn strict_three_ue_example() {
    let sol = solve_strict(&contenders(&[15.0, 10.0, 5.0], 0.4), 65);
    assert_eq!(prbs(&sol), vec![27, 25, 13]);
    assert_eq!(sol.selected_ids(), vec![UeId(2), UeId(3)]);
    let v = violations(&sol);
    assert!(approx_eq(v[0], 4.2) && v[1] == 0.0 && v[2] == 0.0, "{v:?}");
}

#[test]
fn strict_weights_change_the_pick() {
    let mut cs = contenders(&[15.0, 10.0, 5.0], 0.4);
    cs[0].profile.weight = 10.0;
    let sol = solve_strict(&cs, 65);
    assert_eq!(sol.selected_ids(), vec![UeId(1), UeId(3)]);
    assert_eq!(prbs(&sol), vec![38, 14, 13]);
    let items: Vec<_> = cs.iter().map(|c| (c.profile.ue_id, [38, 25, 13][c.profile.ue_id.0 as usize - 1], c.profile.weight)).collect();
    assert_eq!(knapsack(&items, 65).cost, 51);
}

#[test]
fn strict_zero_capacity_selects_nothing() {
    let sol = solve_strict(&contenders(&[15.0, 10.0, 5.0], 0.4), 0);
    assert!(sol.selected_ids().is_empty());
    assert_eq!(sol.total_prbs(), 0);
}

#[test]
fn strict_nothing_fits_shares_everything() {
    let sol = solve_strict(&contenders(&[15.0, 10.0, 5.0], 0.4), 10);
    assert!(sol.selected_ids().is_empty());
    assert_eq!(prbs(&sol), vec![4, 3, 3]);
}

#[test]
fn knapsack_tie_breaks() {
    // equal weight 2 for {1,2}:10, {1,3}:8, {2,3}:8 -> cheapest, then smallest ids
    let items = vec![(UeId(1), 4, 1.0), (UeId(2), 6, 1.0), (UeId(3), 4, 1.0)];
    let pick = knapsack(&items, 10);
    assert_eq!(pick.selected, vec![0, 2]);
    assert_eq!(pick.cost, 8);
}

#[test]
fn baseline_holds_nothing() {
    let d = decide(PolicyKind::Baseline, &contenders(&[15.0, 10.0, 5.0], 0.4), 65);
    assert!(d.contention);
    assert!(d.solution.is_none());
}

#[test]
fn no_contention_grants_demands() {
    for policy in [PolicyKind::Soft, PolicyKind::Strict] {
        let d = decide(policy, &contenders(&[10.0, 5.0], 0.4), 65);
        assert!(!d.contention);
        assert_eq!(prbs(d.solution.as_ref().unwrap()), vec![25, 13]);
    }
}

fn instance() -> impl Strategy<Value = (Vec<Contender>, u32)> {
    (prop::collection::vec((1u32..=20, 1u32..=10, 1u32..=5), 1..=5), 0u32..=40).prop_map(|(raw, cap)| {
        let cs = raw
            .into_iter()
            .enumerate()
            .map(|(i, (sla, eta, w))| Contender {
                profile: UeProfile::new(i as u16 + 1, f64::from(sla), f64::from(w)).unwrap(),
                eta_mbps_per_prb: Some(f64::from(eta) / 10.0),
            })
            .collect();
        (cs, cap)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn soft_matches_exhaustive_search((cs, cap) in instance()) {
        let sol = solve_soft(&cs, cap);
        let total_sla: f64 = cs.iter().map(|c| c.profile.gbr_mbps).sum();
        let best = total_sla - exhaustive_best_served(&cs, cap);
        prop_assert!(sol.total_prbs() <= u64::from(cap));
        prop_assert!((sol.total_violation_mbps() - best).abs() <= 1e-9 * total_sla.max(1.0));
    }

    #[test]
    fn soft_respects_lower_bound((cs, cap) in instance()) {
        let sol = solve_soft(&cs, cap);
        let total_sla: f64 = cs.iter().map(|c| c.profile.gbr_mbps).sum();
        let max_eta = cs.iter().filter_map(|c| c.eta_mbps_per_prb).fold(0.0, f64::max);
        prop_assert!(sol.total_violation_mbps() + 1e-9 >= (total_sla - f64::from(cap) * max_eta).max(0.0));
    }

    #[test]
    fn strict_matches_subset_enumeration((cs, cap) in instance()) {
        let items: Vec<_> = cs.iter().map(|c| {
            let eta = c.eta_mbps_per_prb.unwrap();
            (c.profile.ue_id, crate::domain::required_prbs(c.profile.gbr_mbps, eta).unwrap(), c.profile.weight)
        }).collect();
        let pick = knapsack(&items, cap);
        prop_assert!(pick.cost <= cap);
        prop_assert!((pick.weight - subset_best(&items, cap)).abs() < 1e-9);
        let sol = solve_strict(&cs, cap);
        prop_assert!(sol.total_prbs() <= u64::from(cap));
    }

    #[test]
    fn soft_never_worse_than_strict((cs, cap) in instance()) {
        let soft = solve_soft(&cs, cap).total_violation_mbps();
        let strict = solve_strict(&cs, cap).total_violation_mbps();
        prop_assert!(soft <= strict + 1e-9);
    }

    #[test]
    fn strict_pick_survives_weight_scaling((cs, cap) in instance(), k in 1u32..50) {
        let scaled: Vec<Contender> = cs.iter().map(|c| {
            let mut c = *c;
            c.profile.weight *= f64::from(k) / 7.0;
            c
        }).collect();
        prop_assert_eq!(solve_strict(&cs, cap).selected_ids(), solve_strict(&scaled, cap).selected_ids());
    }
}

// ---- control loop against a hand-driven agent ----

struct Loop {
    ric: Ric,
    tx: Arc<MemoryTransport>,
    session: SessionId,
    xapp: SlaXapp,
    agent_txid: u16,
    last_ctl_txid: u16,
}

impl Loop {
    fn new(policy: PolicyKind) -> Self {
        let tx = Arc::new(MemoryTransport::new());
        let clock = ManualClock::new();
        let ric = Ric::new(RicConfig::default(), tx.clone(), Arc::new(clock));
        let session = ric.on_connect();
        ric.on_bytes(session, &encode_frame(&E2Frame::new(MsgType::SetupReq, 0).with_gnb_id(1)).unwrap());
        tx.take(session);
        let handle = ric.register_xapp();
        let mut xapp = SlaXapp::new(
            SlaXappConfig {
                gnb_id: GnbId(1),
                policy,
                profiles: vec![ue(1, 15.0), ue(2, 10.0), ue(3, 5.0)],
                cell: CellConfig::default(),
            },
            handle,
        );
        xapp.subscribe().unwrap();
        let req = decode_frame(&tx.take(session)[0]).unwrap();
        ric.on_bytes(
            session,
            &encode_frame(&E2Frame::new(MsgType::SubResp, req.txid).with_subscription_id(1).with_cause(Cause::Ok)).unwrap(),
        );
        xapp.control_step(Duration::ZERO);
        assert!(xapp.is_subscribed());
        Self { ric, tx, session, xapp, agent_txid: 100, last_ctl_txid: 0 }
    }

    /// Deliver a window where `served` UEs held `prbs` at 200 bits/PRB/slot.
    fn window(&mut self, served: &[(u16, u32)], now_ms: u64) -> Option<Vec<SpsEntry>> {
        let records = (1..=3)
            .map(|u| {
                let p = served.iter().find(|s| s.0 == u).map_or(0, |s| s.1);
                KpmRecord { ue_id: UeId(u), prb_slots: p * 200, tbs_bits: u64::from(p) * 200 * 200 }
            })
            .collect();
        let payload = encode_sm_payload(&SmPayload::KpmReport(KpmReport { period_ms: 100, records })).unwrap();
        self.agent_txid += 1;
        let ind = E2Frame::new(MsgType::Indication, self.agent_txid)
            .with_gnb_id(1)
            .with_subscription_id(1)
            .with_sm_payload(payload);
        self.ric.on_bytes(self.session, &encode_frame(&ind).unwrap());
        self.xapp.control_step(Duration::from_millis(now_ms))?;
        let frames = self.tx.take(self.session);
        let ctl = decode_frame(frames.last().unwrap()).unwrap();
        self.last_ctl_txid = ctl.txid;
        match decode_sm_payload(ctl.sm_payload().unwrap()).unwrap() {
            SmPayload::SpsControl(e) => Some(e),
            other => panic!("{other:?}"),
        }
    }

    fn ack_last(&mut self, ok: bool) {
        let cause = if ok { Cause::Ok } else { Cause::Reject };
        let txid = self.last_ctl_txid;
        self.ric
            .on_bytes(self.session, &encode_frame(&E2Frame::new(MsgType::ControlAck, txid).with_cause(cause)).unwrap());
    }
}

fn fixed(entries: &[SpsEntry], ue: u16) -> Option<u32> {
    entries.iter().find(|e| e.ue_id == UeId(ue)).and_then(|e| match e.action {
        crate::e2_codec::SpsAction::Fixed(p) => Some(p),
        crate::e2_codec::SpsAction::Release => None,
    })
}

#[test]
fn control_loop_follows_the_three_phases() {
    let mut l = Loop::new(PolicyKind::Soft);
    // UE3 alone, dynamically scheduled over the whole cell
    let c = l.window(&[(3, 65)], 100).expect("first grant");
    assert_eq!(fixed(&c, 3), Some(13));
    assert_eq!(fixed(&c, 1), None);
    // identical telemetry under the grant: nothing new
    assert!(l.window(&[(3, 13)], 200).is_none());
    // UE2 appears
    let c = l.window(&[(3, 13), (2, 52)], 300).unwrap();
    assert_eq!((fixed(&c, 2), fixed(&c, 3)), (Some(25), Some(13)));
    // UE1 appears: contention
    let c = l.window(&[(3, 13), (2, 25), (1, 27)], 400).unwrap();
    assert_eq!((fixed(&c, 1), fixed(&c, 2), fixed(&c, 3)), (Some(37), Some(25), Some(3)));
    let last = l.xapp.decisions().last().unwrap();
    assert!(last.contention);
    assert_eq!(last.window, 4);
    assert!(l.window(&[(3, 3), (2, 25), (1, 37)], 500).is_none());
}

#[test]
fn inactive_ue_is_released() {
    let mut l = Loop::new(PolicyKind::Strict);
    l.window(&[(3, 65)], 100).unwrap();
    let c = l.window(&[], 200).unwrap();
    assert!(c.iter().all(|e| e.action == crate::e2_codec::SpsAction::Release));
}

#[test]
fn baseline_only_releases() {
    let mut l = Loop::new(PolicyKind::Baseline);
    let c = l.window(&[(1, 22), (2, 22), (3, 21)], 100).unwrap();
    assert_eq!(c.len(), 3);
    assert!(c.iter().all(|e| e.action == crate::e2_codec::SpsAction::Release));
    assert!(l.window(&[(1, 22), (2, 22), (3, 21)], 200).is_none());
}

#[test]
fn failed_ack_triggers_reissue() {
    let mut l = Loop::new(PolicyKind::Soft);
    l.window(&[(3, 65)], 100).unwrap();
    l.ack_last(false);
    let again = l.window(&[(3, 65)], 200).expect("reissued after failure");
    assert_eq!(fixed(&again, 3), Some(13));
    l.ack_last(true);
    assert!(l.window(&[(3, 13)], 300).is_none());
    assert_eq!(l.xapp.counters().acks_failed, 1);
    assert_eq!(l.xapp.counters().acks_ok, 1);
}

#[test]
fn silence_is_flagged_stale() {
    let mut l = Loop::new(PolicyKind::Soft);
    l.window(&[(3, 65)], 100).unwrap();
    assert!(l.xapp.control_step(Duration::from_millis(400)).is_none());
    assert_eq!(l.xapp.counters().stale_cycles, 0);
    assert!(l.xapp.control_step(Duration::from_millis(401)).is_none());
    assert_eq!(l.xapp.counters().stale_cycles, 1);
}
