use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use super::*;
use crate::clock::ManualClock;
use crate::e2_codec::{decode_frame, encode_sm_payload, SmPayload, SpsEntry};
use crate::xapp_sdk::SdkError;

struct Fixture {
    ric: Ric,
    tx: Arc<MemoryTransport>,
    clock: ManualClock,
}

fn fixture() -> Fixture {
    let tx = Arc::new(MemoryTransport::new());
    let clock = ManualClock::new();
    let ric = Ric::new(RicConfig::default(), tx.clone(), Arc::new(clock.clone()));
    Fixture { ric, tx, clock }
}

fn send(f: &Fixture, session: SessionId, frame: E2Frame) -> bool {
    f.ric.on_bytes(session, &encode_frame(&frame).unwrap())
}

fn sent(f: &Fixture, session: SessionId) -> Vec<E2Frame> {
    f.tx.take(session).iter().map(|b| decode_frame(b).unwrap()).collect()
}

fn connect(f: &Fixture, gnb: u32) -> SessionId {
    let s = f.ric.on_connect();
    assert!(send(f, s, E2Frame::new(MsgType::SetupReq, 0).with_gnb_id(gnb)));
    let out = sent(f, s);
    assert_eq!(out.len(), 1);
    assert_eq!((out[0].msg_type, out[0].cause()), (MsgType::SetupResp, Some(Cause::Ok)));
    s
}

/// Subscribe through the SDK and have the agent accept with `agent_id`.
fn subscribe(f: &Fixture, xapp: &XappHandle, session: SessionId, gnb: u32, agent_id: u32) -> SubscriptionId {
    let id = xapp.e2ap_subscribe(GnbId(gnb), 100).unwrap();
    let req = sent(f, session).pop().unwrap();
    assert_eq!(req.msg_type, MsgType::SubReq);
    assert_eq!(req.report_period_ms(), Some(100));
    send(
        f,
        session,
        E2Frame::new(MsgType::SubResp, req.txid)
            .with_subscription_id(agent_id)
            .with_cause(Cause::Ok),
    );
    match xapp.get_queued_rx_msg() {
        Some(RxMsg::SubscriptionResponse { subscription_id, outcome, .. }) => {
            assert_eq!(subscription_id, id);
            assert_eq!(outcome, Ok(()));
        }
        other => panic!("expected subscription response, got {other:?}"),
    }
    id
}

fn sps(prbs: u32) -> SmPayload {
    SmPayload::SpsControl(vec![SpsEntry::fixed(1, prbs)])
}

#[test]
fn setup_registers_node() {
    let f = fixture();
    let xapp = f.ric.register_xapp();
    assert!(xapp.get_gnb_id_list().is_empty());
    let s = connect(&f, 7);
    assert_eq!(xapp.get_gnb_id_list(), vec![GnbId(7)]);
    let entry = f.ric.rnib_entry(GnbId(7)).unwrap();
    assert_eq!(entry.session, s);
    assert_eq!(entry.ran_function_ids, vec![1]);
}

#[test]
fn setup_without_valid_gnb_id_is_rejected() {
    let f = fixture();
    let s = f.ric.on_connect();
    send(&f, s, E2Frame::new(MsgType::SetupReq, 3).with_gnb_id(0));
    let out = sent(&f, s);
    assert_eq!((out[0].txid, out[0].cause()), (3, Some(Cause::Reject)));
    assert_eq!(f.ric.rnib_len(), 0);
}

#[test]
fn frame_before_setup_closes_session() {
    let f = fixture();
    let s = f.ric.on_connect();
    let open = send(&f, s, E2Frame::new(MsgType::Indication, 9).with_gnb_id(1).with_subscription_id(1).with_sm_payload(vec![1]));
    assert!(!open);
    let out = sent(&f, s);
    assert_eq!((out[0].msg_type, out[0].txid), (MsgType::Error, 9));
    assert!(f.tx.is_closed(s));
}

#[test]
fn malformed_bytes_close_session_and_mark_node_lost() {
    let f = fixture();
    let s = connect(&f, 2);
    assert!(!f.ric.on_bytes(s, &[0, 0, 0, 5, 0x42, 0, 0, 0, 0]));
    let out = sent(&f, s);
    assert_eq!((out[0].msg_type, out[0].cause()), (MsgType::Error, Some(Cause::Malformed)));
    assert!(f.tx.is_closed(s));
    assert_eq!(f.ric.rnib_entry(GnbId(2)).unwrap().state, ConnectionState::Lost);
    assert!(f.ric.gnb_id_list().is_empty());
    assert_eq!(f.ric.stats().malformed_frames.load(Ordering::Relaxed), 1);
}

#[test]
fn frames_split_across_reads_are_reassembled() {
    let f = fixture();
    let s = f.ric.on_connect();
    let bytes = encode_frame(&E2Frame::new(MsgType::SetupReq, 0).with_gnb_id(4)).unwrap();
    for b in &bytes {
        assert!(f.ric.on_bytes(s, std::slice::from_ref(b)));
    }
    assert_eq!(f.ric.gnb_id_list(), vec![GnbId(4)]);
}

#[test]
fn newer_setup_supersedes_older_session() {
    let f = fixture();
    let xapp = f.ric.register_xapp();
    let old = connect(&f, 5);
    subscribe(&f, &xapp, old, 5, 1);
    let new = connect(&f, 5);
    assert!(f.tx.is_closed(old));
    assert!(!f.tx.is_closed(new));
    assert_eq!(f.ric.rnib_entry(GnbId(5)).unwrap().session, new);
    assert!(matches!(xapp.get_queued_rx_msg(), Some(RxMsg::SubscriptionLost { .. })));
    assert_eq!(f.ric.rnib_len(), 1);
}

#[test]
fn indications_fan_out_to_every_subscriber() {
    let f = fixture();
    let a = f.ric.register_xapp();
    let b = f.ric.register_xapp();
    let s = connect(&f, 1);
    let sa = subscribe(&f, &a, s, 1, 11);
    let sb = subscribe(&f, &b, s, 1, 12);

    send(
        &f,
        s,
        E2Frame::new(MsgType::Indication, 0)
            .with_gnb_id(1)
            .with_subscription_id(11)
            .with_sm_payload(vec![1, 2, 3]),
    );
    match a.get_queued_rx_msg() {
        Some(RxMsg::Indication { subscription_id, payload, .. }) => {
            assert_eq!(subscription_id, sa);
            assert_eq!(payload, vec![1, 2, 3]);
        }
        other => panic!("{other:?}"),
    }
    assert!(b.get_queued_rx_msg().is_none());

    send(&f, s, E2Frame::new(MsgType::Indication, 1).with_gnb_id(1).with_subscription_id(12).with_sm_payload(vec![9]));
    assert!(matches!(b.get_queued_rx_msg(), Some(RxMsg::Indication { subscription_id, .. }) if subscription_id == sb));
    assert_eq!(f.ric.stats().indications_routed.load(Ordering::Relaxed), 2);
}

#[test]
fn refused_subscription_is_reported() {
    let f = fixture();
    let x = f.ric.register_xapp();
    let s = connect(&f, 1);
    let id = x.e2ap_subscribe(GnbId(1), 5).unwrap();
    let req = sent(&f, s).pop().unwrap();
    send(&f, s, E2Frame::new(MsgType::SubResp, req.txid).with_subscription_id(0).with_cause(Cause::Reject));
    assert_eq!(
        x.get_queued_rx_msg(),
        Some(RxMsg::SubscriptionResponse {
            subscription_id: id,
            gnb_id: GnbId(1),
            outcome: Err(Cause::Reject)
        })
    );
    assert_eq!(f.ric.subscription(id).unwrap().state, SubscriptionState::Failed(Cause::Reject));
}

#[test]
fn acks_correlate_in_any_order() {
    let f = fixture();
    let x = f.ric.register_xapp();
    let s = connect(&f, 1);
    let tokens: Vec<ControlToken> = (0..5).map(|i| x.e2ap_control_request(GnbId(1), &sps(i)).unwrap()).collect();
    let reqs = sent(&f, s);
    assert_eq!(reqs.len(), 5);
    // answer in a scrambled order; odd positions are rejected
    for &i in &[3usize, 0, 4, 1, 2] {
        let cause = if i % 2 == 1 { Cause::Reject } else { Cause::Ok };
        send(&f, s, E2Frame::new(MsgType::ControlAck, reqs[i].txid).with_cause(cause));
        match x.get_queued_rx_msg() {
            Some(RxMsg::ControlAck { token, outcome, .. }) => {
                assert_eq!(token, tokens[i]);
                let want = if i % 2 == 1 { ControlOutcome::Rejected(Cause::Reject) } else { ControlOutcome::Ok };
                assert_eq!(outcome, want);
            }
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn error_frame_fails_pending_control() {
    let f = fixture();
    let x = f.ric.register_xapp();
    let s = connect(&f, 1);
    let t = x.e2ap_control_request(GnbId(1), &sps(3)).unwrap();
    let req = sent(&f, s).pop().unwrap();
    send(&f, s, E2Frame::new(MsgType::Error, req.txid).with_cause(Cause::Reject));
    assert!(matches!(
        x.get_queued_rx_msg(),
        Some(RxMsg::ControlAck { token, outcome: ControlOutcome::Rejected(Cause::Reject), .. }) if token == t
    ));
}

#[test]
fn unanswered_control_times_out() {
    let f = fixture();
    let x = f.ric.register_xapp();
    connect(&f, 1);
    let t = x.e2ap_control_request(GnbId(1), &sps(3)).unwrap();
    f.clock.advance(Duration::from_millis(199));
    f.ric.poll_timeouts();
    assert!(x.get_queued_rx_msg().is_none());
    f.clock.advance(Duration::from_millis(1));
    f.ric.poll_timeouts();
    assert_eq!(
        x.get_queued_rx_msg(),
        Some(RxMsg::ControlAck {
            token: t,
            gnb_id: GnbId(1),
            outcome: ControlOutcome::Timeout
        })
    );
    assert_eq!(f.ric.stats().control_timeouts.load(Ordering::Relaxed), 1);
}

#[test]
fn disconnect_fails_pending_work() {
    let f = fixture();
    let x = f.ric.register_xapp();
    let s = connect(&f, 1);
    let sub = subscribe(&f, &x, s, 1, 1);
    let t = x.e2ap_control_request(GnbId(1), &sps(3)).unwrap();
    f.ric.on_disconnect(s);
    let mut got = Vec::new();
    while let Some(m) = x.get_queued_rx_msg() {
        got.push(m);
    }
    assert!(got.contains(&RxMsg::ControlAck {
        token: t,
        gnb_id: GnbId(1),
        outcome: ControlOutcome::SessionLost
    }));
    assert!(got.contains(&RxMsg::SubscriptionLost {
        subscription_id: sub,
        gnb_id: GnbId(1)
    }));

    // known but down: token plus an immediate SessionLost
    let t2 = x.e2ap_control_request(GnbId(1), &sps(3)).unwrap();
    assert!(matches!(
        x.get_queued_rx_msg(),
        Some(RxMsg::ControlAck { token, outcome: ControlOutcome::SessionLost, .. }) if token == t2
    ));
    assert_eq!(x.e2ap_subscribe(GnbId(1), 100), Err(SdkError::NodeNotConnected(GnbId(1))));
}

#[test]
fn sdk_rejects_unknown_nodes() {
    let f = fixture();
    let x = f.ric.register_xapp();
    assert_eq!(x.e2ap_control_request(GnbId(9), &sps(1)), Err(SdkError::UnknownNode(GnbId(9))));
    assert_eq!(x.e2ap_subscribe(GnbId(9), 100), Err(SdkError::UnknownNode(GnbId(9))));
}

#[test]
fn queue_polling_does_not_wait_for_the_core() {
    let f = fixture();
    let x = f.ric.register_xapp();
    connect(&f, 1);
    let guard = f.ric.lock_core_for_test();
    let (done_tx, done_rx) = mpsc::channel();
    let worker = thread::spawn(move || {
        let polled = x.get_queued_rx_msg();
        let nodes = x.get_gnb_id_list();
        done_tx.send((polled, nodes)).unwrap();
    });
    let (polled, nodes) = done_rx
        .recv_timeout(Duration::from_secs(2))
        .expect("SDK blocked behind the controller core");
    assert!(polled.is_none());
    assert_eq!(nodes, vec![GnbId(1)]);
    drop(guard);
    worker.join().unwrap();
}

#[test]
fn unencodable_payload_is_refused_by_sdk() {
    let f = fixture();
    let x = f.ric.register_xapp();
    connect(&f, 1);
    let huge = SmPayload::SpsControl((0..=u16::MAX).map(|u| SpsEntry::fixed(u, 1)).collect());
    assert!(encode_sm_payload(&huge).is_err());
    assert!(matches!(x.e2ap_control_request(GnbId(1), &huge), Err(SdkError::BadPayload(_))));
}
