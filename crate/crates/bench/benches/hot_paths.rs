use criterion::{black_box, criterion_group, criterion_main, Criterion};

use slalab_core::e2_codec::{decode_frame, encode_frame, encode_sm_payload, E2Frame, KpmRecord, KpmReport, MsgType, SmPayload};
use slalab_core::mac_sim::{ChannelModel, MacSimulator, SimConfig, TrafficSchedule};
use slalab_core::sla_xapp::{solve_soft, solve_strict, Contender};
use slalab_core::{CellConfig, UeId, UeProfile};

fn contenders(n: u16) -> Vec<Contender> {
    (1..=n)
        .map(|id| Contender {
            profile: UeProfile::new(id, 2.0 + f64::from(id % 7), 1.0 + f64::from(id % 3)).unwrap(),
            eta_mbps_per_prb: Some(0.2 + f64::from(id % 5) * 0.1),
        })
        .collect()
}

fn solvers(c: &mut Criterion) {
    let three = contenders(3);
    let twelve = contenders(12);
    c.bench_function("soft/3 ues", |b| b.iter(|| solve_soft(black_box(&three), 65)));
    c.bench_function("soft/12 ues", |b| b.iter(|| solve_soft(black_box(&twelve), 106)));
    c.bench_function("strict/3 ues", |b| b.iter(|| solve_strict(black_box(&three), 65)));
    c.bench_function("strict/12 ues", |b| b.iter(|| solve_strict(black_box(&twelve), 106)));
}

fn codec(c: &mut Criterion) {
    let report = SmPayload::KpmReport(KpmReport {
        period_ms: 100,
        records: (1..=16)
            .map(|id| KpmRecord {
                ue_id: UeId(id),
                prb_slots: 4000,
                tbs_bits: 800_000,
            })
            .collect(),
    });
    let frame = E2Frame::new(MsgType::Indication, 9)
        .with_gnb_id(1)
        .with_subscription_id(1)
        .with_sm_payload(encode_sm_payload(&report).unwrap());
    let bytes = encode_frame(&frame).unwrap();
    c.bench_function("codec/encode indication", |b| b.iter(|| encode_frame(black_box(&frame)).unwrap()));
    c.bench_function("codec/decode indication", |b| b.iter(|| decode_frame(black_box(&bytes)).unwrap()));
}

fn slot_step(c: &mut Criterion) {
    let mut traffic = TrafficSchedule::default();
    for id in 1..=8 {
        traffic = traffic.full_buffer(UeId(id), 0.0, 1e9);
    }
    let mut sim = MacSimulator::new(SimConfig {
        cell: CellConfig::default(),
        channel: ChannelModel::constant((1..=8).map(|id| (UeId(id), 100 + u32::from(id) * 20))),
        traffic,
    })
    .unwrap();
    let _outbox = sim.take_outbox();
    c.bench_function("mac/step 8 ues", |b| b.iter(|| sim.step_tti()));
}

criterion_group!(benches, solvers, codec, slot_step);
criterion_main!(benches);
