//! RC-lite service-model payloads.
//!
//! ```text
//! KPM_REPORT : 0x01 | period_ms u32 | num_ues u16 | (ue_id u16, prb_slots u32, tbs_bits u64)*
//! SPS_CONTROL: 0x02 | num u16 | (ue_id u16, fixed_prbs u32)*      fixed_prbs 0xFFFFFFFF = release
//! ```

use super::CodecError;
use crate::domain::UeId;

/// Wire value of a release entry.
pub const SPS_RELEASE: u32 = 0xFFFF_FFFF;

const KPM_RECORD_LEN: usize = 2 + 4 + 8;
const SPS_ENTRY_LEN: usize = 2 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum SmType {
    KpmReport = 0x01,
    SpsControl = 0x02,
}

/// Per-UE telemetry of one report window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KpmRecord {
    pub ue_id: UeId,
    /// Sum over the window's slots of PRBs granted.
    pub prb_slots: u32,
    pub tbs_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KpmReport {
    pub period_ms: u32,
    pub records: Vec<KpmRecord>,
}

impl KpmReport {
    pub fn record(&self, ue_id: UeId) -> Option<&KpmRecord> {
        self.records.iter().find(|r| r.ue_id == ue_id)
    }

    /// Sum `other` into `self`, record by record; used to build longer windows.
    pub fn merge(&mut self, other: &KpmReport) {
        self.period_ms = self.period_ms.saturating_add(other.period_ms);
        for rec in &other.records {
            match self.records.iter_mut().find(|r| r.ue_id == rec.ue_id) {
                Some(mine) => {
                    mine.prb_slots = mine.prb_slots.saturating_add(rec.prb_slots);
                    mine.tbs_bits = mine.tbs_bits.saturating_add(rec.tbs_bits);
                }
                None => self.records.push(*rec),
            }
        }
        self.records.sort_by_key(|r| r.ue_id);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpsAction {
    Fixed(u32),
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpsEntry {
    pub ue_id: UeId,
    pub action: SpsAction,
}

impl SpsEntry {
    pub fn fixed(ue_id: u16, prbs: u32) -> Self {
        Self {
            ue_id: UeId(ue_id),
            action: SpsAction::Fixed(prbs),
        }
    }

    pub fn release(ue_id: u16) -> Self {
        Self {
            ue_id: UeId(ue_id),
            action: SpsAction::Release,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SmPayload {
    KpmReport(KpmReport),
    SpsControl(Vec<SpsEntry>),
}

impl SmPayload {
    pub fn sm_type(&self) -> SmType {
        match self {
            SmPayload::KpmReport(_) => SmType::KpmReport,
            SmPayload::SpsControl(_) => SmType::SpsControl,
        }
    }
}

pub fn encode_sm_payload(payload: &SmPayload) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    out.push(payload.sm_type() as u8);
    match payload {
        SmPayload::KpmReport(report) => {
            let n = u16::try_from(report.records.len())
                .map_err(|_| CodecError::TooManyRecords(report.records.len()))?;
            out.reserve(6 + report.records.len() * KPM_RECORD_LEN);
            out.extend_from_slice(&report.period_ms.to_be_bytes());
            out.extend_from_slice(&n.to_be_bytes());
            for rec in &report.records {
                out.extend_from_slice(&rec.ue_id.0.to_be_bytes());
                out.extend_from_slice(&rec.prb_slots.to_be_bytes());
                out.extend_from_slice(&rec.tbs_bits.to_be_bytes());
            }
        }
        SmPayload::SpsControl(entries) => {
            let n = u16::try_from(entries.len())
                .map_err(|_| CodecError::TooManyRecords(entries.len()))?;
            out.extend_from_slice(&n.to_be_bytes());
            for e in entries {
                let value = match e.action {
                    SpsAction::Fixed(SPS_RELEASE) => return Err(CodecError::ReservedValue),
                    SpsAction::Fixed(p) => p,
                    SpsAction::Release => SPS_RELEASE,
                };
                out.extend_from_slice(&e.ue_id.0.to_be_bytes());
                out.extend_from_slice(&value.to_be_bytes());
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let end = self.pos + N;
        let slice = self.buf.get(self.pos..end).ok_or(CodecError::Truncated {
            needed: end,
            available: self.buf.len(),
        })?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length checked"))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Body must hold exactly `count` records of `width` bytes.
    fn expect_records(&self, count: usize, width: usize) -> Result<(), CodecError> {
        let needed = count * width;
        let have = self.remaining();
        if have < needed {
            Err(CodecError::Truncated {
                needed: self.pos + needed,
                available: self.buf.len(),
            })
        } else if have > needed {
            Err(CodecError::CountMismatch {
                declared: count,
                actual_bytes: have,
            })
        } else {
            Ok(())
        }
    }
}

pub fn decode_sm_payload(buf: &[u8]) -> Result<SmPayload, CodecError> {
    let mut cur = Cursor { buf, pos: 0 };
    let [kind] = cur.take::<1>()?;
    match kind {
        0x01 => {
            let period_ms = u32::from_be_bytes(cur.take()?);
            let n = usize::from(u16::from_be_bytes(cur.take()?));
            cur.expect_records(n, KPM_RECORD_LEN)?;
            let mut records = Vec::with_capacity(n);
            for _ in 0..n {
                records.push(KpmRecord {
                    ue_id: UeId(u16::from_be_bytes(cur.take()?)),
                    prb_slots: u32::from_be_bytes(cur.take()?),
                    tbs_bits: u64::from_be_bytes(cur.take()?),
                });
            }
            Ok(SmPayload::KpmReport(KpmReport { period_ms, records }))
        }
        0x02 => {
            let n = usize::from(u16::from_be_bytes(cur.take()?));
            cur.expect_records(n, SPS_ENTRY_LEN)?;
            let mut entries = Vec::with_capacity(n);
            for _ in 0..n {
                let ue_id = UeId(u16::from_be_bytes(cur.take()?));
                let action = match u32::from_be_bytes(cur.take()?) {
                    SPS_RELEASE => SpsAction::Release,
                    p => SpsAction::Fixed(p),
                };
                entries.push(SpsEntry { ue_id, action });
            }
            Ok(SmPayload::SpsControl(entries))
        }
        other => Err(CodecError::UnknownSmType(other)),
    }
}
