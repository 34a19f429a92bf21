use super::CodecError;

/// Bytes preceding the TLV list: length, msg_type and txid.
pub const FRAME_HEADER_LEN: usize = 4 + 1 + 2;
/// Largest accepted value of the length prefix.
pub const MAX_FRAME_LEN: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    SetupReq = 0x01,
    SetupResp = 0x02,
    SubReq = 0x03,
    SubResp = 0x04,
    Indication = 0x05,
    ControlReq = 0x06,
    ControlAck = 0x07,
    Error = 0x7F,
}

impl MsgType {
    pub const ALL: [MsgType; 8] = [
        MsgType::SetupReq,
        MsgType::SetupResp,
        MsgType::SubReq,
        MsgType::SubResp,
        MsgType::Indication,
        MsgType::ControlReq,
        MsgType::ControlAck,
        MsgType::Error,
    ];

    pub fn from_u8(b: u8) -> Result<Self, CodecError> {
        Self::ALL
            .into_iter()
            .find(|t| *t as u8 == b)
            .ok_or(CodecError::UnknownMsgType(b))
    }

    /// TLVs that must appear exactly once.
    ///
    /// RAN_FUNCTION_ID is left out: when absent it takes its default of 1.
    pub fn mandatory(self) -> &'static [Tag] {
        use Tag::*;
        match self {
            MsgType::SetupReq => &[GnbId],
            MsgType::SetupResp => &[Cause],
            MsgType::SubReq => &[GnbId, ReportPeriodMs],
            MsgType::SubResp => &[SubscriptionId, Cause],
            MsgType::Indication => &[GnbId, SubscriptionId, SmPayload],
            MsgType::ControlReq => &[GnbId, SmPayload],
            MsgType::ControlAck => &[Cause],
            MsgType::Error => &[Cause],
        }
    }
}

/// Known TLV tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Tag {
    GnbId = 0x01,
    RanFunctionId = 0x02,
    ReportPeriodMs = 0x03,
    SmPayload = 0x04,
    Cause = 0x05,
    SubscriptionId = 0x06,
}

impl Tag {
    /// Fixed value width, `None` for opaque values.
    fn width(self) -> Option<usize> {
        match self {
            Tag::GnbId | Tag::ReportPeriodMs | Tag::SubscriptionId => Some(4),
            Tag::RanFunctionId => Some(2),
            Tag::Cause => Some(1),
            Tag::SmPayload => None,
        }
    }

    fn from_u8(b: u8) -> Option<Self> {
        use Tag::*;
        [GnbId, RanFunctionId, ReportPeriodMs, SmPayload, Cause, SubscriptionId]
            .into_iter()
            .find(|t| *t as u8 == b)
    }
}

/// CAUSE TLV values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Cause {
    Ok = 0,
    Reject = 1,
    UnknownFunction = 2,
    Malformed = 3,
}

impl Cause {
    pub fn from_u8(b: u8) -> Result<Self, CodecError> {
        match b {
            0 => Ok(Cause::Ok),
            1 => Ok(Cause::Reject),
            2 => Ok(Cause::UnknownFunction),
            3 => Ok(Cause::Malformed),
            other => Err(CodecError::UnknownCause(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tlv {
    pub tag: u8,
    pub value: Vec<u8>,
}

/// One E2AP-lite message. TLVs are kept in canonical (ascending tag) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct E2Frame {
    pub msg_type: MsgType,
    pub txid: u16,
    tlvs: Vec<Tlv>,
}

impl E2Frame {
    pub fn new(msg_type: MsgType, txid: u16) -> Self {
        Self {
            msg_type,
            txid,
            tlvs: Vec::new(),
        }
    }

    pub fn tlvs(&self) -> &[Tlv] {
        &self.tlvs
    }

    /// Insert a raw TLV, replacing any previous value for a known tag.
    pub fn set_raw(&mut self, tag: u8, value: Vec<u8>) {
        if Tag::from_u8(tag).is_some() {
            self.tlvs.retain(|t| t.tag != tag);
        }
        let pos = self.tlvs.partition_point(|t| t.tag <= tag);
        self.tlvs.insert(pos, Tlv { tag, value });
    }

    pub fn with_raw(mut self, tag: u8, value: Vec<u8>) -> Self {
        self.set_raw(tag, value);
        self
    }

    pub fn with_gnb_id(self, id: u32) -> Self {
        self.with_raw(Tag::GnbId as u8, id.to_be_bytes().to_vec())
    }

    pub fn with_ran_function_id(self, id: u16) -> Self {
        self.with_raw(Tag::RanFunctionId as u8, id.to_be_bytes().to_vec())
    }

    pub fn with_report_period_ms(self, ms: u32) -> Self {
        self.with_raw(Tag::ReportPeriodMs as u8, ms.to_be_bytes().to_vec())
    }

    pub fn with_sm_payload(self, payload: Vec<u8>) -> Self {
        self.with_raw(Tag::SmPayload as u8, payload)
    }

    pub fn with_cause(self, cause: Cause) -> Self {
        self.with_raw(Tag::Cause as u8, vec![cause as u8])
    }

    pub fn with_subscription_id(self, id: u32) -> Self {
        self.with_raw(Tag::SubscriptionId as u8, id.to_be_bytes().to_vec())
    }

    pub fn get(&self, tag: Tag) -> Option<&[u8]> {
        self.tlvs
            .iter()
            .find(|t| t.tag == tag as u8)
            .map(|t| t.value.as_slice())
    }

    fn get_u32(&self, tag: Tag) -> Option<u32> {
        self.get(tag)
            .and_then(|v| <[u8; 4]>::try_from(v).ok())
            .map(u32::from_be_bytes)
    }

    pub fn gnb_id(&self) -> Option<u32> {
        self.get_u32(Tag::GnbId)
    }

    /// RAN function id, defaulting to 1 when the TLV is absent.
    pub fn ran_function_id(&self) -> u16 {
        self.get(Tag::RanFunctionId)
            .and_then(|v| <[u8; 2]>::try_from(v).ok())
            .map(u16::from_be_bytes)
            .unwrap_or(1)
    }

    pub fn report_period_ms(&self) -> Option<u32> {
        self.get_u32(Tag::ReportPeriodMs)
    }

    pub fn subscription_id(&self) -> Option<u32> {
        self.get_u32(Tag::SubscriptionId)
    }

    pub fn sm_payload(&self) -> Option<&[u8]> {
        self.get(Tag::SmPayload)
    }

    pub fn cause(&self) -> Option<Cause> {
        self.get(Tag::Cause)
            .and_then(|v| v.first().copied())
            .and_then(|b| Cause::from_u8(b).ok())
    }

    fn check(&self) -> Result<(), CodecError> {
        for tag in self.msg_type.mandatory() {
            if !self.tlvs.iter().any(|t| t.tag == *tag as u8) {
                return Err(CodecError::MissingMandatory {
                    msg_type: self.msg_type,
                    tag: *tag as u8,
                });
            }
        }
        for (i, tlv) in self.tlvs.iter().enumerate() {
            if tlv.value.len() > usize::from(u16::MAX) {
                return Err(CodecError::ValueTooLong(tlv.value.len()));
            }
            if let Some(tag) = Tag::from_u8(tlv.tag) {
                if self.tlvs[..i].iter().any(|t| t.tag == tlv.tag) {
                    return Err(CodecError::DuplicateTlv(tlv.tag));
                }
                if let Some(width) = tag.width() {
                    if tlv.value.len() != width {
                        return Err(CodecError::BadTlvLength {
                            tag: tlv.tag,
                            len: tlv.value.len(),
                            expected: width,
                        });
                    }
                }
                if tag == Tag::Cause {
                    Cause::from_u8(tlv.value[0])?;
                }
            }
        }
        Ok(())
    }
}

pub fn encode_frame(frame: &E2Frame) -> Result<Vec<u8>, CodecError> {
    frame.check()?;
    let body_len: usize = 3 + frame.tlvs.iter().map(|t| 3 + t.value.len()).sum::<usize>();
    if body_len > MAX_FRAME_LEN {
        return Err(CodecError::FrameTooLarge(body_len));
    }
    let mut out = Vec::with_capacity(4 + body_len);
    out.extend_from_slice(&(body_len as u32).to_be_bytes());
    out.push(frame.msg_type as u8);
    out.extend_from_slice(&frame.txid.to_be_bytes());
    let mut sorted: Vec<&Tlv> = frame.tlvs.iter().collect();
    sorted.sort_by_key(|t| t.tag);
    for tlv in sorted {
        out.push(tlv.tag);
        out.extend_from_slice(&(tlv.value.len() as u16).to_be_bytes());
        out.extend_from_slice(&tlv.value);
    }
    Ok(out)
}

/// Length of the complete frame at the head of `buf`, or `None` if more
/// bytes are needed. Errors on an impossible length prefix.
pub fn split_frame(buf: &[u8]) -> Result<Option<usize>, CodecError> {
    if buf.len() < 4 {
        return Ok(None);
    }
    let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
    if len > MAX_FRAME_LEN {
        return Err(CodecError::FrameTooLarge(len));
    }
    if len < 3 {
        return Err(CodecError::FrameTooShort(len));
    }
    Ok((buf.len() >= 4 + len).then_some(4 + len))
}

/// Decode exactly one frame occupying all of `buf`.
pub fn decode_frame(buf: &[u8]) -> Result<E2Frame, CodecError> {
    if buf.len() < 4 {
        return Err(CodecError::Truncated {
            needed: 4,
            available: buf.len(),
        });
    }
    let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
    if len > MAX_FRAME_LEN {
        return Err(CodecError::FrameTooLarge(len));
    }
    let total = 4usize + len;
    if buf.len() < total {
        return Err(CodecError::Truncated {
            needed: total,
            available: buf.len(),
        });
    }
    if buf.len() > total {
        return Err(CodecError::TrailingBytes(buf.len() - total));
    }
    if len < 3 {
        return Err(CodecError::FrameTooShort(len));
    }
    let msg_type = MsgType::from_u8(buf[4])?;
    let txid = u16::from_be_bytes([buf[5], buf[6]]);
    let mut frame = E2Frame::new(msg_type, txid);

    let mut rest = &buf[FRAME_HEADER_LEN..];
    while !rest.is_empty() {
        if rest.len() < 3 {
            return Err(CodecError::TlvOverrun {
                tag: rest[0],
                len: 3,
                remaining: rest.len(),
            });
        }
        let tag = rest[0];
        let vlen = usize::from(u16::from_be_bytes([rest[1], rest[2]]));
        if rest.len() - 3 < vlen {
            return Err(CodecError::TlvOverrun {
                tag,
                len: vlen,
                remaining: rest.len() - 3,
            });
        }
        frame.tlvs.push(Tlv {
            tag,
            value: rest[3..3 + vlen].to_vec(),
        });
        rest = &rest[3 + vlen..];
    }
    // stable: unknown tags keep their relative order
    frame.tlvs.sort_by_key(|t| t.tag);
    frame.check()?;
    Ok(frame)
}

/// Incremental splitter for back-to-back frames on a byte stream.
#[derive(Debug, Default)]
pub struct FrameReader {
    buf: Vec<u8>,
}

impl FrameReader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete frame, `Ok(None)` if more bytes are needed.
    ///
    /// A framing error poisons the stream; callers should close it.
    pub fn next_frame(&mut self) -> Result<Option<E2Frame>, CodecError> {
        match split_frame(&self.buf)? {
            None => Ok(None),
            Some(n) => {
                let frame = decode_frame(&self.buf[..n]);
                self.buf.drain(..n);
                frame.map(Some)
            }
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}
