//! Bit-exact wire formats for the E2AP-lite application protocol and the
//! RC-lite service-model payloads it carries.
//!
//! Frame layout (all integers big-endian):
//!
//! ```text
//! +----------------+----------+----------+---------------------------+
//! | length L (u32) | msg_type | txid u16 | TLV* (ascending tag order) |
//! +----------------+----------+----------+---------------------------+
//! TLV: tag u8 | len u16 | value[len]
//! ```
//!
//! `L` counts the bytes after the length field.

mod frame;
mod sm;

pub use frame::{
    decode_frame, encode_frame, split_frame, Cause, E2Frame, FrameReader, MsgType, Tag, Tlv,
    FRAME_HEADER_LEN, MAX_FRAME_LEN,
};
pub use sm::{
    decode_sm_payload, encode_sm_payload, KpmRecord, KpmReport, SmPayload, SmType, SpsAction,
    SpsEntry, SPS_RELEASE,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("truncated input: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown message type 0x{0:02X}")]
    UnknownMsgType(u8),
    #[error("TLV with tag 0x{tag:02X} overruns frame body ({len} bytes declared, {remaining} left)")]
    TlvOverrun { tag: u8, len: usize, remaining: usize },
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("mandatory TLV 0x{tag:02X} missing from {msg_type:?}")]
    MissingMandatory { msg_type: MsgType, tag: u8 },
    #[error("TLV 0x{0:02X} appears more than once")]
    DuplicateTlv(u8),
    #[error("TLV 0x{tag:02X} has length {len}, expected {expected}")]
    BadTlvLength { tag: u8, len: usize, expected: usize },
    #[error("frame length {0} exceeds limit")]
    FrameTooLarge(usize),
    #[error("frame length {0} below minimum header size")]
    FrameTooShort(usize),
    #[error("TLV value of {0} bytes does not fit a u16 length")]
    ValueTooLong(usize),
    #[error("unknown service-model type 0x{0:02X}")]
    UnknownSmType(u8),
    #[error("record count mismatch: header says {declared}, body holds {actual_bytes} bytes")]
    CountMismatch { declared: usize, actual_bytes: usize },
    #[error("too many records to encode: {0}")]
    TooManyRecords(usize),
    #[error("fixed PRB value 0xFFFFFFFF is reserved for release")]
    ReservedValue,
    #[error("unknown cause value {0}")]
    UnknownCause(u8),
}
