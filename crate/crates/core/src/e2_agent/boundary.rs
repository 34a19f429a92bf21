//! Datagrams exchanged between the E2 termination and the service-model task.
//!
//! ```text
//! 0x01 SM_UPLINK   | SmPayload bytes (non-empty)
//! 0x02 SM_DOWNLINK | SmPayload bytes (non-empty)
//! 0x03 ACK_STATUS  | status u8 (0 ok, 1 rejected)
//! ```

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundaryMsg {
    /// Report travelling toward the controller.
    SmUplink(Vec<u8>),
    /// Control travelling toward the scheduler.
    SmDownlink(Vec<u8>),
    AckStatus { ok: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BoundaryError {
    #[error("empty datagram")]
    Empty,
    #[error("unknown direction byte 0x{0:02X}")]
    UnknownDirection(u8),
    #[error("service-model datagram without payload")]
    MissingPayload,
    #[error("malformed ACK_STATUS datagram")]
    BadStatus,
}

impl BoundaryMsg {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            BoundaryMsg::SmUplink(p) => [&[0x01], p.as_slice()].concat(),
            BoundaryMsg::SmDownlink(p) => [&[0x02], p.as_slice()].concat(),
            BoundaryMsg::AckStatus { ok } => vec![0x03, u8::from(!ok)],
        }
    }

    pub fn decode(buf: &[u8]) -> Result<Self, BoundaryError> {
        let (&dir, rest) = buf.split_first().ok_or(BoundaryError::Empty)?;
        match dir {
            0x01 | 0x02 if rest.is_empty() => Err(BoundaryError::MissingPayload),
            0x01 => Ok(BoundaryMsg::SmUplink(rest.to_vec())),
            0x02 => Ok(BoundaryMsg::SmDownlink(rest.to_vec())),
            0x03 => match rest {
                [0] => Ok(BoundaryMsg::AckStatus { ok: true }),
                [1] => Ok(BoundaryMsg::AckStatus { ok: false }),
                _ => Err(BoundaryError::BadStatus),
            },
            other => Err(BoundaryError::UnknownDirection(other)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        assert_eq!(BoundaryMsg::SmUplink(vec![1, 2]).encode(), vec![1, 1, 2]);
        assert_eq!(BoundaryMsg::SmDownlink(vec![9]).encode(), vec![2, 9]);
        assert_eq!(BoundaryMsg::AckStatus { ok: true }.encode(), vec![3, 0]);
        assert_eq!(BoundaryMsg::AckStatus { ok: false }.encode(), vec![3, 1]);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(BoundaryMsg::decode(&[]), Err(BoundaryError::Empty));
        assert_eq!(BoundaryMsg::decode(&[1]), Err(BoundaryError::MissingPayload));
        assert_eq!(BoundaryMsg::decode(&[2]), Err(BoundaryError::MissingPayload));
        assert_eq!(BoundaryMsg::decode(&[3, 2]), Err(BoundaryError::BadStatus));
        assert_eq!(BoundaryMsg::decode(&[3]), Err(BoundaryError::BadStatus));
        assert_eq!(BoundaryMsg::decode(&[7, 0]), Err(BoundaryError::UnknownDirection(7)));
    }

    #[test]
    fn round_trip() {
        for m in [
            BoundaryMsg::SmUplink(vec![1, 0, 0]),
            BoundaryMsg::SmDownlink(vec![2, 0, 0]),
            BoundaryMsg::AckStatus { ok: false },
        ] {
            assert_eq!(BoundaryMsg::decode(&m.encode()).unwrap(), m);
        }
    }
}
