//! Service-model task co-located with the scheduler. It only touches the
//! simulator through its inbox and outbox.

use tracing::warn;

use super::BoundaryMsg;
use crate::e2_codec::{decode_sm_payload, encode_sm_payload, SmPayload};
use crate::mac_sim::{AckStatus, SimInbox, SimOutput, SpsCommand};

#[derive(Debug)]
pub struct SmTask {
    inbox: SimInbox,
    next_seq: u64,
}

impl SmTask {
    pub fn new(inbox: SimInbox) -> Self {
        Self { inbox, next_seq: 0 }
    }

    /// Handle a datagram from the E2 side; may answer immediately.
    pub fn on_boundary(&mut self, msg: BoundaryMsg) -> Option<BoundaryMsg> {
        match msg {
            BoundaryMsg::SmDownlink(bytes) => match decode_sm_payload(&bytes) {
                Ok(SmPayload::SpsControl(entries)) => {
                    let seq = self.next_seq;
                    self.next_seq += 1;
                    if self.inbox.send(SpsCommand { seq, entries }) {
                        None
                    } else {
                        warn!("scheduler inbox closed");
                        Some(BoundaryMsg::AckStatus { ok: false })
                    }
                }
                _ => Some(BoundaryMsg::AckStatus { ok: false }),
            },
            other => {
                warn!(?other, "unexpected datagram on the SM side");
                None
            }
        }
    }

    /// Translate one scheduler output into a datagram for the E2 side.
    pub fn on_sim_output(&mut self, output: SimOutput) -> Option<BoundaryMsg> {
        match output {
            SimOutput::Report { report, .. } => encode_sm_payload(&SmPayload::KpmReport(report))
                .map_err(|e| warn!(error = %e, "report does not encode"))
                .ok()
                .map(BoundaryMsg::SmUplink),
            SimOutput::Ack(ack) => Some(BoundaryMsg::AckStatus {
                ok: ack.status == AckStatus::Ok,
            }),
        }
    }
}
