//! xApp-facing API over the controller's queues and routing.
//!
//! A handle belongs to one xApp control thread. Nothing here blocks on the
//! controller: polling only touches the xApp's own queue.

use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::domain::GnbId;
use crate::e2_codec::{encode_sm_payload, SmPayload};
use crate::ric::{ControlToken, Ric, RicError, RxMsg, SubscriptionId, XappId, XappQueue};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SdkError {
    #[error("unknown E2 node {0}")]
    UnknownNode(GnbId),
    #[error("E2 node {0} is not connected")]
    NodeNotConnected(GnbId),
    #[error("payload does not encode: {0}")]
    BadPayload(String),
}

impl From<RicError> for SdkError {
    fn from(e: RicError) -> Self {
        match e {
            RicError::UnknownNode(g) => SdkError::UnknownNode(g),
            RicError::NodeNotConnected(g) => SdkError::NodeNotConnected(g),
        }
    }
}

#[derive(Debug)]
pub struct XappHandle {
    xapp_id: XappId,
    queue: Arc<Mutex<XappQueue>>,
    ric: Ric,
}

impl XappHandle {
    pub(crate) fn new(xapp_id: XappId, queue: Arc<Mutex<XappQueue>>, ric: Ric) -> Self {
        Self { xapp_id, queue, ric }
    }

    pub fn xapp_id(&self) -> XappId {
        self.xapp_id
    }

    /// Ids of the nodes currently connected over E2, ascending.
    pub fn get_gnb_id_list(&self) -> Vec<GnbId> {
        self.ric.gnb_id_list()
    }

    /// Oldest queued message, or `None` right away.
    pub fn get_queued_rx_msg(&self) -> Option<RxMsg> {
        self.queue.lock().unwrap().pop()
    }

    /// Messages lost to queue overflow.
    pub fn dropped_messages(&self) -> u64 {
        self.queue.lock().unwrap().dropped()
    }

    /// Ask `gnb_id` to apply a control payload. The acknowledgement shows up
    /// later as [`RxMsg::ControlAck`] carrying the returned token.
    pub fn e2ap_control_request(&self, gnb_id: GnbId, payload: &SmPayload) -> Result<ControlToken, SdkError> {
        let bytes = encode_sm_payload(payload).map_err(|e| SdkError::BadPayload(e.to_string()))?;
        if !self.ric.knows_node(gnb_id) {
            return Err(SdkError::UnknownNode(gnb_id));
        }
        Ok(self.ric.route_control(self.xapp_id, gnb_id, bytes))
    }

    /// Request periodic reports from `gnb_id`. The agent's verdict arrives as
    /// [`RxMsg::SubscriptionResponse`].
    pub fn e2ap_subscribe(&self, gnb_id: GnbId, period_ms: u32) -> Result<SubscriptionId, SdkError> {
        Ok(self.ric.subscribe(self.xapp_id, gnb_id, period_ms)?)
    }
}
