use std::collections::VecDeque;

use super::RxMsg;

/// Per-xApp receive queue capacity.
pub const XAPP_QUEUE_CAPACITY: usize = 1024;

/// Bounded FIFO; on overflow the oldest message is dropped.
#[derive(Debug)]
pub struct XappQueue {
    items: VecDeque<RxMsg>,
    capacity: usize,
    dropped: u64,
}

impl Default for XappQueue {
    fn default() -> Self {
        Self::with_capacity(XAPP_QUEUE_CAPACITY)
    }
}

impl XappQueue {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            items: VecDeque::with_capacity(capacity.min(64)),
            capacity: capacity.max(1),
            dropped: 0,
        }
    }

    pub fn push(&mut self, msg: RxMsg) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
            self.dropped += 1;
        }
        self.items.push_back(msg);
    }

    pub fn pop(&mut self) -> Option<RxMsg> {
        self.items.pop_front()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}
