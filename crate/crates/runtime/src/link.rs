use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};

use dse_core::protocol::{CoordinatorMessage, MemberMessage};
use parking_lot::Mutex;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("coordinator link is closed")]
pub struct LinkError;

/// Transport between a member and the coordinator.
pub trait CoordinatorLink: Send + Sync {
    fn send(&self, msg: MemberMessage) -> Result<(), LinkError>;
    fn try_recv(&self) -> Option<CoordinatorMessage>;
}

/// A pair of in-memory queues. The host moves messages in and out.
#[derive(Default)]
pub struct QueueLink {
    outbound: Mutex<VecDeque<MemberMessage>>,
    inbound: Mutex<VecDeque<CoordinatorMessage>>,
    closed: AtomicBool,
}

impl QueueLink {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues a message for the member to pick up on its next refresh.
    pub fn deliver(&self, msg: CoordinatorMessage) {
        self.inbound.lock().push_back(msg);
    }

    /// Everything the member has sent since the last call.
    pub fn take_outbound(&self) -> Vec<MemberMessage> {
        self.outbound.lock().drain(..).collect()
    }

    /// Makes further sends fail.
    pub fn close(&self) {
        self.closed.store(true, Ordering::Release);
    }
}

impl CoordinatorLink for QueueLink {
    fn send(&self, msg: MemberMessage) -> Result<(), LinkError> {
        if self.closed.load(Ordering::Acquire) {
            return Err(LinkError);
        }
        self.outbound.lock().push_back(msg);
        Ok(())
    }

    fn try_recv(&self) -> Option<CoordinatorMessage> {
        self.inbound.lock().pop_front()
    }
}
