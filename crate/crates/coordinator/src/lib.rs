//! Cluster coordinator.
//!
//! [`Coordinator`] is a deterministic state machine: the host feeds it member
//! messages and timer ticks and carries out the returned [`Output`]s, sending
//! messages and appending events to a [`DurableLog`]. Nothing is written to
//! the log on the failure-free path. Restarts and rollback decisions are
//! logged, as are joins of objects outside the configured membership.

mod coordinator;
mod log;
mod view;

pub use coordinator::{Coordinator, CoordinatorConfig, CoordinatorStats, Output, Phase};
pub use log::{read_log_frames, DurableLog, FileLog, MemLog};
pub use view::DependencyView;

use dse_core::{ObjectId, Vertex};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoordinatorError {
    #[error("fragment {0} belongs to a rolled back world-line")]
    StaleWorldLine(Vertex),
    #[error("log append failed: {0}")]
    LogAppendFailed(String),
    #[error("members {0:?} have not answered the segment request")]
    MemberUnresponsive(Vec<ObjectId>),
    #[error("corrupt coordinator log: {0}")]
    CorruptLog(String),
}
