//! Messages exchanged between members and the coordinator.

use serde::{Deserialize, Serialize};

use crate::{Boundary, GraphFragment, ObjectId, RollbackPlan};

/// Member to coordinator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemberMessage {
    /// Registration of a (re)started member, carrying every durable fragment.
    Connect {
        object: ObjectId,
        incarnation: u64,
        /// Largest world-line among the durable fragments.
        durable_world_line: u64,
        fragments: Vec<GraphFragment>,
    },
    /// Fragments whose persistence has completed.
    Report { object: ObjectId, world_line: u64, fragments: Vec<GraphFragment> },
    /// Pull for the latest boundary and any plan above `applied_seq`.
    BoundaryQuery { object: ObjectId, applied_seq: u64 },
    /// Answer to a segment request from a recovering coordinator.
    Segments { object: ObjectId, incarnation: u64, applied_seq: u64, fragments: Vec<GraphFragment> },
}

impl MemberMessage {
    pub fn object(&self) -> ObjectId {
        match self {
            MemberMessage::Connect { object, .. }
            | MemberMessage::Report { object, .. }
            | MemberMessage::BoundaryQuery { object, .. }
            | MemberMessage::Segments { object, .. } => *object,
        }
    }
}

/// Coordinator to member.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordinatorMessage {
    /// Completes a connect; `plans` lists every decision the member must apply,
    /// in order, before it may run actions at `world_line`.
    ConnectAck { object: ObjectId, incarnation: u64, world_line: u64, plans: Vec<RollbackPlan> },
    Boundary(Boundary),
    Rollback(RollbackPlan),
    /// Sent by a recovering coordinator; members answer with `Segments`.
    SegmentRequest,
}
