use serde::{Deserialize, Serialize};

use crate::{ObjectId, RollbackPlan};

/// A change to cluster state, as recorded in the coordinator's durable log.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusterEvent {
    /// Position in the log, starting at 0 and dense.
    pub sequence: u64,
    pub kind: ClusterEventKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClusterEventKind {
    MemberJoin { object: ObjectId, incarnation: u64 },
    MemberRejoin { object: ObjectId, incarnation: u64 },
    RollbackDecision(RollbackPlan),
}
