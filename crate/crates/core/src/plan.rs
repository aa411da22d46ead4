use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{ObjectId, Vertex};

/// A position on one object's version chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cutoff {
    pub world_line: u64,
    pub version: u64,
}

impl Cutoff {
    pub const fn new(world_line: u64, version: u64) -> Self {
        Self { world_line, version }
    }
}

/// A rollback decision. Applying plan `failure_seq` moves every object to
/// world-line `failure_seq`, restored to at most its target version.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RollbackPlan {
    pub failure_seq: u64,
    /// The object whose restart triggered the plan.
    pub failed: ObjectId,
    /// Restore target for every member known when the plan was made.
    pub targets: BTreeMap<ObjectId, Cutoff>,
    /// Vertices of the coordinator's view removed by the failure and its cascade.
    pub lost: BTreeSet<Vertex>,
    /// Objects that lose no reported vertex; they may avoid a restore.
    pub unaffected: BTreeSet<ObjectId>,
}

impl RollbackPlan {
    /// Target version for `object`; objects absent from the plan restore to 0.
    pub fn target_version(&self, object: ObjectId) -> u64 {
        self.targets.get(&object).map_or(0, |c| c.version)
    }

    /// True when `v` is discarded by this plan: it predates the plan and lies
    /// above its object's target.
    pub fn rolls_back(&self, v: &Vertex) -> bool {
        v.world_line < self.failure_seq && v.version > self.target_version(v.object)
    }
}

/// A recoverable boundary as announced by the coordinator.
///
/// `failure_seq` is the latest rollback plan the boundary accounts for. A
/// vertex whose object has a cutoff at or above its version is inside the
/// boundary, provided no plan up to `failure_seq` discards it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Boundary {
    pub epoch: u64,
    pub failure_seq: u64,
    pub cutoffs: BTreeMap<ObjectId, Cutoff>,
}

impl Boundary {
    pub fn covers_version(&self, v: &Vertex) -> bool {
        self.cutoffs.get(&v.object).is_some_and(|c| v.version <= c.version)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rolls_back_only_older_world_lines_above_target() {
        let plan = RollbackPlan {
            failure_seq: 2,
            failed: ObjectId(1),
            targets: BTreeMap::from([(ObjectId(1), Cutoff::new(1, 3))]),
            lost: BTreeSet::new(),
            unaffected: BTreeSet::new(),
        };
        assert!(plan.rolls_back(&Vertex::new(ObjectId(1), 1, 4)));
        assert!(!plan.rolls_back(&Vertex::new(ObjectId(1), 1, 3)));
        assert!(!plan.rolls_back(&Vertex::new(ObjectId(1), 2, 9)));
        assert!(plan.rolls_back(&Vertex::new(ObjectId(7), 0, 1)));
    }
}
