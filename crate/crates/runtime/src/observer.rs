use dse_core::{GraphFragment, Header, ObjectId, Vertex};

/// Outcome of applying one rollback plan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RollbackRecord {
    pub object: ObjectId,
    pub incarnation: u64,
    pub failure_seq: u64,
    /// True when the object kept its in-memory state instead of restoring.
    pub skipped: bool,
    /// Versions above this one from earlier world-lines are gone.
    pub kept_through: u64,
    /// Current vertex after the plan.
    pub resumed_at: Vertex,
}

/// Hooks for tracing. All methods default to no-ops.
pub trait RuntimeObserver: Send + Sync {
    /// An action started at `vertex`, consuming `header` if it has one.
    fn action_started(&self, _vertex: Vertex, _header: Option<&Header>) {}
    fn action_ended(&self, _vertex: Vertex) {}
    fn persist_started(&self, _fragment: &GraphFragment) {}
    fn persist_completed(&self, _vertex: Vertex) {}
    fn rollback_applied(&self, _record: &RollbackRecord) {}
    /// Connection finished; the object resumes at `vertex`.
    fn connected(&self, _incarnation: u64, _vertex: Vertex) {}
}
