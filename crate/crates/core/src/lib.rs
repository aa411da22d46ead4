//! Shared vocabulary of the speculative execution runtime: vertices, message
//! headers, dependency sets, graph fragments, rollback plans, cluster events,
//! the coordinator protocol, and a bit-exact binary encoding for all of them.

mod event;
mod fragment;
mod header;
mod ids;
mod plan;
pub mod protocol;
pub mod wire;

pub use event::{ClusterEvent, ClusterEventKind};
pub use fragment::GraphFragment;
pub use header::{merge_deps, DepSet, Header};
pub use ids::{ObjectId, Vertex};
pub use plan::{Boundary, Cutoff, RollbackPlan};
pub use wire::CodecError;
