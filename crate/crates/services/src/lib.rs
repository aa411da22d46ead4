//! Speculative services built on the runtime: a speculative write-ahead log,
//! snapshot and journal state objects, and sans-IO service hosts for request
//! chains, counters, workflows and two-phase commit.

mod chain;
mod counter;
pub mod device;
pub mod frame;
mod logsvc;
mod message;
mod node;
mod speclog;
mod store;
mod tpc;
mod workflow;

pub use chain::ChainNode;
pub use counter::CounterNode;
pub use device::{FileDevice, LogDevice, MemDevice};
pub use logsvc::{LogJournal, LogRecord, LogServiceNode, LogStore};
pub use message::{AppMessage, Body, Envelope, MalformedMessage, Outcome};
pub use node::{reply, Admit, Mode, NodeCore, ServiceNode};
pub use speclog::SpecLog;
pub use store::{CounterState, CounterStore, Journal, JournaledLog, KvState, KvStore, SnapshotStore};
pub use tpc::{TpcCoordinatorNode, TpcJournal, TpcParticipantNode, TpcRecord, TpcStore};
pub use workflow::{WorkflowJournal, WorkflowNode, WorkflowRecord, WorkflowStatus, WorkflowStore};
