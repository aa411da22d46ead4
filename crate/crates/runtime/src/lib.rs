//! Runtime for one state object.
//!
//! Actions run under the shared side of a biased latch; persistence and
//! restore take the exclusive side. Every message carries a [`Header`]; the
//! runtime records the dependencies it consumes, persists them as graph
//! fragments alongside the object's state, reports them to the coordinator,
//! and applies the coordinator's rollback plans in order.
//!
//! [`Header`]: dse_core::Header

mod backend;
mod clock;
mod deferred;
mod latch;
mod link;
mod observer;
mod runtime;
mod sthread;

pub use backend::{BackendError, PersistCallback, StateObjectBackend};
pub use clock::{Clock, ManualClock, SystemClock};
pub use deferred::DeferredQueue;
pub use link::{CoordinatorLink, LinkError, QueueLink};
pub use observer::{RollbackRecord, RuntimeObserver};
pub use runtime::{ActionGuard, Admission, Runtime, RuntimeConfig, RuntimeError, RuntimeStats};
pub use sthread::{Receive, RolledBack, SThread};
