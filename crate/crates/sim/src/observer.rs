use std::sync::Arc;

use dse_core::{GraphFragment, Header, Vertex};
use dse_runtime::{Clock, ManualClock, RollbackRecord, RuntimeObserver};
use parking_lot::Mutex;

use crate::trace::{v, Event, TraceLog};

/// Trace sink shared by the simulator and every runtime observer.
pub type SharedTrace = Arc<Mutex<TraceLog>>;

/// Writes runtime events into the trace at the current virtual time.
pub struct TraceObserver {
    pub trace: SharedTrace,
    pub clock: Arc<ManualClock>,
    /// Record action starts and ends. Off for long performance runs.
    pub actions: bool,
}

impl TraceObserver {
    fn push(&self, ev: Event) {
        let t = self.clock.now().as_micros() as u64;
        self.trace.lock().push(t, ev);
    }
}

impl RuntimeObserver for TraceObserver {
    fn action_started(&self, vertex: Vertex, header: Option<&Header>) {
        if self.actions {
            let (wl, deps) = match header {
                Some(h) => (Some(h.world_line), h.deps.iter().map(v).collect()),
                None => (None, Vec::new()),
            };
            self.push(Event::ActionStart { vertex: v(&vertex), wl, deps });
        }
    }

    fn action_ended(&self, vertex: Vertex) {
        if self.actions {
            self.push(Event::ActionEnd { vertex: v(&vertex) });
        }
    }

    fn persist_started(&self, f: &GraphFragment) {
        self.push(Event::PersistStart { vertex: v(&f.vertex), edges: f.out_edges.iter().map(v).collect() });
    }

    fn persist_completed(&self, vertex: Vertex) {
        self.push(Event::PersistDone { vertex: v(&vertex) });
    }

    fn rollback_applied(&self, r: &RollbackRecord) {
        self.push(Event::Rollback {
            object: r.object.0,
            incarnation: r.incarnation,
            seq: r.failure_seq,
            skipped: r.skipped,
            kept_through: r.kept_through,
            resumed: v(&r.resumed_at),
        });
    }

    fn connected(&self, incarnation: u64, vertex: Vertex) {
        self.push(Event::Connected { object: vertex.object.0, incarnation, vertex: v(&vertex) });
    }
}
