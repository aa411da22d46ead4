use std::sync::Arc;

use dse_core::ObjectId;
use dse_runtime::SThread;

use crate::message::{AppMessage, Body, Envelope, Outcome};
use crate::node::{reply, Admit, Mode, NodeCore, ServiceNode};
use crate::store::CounterStore;

struct Releasing {
    client: ObjectId,
    req: u64,
    value: i64,
    t: SThread,
}

/// Counter service. Each increment runs as one action; replies are released
/// after a barrier so clients only see durable values.
pub struct CounterNode {
    core: NodeCore,
    store: Arc<CounterStore>,
    releasing: Vec<Releasing>,
}

impl CounterNode {
    pub fn new(core: NodeCore, store: Arc<CounterStore>) -> Self {
        Self { core, store, releasing: Vec::new() }
    }

    pub fn store(&self) -> &Arc<CounterStore> {
        &self.store
    }
}

impl ServiceNode for CounterNode {
    fn core(&self) -> &NodeCore {
        &self.core
    }

    fn core_mut(&mut self) -> &mut NodeCore {
        &mut self.core
    }

    fn handle(&mut self, from: ObjectId, msg: AppMessage) -> Vec<Envelope> {
        let mut out = Vec::new();
        let Body::Increment { req, amount } = msg.body else { return out };
        let rt = self.core.rt.clone();
        let g = match self.core.admit(&rt, from, &msg) {
            Admit::Run(g) => g,
            Admit::Stale => {
                out.push(reply(from, req, Outcome::Rejected, Default::default()));
                return out;
            }
            Admit::Later => return out,
        };
        let value = self.store.update(|s| s.increment(req, amount));
        match self.core.mode {
            Mode::Speculative => self.releasing.push(Releasing { client: from, req, value, t: g.detach() }),
            Mode::Baseline => {
                let h = g.end();
                self.core.emit(&h, reply(from, req, Outcome::Value(value), Default::default()), &mut out);
            }
        }
        out
    }

    fn poll_node(&mut self) -> Vec<Envelope> {
        let mut out = Vec::new();
        self.releasing.retain_mut(|r| match r.t.poll_barrier() {
            Ok(Some(released)) => {
                out.push(reply(r.client, r.req, Outcome::Value(r.value), released));
                false
            }
            Ok(None) => true,
            Err(_) => false,
        });
        out
    }
}
