#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use std::time::Duration;

use dse_coordinator::{Coordinator, CoordinatorConfig, DurableLog, MemLog, Output};
use dse_core::ObjectId;
use dse_runtime::{ManualClock, QueueLink, Runtime, RuntimeConfig, StateObjectBackend};
use dse_services::{AppMessage, Envelope, ServiceNode};

/// A coordinator, service hosts, and a lossless network on a manual clock.
/// Messages to addresses without a host land in `inbox`.
pub struct Net {
    pub coord: Coordinator,
    pub log: MemLog,
    pub clock: Arc<ManualClock>,
    pub links: BTreeMap<ObjectId, Arc<QueueLink>>,
    pub nodes: BTreeMap<ObjectId, Box<dyn ServiceNode>>,
    pub wire: VecDeque<(ObjectId, Envelope)>,
    pub inbox: Vec<(ObjectId, AppMessage)>,
    pub now_ms: u64,
}

impl Net {
    pub fn new() -> Self {
        Self {
            coord: Coordinator::new(CoordinatorConfig::default()),
            log: MemLog::new(),
            clock: Arc::new(ManualClock::new()),
            links: BTreeMap::new(),
            nodes: BTreeMap::new(),
            wire: VecDeque::new(),
            inbox: Vec::new(),
            now_ms: 0,
        }
    }

    /// Builds a runtime for `o` over `backend`, hands it to `host`, and
    /// connects it.
    pub fn add(
        &mut self,
        o: ObjectId,
        incarnation: u64,
        backend: Arc<dyn StateObjectBackend>,
        host: impl FnOnce(Arc<Runtime>) -> Box<dyn ServiceNode>,
    ) {
        let link = Arc::new(QueueLink::new());
        self.links.insert(o, link.clone());
        let rt = Arc::new(Runtime::new(RuntimeConfig::new(o, incarnation), backend, link, self.clock.clone()));
        rt.connect().unwrap();
        self.nodes.insert(o, host(rt));
    }

    /// Drops the host of `o` with all of its volatile state.
    pub fn crash(&mut self, o: ObjectId) {
        self.nodes.remove(&o);
        if let Some(l) = self.links.remove(&o) {
            l.close();
        }
        self.wire.retain(|(_, e)| e.to != o);
    }

    pub fn send(&mut self, from: ObjectId, env: Envelope) {
        self.wire.push_back((from, env));
    }

    fn pump(&mut self) {
        loop {
            let mut moved = false;
            let links: Vec<_> = self.links.values().cloned().collect();
            for link in links {
                for m in link.take_outbound() {
                    moved = true;
                    let out = self.coord.handle(m);
                    self.settle(out);
                }
            }
            if !moved {
                break;
            }
        }
    }

    fn settle(&mut self, mut out: Vec<Output>) {
        while !out.is_empty() {
            let mut next = Vec::new();
            for o in out {
                match o {
                    Output::Append(events) => {
                        self.log.append(&events).unwrap();
                        next.extend(self.coord.on_appended());
                    }
                    Output::Send { to, msg } => {
                        if let Some(l) = self.links.get(&to) {
                            l.deliver(msg);
                        }
                    }
                }
            }
            out = next;
        }
    }

    /// One millisecond: deliver everything on the wire, refresh every
    /// runtime, run the coordinator, poll every host.
    pub fn step(&mut self) {
        let wire: Vec<_> = self.wire.drain(..).collect();
        for (from, env) in wire {
            let msg = AppMessage::from_bytes(&env.msg.to_bytes()).unwrap();
            match self.nodes.get_mut(&env.to) {
                Some(n) => {
                    let out = n.handle(from, msg);
                    let me = env.to;
                    self.wire.extend(out.into_iter().map(|e| (me, e)));
                }
                None => self.inbox.push((env.to, msg)),
            }
        }
        let ids: Vec<_> = self.nodes.keys().copied().collect();
        for &o in &ids {
            self.nodes[&o].runtime().refresh().unwrap();
        }
        self.pump();
        for o in ids {
            let out = self.nodes.get_mut(&o).unwrap().poll();
            self.wire.extend(out.into_iter().map(|e| (o, e)));
        }
        self.clock.advance(Duration::from_millis(1));
        self.now_ms += 1;
    }

    /// Steps until `done` holds, at most `limit` milliseconds.
    pub fn run_until(&mut self, limit: u64, mut done: impl FnMut(&Net) -> bool) -> bool {
        for _ in 0..limit {
            if done(self) {
                return true;
            }
            self.step();
        }
        done(self)
    }

    pub fn run(&mut self, ms: u64) {
        for _ in 0..ms {
            self.step();
        }
    }

    pub fn runtime(&self, o: ObjectId) -> &Arc<Runtime> {
        self.nodes[&o].runtime()
    }

    pub fn take_inbox(&mut self) -> Vec<(ObjectId, AppMessage)> {
        std::mem::take(&mut self.inbox)
    }
}
