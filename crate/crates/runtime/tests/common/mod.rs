#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use dse_coordinator::{Coordinator, CoordinatorConfig, DurableLog, MemLog, Output};
use dse_core::ObjectId;
use dse_runtime::{
    BackendError, ManualClock, PersistCallback, QueueLink, Runtime, RuntimeConfig, StateObjectBackend,
};
use parking_lot::Mutex;

/// In-memory backend whose state is one integer. Persist completions are
/// held until released, and every call checks that no action is running.
#[derive(Default)]
pub struct TestBackend {
    pub value: AtomicI64,
    pub in_action: AtomicI64,
    pub overlaps: AtomicU64,
    pub auto_complete: std::sync::atomic::AtomicBool,
    inner: Mutex<Inner>,
}

#[derive(Default)]
struct Inner {
    durable: BTreeMap<u64, (Vec<u8>, i64)>,
    inflight: Vec<(u64, u64, Vec<u8>, i64, PersistCallback)>,
    epoch: u64,
    pruned: u64,
    restores: Vec<u64>,
}

impl TestBackend {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn auto() -> Arc<Self> {
        let b = Self::default();
        b.auto_complete.store(true, Ordering::SeqCst);
        Arc::new(b)
    }

    /// Action body: bumps the value while recording that an action is in
    /// progress.
    pub fn act(&self, amount: i64) {
        self.in_action.fetch_add(1, Ordering::SeqCst);
        self.value.fetch_add(amount, Ordering::SeqCst);
        self.in_action.fetch_sub(1, Ordering::SeqCst);
    }

    fn check(&self) {
        if self.in_action.load(Ordering::SeqCst) != 0 {
            self.overlaps.fetch_add(1, Ordering::SeqCst);
        }
    }

    /// Makes every in-flight persist durable and runs its callback.
    pub fn complete_all(&self) {
        let done: Vec<_> = {
            let mut g = self.inner.lock();
            let epoch = g.epoch;
            let inflight = std::mem::take(&mut g.inflight);
            let mut cbs = Vec::new();
            for (e, v, meta, val, cb) in inflight {
                if e == epoch {
                    g.durable.insert(v, (meta, val));
                }
                cbs.push(cb);
            }
            cbs
        };
        for cb in done {
            cb();
        }
    }

    pub fn durable_versions(&self) -> Vec<u64> {
        self.inner.lock().durable.keys().copied().collect()
    }

    pub fn pruned(&self) -> u64 {
        self.inner.lock().pruned
    }

    pub fn restores(&self) -> Vec<u64> {
        self.inner.lock().restores.clone()
    }

    /// Volatile state is lost; durable versions survive.
    pub fn crash(&self) -> Arc<TestBackend> {
        let g = self.inner.lock();
        let fresh = TestBackend::default();
        fresh.inner.lock().durable = g.durable.clone();
        fresh.inner.lock().pruned = g.pruned;
        Arc::new(fresh)
    }
}

impl StateObjectBackend for TestBackend {
    fn persist(&self, version: u64, metadata: Vec<u8>, done: PersistCallback) {
        self.check();
        let val = self.value.load(Ordering::SeqCst);
        let mut g = self.inner.lock();
        let epoch = g.epoch;
        if self.auto_complete.load(Ordering::SeqCst) {
            g.durable.insert(version, (metadata, val));
            drop(g);
            done();
        } else {
            g.inflight.push((epoch, version, metadata, val, done));
        }
    }

    fn restore(&self, version: u64) -> Result<Vec<u8>, BackendError> {
        self.check();
        let mut g = self.inner.lock();
        g.restores.push(version);
        g.epoch += 1;
        let (meta, val) = if version == 0 {
            (Vec::new(), 0)
        } else {
            g.durable.get(&version).cloned().ok_or(BackendError::UnknownVersion(version))?
        };
        g.durable.split_off(&(version + 1));
        self.value.store(val, Ordering::SeqCst);
        Ok(meta)
    }

    fn prune(&self, version: u64) {
        let mut g = self.inner.lock();
        g.pruned = g.pruned.max(version);
        let keep = g.durable.split_off(&(version + 1));
        g.durable = keep;
    }

    fn list_versions(&self) -> Vec<(u64, Vec<u8>)> {
        self.inner.lock().durable.iter().map(|(&v, (m, _))| (v, m.clone())).collect()
    }
}

/// A coordinator and the in-memory links of its members.
pub struct Cluster {
    pub coord: Coordinator,
    pub log: MemLog,
    pub links: BTreeMap<ObjectId, Arc<QueueLink>>,
    pub clock: Arc<ManualClock>,
}

impl Cluster {
    pub fn new() -> Self {
        Self {
            coord: Coordinator::new(CoordinatorConfig::default()),
            log: MemLog::new(),
            links: BTreeMap::new(),
            clock: Arc::new(ManualClock::new()),
        }
    }

    pub fn runtime(&mut self, o: ObjectId, incarnation: u64, backend: Arc<TestBackend>) -> Runtime {
        let link = Arc::new(QueueLink::new());
        self.links.insert(o, link.clone());
        Runtime::new(RuntimeConfig::new(o, incarnation), backend, link, self.clock.clone())
    }

    /// Moves messages between members and the coordinator until none remain.
    pub fn pump(&mut self) {
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

    /// Alternates refresh and pump until the exchange settles.
    pub fn sync(&mut self, rts: &[&Runtime]) {
        for _ in 0..4 {
            for r in rts {
                r.refresh().unwrap();
            }
            self.pump();
        }
    }

    pub fn advance(&self, ms: u64) {
        self.clock.advance(Duration::from_millis(ms));
    }
}
