//! State objects layered on the speculative log.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use dse_runtime::{BackendError, PersistCallback, StateObjectBackend};
use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::device::LogDevice;
use crate::speclog::SpecLog;

/// Full-copy versioning: every persist writes a snapshot of the whole state.
pub struct SnapshotStore<S> {
    state: Mutex<S>,
    log: SpecLog,
}

impl<S> SnapshotStore<S>
where
    S: Serialize + DeserializeOwned + Clone + Default + Send,
{
    pub fn open(device: Arc<dyn LogDevice>) -> Self {
        let log = SpecLog::open(device);
        let state = decode_last(&log);
        Self { state: Mutex::new(state), log }
    }

    /// Reads the current state. Call inside an action.
    pub fn read<R>(&self, f: impl FnOnce(&S) -> R) -> R {
        f(&self.state.lock())
    }

    /// Mutates the current state. Call inside an action.
    pub fn update<R>(&self, f: impl FnOnce(&mut S) -> R) -> R {
        f(&mut self.state.lock())
    }

    pub fn log(&self) -> &SpecLog {
        &self.log
    }
}

fn decode_last<S: DeserializeOwned + Default>(log: &SpecLog) -> S {
    log.last_entry().map(|b| serde_json::from_slice(&b).expect("snapshot written by this store")).unwrap_or_default()
}

impl<S> StateObjectBackend for SnapshotStore<S>
where
    S: Serialize + DeserializeOwned + Clone + Default + Send,
{
    fn persist(&self, version: u64, metadata: Vec<u8>, done: PersistCallback) {
        let snap = serde_json::to_vec(&*self.state.lock()).expect("state serializes");
        self.log.append(&snap);
        self.log.persist(version, metadata, done);
    }

    fn restore(&self, version: u64) -> Result<Vec<u8>, BackendError> {
        let meta = self.log.restore(version)?;
        *self.state.lock() = decode_last(&self.log);
        Ok(meta)
    }

    fn prune(&self, version: u64) {
        self.log.prune(version);
    }

    fn list_versions(&self) -> Vec<(u64, Vec<u8>)> {
        self.log.list_versions()
    }
}

/// A state machine rebuilt by replaying its records.
pub trait Journal: Default + Send {
    type Record: Serialize + DeserializeOwned;
    fn apply(&mut self, record: &Self::Record);
}

/// Journal state whose records are entries of a speculative log.
pub struct JournaledLog<J> {
    state: Mutex<J>,
    log: SpecLog,
}

impl<J: Journal> JournaledLog<J> {
    pub fn open(device: Arc<dyn LogDevice>) -> Self {
        let log = SpecLog::open(device);
        let state = replay(&log);
        Self { state: Mutex::new(state), log }
    }

    /// Applies and logs a record. Call inside an action.
    pub fn record(&self, r: J::Record) {
        let bytes = serde_json::to_vec(&r).expect("record serializes");
        let mut s = self.state.lock();
        s.apply(&r);
        self.log.append(&bytes);
    }

    pub fn read<R>(&self, f: impl FnOnce(&J) -> R) -> R {
        f(&self.state.lock())
    }

    pub fn log(&self) -> &SpecLog {
        &self.log
    }
}

fn replay<J: Journal>(log: &SpecLog) -> J {
    let mut j = J::default();
    for e in log.entries() {
        let r: J::Record = serde_json::from_slice(&e).expect("record written by this journal");
        j.apply(&r);
    }
    j
}

impl<J: Journal> StateObjectBackend for JournaledLog<J> {
    fn persist(&self, version: u64, metadata: Vec<u8>, done: PersistCallback) {
        self.log.persist(version, metadata, done);
    }

    fn restore(&self, version: u64) -> Result<Vec<u8>, BackendError> {
        let mut s = self.state.lock();
        let meta = self.log.restore(version)?;
        *s = replay(&self.log);
        Ok(meta)
    }

    fn prune(&self, version: u64) {
        self.log.prune(version);
    }

    fn list_versions(&self) -> Vec<(u64, Vec<u8>)> {
        self.log.list_versions()
    }
}

/// Counter with the ids of the requests applied to it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterState {
    pub value: i64,
    pub applied: BTreeSet<u64>,
}

impl CounterState {
    /// Adds `amount` unless request `id` was already applied. Returns the
    /// resulting value.
    pub fn increment(&mut self, id: u64, amount: i64) -> i64 {
        if self.applied.insert(id) {
            self.value += amount;
        }
        self.value
    }
}

/// String-keyed map of integers.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvState {
    pub map: BTreeMap<String, i64>,
}

impl KvState {
    pub fn get(&self, k: &str) -> Option<i64> {
        self.map.get(k).copied()
    }

    pub fn put(&mut self, k: &str, v: i64) {
        self.map.insert(k.to_string(), v);
    }
}

pub type CounterStore = SnapshotStore<CounterState>;
pub type KvStore = SnapshotStore<KvState>;
