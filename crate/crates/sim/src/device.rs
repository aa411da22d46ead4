//! Log device whose writes become durable when the simulator says so.

use std::sync::Arc;

use dse_runtime::PersistCallback;
use dse_services::LogDevice;
use parking_lot::Mutex;

struct Pending {
    id: u64,
    epoch: u64,
    offset: u64,
    bytes: Vec<u8>,
    done: PersistCallback,
}

#[derive(Default)]
struct State {
    durable: Vec<u8>,
    pending: Vec<Pending>,
    /// Writes issued since the simulator last looked.
    issued: Vec<u64>,
    epoch: u64,
    next_id: u64,
    bytes_written: u64,
}

/// Writes are queued until [`SimDevice::complete`]. The simulator completes
/// them in issue order, so durability is ordered.
#[derive(Clone, Default)]
pub struct SimDevice {
    state: Arc<Mutex<State>>,
}

impl SimDevice {
    pub fn new() -> Self {
        Self::default()
    }

    /// A fresh device holding the durable bytes of `self`; pending writes
    /// are lost.
    pub fn after_crash(&self) -> Self {
        let durable = self.state.lock().durable.clone();
        Self { state: Arc::new(Mutex::new(State { durable, ..Default::default() })) }
    }

    /// Ids of writes issued since the last call.
    pub fn take_issued(&self) -> Vec<u64> {
        std::mem::take(&mut self.state.lock().issued)
    }

    /// Makes write `id` durable and runs its callback. Writes cut off by a
    /// truncation are discarded instead.
    pub fn complete(&self, id: u64) {
        let done = {
            let mut s = self.state.lock();
            let Some(i) = s.pending.iter().position(|p| p.id == id) else { return };
            let p = s.pending.remove(i);
            if p.epoch != s.epoch {
                return;
            }
            s.durable.truncate(p.offset as usize);
            s.durable.extend_from_slice(&p.bytes);
            p.done
        };
        done();
    }

    pub fn bytes_written(&self) -> u64 {
        self.state.lock().bytes_written
    }

    pub fn durable_len(&self) -> u64 {
        self.state.lock().durable.len() as u64
    }
}

impl LogDevice for SimDevice {
    fn write(&self, offset: u64, bytes: Vec<u8>, done: PersistCallback) {
        let mut s = self.state.lock();
        let id = s.next_id;
        s.next_id += 1;
        s.bytes_written += bytes.len() as u64;
        let epoch = s.epoch;
        s.pending.push(Pending { id, epoch, offset, bytes, done });
        s.issued.push(id);
    }

    fn truncate(&self, len: u64) {
        let mut s = self.state.lock();
        s.epoch += 1;
        s.durable.truncate(len as usize);
    }

    fn read(&self) -> Vec<u8> {
        self.state.lock().durable.clone()
    }
}
