use std::collections::BTreeMap;
use std::sync::Arc;

use dse_runtime::{BackendError, PersistCallback, StateObjectBackend};
use parking_lot::Mutex;

use crate::device::LogDevice;
use crate::frame::{self, KIND_COMMIT, KIND_ENTRY, KIND_PRUNE};

#[derive(Debug)]
struct Commit {
    end: u64,
    metadata: Vec<u8>,
    durable: bool,
}

#[derive(Default, Debug)]
struct Inner {
    bytes: Vec<u8>,
    /// Byte ranges of entry records' payloads.
    entries: Vec<(usize, usize)>,
    commits: BTreeMap<u64, Commit>,
    written: u64,
    pruned: u64,
    generation: u64,
}

impl Inner {
    fn push(&mut self, kind: u8, payload: &[u8]) {
        let start = self.bytes.len();
        frame::encode(kind, payload, &mut self.bytes);
        if kind == KIND_ENTRY {
            self.entries.push((start + 5, start + 5 + payload.len()));
        }
    }
}

/// Append-only log whose versions end at commit records. Entries appended by
/// actions become durable with the next commit; restoring a version cuts the
/// log back to that version's commit record.
pub struct SpecLog {
    inner: Arc<Mutex<Inner>>,
    device: Arc<dyn LogDevice>,
}

impl SpecLog {
    /// Recovers from the device's durable contents. Anything after the last
    /// intact commit record is discarded.
    pub fn open(device: Arc<dyn LogDevice>) -> Self {
        let bytes = device.read();
        let frames = frame::scan(&bytes);
        let keep = frames.iter().rev().find(|f| f.kind == KIND_COMMIT).map_or(0, |f| f.end);
        let mut inner = Inner::default();
        for f in frames.iter().take_while(|f| f.end <= keep) {
            match f.kind {
                KIND_ENTRY => inner.entries.push((f.start + 5, f.end - 4)),
                KIND_COMMIT if f.payload.len() >= 8 => {
                    let v = u64::from_le_bytes(f.payload[..8].try_into().unwrap());
                    let c = Commit { end: f.end as u64, metadata: f.payload[8..].to_vec(), durable: true };
                    inner.commits.insert(v, c);
                }
                KIND_PRUNE if f.payload.len() == 8 => {
                    inner.pruned = inner.pruned.max(u64::from_le_bytes(f.payload.try_into().unwrap()));
                }
                _ => {}
            }
        }
        inner.bytes = bytes[..keep].to_vec();
        inner.written = keep as u64;
        if keep < bytes.len() {
            device.truncate(keep as u64);
        }
        Self { inner: Arc::new(Mutex::new(inner)), device }
    }

    /// Appends an entry; it is durable once a later version is.
    pub fn append(&self, payload: &[u8]) -> usize {
        let mut g = self.inner.lock();
        g.push(KIND_ENTRY, payload);
        g.entries.len() - 1
    }

    pub fn entry_count(&self) -> usize {
        self.inner.lock().entries.len()
    }

    pub fn entries(&self) -> Vec<Vec<u8>> {
        let g = self.inner.lock();
        g.entries.iter().map(|&(s, e)| g.bytes[s..e].to_vec()).collect()
    }

    pub fn last_entry(&self) -> Option<Vec<u8>> {
        let g = self.inner.lock();
        g.entries.last().map(|&(s, e)| g.bytes[s..e].to_vec())
    }

    /// Full byte contents, durable or not.
    pub fn contents(&self) -> Vec<u8> {
        self.inner.lock().bytes.clone()
    }

    /// Byte offset just past each version's commit record.
    pub fn commit_offsets(&self) -> BTreeMap<u64, u64> {
        self.inner.lock().commits.iter().map(|(&v, c)| (v, c.end)).collect()
    }
}

impl StateObjectBackend for SpecLog {
    fn persist(&self, version: u64, metadata: Vec<u8>, done: PersistCallback) {
        let (offset, bytes, generation) = {
            let mut g = self.inner.lock();
            let mut payload = version.to_le_bytes().to_vec();
            payload.extend_from_slice(&metadata);
            g.push(KIND_COMMIT, &payload);
            let end = g.bytes.len() as u64;
            g.commits.insert(version, Commit { end, metadata, durable: false });
            let offset = g.written;
            g.written = end;
            (offset, g.bytes[offset as usize..].to_vec(), g.generation)
        };
        let inner = self.inner.clone();
        self.device.write(
            offset,
            bytes,
            Box::new(move || {
                let mut g = inner.lock();
                if g.generation != generation {
                    return;
                }
                let Some(c) = g.commits.get_mut(&version) else { return };
                c.durable = true;
                drop(g);
                done();
            }),
        );
    }

    fn restore(&self, version: u64) -> Result<Vec<u8>, BackendError> {
        let mut g = self.inner.lock();
        let (end, metadata) = if version == 0 {
            if g.pruned > 0 {
                return Err(BackendError::UnknownVersion(0));
            }
            (0, Vec::new())
        } else {
            match g.commits.get(&version) {
                Some(c) if c.durable && version > g.pruned => (c.end, c.metadata.clone()),
                _ => return Err(BackendError::UnknownVersion(version)),
            }
        };
        g.generation += 1;
        g.bytes.truncate(end as usize);
        let keep = g.entries.partition_point(|&(_, e)| e as u64 <= end);
        g.entries.truncate(keep);
        g.commits.split_off(&(version + 1));
        let cut = g.written > end;
        g.written = g.written.min(end);
        drop(g);
        if cut {
            self.device.truncate(end);
        }
        Ok(metadata)
    }

    fn prune(&self, version: u64) {
        let mut g = self.inner.lock();
        if version > g.pruned {
            g.pruned = version;
            g.push(KIND_PRUNE, &version.to_le_bytes());
        }
    }

    fn list_versions(&self) -> Vec<(u64, Vec<u8>)> {
        let g = self.inner.lock();
        g.commits
            .range(g.pruned + 1..)
            .filter(|(_, c)| c.durable)
            .map(|(&v, c)| (v, c.metadata.clone()))
            .collect()
    }
}
