//! Byte-level durable storage under the speculative log.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use dse_runtime::PersistCallback;
use parking_lot::Mutex;

/// Append-only byte store. Writes become durable in the order issued.
pub trait LogDevice: Send + Sync {
    /// Writes `bytes` at `offset`, which equals the length of everything
    /// written before. `done` runs once the bytes are durable.
    fn write(&self, offset: u64, bytes: Vec<u8>, done: PersistCallback);

    /// Durably cuts the store to `len` bytes. Writes issued before the
    /// truncation that have not completed must never become durable.
    fn truncate(&self, len: u64);

    /// The durable contents.
    fn read(&self) -> Vec<u8>;
}

/// Memory-backed device; every write is durable immediately.
#[derive(Default)]
pub struct MemDevice {
    bytes: Mutex<Vec<u8>>,
}

impl MemDevice {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_contents(bytes: Vec<u8>) -> Self {
        Self { bytes: Mutex::new(bytes) }
    }
}

impl LogDevice for MemDevice {
    fn write(&self, offset: u64, bytes: Vec<u8>, done: PersistCallback) {
        {
            let mut b = self.bytes.lock();
            b.truncate(offset as usize);
            b.extend_from_slice(&bytes);
        }
        done();
    }

    fn truncate(&self, len: u64) {
        self.bytes.lock().truncate(len as usize);
    }

    fn read(&self) -> Vec<u8> {
        self.bytes.lock().clone()
    }
}

/// Single file, synced on every write.
pub struct FileDevice {
    file: Mutex<File>,
}

impl FileDevice {
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path)?;
        Ok(Self { file: Mutex::new(file) })
    }
}

impl LogDevice for FileDevice {
    fn write(&self, offset: u64, bytes: Vec<u8>, done: PersistCallback) {
        let res = {
            let mut f = self.file.lock();
            f.seek(SeekFrom::Start(offset)).and_then(|_| f.write_all(&bytes)).and_then(|_| f.sync_data())
        };
        // A failed write never completes; the version stays non-durable.
        if res.is_ok() {
            done();
        }
    }

    fn truncate(&self, len: u64) {
        let f = self.file.lock();
        let _ = f.set_len(len).and_then(|_| f.sync_data());
    }

    fn read(&self) -> Vec<u8> {
        let mut f = self.file.lock();
        let mut out = Vec::new();
        let _ = f.seek(SeekFrom::Start(0)).and_then(|_| f.read_to_end(&mut out));
        out
    }
}
