//! Durable storage for cluster events.
//!
//! On disk each append is one frame: `u32` payload length, `u32` CRC-32 of the
//! payload, then the payload, which is a sequence of `u32`-length-prefixed
//! encoded events. A torn or corrupt trailing frame is ignored on read.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use dse_core::wire::{decode_event, encode_event};
use dse_core::ClusterEvent;

use crate::CoordinatorError;

pub trait DurableLog {
    /// Appends `events` atomically; returns once they are durable.
    fn append(&mut self, events: &[ClusterEvent]) -> Result<(), CoordinatorError>;
    fn read_all(&self) -> Result<Vec<ClusterEvent>, CoordinatorError>;
}

/// In-memory log, durable for as long as the value lives.
#[derive(Clone, Debug, Default)]
pub struct MemLog {
    events: Vec<ClusterEvent>,
}

impl MemLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

impl DurableLog for MemLog {
    fn append(&mut self, events: &[ClusterEvent]) -> Result<(), CoordinatorError> {
        self.events.extend_from_slice(events);
        Ok(())
    }

    fn read_all(&self) -> Result<Vec<ClusterEvent>, CoordinatorError> {
        Ok(self.events.clone())
    }
}

/// Append-only file, synced after every append.
pub struct FileLog {
    path: PathBuf,
    file: File,
}

impl FileLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CoordinatorError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .read(true)
            .open(&path)
            .map_err(|e| CoordinatorError::LogAppendFailed(e.to_string()))?;
        Ok(Self { path, file })
    }
}

impl DurableLog for FileLog {
    fn append(&mut self, events: &[ClusterEvent]) -> Result<(), CoordinatorError> {
        let frame = encode_frame(events);
        self.file.write_all(&frame).map_err(|e| CoordinatorError::LogAppendFailed(e.to_string()))?;
        self.file.sync_data().map_err(|e| CoordinatorError::LogAppendFailed(e.to_string()))
    }

    fn read_all(&self) -> Result<Vec<ClusterEvent>, CoordinatorError> {
        let mut bytes = Vec::new();
        File::open(&self.path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| CoordinatorError::CorruptLog(e.to_string()))?;
        read_log_frames(&bytes)
    }
}

pub(crate) fn encode_frame(events: &[ClusterEvent]) -> Vec<u8> {
    let mut payload = Vec::new();
    for e in events {
        let b = encode_event(e);
        payload.extend_from_slice(&(b.len() as u32).to_le_bytes());
        payload.extend_from_slice(&b);
    }
    let mut frame = Vec::with_capacity(payload.len() + 8);
    frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    frame.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    frame.extend_from_slice(&payload);
    frame
}

/// Decodes a log file image. Reading stops at the first incomplete or
/// checksum-failing frame; a frame that checks out but does not decode is an
/// error.
pub fn read_log_frames(bytes: &[u8]) -> Result<Vec<ClusterEvent>, CoordinatorError> {
    let mut events = Vec::new();
    let mut pos = 0;
    while bytes.len() - pos >= 8 {
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap());
        let Some(payload) = bytes.get(pos + 8..pos + 8 + len) else { break };
        if crc32fast::hash(payload) != crc {
            break;
        }
        let mut p = 0;
        while p < payload.len() {
            let n = payload
                .get(p..p + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
                .ok_or_else(|| CoordinatorError::CorruptLog("truncated event length".into()))?;
            let body = payload
                .get(p + 4..p + 4 + n)
                .ok_or_else(|| CoordinatorError::CorruptLog("truncated event".into()))?;
            events.push(decode_event(body).map_err(|e| CoordinatorError::CorruptLog(e.to_string()))?);
            p += 4 + n;
        }
        pos += 8 + len;
    }
    Ok(events)
}
