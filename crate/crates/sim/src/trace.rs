//! Line-delimited trace of a simulation run.

use std::io::{BufRead, Write};

use dse_core::{ObjectId, Vertex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A vertex as `[object, world_line, version]`.
pub type V = [u64; 3];

pub fn v(x: &Vertex) -> V {
    [x.object.0, x.world_line, x.version]
}

pub fn vertex(x: &V) -> Vertex {
    Vertex::new(ObjectId(x[0]), x[1], x[2])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Loss,
    /// The receiver was down.
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Object(u64),
    Coordinator,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum Event {
    Send { id: u64, from: u64, to: u64, kind: String, wl: Option<u64>, deps: Vec<V> },
    Deliver { id: u64 },
    Drop { id: u64, reason: DropReason },
    ActionStart { vertex: V, wl: Option<u64>, deps: Vec<V> },
    ActionEnd { vertex: V },
    PersistStart { vertex: V, edges: Vec<V> },
    PersistDone { vertex: V },
    Rollback { object: u64, incarnation: u64, seq: u64, skipped: bool, kept_through: u64, resumed: V },
    Connected { object: u64, incarnation: u64, vertex: V },
    /// A rollback decision became durable in the coordinator log.
    Plan { seq: u64, failed: u64, targets: Vec<V>, lost: Vec<V> },
    Boundary { seq: u64, epoch: u64, cutoffs: Vec<V> },
    CoordinatorAppend { kinds: Vec<String> },
    Crash { target: Target },
    Restart { target: Target, incarnation: u64 },
    Request { client: u64, req: u64 },
    /// A client received a reply; `released` is what its barrier released.
    Reply { client: u64, req: u64, outcome: String, released: Vec<V> },
    LogCheck { object: u64, shadow_len: u64, recovered_len: u64, prefix: bool, at_commit: bool },
    StateCheck { object: u64, ok: bool, detail: String },
    End { in_flight: Vec<u64> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    /// Virtual time in microseconds.
    pub t: u64,
    #[serde(flatten)]
    pub ev: Event,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceLog {
    pub records: Vec<Record>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("malformed trace at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TraceLog {
    pub fn push(&mut self, t: u64, ev: Event) {
        self.records.push(Record { t, ev });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_jsonl(&mut out).expect("writing to memory");
        out
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self, TraceError> {
        let mut records = Vec::new();
        let mut last = 0;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)
                .map_err(|e| TraceError::Malformed { line: i + 1, reason: e.to_string() })?;
            if rec.t < last {
                return Err(TraceError::Malformed { line: i + 1, reason: "time goes backwards".into() });
            }
            last = rec.t;
            records.push(rec);
        }
        Ok(Self { records })
    }

    /// SHA-256 of the serialized trace, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        self.write_jsonl(HashWriter(&mut h)).expect("hashing never fails");
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

struct HashWriter<'a>(&'a mut Sha256);

impl Write for HashWriter<'_> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let mut t = TraceLog::default();
        t.push(5, Event::Send { id: 1, from: 1, to: 2, kind: "Increment".into(), wl: Some(0), deps: vec![[1, 0, 3]] });
        t.push(9, Event::Crash { target: Target::Coordinator });
        let back = TraceLog::read_jsonl(&t.to_jsonl()[..]).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.digest(), t.digest());
    }

    #[test]
    fn malformed_lines_are_reported() {
        let err = TraceLog::read_jsonl(&b"{\"t\":1,\"ev\":\"deliver\",\"id\":1}\nnot json\n"[..]).unwrap_err();
        assert!(matches!(err, TraceError::Malformed { line: 2, .. }));
        let err = TraceLog::read_jsonl(&b"{\"t\":5,\"ev\":\"deliver\",\"id\":1}\n{\"t\":1,\"ev\":\"deliver\",\"id\":2}\n"[..])
            .unwrap_err();
        assert!(matches!(err, TraceError::Malformed { line: 2, .. }));
    }
}
