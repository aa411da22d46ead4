use dse_core::{wire, Header, ObjectId, Vertex};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Done,
    Value(i64),
    Committed,
    Aborted,
    /// The request carried a header from a rolled-back world-line.
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Body {
    ChainRequest { req: u64 },
    ChainCall { req: u64, hop: u32 },
    ChainReturn { req: u64 },
    Increment { req: u64, amount: i64 },
    WorkflowRequest { wf: u64, steps: u32 },
    StepCall { wf: u64, step: u32 },
    StepReturn { wf: u64, step: u32 },
    TxStart { tx: u64 },
    TxStartAck { tx: u64 },
    TxCommit { tx: u64, participants: Vec<ObjectId> },
    Prepare { tx: u64 },
    Vote { tx: u64, yes: bool },
    Append { req: u64, payload: Vec<u8> },
    /// Response to an external client. `released` lists the dependencies a
    /// barrier released before the reply was sent.
    Reply { req: u64, outcome: Outcome, released: Vec<Vertex> },
}

/// Application message: the body plus the header of the action or sthread
/// that sent it. External clients send no header.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppMessage {
    pub header: Option<Header>,
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed application message")]
pub struct MalformedMessage;

impl AppMessage {
    pub fn new(header: Option<Header>, body: Body) -> Self {
        Self { header, body }
    }

    /// `u8` header flag, then `u32` length and the encoded header if present,
    /// then the body as JSON.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match &self.header {
            None => out.push(0),
            Some(h) => {
                let hb = wire::encode_header(h);
                out.push(1);
                out.extend_from_slice(&(hb.len() as u32).to_le_bytes());
                out.extend_from_slice(&hb);
            }
        }
        out.extend_from_slice(&serde_json::to_vec(&self.body).expect("body serializes"));
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, MalformedMessage> {
        let (&flag, rest) = b.split_first().ok_or(MalformedMessage)?;
        let (header, body) = match flag {
            0 => (None, rest),
            1 => {
                let len = u32::from_le_bytes(rest.get(..4).ok_or(MalformedMessage)?.try_into().unwrap()) as usize;
                let hb = rest.get(4..4 + len).ok_or(MalformedMessage)?;
                (Some(wire::decode_header(hb).map_err(|_| MalformedMessage)?), &rest[4 + len..])
            }
            _ => return Err(MalformedMessage),
        };
        let body = serde_json::from_slice(body).map_err(|_| MalformedMessage)?;
        Ok(Self { header, body })
    }
}

/// A message addressed to a service or client.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub to: ObjectId,
    pub msg: AppMessage,
}

impl Envelope {
    pub fn new(to: ObjectId, header: Option<Header>, body: Body) -> Self {
        Self { to, msg: AppMessage::new(header, body) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dse_core::DepSet;

    #[test]
    fn round_trips_with_and_without_header() {
        let a = AppMessage::new(None, Body::ChainRequest { req: 4 });
        assert_eq!(AppMessage::from_bytes(&a.to_bytes()).unwrap(), a);
        let h = Header::new(2, DepSet::from([Vertex::new(ObjectId(1), 2, 9)]));
        let b = AppMessage::new(Some(h), Body::Vote { tx: 3, yes: true });
        assert_eq!(AppMessage::from_bytes(&b.to_bytes()).unwrap(), b);
        assert!(AppMessage::from_bytes(&[]).is_err());
        assert!(AppMessage::from_bytes(&[1, 9, 0, 0, 0]).is_err());
    }
}
