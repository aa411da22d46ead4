//! Record framing for the speculative log.
//!
//! Each record is `u8` kind, `u32` little-endian payload length, the payload,
//! then a `u32` little-endian CRC-32 over kind, length and payload.

pub const KIND_ENTRY: u8 = 1;
pub const KIND_COMMIT: u8 = 2;
pub const KIND_PRUNE: u8 = 3;

const OVERHEAD: usize = 1 + 4 + 4;

pub fn encode(kind: u8, payload: &[u8], out: &mut Vec<u8>) {
    let start = out.len();
    out.push(kind);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame<'a> {
    pub kind: u8,
    pub payload: &'a [u8],
    pub start: usize,
    pub end: usize,
}

/// Parses frames from the front of `bytes`, stopping at the first torn or
/// corrupt one.
pub fn scan(bytes: &[u8]) -> Vec<Frame<'_>> {
    let mut out = Vec::new();
    let mut pos = 0;
    while bytes.len() - pos >= OVERHEAD {
        let kind = bytes[pos];
        let len = u32::from_le_bytes(bytes[pos + 1..pos + 5].try_into().unwrap()) as usize;
        if bytes.len() - pos - OVERHEAD < len {
            break;
        }
        let body_end = pos + 5 + len;
        let crc = u32::from_le_bytes(bytes[body_end..body_end + 4].try_into().unwrap());
        if crc32fast::hash(&bytes[pos..body_end]) != crc || !(KIND_ENTRY..=KIND_PRUNE).contains(&kind) {
            break;
        }
        out.push(Frame { kind, payload: &bytes[pos + 5..body_end], start: pos, end: body_end + 4 });
        pos = body_end + 4;
    }
    out
}
