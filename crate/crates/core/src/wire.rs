//! Binary encoding. All integers are fixed-width little-endian; every set or
//! map is written as a `u32` count followed by its elements in ascending order.
//! Decoders accept exactly the bytes an encoder produces and nothing else.
//!
//! The layouts are documented in `docs/wire-format.md` at the repository root.

use std::collections::{BTreeMap, BTreeSet};

use crate::protocol::{CoordinatorMessage, MemberMessage};
use crate::{
    Boundary, ClusterEvent, ClusterEventKind, Cutoff, DepSet, GraphFragment, Header, ObjectId,
    RollbackPlan, Vertex,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("malformed header: {0}")]
    MalformedHeader(&'static str),
    #[error("malformed graph fragment: {0}")]
    MalformedFragment(&'static str),
    #[error("malformed record: {0}")]
    MalformedRecord(&'static str),
}

const VERTEX_LEN: usize = 24;

const EVENT_JOIN: u8 = 1;
const EVENT_REJOIN: u8 = 2;
const EVENT_DECISION: u8 = 3;

const MEMBER_CONNECT: u8 = 1;
const MEMBER_REPORT: u8 = 2;
const MEMBER_QUERY: u8 = 3;
const MEMBER_SEGMENTS: u8 = 4;

const COORD_ACK: u8 = 1;
const COORD_BOUNDARY: u8 = 2;
const COORD_ROLLBACK: u8 = 3;
const COORD_SEGMENT_REQUEST: u8 = 4;

pub fn encode_header(h: &Header) -> Vec<u8> {
    debug_assert!(h.is_well_formed());
    let mut out = Vec::with_capacity(12 + VERTEX_LEN * h.deps.len());
    put_header(&mut out, h);
    out
}

pub fn decode_header(bytes: &[u8]) -> Result<Header, CodecError> {
    let mut r = Reader::new(bytes);
    let h = get_header(&mut r).map_err(CodecError::MalformedHeader)?;
    r.finish().map_err(CodecError::MalformedHeader)?;
    Ok(h)
}

pub fn encode_fragment(f: &GraphFragment) -> Vec<u8> {
    debug_assert!(f.is_well_formed());
    let mut out = Vec::with_capacity(28 + VERTEX_LEN * f.out_edges.len());
    put_fragment(&mut out, f);
    out
}

pub fn decode_fragment(bytes: &[u8]) -> Result<GraphFragment, CodecError> {
    let mut r = Reader::new(bytes);
    let f = get_fragment(&mut r).map_err(CodecError::MalformedFragment)?;
    r.finish().map_err(CodecError::MalformedFragment)?;
    Ok(f)
}

pub fn encode_plan(p: &RollbackPlan) -> Vec<u8> {
    let mut out = Vec::new();
    put_plan(&mut out, p);
    out
}

pub fn decode_plan(bytes: &[u8]) -> Result<RollbackPlan, CodecError> {
    decode_whole(bytes, get_plan)
}

pub fn encode_event(e: &ClusterEvent) -> Vec<u8> {
    let mut out = Vec::new();
    put_u64(&mut out, e.sequence);
    match &e.kind {
        ClusterEventKind::MemberJoin { object, incarnation } => {
            out.push(EVENT_JOIN);
            put_u64(&mut out, object.0);
            put_u64(&mut out, *incarnation);
        }
        ClusterEventKind::MemberRejoin { object, incarnation } => {
            out.push(EVENT_REJOIN);
            put_u64(&mut out, object.0);
            put_u64(&mut out, *incarnation);
        }
        ClusterEventKind::RollbackDecision(plan) => {
            out.push(EVENT_DECISION);
            put_plan(&mut out, plan);
        }
    }
    out
}

pub fn decode_event(bytes: &[u8]) -> Result<ClusterEvent, CodecError> {
    decode_whole(bytes, |r| {
        let sequence = r.u64()?;
        let kind = match r.u8()? {
            EVENT_JOIN => ClusterEventKind::MemberJoin { object: ObjectId(r.u64()?), incarnation: r.u64()? },
            EVENT_REJOIN => ClusterEventKind::MemberRejoin { object: ObjectId(r.u64()?), incarnation: r.u64()? },
            EVENT_DECISION => ClusterEventKind::RollbackDecision(get_plan(r)?),
            _ => return Err("unknown event kind"),
        };
        Ok(ClusterEvent { sequence, kind })
    })
}

pub fn encode_member_message(m: &MemberMessage) -> Vec<u8> {
    let mut out = Vec::new();
    match m {
        MemberMessage::Connect { object, incarnation, durable_world_line, fragments } => {
            out.push(MEMBER_CONNECT);
            put_u64(&mut out, object.0);
            put_u64(&mut out, *incarnation);
            put_u64(&mut out, *durable_world_line);
            put_fragments(&mut out, fragments);
        }
        MemberMessage::Report { object, world_line, fragments } => {
            out.push(MEMBER_REPORT);
            put_u64(&mut out, object.0);
            put_u64(&mut out, *world_line);
            put_fragments(&mut out, fragments);
        }
        MemberMessage::BoundaryQuery { object, applied_seq } => {
            out.push(MEMBER_QUERY);
            put_u64(&mut out, object.0);
            put_u64(&mut out, *applied_seq);
        }
        MemberMessage::Segments { object, incarnation, applied_seq, fragments } => {
            out.push(MEMBER_SEGMENTS);
            put_u64(&mut out, object.0);
            put_u64(&mut out, *incarnation);
            put_u64(&mut out, *applied_seq);
            put_fragments(&mut out, fragments);
        }
    }
    out
}

pub fn decode_member_message(bytes: &[u8]) -> Result<MemberMessage, CodecError> {
    decode_whole(bytes, |r| {
        Ok(match r.u8()? {
            MEMBER_CONNECT => MemberMessage::Connect {
                object: ObjectId(r.u64()?),
                incarnation: r.u64()?,
                durable_world_line: r.u64()?,
                fragments: get_fragments(r)?,
            },
            MEMBER_REPORT => MemberMessage::Report {
                object: ObjectId(r.u64()?),
                world_line: r.u64()?,
                fragments: get_fragments(r)?,
            },
            MEMBER_QUERY => MemberMessage::BoundaryQuery { object: ObjectId(r.u64()?), applied_seq: r.u64()? },
            MEMBER_SEGMENTS => MemberMessage::Segments {
                object: ObjectId(r.u64()?),
                incarnation: r.u64()?,
                applied_seq: r.u64()?,
                fragments: get_fragments(r)?,
            },
            _ => return Err("unknown member message tag"),
        })
    })
}

pub fn encode_coordinator_message(m: &CoordinatorMessage) -> Vec<u8> {
    let mut out = Vec::new();
    match m {
        CoordinatorMessage::ConnectAck { object, incarnation, world_line, plans } => {
            out.push(COORD_ACK);
            put_u64(&mut out, object.0);
            put_u64(&mut out, *incarnation);
            put_u64(&mut out, *world_line);
            put_u32(&mut out, plans.len());
            for p in plans {
                put_plan(&mut out, p);
            }
        }
        CoordinatorMessage::Boundary(b) => {
            out.push(COORD_BOUNDARY);
            put_u64(&mut out, b.epoch);
            put_u64(&mut out, b.failure_seq);
            put_cutoffs(&mut out, &b.cutoffs);
        }
        CoordinatorMessage::Rollback(p) => {
            out.push(COORD_ROLLBACK);
            put_plan(&mut out, p);
        }
        CoordinatorMessage::SegmentRequest => out.push(COORD_SEGMENT_REQUEST),
    }
    out
}

pub fn decode_coordinator_message(bytes: &[u8]) -> Result<CoordinatorMessage, CodecError> {
    decode_whole(bytes, |r| {
        Ok(match r.u8()? {
            COORD_ACK => {
                let object = ObjectId(r.u64()?);
                let incarnation = r.u64()?;
                let world_line = r.u64()?;
                let n = r.count(1)?;
                let mut plans = Vec::with_capacity(n);
                for _ in 0..n {
                    plans.push(get_plan(r)?);
                }
                CoordinatorMessage::ConnectAck { object, incarnation, world_line, plans }
            }
            COORD_BOUNDARY => CoordinatorMessage::Boundary(Boundary {
                epoch: r.u64()?,
                failure_seq: r.u64()?,
                cutoffs: get_cutoffs(r)?,
            }),
            COORD_ROLLBACK => CoordinatorMessage::Rollback(get_plan(r)?),
            COORD_SEGMENT_REQUEST => CoordinatorMessage::SegmentRequest,
            _ => return Err("unknown coordinator message tag"),
        })
    })
}

fn decode_whole<T>(
    bytes: &[u8],
    f: impl FnOnce(&mut Reader<'_>) -> Result<T, &'static str>,
) -> Result<T, CodecError> {
    let mut r = Reader::new(bytes);
    let value = f(&mut r).map_err(CodecError::MalformedRecord)?;
    r.finish().map_err(CodecError::MalformedRecord)?;
    Ok(value)
}

fn put_u32(out: &mut Vec<u8>, n: usize) {
    let n = u32::try_from(n).expect("collection too large to encode");
    out.extend_from_slice(&n.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, n: u64) {
    out.extend_from_slice(&n.to_le_bytes());
}

fn put_vertex(out: &mut Vec<u8>, v: &Vertex) {
    put_u64(out, v.object.0);
    put_u64(out, v.world_line);
    put_u64(out, v.version);
}

fn put_vertices(out: &mut Vec<u8>, set: &BTreeSet<Vertex>) {
    put_u32(out, set.len());
    for v in set {
        put_vertex(out, v);
    }
}

fn put_header(out: &mut Vec<u8>, h: &Header) {
    put_u64(out, h.world_line);
    put_vertices(out, &h.deps);
}

fn put_fragment(out: &mut Vec<u8>, f: &GraphFragment) {
    put_vertex(out, &f.vertex);
    put_vertices(out, &f.out_edges);
}

fn put_fragments(out: &mut Vec<u8>, fragments: &[GraphFragment]) {
    put_u32(out, fragments.len());
    for f in fragments {
        put_fragment(out, f);
    }
}

fn put_cutoffs(out: &mut Vec<u8>, cutoffs: &BTreeMap<ObjectId, Cutoff>) {
    put_u32(out, cutoffs.len());
    for (o, c) in cutoffs {
        put_u64(out, o.0);
        put_u64(out, c.world_line);
        put_u64(out, c.version);
    }
}

fn put_plan(out: &mut Vec<u8>, p: &RollbackPlan) {
    put_u64(out, p.failure_seq);
    put_u64(out, p.failed.0);
    put_cutoffs(out, &p.targets);
    put_vertices(out, &p.lost);
    put_u32(out, p.unaffected.len());
    for o in &p.unaffected {
        put_u64(out, o.0);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], &'static str> {
        let end = self.pos.checked_add(n).ok_or("length overflow")?;
        let slice = self.bytes.get(self.pos..end).ok_or("truncated input")?;
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, &'static str> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, &'static str> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, &'static str> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Reads an element count and checks that enough bytes remain for
    /// `count * min_elem` bytes, so a corrupt count cannot force a huge
    /// allocation.
    fn count(&mut self, min_elem: usize) -> Result<usize, &'static str> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_elem) > self.bytes.len() - self.pos {
            return Err("count exceeds remaining input");
        }
        Ok(n)
    }

    fn finish(&self) -> Result<(), &'static str> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err("trailing bytes")
        }
    }
}

fn get_vertex(r: &mut Reader<'_>) -> Result<Vertex, &'static str> {
    Ok(Vertex::new(ObjectId(r.u64()?), r.u64()?, r.u64()?))
}

fn get_vertices(r: &mut Reader<'_>) -> Result<BTreeSet<Vertex>, &'static str> {
    let n = r.count(VERTEX_LEN)?;
    let mut set = BTreeSet::new();
    let mut prev: Option<Vertex> = None;
    for _ in 0..n {
        let v = get_vertex(r)?;
        if prev.is_some_and(|p| p >= v) {
            return Err("vertices not strictly ascending");
        }
        prev = Some(v);
        set.insert(v);
    }
    Ok(set)
}

fn get_header(r: &mut Reader<'_>) -> Result<Header, &'static str> {
    let world_line = r.u64()?;
    let deps: DepSet = get_vertices(r)?;
    let h = Header { world_line, deps };
    if !h.is_well_formed() {
        return Err("dependency newer than header world-line");
    }
    Ok(h)
}

fn get_fragment(r: &mut Reader<'_>) -> Result<GraphFragment, &'static str> {
    let vertex = get_vertex(r)?;
    let out_edges = get_vertices(r)?;
    if out_edges.contains(&vertex) {
        return Err("self edge");
    }
    Ok(GraphFragment { vertex, out_edges })
}

fn get_fragments(r: &mut Reader<'_>) -> Result<Vec<GraphFragment>, &'static str> {
    let n = r.count(VERTEX_LEN + 4)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(get_fragment(r)?);
    }
    Ok(out)
}

fn get_object_ids(r: &mut Reader<'_>) -> Result<BTreeSet<ObjectId>, &'static str> {
    let n = r.count(8)?;
    let mut set = BTreeSet::new();
    let mut prev: Option<ObjectId> = None;
    for _ in 0..n {
        let o = ObjectId(r.u64()?);
        if prev.is_some_and(|p| p >= o) {
            return Err("object ids not strictly ascending");
        }
        prev = Some(o);
        set.insert(o);
    }
    Ok(set)
}

fn get_cutoffs(r: &mut Reader<'_>) -> Result<BTreeMap<ObjectId, Cutoff>, &'static str> {
    let n = r.count(VERTEX_LEN)?;
    let mut map = BTreeMap::new();
    let mut prev: Option<ObjectId> = None;
    for _ in 0..n {
        let o = ObjectId(r.u64()?);
        if prev.is_some_and(|p| p >= o) {
            return Err("cutoff keys not strictly ascending");
        }
        prev = Some(o);
        map.insert(o, Cutoff::new(r.u64()?, r.u64()?));
    }
    Ok(map)
}

fn get_plan(r: &mut Reader<'_>) -> Result<RollbackPlan, &'static str> {
    Ok(RollbackPlan {
        failure_seq: r.u64()?,
        failed: ObjectId(r.u64()?),
        targets: get_cutoffs(r)?,
        lost: get_vertices(r)?,
        unaffected: get_object_ids(r)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(o: u64, w: u64, n: u64) -> Vertex {
        Vertex::new(ObjectId(o), w, n)
    }

    #[test]
    fn empty_header_round_trips() {
        let h = Header::empty(0);
        let b = encode_header(&h);
        assert_eq!(b.len(), 12);
        assert_eq!(decode_header(&b).unwrap(), h);
    }

    #[test]
    fn singleton_header_round_trips() {
        let h = Header::new(1, DepSet::from([v(1, 1, 2)]));
        assert_eq!(decode_header(&encode_header(&h)).unwrap(), h);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(decode_header(&[]), Err(CodecError::MalformedHeader(_))));
    }

    #[test]
    fn trailing_byte_is_rejected() {
        let mut b = encode_header(&Header::new(3, DepSet::from([v(1, 2, 2)])));
        b.push(0);
        assert_eq!(decode_header(&b), Err(CodecError::MalformedHeader("trailing bytes")));
    }

    #[test]
    fn every_truncation_is_rejected() {
        let b = encode_header(&Header::new(3, DepSet::from([v(1, 2, 2), v(4, 0, 9)])));
        for n in 0..b.len() {
            assert!(decode_header(&b[..n]).is_err(), "prefix of length {n} accepted");
        }
    }

    #[test]
    fn unsorted_or_duplicate_deps_are_rejected() {
        let mut b = Vec::new();
        put_u64(&mut b, 5);
        put_u32(&mut b, 2);
        put_vertex(&mut b, &v(2, 0, 1));
        put_vertex(&mut b, &v(1, 0, 1));
        assert!(decode_header(&b).is_err());

        let mut b = Vec::new();
        put_u64(&mut b, 5);
        put_u32(&mut b, 2);
        put_vertex(&mut b, &v(1, 0, 1));
        put_vertex(&mut b, &v(1, 0, 1));
        assert!(decode_header(&b).is_err());
    }

    #[test]
    fn huge_count_is_rejected_without_allocating() {
        let mut b = Vec::new();
        put_u64(&mut b, 0);
        b.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_header(&b).is_err());
    }

    #[test]
    fn dep_from_future_world_line_is_rejected() {
        let mut b = Vec::new();
        put_u64(&mut b, 0);
        put_u32(&mut b, 1);
        put_vertex(&mut b, &v(1, 1, 1));
        assert!(decode_header(&b).is_err());
    }

    #[test]
    fn self_edge_fragment_is_rejected() {
        let mut b = Vec::new();
        put_vertex(&mut b, &v(1, 0, 1));
        put_u32(&mut b, 1);
        put_vertex(&mut b, &v(1, 0, 1));
        assert!(matches!(decode_fragment(&b), Err(CodecError::MalformedFragment(_))));
    }

    #[test]
    fn unknown_tags_are_rejected() {
        assert!(decode_member_message(&[9]).is_err());
        assert!(decode_coordinator_message(&[0]).is_err());
        let mut b = Vec::new();
        put_u64(&mut b, 0);
        b.push(7);
        assert!(decode_event(&b).is_err());
    }
}
