use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use dse_core::wire::{decode_event, decode_fragment, decode_header, encode_event, encode_fragment, encode_header};
use dse_core::{ClusterEvent, ClusterEventKind, Cutoff, DepSet, GraphFragment, Header, ObjectId, RollbackPlan, Vertex};

fn golden(name: &str) -> Vec<u8> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    let digits: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.chars().filter(|c| !c.is_whitespace()))
        .collect();
    hex::decode(digits).unwrap()
}

fn v(o: u64, w: u64, n: u64) -> Vertex {
    Vertex::new(ObjectId(o), w, n)
}

#[test]
fn header_empty_matches_golden() {
    let h = Header::empty(0);
    assert_eq!(encode_header(&h), golden("header_empty.hex"));
    assert_eq!(decode_header(&golden("header_empty.hex")).unwrap(), h);
}

#[test]
fn header_singleton_matches_golden() {
    let h = Header::new(1, DepSet::from([v(1, 1, 2)]));
    assert_eq!(encode_header(&h), golden("header_wl1_a1_2.hex"));
    assert_eq!(decode_header(&golden("header_wl1_a1_2.hex")).unwrap(), h);
}

#[test]
fn fragment_matches_golden() {
    let f = GraphFragment::new(v(2, 0, 5), DepSet::from([v(3, 0, 1), v(1, 0, 3)]));
    assert_eq!(encode_fragment(&f), golden("fragment_b5.hex"));
    assert_eq!(decode_fragment(&golden("fragment_b5.hex")).unwrap(), f);
}

#[test]
fn join_event_matches_golden() {
    let e = ClusterEvent { sequence: 0, kind: ClusterEventKind::MemberJoin { object: ObjectId(3), incarnation: 1 } };
    assert_eq!(encode_event(&e), golden("event_join.hex"));
    assert_eq!(decode_event(&golden("event_join.hex")).unwrap(), e);
}

#[test]
fn decision_event_matches_golden() {
    let plan = RollbackPlan {
        failure_seq: 2,
        failed: ObjectId(1),
        targets: BTreeMap::from([(ObjectId(1), Cutoff::new(1, 3)), (ObjectId(2), Cutoff::new(0, 7))]),
        lost: BTreeSet::from([v(1, 1, 4)]),
        unaffected: BTreeSet::from([ObjectId(2)]),
    };
    let e = ClusterEvent { sequence: 4, kind: ClusterEventKind::RollbackDecision(plan) };
    assert_eq!(encode_event(&e), golden("event_decision.hex"));
    assert_eq!(decode_event(&golden("event_decision.hex")).unwrap(), e);
}
