use std::collections::{BTreeMap, BTreeSet};

use dse_core::protocol::{CoordinatorMessage, MemberMessage};
use dse_core::wire::*;
use dse_core::*;
use proptest::prelude::*;

fn vertex() -> impl Strategy<Value = Vertex> {
    (0u64..4, 0u64..3, 1u64..6).prop_map(|(o, w, n)| Vertex::new(ObjectId(o), w, n))
}

fn dep_set() -> impl Strategy<Value = DepSet> {
    prop::collection::btree_set(vertex(), 0..8)
}

fn header() -> impl Strategy<Value = Header> {
    (dep_set(), 0u64..3).prop_map(|(deps, extra)| {
        let wl = deps.iter().map(|d| d.world_line).max().unwrap_or(0) + extra;
        Header::new(wl, deps)
    })
}

fn fragment() -> impl Strategy<Value = GraphFragment> {
    (vertex(), dep_set()).prop_map(|(v, e)| GraphFragment::new(v, e))
}

fn cutoffs() -> impl Strategy<Value = BTreeMap<ObjectId, Cutoff>> {
    prop::collection::btree_map((0u64..6).prop_map(ObjectId), (0u64..4, 0u64..9).prop_map(|(w, v)| Cutoff::new(w, v)), 0..5)
}

fn plan() -> impl Strategy<Value = RollbackPlan> {
    (1u64..50, 0u64..6, cutoffs(), dep_set(), prop::collection::btree_set((0u64..6).prop_map(ObjectId), 0..4)).prop_map(
        |(failure_seq, failed, targets, lost, unaffected)| RollbackPlan {
            failure_seq,
            failed: ObjectId(failed),
            targets,
            lost,
            unaffected,
        },
    )
}

fn member_message() -> impl Strategy<Value = MemberMessage> {
    let frags = || prop::collection::vec(fragment(), 0..4);
    prop_oneof![
        (0u64..5, 0u64..5, 0u64..5, frags()).prop_map(|(o, i, w, fragments)| MemberMessage::Connect {
            object: ObjectId(o),
            incarnation: i,
            durable_world_line: w,
            fragments
        }),
        (0u64..5, 0u64..5, frags())
            .prop_map(|(o, w, fragments)| MemberMessage::Report { object: ObjectId(o), world_line: w, fragments }),
        (0u64..5, 0u64..5).prop_map(|(o, s)| MemberMessage::BoundaryQuery { object: ObjectId(o), applied_seq: s }),
        (0u64..5, 0u64..5, 0u64..5, frags()).prop_map(|(o, i, s, fragments)| MemberMessage::Segments {
            object: ObjectId(o),
            incarnation: i,
            applied_seq: s,
            fragments
        }),
    ]
}

fn coordinator_message() -> impl Strategy<Value = CoordinatorMessage> {
    prop_oneof![
        (0u64..5, 0u64..5, 0u64..5, prop::collection::vec(plan(), 0..3)).prop_map(|(o, i, w, plans)| {
            CoordinatorMessage::ConnectAck { object: ObjectId(o), incarnation: i, world_line: w, plans }
        }),
        (0u64..9, 0u64..9, cutoffs())
            .prop_map(|(epoch, failure_seq, cutoffs)| CoordinatorMessage::Boundary(Boundary { epoch, failure_seq, cutoffs })),
        plan().prop_map(CoordinatorMessage::Rollback),
        Just(CoordinatorMessage::SegmentRequest),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn header_round_trips(h in header()) {
        let bytes = encode_header(&h);
        let back = decode_header(&bytes).unwrap();
        prop_assert_eq!(&back, &h);
        prop_assert_eq!(encode_header(&back), bytes);
    }

    #[test]
    fn fragment_round_trips(f in fragment()) {
        let bytes = encode_fragment(&f);
        let back = decode_fragment(&bytes).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(encode_fragment(&back), bytes);
    }

    #[test]
    fn header_decoder_rejects_damaged_input(h in header(), cut in 0usize..200, extra in any::<u8>()) {
        let bytes = encode_header(&h);
        let cut = cut % bytes.len();
        prop_assert!(decode_header(&bytes[..cut]).is_err());
        let mut longer = bytes.clone();
        longer.push(extra);
        prop_assert!(decode_header(&longer).is_err());
    }

    #[test]
    fn header_decoder_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..120)) {
        if let Ok(h) = decode_header(&bytes) {
            prop_assert_eq!(encode_header(&h), bytes);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn plan_and_event_round_trip(p in plan(), seq in 0u64..100) {
        prop_assert_eq!(decode_plan(&encode_plan(&p)).unwrap(), p.clone());
        let e = ClusterEvent { sequence: seq, kind: ClusterEventKind::RollbackDecision(p) };
        prop_assert_eq!(decode_event(&encode_event(&e)).unwrap(), e);
    }

    #[test]
    fn member_messages_round_trip(m in member_message()) {
        prop_assert_eq!(decode_member_message(&encode_member_message(&m)).unwrap(), m);
    }

    #[test]
    fn coordinator_messages_round_trip(m in coordinator_message()) {
        prop_assert_eq!(decode_coordinator_message(&encode_coordinator_message(&m)).unwrap(), m);
    }

    #[test]
    fn merge_is_commutative(a in dep_set(), b in dep_set()) {
        prop_assert_eq!(merge_deps(&a, &b), merge_deps(&b, &a));
    }

    #[test]
    fn merge_is_associative(a in dep_set(), b in dep_set(), c in dep_set()) {
        prop_assert_eq!(merge_deps(&merge_deps(&a, &b), &c), merge_deps(&a, &merge_deps(&b, &c)));
    }

    #[test]
    fn merge_is_idempotent(a in dep_set()) {
        let m = merge_deps(&a, &a);
        prop_assert_eq!(merge_deps(&m, &m), m);
    }

    #[test]
    fn merge_keeps_one_vertex_per_chain(a in dep_set(), b in dep_set()) {
        let m = merge_deps(&a, &b);
        let chains: BTreeSet<_> = m.iter().map(|v| (v.object, v.world_line)).collect();
        prop_assert_eq!(chains.len(), m.len());
        for v in a.iter().chain(b.iter()) {
            prop_assert!(m.iter().any(|w| w.object == v.object && w.world_line == v.world_line && w.version >= v.version));
        }
    }

    /// On an explicit graph where every vertex points to its predecessor on
    /// the same chain, plus arbitrary extra edges, the set of vertices reachable
    /// from the merged set equals the set reachable from the plain union.
    #[test]
    fn subsumption_preserves_closure(
        a in dep_set(),
        b in dep_set(),
        extra in prop::collection::vec((vertex(), vertex()), 0..20),
    ) {
        let mut edges: BTreeMap<Vertex, Vec<Vertex>> = BTreeMap::new();
        for o in 0..4 {
            for w in 0..3 {
                for n in 2..6 {
                    edges.entry(Vertex::new(ObjectId(o), w, n)).or_default().push(Vertex::new(ObjectId(o), w, n - 1));
                }
            }
        }
        for (from, to) in extra {
            edges.entry(from).or_default().push(to);
        }
        let reach = |start: &BTreeSet<Vertex>| {
            let mut seen = start.clone();
            let mut stack: Vec<Vertex> = start.iter().copied().collect();
            while let Some(v) = stack.pop() {
                for w in edges.get(&v).into_iter().flatten() {
                    if seen.insert(*w) {
                        stack.push(*w);
                    }
                }
            }
            seen
        };
        let union: BTreeSet<Vertex> = a.union(&b).copied().collect();
        prop_assert_eq!(reach(&merge_deps(&a, &b)), reach(&union));
    }
}
