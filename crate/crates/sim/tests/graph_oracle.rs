mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::graph_oracle::{cascade, check_graph, max_closure, Graph};
use dse_core::{Cutoff, DepSet, ObjectId, Vertex};

fn v(o: u64, w: u64, n: u64) -> Vertex {
    Vertex::new(ObjectId(o), w, n)
}

fn graph(edges: &[(Vertex, &[Vertex])]) -> Graph {
    let all: BTreeMap<Vertex, DepSet> = edges.iter().map(|(x, e)| (*x, e.iter().copied().collect())).collect();
    let objects: BTreeSet<ObjectId> = all.keys().map(|x| x.object).collect();
    Graph { reported: all.keys().copied().collect(), all, objects: objects.into_iter().collect() }
}

#[test]
fn reference_closure_keeps_cycles_and_drops_dangling_edges() {
    let g = graph(&[(v(1, 0, 1), &[v(2, 0, 1)]), (v(2, 0, 1), &[v(1, 0, 1)]), (v(2, 0, 2), &[v(3, 0, 1)])]);
    let b = max_closure(&g, &g.reported);
    assert_eq!(b, BTreeMap::from([(ObjectId(1), Cutoff::new(0, 1)), (ObjectId(2), Cutoff::new(0, 1))]));
}

#[test]
fn reference_cascade_follows_edges_and_predecessors() {
    let g = graph(&[(v(1, 0, 1), &[]), (v(1, 0, 2), &[]), (v(2, 0, 1), &[v(1, 0, 2)]), (v(2, 0, 2), &[])]);
    let kept = BTreeSet::from([v(1, 0, 1)]);
    let lost = cascade(&g, &g.reported, ObjectId(1), &kept);
    assert_eq!(lost, BTreeSet::from([v(1, 0, 2), v(2, 0, 1), v(2, 0, 2)]));
}

#[test]
fn boundary_and_cascade_match_enumeration_on_random_graphs() {
    let bad: Vec<String> = (0..1000).filter_map(check_graph).collect();
    assert!(bad.is_empty(), "{} mismatches, first: {}", bad.len(), bad[0]);
}


/// The random corpus must exercise cycles, gaps, dangling edges and
/// non-trivial cascades, or the comparison above proves little.
#[test]
fn random_corpus_covers_interesting_shapes() {
    let (mut cycles, mut gaps, mut dangling, mut partial) = (0, 0, 0, 0);
    for seed in 0..1000 {
        let g = common::graph_oracle::random_graph(seed);
        let cross = |a: &Vertex, b: &Vertex| g.all[a].contains(b) && g.all.get(b).is_some_and(|e| e.contains(a));
        if g.all.keys().any(|a| g.all.keys().any(|b| a.object != b.object && cross(a, b))) {
            cycles += 1;
        }
        if g.reported.len() < g.all.len() {
            gaps += 1;
        }
        if g.all.values().flatten().any(|t| t.version > 0 && !g.all.contains_key(t)) {
            dangling += 1;
        }
        let b = max_closure(&g, &g.reported);
        let inside: u64 = b.values().map(|c| c.version).sum();
        if inside > 0 && (inside as usize) < g.reported.len() {
            partial += 1;
        }
    }
    assert!(cycles >= 20 && gaps >= 300 && dangling >= 300 && partial >= 100, "{cycles} {gaps} {dangling} {partial}");
}
