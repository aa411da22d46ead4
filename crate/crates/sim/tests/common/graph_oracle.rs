//! Brute-force reference for boundary search and rollback cascades over
//! small random dependency graphs.

use std::collections::{BTreeMap, BTreeSet};

use dse_coordinator::DependencyView;
use dse_core::{Cutoff, DepSet, GraphFragment, ObjectId, Vertex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Graph {
    /// Every vertex with its edges; one vertex per (object, version).
    pub all: BTreeMap<Vertex, DepSet>,
    /// The subset the coordinator has heard about.
    pub reported: BTreeSet<Vertex>,
    pub objects: Vec<ObjectId>,
}

pub fn random_graph(seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=4u64);
    let objects: Vec<ObjectId> = (1..=m).map(ObjectId).collect();
    let mut budget = rng.gen_range(1..=12usize);
    let mut lens = BTreeMap::new();
    for &o in &objects {
        let len = if budget == 0 { 0 } else { rng.gen_range(0..=budget.min(6)) };
        budget -= len;
        lens.insert(o, len as u64);
    }
    let mut ids = Vec::new();
    for (&o, &len) in &lens {
        let mut wl = 0;
        for ver in 1..=len {
            if rng.gen_bool(0.15) {
                wl += 1;
            }
            ids.push(Vertex::new(o, wl, ver));
        }
    }
    let by_version: BTreeMap<(ObjectId, u64), Vertex> = ids.iter().map(|v| ((v.object, v.version), *v)).collect();
    let mut all = BTreeMap::new();
    for &v in &ids {
        let mut edges = DepSet::new();
        for _ in 0..rng.gen_range(0..=3) {
            let o = objects[rng.gen_range(0..objects.len())];
            let ver = rng.gen_range(0..=lens[&o] + 1);
            let t = match by_version.get(&(o, ver)) {
                Some(t) if rng.gen_bool(0.9) => *t,
                Some(t) => Vertex::new(o, t.world_line + 1, ver),
                None => Vertex::new(o, 0, ver),
            };
            if t != v {
                edges.insert(t);
            }
        }
        all.insert(v, edges);
    }
    let reported = ids.iter().copied().filter(|_| rng.gen_bool(0.85)).collect();
    Graph { all, reported, objects }
}

pub fn view_of(g: &Graph) -> DependencyView {
    let mut view = DependencyView::new();
    for v in &g.reported {
        view.report(&GraphFragment::new(*v, g.all[v].clone())).unwrap();
    }
    view
}

/// Largest subset of `universe` closed under edges and version
/// predecessors, found by enumerating every subset.
pub fn max_closure(g: &Graph, universe: &BTreeSet<Vertex>) -> BTreeMap<ObjectId, Cutoff> {
    let items: Vec<Vertex> = universe.iter().copied().collect();
    assert!(items.len() <= 16, "enumeration is exponential");
    let closed = |mask: u32| {
        let has = |x: &Vertex| items.iter().position(|y| y == x).is_some_and(|i| mask & (1 << i) != 0);
        let has_version = |o: ObjectId, ver: u64| {
            items.iter().enumerate().any(|(i, y)| mask & (1 << i) != 0 && y.object == o && y.version == ver)
        };
        items.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).all(|(_, v)| {
            (v.version == 1 || has_version(v.object, v.version - 1))
                && g.all[v].iter().all(|t| t.version == 0 || has(t))
        })
    };
    let mut union = 0u32;
    for mask in 0..(1u32 << items.len()) {
        if closed(mask) {
            union |= mask;
        }
    }
    assert!(closed(union), "closed sets are closed under union");
    let mut out: BTreeMap<ObjectId, Cutoff> = BTreeMap::new();
    for (i, v) in items.iter().enumerate() {
        if union & (1 << i) != 0 && out.get(&v.object).is_none_or(|c| c.version < v.version) {
            out.insert(v.object, Cutoff::new(v.world_line, v.version));
        }
    }
    out
}

/// Vertices of `universe` that can reach a vertex of `failed` outside
/// `kept` by following edges and version predecessors.
pub fn cascade(g: &Graph, universe: &BTreeSet<Vertex>, failed: ObjectId, kept: &BTreeSet<Vertex>) -> BTreeSet<Vertex> {
    let seed = |x: &Vertex| x.object == failed && x.version > 0 && !kept.contains(x);
    let succ = |v: &Vertex| -> Vec<Vertex> {
        let mut s: Vec<Vertex> = g.all[v].iter().copied().collect();
        if let Some(p) = universe.iter().find(|p| p.object == v.object && p.version + 1 == v.version) {
            s.push(*p);
        }
        s
    };
    universe
        .iter()
        .copied()
        .filter(|start| {
            let mut seen = BTreeSet::new();
            let mut stack = vec![*start];
            while let Some(x) = stack.pop() {
                if seed(&x) {
                    return true;
                }
                if seen.insert(x) && universe.contains(&x) {
                    stack.extend(succ(&x));
                }
            }
            false
        })
        .collect()
}

/// Outcome of one graph: `None` on agreement, a description otherwise.
pub fn check_graph(seed: u64) -> Option<String> {
    let g = random_graph(seed);
    let view = view_of(&g);
    let got = view.compute_boundary();
    let want = max_closure(&g, &g.reported);
    if got != want {
        return Some(format!("graph {seed}: boundary {got:?}, expected {want:?}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let failed = g.objects[rng.gen_range(0..g.objects.len())];
    let chain: Vec<Vertex> = g.all.keys().copied().filter(|v| v.object == failed).collect();
    let k = rng.gen_range(0..=chain.len());
    let kept: BTreeSet<Vertex> = chain[..k].iter().copied().collect();
    let surviving: Vec<GraphFragment> = kept.iter().map(|v| GraphFragment::new(*v, g.all[v].clone())).collect();
    let members: BTreeSet<ObjectId> = g.objects.iter().copied().collect();
    let mut view = view;
    let plan = view.plan_rollback(failed, &surviving, &members);

    let universe: BTreeSet<Vertex> = g.reported.union(&kept).copied().collect();
    let lost = cascade(&g, &universe, failed, &kept);
    if plan.lost != lost {
        return Some(format!("graph {seed}: lost {:?}, expected {lost:?}", plan.lost));
    }
    let rest: BTreeSet<Vertex> = universe.difference(&lost).copied().collect();
    let closure = max_closure(&g, &rest);
    let want: BTreeMap<ObjectId, Cutoff> =
        members.iter().map(|&m| (m, closure.get(&m).copied().unwrap_or_default())).collect();
    if plan.targets != want {
        return Some(format!("graph {seed}: targets {:?}, expected {want:?}", plan.targets));
    }
    None
}
