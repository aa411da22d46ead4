//! The coordinator's view of the dependency graph.
//!
//! Each object contributes a chain of reported vertices indexed by version.
//! Versions at or below the chain's floor have been pruned; they are inside
//! every boundary and never roll back. Every vertex implicitly depends on the
//! previous version of its object.

use std::collections::{BTreeMap, BTreeSet};

use dse_core::{Cutoff, DepSet, GraphFragment, ObjectId, RollbackPlan, Vertex};

use crate::CoordinatorError;

#[derive(Clone, Debug, Default)]
struct Chain {
    floor: u64,
    entries: BTreeMap<u64, Entry>,
}

#[derive(Clone, Debug)]
struct Entry {
    world_line: u64,
    edges: DepSet,
}

impl Chain {
    fn vertex(&self, object: ObjectId, version: u64) -> Option<Vertex> {
        self.entries.get(&version).map(|e| Vertex::new(object, e.world_line, version))
    }

    /// Highest version reachable from the floor without a gap.
    fn contiguous_top(&self) -> u64 {
        let mut top = self.floor;
        for &v in self.entries.range(self.floor + 1..).map(|(v, _)| v) {
            if v != top + 1 {
                break;
            }
            top = v;
        }
        top
    }
}

#[derive(Clone, Debug, Default)]
pub struct DependencyView {
    chains: BTreeMap<ObjectId, Chain>,
    /// Plan `k` is stored at index `k - 1`.
    plans: Vec<RollbackPlan>,
}

impl DependencyView {
    pub fn new() -> Self {
        Self::default()
    }

    /// A view that knows past decisions but no vertices, as after log replay.
    pub fn with_plans(plans: Vec<RollbackPlan>) -> Self {
        debug_assert!(plans.iter().enumerate().all(|(i, p)| p.failure_seq == i as u64 + 1));
        Self { chains: BTreeMap::new(), plans }
    }

    pub fn failure_seq(&self) -> u64 {
        self.plans.len() as u64
    }

    pub fn plans(&self) -> &[RollbackPlan] {
        &self.plans
    }

    /// Plans with a failure sequence number above `seq`.
    pub fn plans_after(&self, seq: u64) -> &[RollbackPlan] {
        let start = (seq as usize).min(self.plans.len());
        &self.plans[start..]
    }

    /// True when some decided plan discards `v`.
    pub fn is_dead(&self, v: &Vertex) -> bool {
        self.plans_after(v.world_line).iter().any(|p| p.rolls_back(v))
    }

    pub fn floor(&self, object: ObjectId) -> u64 {
        self.chains.get(&object).map_or(0, |c| c.floor)
    }

    /// Records a persisted fragment. Returns whether the view changed.
    pub fn report(&mut self, f: &GraphFragment) -> Result<bool, CoordinatorError> {
        if self.is_dead(&f.vertex) {
            return Err(CoordinatorError::StaleWorldLine(f.vertex));
        }
        let chain = self.chains.entry(f.vertex.object).or_default();
        if f.vertex.version <= chain.floor {
            return Ok(false);
        }
        match chain.entries.get(&f.vertex.version) {
            Some(e) if e.world_line >= f.vertex.world_line => Ok(false),
            _ => {
                chain.entries.insert(f.vertex.version, Entry { world_line: f.vertex.world_line, edges: f.out_edges.clone() });
                Ok(true)
            }
        }
    }

    /// Declares every version of `object` up to `floor` pruned.
    pub fn raise_floor(&mut self, object: ObjectId, floor: u64) {
        let chain = self.chains.entry(object).or_default();
        if floor > chain.floor {
            chain.floor = floor;
            chain.entries = chain.entries.split_off(&(floor + 1));
        }
    }

    /// Drops everything below each cutoff except the cutoff itself, which
    /// stays as the retained restore point.
    pub fn prune(&mut self, cutoffs: &BTreeMap<ObjectId, Cutoff>) {
        for (&o, c) in cutoffs {
            self.raise_floor(o, c.version.saturating_sub(1));
        }
    }

    /// Every reported vertex currently in the view with its edges.
    pub fn vertices(&self) -> impl Iterator<Item = (Vertex, &DepSet)> + '_ {
        self.chains.iter().flat_map(|(&o, c)| {
            c.entries.iter().map(move |(&v, e)| (Vertex::new(o, e.world_line, v), &e.edges))
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.chains.values().map(|c| c.entries.len()).sum()
    }

    /// Largest set of reported vertices closed under edges and chain
    /// precedence, as a per-object cutoff.
    pub fn compute_boundary(&self) -> BTreeMap<ObjectId, Cutoff> {
        let mut top: BTreeMap<ObjectId, u64> = self.chains.iter().map(|(&o, c)| (o, c.contiguous_top())).collect();
        loop {
            let mut changed = false;
            for (&o, chain) in &self.chains {
                let limit = top[&o];
                if limit <= chain.floor {
                    continue;
                }
                let failing = chain
                    .entries
                    .range(chain.floor + 1..=limit)
                    .find(|(_, e)| e.edges.iter().any(|t| !self.satisfied(t, &top)))
                    .map(|(&v, _)| v);
                if let Some(v) = failing {
                    top.insert(o, v - 1);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        top.into_iter()
            .filter_map(|(o, t)| {
                let chain = &self.chains[&o];
                chain.vertex(o, t).map(|v| (o, Cutoff::new(v.world_line, v.version)))
            })
            .collect()
    }

    fn satisfied(&self, t: &Vertex, top: &BTreeMap<ObjectId, u64>) -> bool {
        if self.is_dead(t) {
            return false;
        }
        // Version 0 is the initial state, recoverable even for an object
        // that has reported nothing.
        let Some(chain) = self.chains.get(&t.object) else { return t.version == 0 };
        if t.version <= chain.floor {
            return true;
        }
        t.version <= top[&t.object] && chain.entries.get(&t.version).is_some_and(|e| e.world_line == t.world_line)
    }

    /// Decides the rollback caused by the restart of `failed`, whose durable
    /// storage still holds `surviving`. The plan is appended to the view's
    /// history and the view is cut back to the plan's targets.
    pub fn plan_rollback(
        &mut self,
        failed: ObjectId,
        surviving: &[GraphFragment],
        members: &BTreeSet<ObjectId>,
    ) -> RollbackPlan {
        for f in surviving {
            if f.vertex.object == failed {
                // Fragments discarded by an earlier plan are truncated when the
                // member applies that plan.
                let _ = self.report(f);
            }
        }
        let kept: BTreeSet<(u64, u64)> = surviving
            .iter()
            .filter(|f| f.vertex.object == failed && !self.is_dead(&f.vertex))
            .map(|f| (f.vertex.world_line, f.vertex.version))
            .collect();
        let failed_floor = self.floor(failed);
        let failed_lost = |v: &Vertex| {
            v.object == failed && v.version > failed_floor && !kept.contains(&(v.world_line, v.version))
        };

        let mut lost: BTreeSet<Vertex> = self.vertices().map(|(v, _)| v).filter(|v| failed_lost(v)).collect();
        loop {
            let mut added = Vec::new();
            for (&o, chain) in &self.chains {
                for (&ver, e) in &chain.entries {
                    let v = Vertex::new(o, e.world_line, ver);
                    if lost.contains(&v) {
                        continue;
                    }
                    let previous_lost = chain.vertex(o, ver - 1).is_some_and(|p| lost.contains(&p))
                        || (o == failed && ver - 1 > failed_floor && !kept.iter().any(|&(_, kv)| kv == ver - 1));
                    if previous_lost || e.edges.iter().any(|t| lost.contains(t) || failed_lost(t)) {
                        added.push(v);
                    }
                }
            }
            if added.is_empty() {
                break;
            }
            lost.extend(added);
        }

        for v in &lost {
            if let Some(chain) = self.chains.get_mut(&v.object) {
                chain.entries.remove(&v.version);
            }
        }
        let closure = self.compute_boundary();
        let mut targets = BTreeMap::new();
        let mut unaffected = BTreeSet::new();
        let objects: BTreeSet<ObjectId> = members.iter().chain(self.chains.keys()).copied().collect();
        for m in objects {
            let floor = self.floor(m);
            let target = closure.get(&m).copied().unwrap_or(Cutoff::new(0, floor));
            debug_assert!(floor == 0 || closure.contains_key(&m), "retained restore point missing for {m}");
            targets.insert(m, target);
            if let Some(chain) = self.chains.get_mut(&m) {
                let above = chain.entries.split_off(&(target.version + 1));
                if above.is_empty() && !lost.iter().any(|v| v.object == m) {
                    unaffected.insert(m);
                }
            } else {
                unaffected.insert(m);
            }
        }
        let plan = RollbackPlan { failure_seq: self.failure_seq() + 1, failed, targets, lost, unaffected };
        self.plans.push(plan.clone());
        plan
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(o: u64, w: u64, n: u64) -> Vertex {
        Vertex::new(ObjectId(o), w, n)
    }

    fn frag(vx: Vertex, edges: &[Vertex]) -> GraphFragment {
        GraphFragment::new(vx, edges.iter().copied().collect())
    }

    const A: ObjectId = ObjectId(1);
    const B: ObjectId = ObjectId(2);

    #[test]
    fn empty_view_has_empty_boundary() {
        assert!(DependencyView::new().compute_boundary().is_empty());
    }

    #[test]
    fn edge_to_unreported_vertex_excludes_source() {
        let mut g = DependencyView::new();
        g.report(&frag(v(1, 0, 1), &[v(2, 0, 1)])).unwrap();
        assert!(g.compute_boundary().is_empty());
    }

    #[test]
    fn two_cycle_of_persisted_vertices_is_inside() {
        let mut g = DependencyView::new();
        g.report(&frag(v(1, 0, 1), &[v(2, 0, 1)])).unwrap();
        g.report(&frag(v(2, 0, 1), &[v(1, 0, 1)])).unwrap();
        let b = g.compute_boundary();
        assert_eq!(b[&A], Cutoff::new(0, 1));
        assert_eq!(b[&B], Cutoff::new(0, 1));
    }

    #[test]
    fn version_gap_stops_the_chain() {
        let mut g = DependencyView::new();
        g.report(&frag(v(1, 0, 1), &[])).unwrap();
        g.report(&frag(v(1, 0, 3), &[])).unwrap();
        assert_eq!(g.compute_boundary()[&A], Cutoff::new(0, 1));
    }

    #[test]
    fn reported_edges_are_immutable() {
        let mut g = DependencyView::new();
        assert!(g.report(&frag(v(1, 0, 2), &[v(2, 0, 1)])).unwrap());
        assert!(!g.report(&frag(v(1, 0, 2), &[])).unwrap());
        let (_, edges) = g.vertices().next().unwrap();
        assert_eq!(edges.len(), 1);
    }

    #[test]
    fn isolated_failure_rolls_back_only_the_failed_tail() {
        let mut g = DependencyView::new();
        g.report(&frag(v(1, 0, 1), &[])).unwrap();
        g.report(&frag(v(1, 0, 2), &[])).unwrap();
        g.report(&frag(v(2, 0, 1), &[])).unwrap();
        let members = BTreeSet::from([A, B]);
        let plan = g.plan_rollback(A, &[frag(v(1, 0, 1), &[]), frag(v(1, 0, 2), &[])], &members);
        assert_eq!(plan.failure_seq, 1);
        assert!(plan.lost.is_empty());
        assert_eq!(plan.targets[&A], Cutoff::new(0, 2));
        assert_eq!(plan.targets[&B], Cutoff::new(0, 1));
        assert!(plan.unaffected.contains(&B));
    }

    #[test]
    fn cascade_reaches_dependent_persisted_vertex() {
        let mut g = DependencyView::new();
        for n in 1..=3 {
            g.report(&frag(v(1, 0, n), &[])).unwrap();
        }
        for n in 1..=3 {
            g.report(&frag(v(2, 0, n), &[])).unwrap();
        }
        g.report(&frag(v(2, 0, 4), &[v(1, 0, 3)])).unwrap();
        g.report(&frag(v(2, 0, 5), &[])).unwrap();
        let members = BTreeSet::from([A, B]);
        let surviving: Vec<_> = (1..=2).map(|n| frag(v(1, 0, n), &[])).collect();
        let plan = g.plan_rollback(A, &surviving, &members);
        assert_eq!(plan.lost, BTreeSet::from([v(1, 0, 3), v(2, 0, 4), v(2, 0, 5)]));
        assert_eq!(plan.targets[&A].version, 2);
        assert_eq!(plan.targets[&B].version, 3);
    }

    #[test]
    fn stale_fragment_is_rejected_after_plan() {
        let mut g = DependencyView::new();
        g.report(&frag(v(1, 0, 1), &[])).unwrap();
        let members = BTreeSet::from([A]);
        g.plan_rollback(A, &[], &members);
        assert_eq!(
            g.report(&frag(v(1, 0, 2), &[])),
            Err(CoordinatorError::StaleWorldLine(v(1, 0, 2)))
        );
        assert!(g.report(&frag(v(1, 1, 1), &[])).is_ok());
    }

    #[test]
    fn second_plan_sees_first_plan_cuts() {
        let mut g = DependencyView::new();
        let members = BTreeSet::from([A, B]);
        g.report(&frag(v(1, 0, 1), &[])).unwrap();
        g.report(&frag(v(2, 0, 1), &[v(1, 0, 1)])).unwrap();
        let p1 = g.plan_rollback(A, &[], &members);
        assert_eq!(p1.targets[&B].version, 0);
        g.report(&frag(v(2, 1, 1), &[])).unwrap();
        let p2 = g.plan_rollback(B, &[frag(v(2, 1, 1), &[])], &members);
        assert_eq!(p2.failure_seq, 2);
        assert_eq!(p2.targets[&B], Cutoff::new(1, 1));
    }

    #[test]
    fn prune_keeps_cutoff_and_satisfies_edges_below() {
        let mut g = DependencyView::new();
        for n in 1..=5 {
            g.report(&frag(v(1, 0, n), &[])).unwrap();
        }
        let b = g.compute_boundary();
        g.prune(&b);
        assert_eq!(g.floor(A), 4);
        assert_eq!(g.vertex_count(), 1);
        g.report(&frag(v(2, 0, 1), &[v(1, 0, 3)])).unwrap();
        let b = g.compute_boundary();
        assert_eq!(b[&A], Cutoff::new(0, 5));
        assert_eq!(b[&B], Cutoff::new(0, 1));
    }

    #[test]
    fn targets_never_drop_below_retained_version() {
        let mut g = DependencyView::new();
        for n in 1..=5 {
            g.report(&frag(v(1, 0, n), &[])).unwrap();
        }
        let b = g.compute_boundary();
        g.prune(&b);
        g.report(&frag(v(1, 0, 6), &[v(2, 0, 1)])).unwrap();
        let plan = g.plan_rollback(B, &[], &BTreeSet::from([A, B]));
        assert_eq!(plan.targets[&A], Cutoff::new(0, 5));
    }
}
