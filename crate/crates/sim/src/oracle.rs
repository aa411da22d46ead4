//! Post-hoc checks over a trace. Each oracle reports the number of
//! violations and the first violating record (1-based line number).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::trace::{Event, Target, TraceLog, V};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleResult {
    pub name: String,
    pub violations: usize,
    pub first: Option<(usize, String)>,
}

impl OracleResult {
    pub fn ok(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleReport {
    pub results: Vec<OracleResult>,
}

impl OracleReport {
    pub fn ok(&self) -> bool {
        self.results.iter().all(|r| r.ok())
    }

    pub fn get(&self, name: &str) -> Option<&OracleResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

impl std::fmt::Display for OracleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for r in &self.results {
            match &r.first {
                None => writeln!(f, "PASS {}", r.name)?,
                Some((line, why)) => writeln!(f, "FAIL {} ({} violations; first at line {line}: {why})", r.name, r.violations)?,
            }
        }
        Ok(())
    }
}

struct Tally {
    name: &'static str,
    violations: usize,
    first: Option<(usize, String)>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self { name, violations: 0, first: None }
    }

    fn fail(&mut self, index: usize, why: impl FnOnce() -> String) {
        self.violations += 1;
        if self.first.is_none() {
            self.first = Some((index + 1, why()));
        }
    }

    fn done(self) -> OracleResult {
        OracleResult { name: self.name.into(), violations: self.violations, first: self.first }
    }
}

/// Rollback decisions as (seq, target version per object).
struct Plans(Vec<(u64, BTreeMap<u64, u64>)>);

impl Plans {
    fn removed(&self, x: &V) -> bool {
        self.0.iter().any(|(seq, targets)| x[1] < *seq && x[2] > targets.get(&x[0]).copied().unwrap_or(0))
    }
}

fn fmt(x: &V) -> String {
    format!("({}, {}, {})", x[0], x[1], x[2])
}

pub const ORACLES: [&str; 9] = [
    "closure",
    "commit_ordering",
    "partition",
    "sequencing",
    "barrier_transparency",
    "log_prefix",
    "boundary_monotone",
    "conservation",
    "service_state",
];

/// Runs every oracle over `trace`.
pub fn check(trace: &TraceLog) -> OracleReport {
    let recs = &trace.records;
    let plans = Plans(
        recs.iter()
            .filter_map(|r| match &r.ev {
                Event::Plan { seq, targets, .. } => Some((*seq, targets.iter().map(|t| (t[0], t[2])).collect())),
                _ => None,
            })
            .collect(),
    );
    let durable: BTreeSet<V> =
        recs.iter().filter_map(|r| if let Event::PersistDone { vertex } = &r.ev { Some(*vertex) } else { None }).collect();
    let finished = recs.iter().any(|r| matches!(r.ev, Event::End { .. }));

    let mut closure = Tally::new("closure");
    let mut ordering = Tally::new("commit_ordering");
    let mut partition = Tally::new("partition");
    let mut sequencing = Tally::new("sequencing");
    let mut barrier = Tally::new("barrier_transparency");
    let mut prefix = Tally::new("log_prefix");
    let mut boundary = Tally::new("boundary_monotone");
    let mut conservation = Tally::new("conservation");
    let mut state = Tally::new("service_state");

    // Per object: (incarnation, last applied failure sequence).
    let mut applied: BTreeMap<u64, (u64, Option<u64>)> = BTreeMap::new();
    let mut down: BTreeSet<u64> = BTreeSet::new();
    let mut persisted_before: BTreeSet<V> = BTreeSet::new();
    let mut last_boundary: Option<BTreeMap<u64, u64>> = None;
    let mut sent: BTreeSet<u64> = BTreeSet::new();
    let mut settled: BTreeSet<u64> = BTreeSet::new();

    for (i, r) in recs.iter().enumerate() {
        match &r.ev {
            Event::PersistStart { vertex, edges } => {
                if !finished || !durable.contains(vertex) || plans.removed(vertex) {
                    continue;
                }
                for e in edges {
                    if plans.removed(e) {
                        closure.fail(i, || format!("surviving {} has an edge into removed {}", fmt(vertex), fmt(e)));
                    } else if !durable.contains(e) {
                        closure.fail(i, || format!("surviving {} has an edge into {}, never durable", fmt(vertex), fmt(e)));
                    }
                }
            }
            Event::PersistDone { vertex } => {
                persisted_before.insert(*vertex);
            }
            Event::ActionStart { vertex, wl, deps } => {
                if let Some(wl) = wl {
                    if *wl != vertex[1] {
                        partition.fail(i, || format!("action {} consumed a header from world-line {wl}", fmt(vertex)));
                    }
                }
                for d in deps.iter().filter(|d| d[0] != vertex[0]) {
                    if d[2] > vertex[2] {
                        ordering.fail(i, || format!("action {} consumed a message from {}", fmt(vertex), fmt(d)));
                    }
                }
            }
            Event::Rollback { object, incarnation, seq, .. } => {
                let e = applied.entry(*object).or_insert((*incarnation, None));
                if e.0 != *incarnation {
                    *e = (*incarnation, None);
                }
                if let Some(last) = e.1 {
                    if *seq != last + 1 {
                        sequencing.fail(i, || format!("object {object} applied failure {seq} after {last}"));
                    }
                }
                e.1 = Some(*seq);
            }
            Event::Connected { object, incarnation, vertex } => {
                let e = applied.entry(*object).or_insert((*incarnation, None));
                if e.0 != *incarnation {
                    *e = (*incarnation, None);
                }
                if e.1.is_some_and(|last| vertex[1] < last) {
                    sequencing.fail(i, || format!("object {object} connected behind its applied failures"));
                }
                e.1 = Some(vertex[1]);
            }
            Event::Crash { target: Target::Object(o) } => {
                down.insert(*o);
            }
            Event::Restart { target: Target::Object(o), .. } => {
                down.remove(o);
            }
            Event::Reply { client, req, released, .. } => {
                for d in released {
                    if plans.removed(d) {
                        barrier.fail(i, || format!("reply {req} to {client} released {} which was rolled back", fmt(d)));
                    } else if !persisted_before.contains(d) {
                        barrier.fail(i, || format!("reply {req} to {client} released {} before it was durable", fmt(d)));
                    }
                }
            }
            Event::LogCheck { object, prefix: p, at_commit, recovered_len, shadow_len } => {
                if !p || !at_commit {
                    prefix.fail(i, || {
                        format!("object {object} recovered {recovered_len} of {shadow_len} bytes: prefix {p}, at commit {at_commit}")
                    });
                }
            }
            Event::Boundary { cutoffs, .. } => {
                let cur: BTreeMap<u64, u64> = cutoffs.iter().map(|c| (c[0], c[2])).collect();
                for c in cutoffs {
                    if plans.removed(c) {
                        boundary.fail(i, || format!("boundary contains rolled-back {}", fmt(c)));
                    }
                }
                if let Some(prev) = &last_boundary {
                    for (o, &ver) in prev {
                        if cur.get(o).is_none_or(|&now| now < ver) {
                            boundary.fail(i, || format!("boundary of object {o} fell below version {ver}"));
                        }
                    }
                }
                last_boundary = Some(cur);
            }
            Event::Send { id, .. } => {
                if !sent.insert(*id) {
                    conservation.fail(i, || format!("message {id} sent twice"));
                }
            }
            Event::Deliver { id } | Event::Drop { id, .. } => {
                if !sent.contains(id) {
                    conservation.fail(i, || format!("message {id} settled but never sent"));
                } else if !settled.insert(*id) {
                    conservation.fail(i, || format!("message {id} settled twice"));
                }
            }
            Event::End { in_flight } => {
                let open: BTreeSet<u64> = sent.difference(&settled).copied().collect();
                let claimed: BTreeSet<u64> = in_flight.iter().copied().collect();
                if open != claimed {
                    conservation.fail(i, || format!("{} messages unaccounted for", open.symmetric_difference(&claimed).count()));
                }
                let last_plan = plans.0.iter().map(|p| p.0).max().unwrap_or(0);
                for (o, (_, seq)) in &applied {
                    if !down.contains(o) && seq.unwrap_or(0) < last_plan {
                        sequencing.fail(i, || format!("object {o} ends at failure {seq:?} of {last_plan}"));
                    }
                }
            }
            Event::StateCheck { object, ok: false, detail } => {
                state.fail(i, || format!("object {object}: {detail}"));
            }
            _ => {}
        }
    }
    OracleReport {
        results: vec![
            closure.done(),
            ordering.done(),
            partition.done(),
            sequencing.done(),
            barrier.done(),
            prefix.done(),
            boundary.done(),
            conservation.done(),
            state.done(),
        ],
    }
}
