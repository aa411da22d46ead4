use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::Vertex;

/// A set of vertices, kept sorted by (object, world_line, version).
pub type DepSet = BTreeSet<Vertex>;

/// Metadata attached to every instrumented message.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Header {
    pub world_line: u64,
    pub deps: DepSet,
}

impl Header {
    pub fn new(world_line: u64, deps: DepSet) -> Self {
        Self { world_line, deps }
    }

    /// Header for a message that carries no dependency.
    pub fn empty(world_line: u64) -> Self {
        Self { world_line, deps: DepSet::new() }
    }

    /// True when no dependency is newer than the header's world-line.
    pub fn is_well_formed(&self) -> bool {
        self.deps.iter().all(|d| d.world_line <= self.world_line)
    }

    /// Largest dependency version; a receiver must reach this version before
    /// consuming the header.
    pub fn required_version(&self) -> u64 {
        self.deps.iter().map(|d| d.version).max().unwrap_or(0)
    }
}

/// Union of two dependency sets where, for each (object, world_line), only the
/// largest version is kept.
pub fn merge_deps(a: &DepSet, b: &DepSet) -> DepSet {
    let mut out = DepSet::new();
    let mut pending: Option<Vertex> = None;
    for v in merge_sorted(a, b) {
        match pending {
            Some(p) if p.object == v.object && p.world_line == v.world_line => {}
            Some(p) => {
                out.insert(p);
            }
            None => {}
        }
        pending = Some(v);
    }
    if let Some(p) = pending {
        out.insert(p);
    }
    out
}

fn merge_sorted<'a>(a: &'a DepSet, b: &'a DepSet) -> impl Iterator<Item = Vertex> + 'a {
    let mut ia = a.iter().peekable();
    let mut ib = b.iter().peekable();
    std::iter::from_fn(move || match (ia.peek(), ib.peek()) {
        (Some(x), Some(y)) if x <= y => ia.next().copied(),
        (Some(_), Some(_)) => ib.next().copied(),
        (Some(_), None) => ia.next().copied(),
        (None, Some(_)) => ib.next().copied(),
        (None, None) => None,
    })
}
