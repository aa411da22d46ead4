use serde::{Deserialize, Serialize};

use crate::{DepSet, Vertex};

/// A persisted vertex together with the dependencies recorded while it was
/// the object's current vertex.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphFragment {
    pub vertex: Vertex,
    pub out_edges: DepSet,
}

impl GraphFragment {
    /// Builds a fragment, dropping a self-edge if one was supplied.
    pub fn new(vertex: Vertex, mut out_edges: DepSet) -> Self {
        out_edges.remove(&vertex);
        Self { vertex, out_edges }
    }

    pub fn is_well_formed(&self) -> bool {
        !self.out_edges.contains(&self.vertex)
    }
}
