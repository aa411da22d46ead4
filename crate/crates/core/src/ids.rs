use std::fmt;

use serde::{Deserialize, Serialize};

/// Stable identifier of a state object, assigned in cluster configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u64);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A recoverable point: the state of `object` at `version` within world-line
/// `world_line`.
///
/// Ordering is lexicographic on (object, world_line, version), which is also the
/// order used on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Vertex {
    pub object: ObjectId,
    pub world_line: u64,
    pub version: u64,
}

impl Vertex {
    pub const fn new(object: ObjectId, world_line: u64, version: u64) -> Self {
        Self { object, world_line, version }
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.object.0, self.world_line, self.version)
    }
}
