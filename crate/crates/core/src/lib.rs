//! Slot-synchronous simulator for multi-channel cognitive radio networks.
//!
//! The crate provides:
//!
//! - [`sim`]: the execution engine (slots, collision semantics, seeded RNG
//!   streams, the per-node protocol state machine contract),
//! - [`topology`]: network instance generators (graph, per-node channel sets,
//!   local label permutations) and an instance validator,
//! - [`count`]: a guess-and-verify broadcaster-counting procedure,
//! - [`seek`]: the two-part randomized neighbor discovery protocol and its
//!   filter variant for well-connected neighbors,
//! - [`cgcast`]: global broadcast built from discovery, dedicated channel
//!   agreement, line-graph edge coloring, and a colored dissemination schedule,
//! - [`games`]: bipartite hitting games with a referee, baseline players, and
//!   a reduction player that replays a two-node discovery execution,
//! - [`stats`]: small order-statistics and fitting helpers shared by tests and
//!   the experiment harness.
//!
//! Every run is deterministic given a master seed; distinct trials derive
//! independent RNG streams and may execute concurrently.

pub mod cgcast;
pub mod count;
pub mod games;
pub mod seek;
pub mod sim;
pub mod stats;
pub mod topology;

use serde::{Deserialize, Serialize};

/// Node identifier, dense in `0..n` for a given instance.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A node-local channel label in `1..=c`.
///
/// Labels are private to each node: two nodes may refer to the same global
/// channel by different labels, and protocols never see global channel ids.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocalLabel(pub u16);

impl LocalLabel {
    /// First label; labels are 1-based to match the protocol descriptions.
    pub const FIRST: LocalLabel = LocalLabel(1);

    /// Zero-based index into a node's label permutation.
    #[inline]
    pub fn index(self) -> usize {
        debug_assert!(self.0 >= 1);
        (self.0 - 1) as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Self {
        LocalLabel(i as u16 + 1)
    }
}

impl std::fmt::Display for LocalLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Global channel id as stored in instance files. Never exposed to protocols.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GlobalChannel(pub u32);

/// An undirected edge, normalized so the smaller node id comes first.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct EdgeId(pub NodeId, pub NodeId);

impl EdgeId {
    /// Builds a normalized edge. Panics on self-loops.
    pub fn new(a: NodeId, b: NodeId) -> Self {
        assert_ne!(a, b, "self-loop edge ({a}, {b})");
        if a < b {
            EdgeId(a, b)
        } else {
            EdgeId(b, a)
        }
    }

    #[inline]
    pub fn endpoints(self) -> (NodeId, NodeId) {
        (self.0, self.1)
    }

    /// Whether the two edges share an endpoint (adjacency in the line graph).
    #[inline]
    pub fn touches(self, other: EdgeId) -> bool {
        self != other
            && (self.0 == other.0 || self.0 == other.1 || self.1 == other.0 || self.1 == other.1)
    }

    /// The endpoint that is not `v`; `None` if `v` is not an endpoint.
    pub fn other(self, v: NodeId) -> Option<NodeId> {
        if self.0 == v {
            Some(self.1)
        } else if self.1 == v {
            Some(self.0)
        } else {
            None
        }
    }

    /// The smaller-id endpoint, which owns the edge's virtual node during
    /// coloring.
    #[inline]
    pub fn owner(self) -> NodeId {
        self.0
    }
}

impl std::fmt::Display for EdgeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.0, self.1)
    }
}
