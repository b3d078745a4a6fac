//! Slot-level execution model: actions, observations, payloads, seeded RNG
//! streams, and the synchronous engine.
//!
//! Time is divided into discrete slots. In each slot a node broadcasts on one
//! of its local channel labels, listens on one, or idles. A listener hears a
//! payload iff exactly one of its graph neighbors broadcast on the same global
//! channel in that slot; silence and collisions are indistinguishable.

mod engine;
mod rng;

pub use engine::{
    resolve_slot, run_protocol, run_protocol_with, IdleMachine, NodeProtocol, NodeView,
    ProtocolRun, RunOptions, RunSummary, SimError, SlotRecord, StopRule,
};
pub use rng::{derive_seed, derive_stream, NodeSeed, RngStream};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{EdgeId, LocalLabel, NodeId};

/// Well-known purpose tags for deriving disjoint RNG streams.
pub mod purpose {
    /// Per-node protocol randomness inside a simulation run.
    pub const PROTOCOL: u32 = 0;
    /// Instance generation.
    pub const INSTANCE: u32 = 1;
    /// Per-trial seed derivation in the harness.
    pub const TRIAL: u32 = 2;
    /// Coloring decisions (abstain coin, color pick) in cgcast.
    pub const COLORING: u32 = 3;
    /// Game referee (hidden matching).
    pub const REFEREE: u32 = 4;
    /// Game player strategies.
    pub const PLAYER: u32 = 5;
}

/// Stage tag carried by a color claim during the coloring procedure.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum ClaimStage {
    /// A tentative pick made in step one of a phase.
    Tentative,
    /// A decided color announced in step two (or the final handoff).
    Final,
}

/// One edge-color statement exchanged during the coloring procedure.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct ColorClaim {
    pub edge: EdgeId,
    pub color: u16,
    pub phase: u16,
    pub stage: ClaimStage,
}

/// Message content carried by a broadcast.
///
/// Shared buffers are reference counted so that re-broadcasting the same
/// payload across many slots stays cheap.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Payload {
    /// The broadcaster's identity.
    Identity(NodeId),
    /// Identity plus (neighbor, slot of first reception) pairs from an earlier
    /// discovery run.
    IdentityWithTimes(NodeId, Arc<[(NodeId, u64)]>),
    /// Color claims for the coloring procedure.
    ColorInfo(Arc<[ColorClaim]>),
    /// Opaque message bytes (the broadcast payload being disseminated).
    Data(Arc<[u8]>),
}

impl Payload {
    /// The sender identity, when the payload carries one.
    pub fn sender(&self) -> Option<NodeId> {
        match self {
            Payload::Identity(id) | Payload::IdentityWithTimes(id, _) => Some(*id),
            Payload::ColorInfo(_) | Payload::Data(_) => None,
        }
    }

    /// Canonical byte form used for logging and trace digests.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("payload serialization cannot fail")
    }
}

/// A node's choice for one slot. Exactly one variant per node per slot.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum SlotAction {
    Broadcast { label: LocalLabel, payload: Payload },
    Listen { label: LocalLabel },
    Idle,
}

impl SlotAction {
    /// The label this action tunes to, if any.
    pub fn label(&self) -> Option<LocalLabel> {
        match self {
            SlotAction::Broadcast { label, .. } | SlotAction::Listen { label } => Some(*label),
            SlotAction::Idle => None,
        }
    }
}

/// What a node perceives at the end of a slot.
///
/// A broadcasting or idle node always observes silence; there is no collision
/// detection.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum SlotObservation {
    Heard(Payload),
    Silence,
}

impl SlotObservation {
    pub fn heard(&self) -> Option<&Payload> {
        match self {
            SlotObservation::Heard(p) => Some(p),
            SlotObservation::Silence => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_sender_only_for_identity_payloads() {
        assert_eq!(Payload::Identity(NodeId(3)).sender(), Some(NodeId(3)));
        let times: Arc<[(NodeId, u64)]> = Arc::from(vec![(NodeId(1), 7u64)]);
        assert_eq!(
            Payload::IdentityWithTimes(NodeId(2), times).sender(),
            Some(NodeId(2))
        );
        assert_eq!(Payload::Data(Arc::from(vec![1u8])).sender(), None);
        assert_eq!(Payload::ColorInfo(Arc::from(Vec::new())).sender(), None);
    }

    #[test]
    fn canonical_bytes_are_stable() {
        let p = Payload::Identity(NodeId(5));
        assert_eq!(p.canonical_bytes(), p.canonical_bytes());
        let q = Payload::Identity(NodeId(6));
        assert_ne!(p.canonical_bytes(), q.canonical_bytes());
    }

    #[test]
    fn edge_normalization_and_adjacency() {
        let e = EdgeId::new(NodeId(4), NodeId(1));
        assert_eq!(e, EdgeId::new(NodeId(1), NodeId(4)));
        assert_eq!(e.owner(), NodeId(1));
        assert!(e.touches(EdgeId::new(NodeId(4), NodeId(9))));
        assert!(!e.touches(EdgeId::new(NodeId(2), NodeId(3))));
        assert!(!e.touches(e));
        assert_eq!(e.other(NodeId(4)), Some(NodeId(1)));
        assert_eq!(e.other(NodeId(7)), None);
    }
}
