//! Colored-schedule message dissemination.
//!
//! `phases` phases of `two_delta` steps; colors map to steps in identity
//! order. In the step of color K, a node adjacent to a K-colored edge tunes
//! to that edge's dedicated channel: uninformed it listens the whole step,
//! informed it runs `rounds_per_step` back-off broadcast rounds of
//! `slots_per_round` slots each. Nodes without a K-colored edge idle.

use std::sync::Arc;

use rand::RngExt;
use serde::Serialize;

use crate::seek::part2_fire_probability;
use crate::sim::{
    run_protocol_with, NodeProtocol, NodeSeed, NodeView, Payload, RngStream, RunOptions,
    SlotAction, SlotObservation,
};
use crate::topology::NetworkInstance;
use crate::{EdgeId, LocalLabel, NodeId};

use super::DedicatedChannelTable;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DissemConfig {
    /// Number of phases (the graph diameter).
    pub phases: u32,
    /// Steps per phase, one per color.
    pub two_delta: u32,
    /// Back-off rounds per step.
    pub rounds_per_step: u32,
    /// Slots per round: `max(1, ceil(lg delta))`.
    pub slots_per_round: u32,
}

impl DissemConfig {
    pub fn slots_per_step(&self) -> u64 {
        self.rounds_per_step as u64 * self.slots_per_round as u64
    }

    pub fn total_slots(&self) -> u64 {
        self.phases as u64 * self.two_delta as u64 * self.slots_per_step()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DissemResult {
    pub informed: Vec<bool>,
    /// Dissemination slots elapsed when the node first held the message;
    /// 0 for the source.
    pub informed_at: Vec<Option<u64>>,
    pub slots: u64,
}

struct DissemMachine {
    /// Per step index (color - 1): the label to tune, if this node has an
    /// edge of that color with a resolved dedicated channel.
    schedule: Vec<Option<LocalLabel>>,
    informed: bool,
    /// Latched at each step boundary: an uninformed node listens for the
    /// whole step even if the message arrives mid-step.
    informed_this_step: bool,
    message: Arc<[u8]>,
    cfg: DissemConfig,
    rng: RngStream,
    cursor: u64,
    informed_at: Option<u64>,
}

impl NodeProtocol for DissemMachine {
    type Output = (bool, Option<u64>);

    fn next_action(&mut self, _slot: u64) -> SlotAction {
        if self.cursor >= self.cfg.total_slots() {
            return SlotAction::Idle;
        }
        let per_step = self.cfg.slots_per_step();
        let step_index = (self.cursor / per_step) % self.cfg.two_delta as u64;
        let pos_in_step = self.cursor % per_step;
        if pos_in_step == 0 {
            self.informed_this_step = self.informed;
        }
        let Some(label) = self.schedule[step_index as usize] else {
            return SlotAction::Idle;
        };
        if !self.informed_this_step {
            SlotAction::Listen { label }
        } else {
            let slot_in_round = (pos_in_step % self.cfg.slots_per_round as u64) as u32;
            if self
                .rng
                .random_bool(part2_fire_probability(self.cfg.slots_per_round, slot_in_round + 1))
            {
                SlotAction::Broadcast {
                    label,
                    payload: Payload::Data(self.message.clone()),
                }
            } else {
                SlotAction::Idle
            }
        }
    }

    fn observe(&mut self, _slot: u64, observation: &SlotObservation) {
        if self.cursor < self.cfg.total_slots() {
            if !self.informed {
                if let Some(Payload::Data(_)) = observation.heard() {
                    self.informed = true;
                    self.informed_at = Some(self.cursor + 1);
                }
            }
            self.cursor += 1;
        }
    }

    fn done(&self) -> bool {
        self.cursor >= self.cfg.total_slots()
    }

    fn finish(self) -> Self::Output {
        (self.informed, self.informed_at)
    }
}

/// Runs the dissemination schedule and reports when each node first held the
/// message, in dissemination-relative slots.
#[allow(clippy::too_many_arguments)]
pub fn disseminate(
    net: &NetworkInstance,
    source: NodeId,
    message: &[u8],
    edge_colors: &[std::collections::BTreeMap<EdgeId, u16>],
    dedicated: &[DedicatedChannelTable],
    cfg: &DissemConfig,
    master_seed: u64,
    slot_offset: u64,
) -> DissemResult {
    let message: Arc<[u8]> = Arc::from(message.to_vec());
    let run = run_protocol_with(
        net,
        |view: NodeView, seed: NodeSeed| {
            let u = view.id;
            let mut schedule = vec![None; cfg.two_delta as usize];
            for (edge, &color) in &edge_colors[u.index()] {
                if let Some(v) = edge.other(u) {
                    if let Some(&label) = dedicated[u.index()].channels.get(&v) {
                        if color >= 1 && (color as u32) <= cfg.two_delta {
                            schedule[(color - 1) as usize] = Some(label);
                        }
                    }
                }
            }
            DissemMachine {
                schedule,
                informed: u == source,
                informed_this_step: false,
                message: message.clone(),
                cfg: *cfg,
                rng: seed.stream(crate::sim::purpose::PROTOCOL),
                cursor: 0,
                informed_at: if u == source { Some(0) } else { None },
            }
        },
        cfg.total_slots().max(1),
        master_seed,
        RunOptions {
            slot_offset,
            ..Default::default()
        },
    )
    .expect("dissemination machines never emit malformed actions");

    let mut informed = Vec::with_capacity(net.n());
    let mut informed_at = Vec::with_capacity(net.n());
    for (i, at) in run.outputs {
        informed.push(i);
        informed_at.push(at);
    }
    DissemResult {
        informed,
        informed_at,
        slots: cfg.total_slots(),
    }
}
