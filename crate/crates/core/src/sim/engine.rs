//! The synchronous execution engine.
//!
//! One run is single-threaded and deterministic: every slot, each node's
//! state machine is asked for an action, the slot is resolved under the
//! collision semantics, and each machine receives its observation. Distinct
//! runs share only immutable inputs and may execute concurrently.

use std::collections::BTreeMap;

use serde::Serialize;

use super::rng::NodeSeed;
use super::{SlotAction, SlotObservation};
use crate::topology::{NetworkInstance, NetworkParams};
use crate::{LocalLabel, NodeId};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("expected {expected} actions, got {got}")]
    ActionCountMismatch { expected: usize, got: usize },
    #[error("node {node} used label {label} outside [1, {channels}]")]
    LabelOutOfRange {
        node: NodeId,
        label: LocalLabel,
        channels: u16,
    },
    #[error("node {node} emitted a malformed action at slot {slot}: {reason}")]
    MalformedAction {
        node: NodeId,
        slot: u64,
        reason: String,
    },
}

/// What a protocol state machine is allowed to know about the network: its
/// own identity and the public model parameters. Global channel ids and the
/// graph stay hidden.
#[derive(Clone, Copy, Debug)]
pub struct NodeView {
    pub id: NodeId,
    pub params: NetworkParams,
}

/// Per-node slot state machine driven by the engine.
///
/// `next_action` and `observe` are called exactly once per slot, in that
/// order, with the same slot index for every node.
pub trait NodeProtocol {
    type Output;

    fn next_action(&mut self, slot: u64) -> SlotAction;

    fn observe(&mut self, slot: u64, observation: &SlotObservation);

    /// When every machine reports done, the run stops before the budget.
    fn done(&self) -> bool {
        false
    }

    fn finish(self) -> Self::Output;
}

/// Early-stop rules evaluated against engine-side ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StopRule {
    /// Run to the slot budget (or until all machines report done).
    #[default]
    Budget,
    /// Stop once every node has heard from each of its neighbors.
    FullDiscovery,
    /// Stop once every node has heard from each neighbor sharing at least
    /// `min_overlap` channels with it.
    GoodDiscovery { min_overlap: u16 },
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub stop: StopRule,
    /// Keep the full per-slot action/observation trace (memory heavy).
    pub record_trace: bool,
    /// Added to the engine's slot counter before machines see it, so chained
    /// runs observe one global clock.
    pub slot_offset: u64,
}

/// Per-node reception bookkeeping kept for every run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct NodeSummary {
    pub broadcasts: u64,
    pub receptions: u64,
    /// First slot (global clock) at which this node heard each broadcaster.
    pub first_heard_from: BTreeMap<NodeId, u64>,
}

/// Always-kept run summary: message counts and first-heard times.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    /// Slots actually simulated in this run.
    pub slots_used: u64,
    /// Global-clock slot at which every node had heard all its neighbors.
    pub full_discovery_at: Option<u64>,
    /// Global-clock slot at which every node had heard all neighbors passing
    /// the good-discovery stop rule's overlap filter; `None` unless that rule
    /// was active.
    pub good_discovery_at: Option<u64>,
    pub per_node: Vec<NodeSummary>,
}

/// Optional per-slot trace record.
#[derive(Clone, Debug, Serialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub actions: Vec<SlotAction>,
    pub observations: Vec<SlotObservation>,
}

pub struct ProtocolRun<O> {
    pub outputs: Vec<O>,
    pub summary: RunSummary,
    pub trace: Option<Vec<SlotRecord>>,
}

/// Dense scratch buffers reused across slots.
struct Scratch {
    /// Broadcasters per dense channel this slot.
    by_channel: Vec<Vec<u32>>,
    touched: Vec<u32>,
}

impl Scratch {
    fn new(channels: u32) -> Self {
        Scratch {
            by_channel: vec![Vec::new(); channels as usize],
            touched: Vec::new(),
        }
    }

    fn clear(&mut self) {
        for &g in &self.touched {
            self.by_channel[g as usize].clear();
        }
        self.touched.clear();
    }
}

/// Resolves one slot into observations, writing into `out`.
///
/// Listener `u` on a label mapping to global channel `g` hears a payload iff
/// exactly one neighbor of `u` broadcast on `g`; broadcasters and idle nodes
/// observe silence, and non-neighbors never interfere.
fn resolve_into(
    actions: &[SlotAction],
    net: &NetworkInstance,
    scratch: &mut Scratch,
    out: &mut Vec<SlotObservation>,
) -> Result<(), SimError> {
    let n = net.n();
    if actions.len() != n {
        return Err(SimError::ActionCountMismatch {
            expected: n,
            got: actions.len(),
        });
    }
    scratch.clear();
    for (u, action) in actions.iter().enumerate() {
        if let SlotAction::Broadcast { label, .. } = action {
            let node = NodeId(u as u32);
            let Some(g) = net.dense_of(node, *label) else {
                return Err(SimError::LabelOutOfRange {
                    node,
                    label: *label,
                    channels: net.params().c,
                });
            };
            if scratch.by_channel[g as usize].is_empty() {
                scratch.touched.push(g);
            }
            scratch.by_channel[g as usize].push(u as u32);
        }
    }

    out.clear();
    for (u, action) in actions.iter().enumerate() {
        let obs = match action {
            SlotAction::Listen { label } => {
                let node = NodeId(u as u32);
                let Some(g) = net.dense_of(node, *label) else {
                    return Err(SimError::LabelOutOfRange {
                        node,
                        label: *label,
                        channels: net.params().c,
                    });
                };
                let mut heard_from: Option<u32> = None;
                let mut count = 0u32;
                for &b in &scratch.by_channel[g as usize] {
                    if net.adjacent(node, NodeId(b)) {
                        count += 1;
                        if count > 1 {
                            break;
                        }
                        heard_from = Some(b);
                    }
                }
                if count == 1 {
                    let b = heard_from.unwrap() as usize;
                    match &actions[b] {
                        SlotAction::Broadcast { payload, .. } => {
                            SlotObservation::Heard(payload.clone())
                        }
                        _ => unreachable!("broadcaster index always points at a broadcast"),
                    }
                } else {
                    SlotObservation::Silence
                }
            }
            SlotAction::Broadcast { .. } | SlotAction::Idle => SlotObservation::Silence,
        };
        out.push(obs);
    }
    Ok(())
}

/// Pure single-slot resolution. This is the reference semantics; the run loop
/// uses the same code path with reused buffers.
pub fn resolve_slot(
    actions: &[SlotAction],
    net: &NetworkInstance,
) -> Result<Vec<SlotObservation>, SimError> {
    let mut scratch = Scratch::new(net.dense_channel_count());
    let mut out = Vec::with_capacity(actions.len());
    resolve_into(actions, net, &mut scratch, &mut out)?;
    Ok(out)
}

pub fn run_protocol<P, F>(
    net: &NetworkInstance,
    factory: F,
    slot_budget: u64,
    master_seed: u64,
) -> Result<ProtocolRun<P::Output>, SimError>
where
    P: NodeProtocol,
    F: FnMut(NodeView, NodeSeed) -> P,
{
    run_protocol_with(net, factory, slot_budget, master_seed, RunOptions::default())
}

/// Advances the network slot by slot until the budget, all machines are done,
/// or the configured stop rule fires. The result is reproducible given
/// `(net, master_seed)`.
pub fn run_protocol_with<P, F>(
    net: &NetworkInstance,
    mut factory: F,
    slot_budget: u64,
    master_seed: u64,
    options: RunOptions,
) -> Result<ProtocolRun<P::Output>, SimError>
where
    P: NodeProtocol,
    F: FnMut(NodeView, NodeSeed) -> P,
{
    assert!(slot_budget >= 1, "slot budget must be at least 1");
    let n = net.n();
    let params = *net.params();
    let mut machines: Vec<P> = (0..n)
        .map(|u| {
            let view = NodeView {
                id: NodeId(u as u32),
                params,
            };
            factory(view, NodeSeed::new(master_seed, u as u64))
        })
        .collect();

    let mut per_node: Vec<NodeSummary> = vec![NodeSummary::default(); n];
    // Directed (listener, broadcaster) pairs still missing for discovery
    // tracking, total and restricted to the stop rule's overlap filter.
    let mut missing_all: u64 = (0..n).map(|u| net.degree(NodeId(u as u32)) as u64).sum();
    let mut missing_good: u64 = match options.stop {
        StopRule::GoodDiscovery { min_overlap } => (0..n)
            .map(|u| net.good_neighbors(NodeId(u as u32), min_overlap).len() as u64)
            .sum(),
        _ => 0,
    };
    let good_overlap = match options.stop {
        StopRule::GoodDiscovery { min_overlap } => min_overlap,
        _ => 0,
    };

    let mut scratch = Scratch::new(net.dense_channel_count());
    let mut actions: Vec<SlotAction> = Vec::with_capacity(n);
    let mut observations: Vec<SlotObservation> = Vec::with_capacity(n);
    let mut trace = options.record_trace.then(Vec::new);
    let mut full_discovery_at = None;
    let mut good_discovery_at = None;
    let mut slots_used = 0u64;

    for rel_slot in 0..slot_budget {
        let slot = options.slot_offset + rel_slot;
        actions.clear();
        for (u, machine) in machines.iter_mut().enumerate() {
            let action = machine.next_action(slot);
            if let Some(label) = action.label() {
                if label.0 < 1 || label.0 > params.c {
                    return Err(SimError::MalformedAction {
                        node: NodeId(u as u32),
                        slot,
                        reason: format!("label {label} outside [1, {}]", params.c),
                    });
                }
            }
            actions.push(action);
        }
        resolve_into(&actions, net, &mut scratch, &mut observations)?;

        for (u, obs) in observations.iter().enumerate() {
            match &actions[u] {
                SlotAction::Broadcast { .. } => per_node[u].broadcasts += 1,
                SlotAction::Listen { .. } => {
                    if obs.heard().is_some() {
                        per_node[u].receptions += 1;
                        // The unique adjacent broadcaster resolved for u.
                        let listener = NodeId(u as u32);
                        if let SlotAction::Listen { label } = &actions[u] {
                            let g = net.dense_of(listener, *label).unwrap();
                            let b = scratch.by_channel[g as usize]
                                .iter()
                                .copied()
                                .find(|&b| net.adjacent(listener, NodeId(b)))
                                .expect("a heard slot has an adjacent broadcaster");
                            let broadcaster = NodeId(b);
                            let entry = per_node[u].first_heard_from.entry(broadcaster);
                            if matches!(entry, std::collections::btree_map::Entry::Vacant(_)) {
                                entry.or_insert(slot);
                                missing_all -= 1;
                                if good_overlap > 0
                                    && net
                                        .overlap(crate::EdgeId::new(listener, broadcaster))
                                        .unwrap_or(0)
                                        >= good_overlap
                                {
                                    missing_good -= 1;
                                }
                            }
                        }
                    }
                }
                SlotAction::Idle => {}
            }
        }
        if missing_all == 0 && full_discovery_at.is_none() {
            full_discovery_at = Some(slot);
        }
        if good_overlap > 0 && missing_good == 0 && good_discovery_at.is_none() {
            good_discovery_at = Some(slot);
        }

        for (machine, obs) in machines.iter_mut().zip(observations.iter()) {
            machine.observe(slot, obs);
        }
        if let Some(trace) = trace.as_mut() {
            trace.push(SlotRecord {
                slot,
                actions: actions.clone(),
                observations: observations.clone(),
            });
        }
        slots_used = rel_slot + 1;

        let stop = match options.stop {
            StopRule::Budget => false,
            StopRule::FullDiscovery => missing_all == 0,
            StopRule::GoodDiscovery { .. } => missing_good == 0,
        };
        if stop || machines.iter().all(|m| m.done()) {
            break;
        }
    }

    let outputs = machines.into_iter().map(|m| m.finish()).collect();
    Ok(ProtocolRun {
        outputs,
        summary: RunSummary {
            slots_used,
            full_discovery_at,
            good_discovery_at,
            per_node,
        },
        trace,
    })
}

/// Convenience machine: does nothing forever. Useful in tests and as the
/// simplest example of the protocol contract.
pub struct IdleMachine;

impl NodeProtocol for IdleMachine {
    type Output = ();

    fn next_action(&mut self, _slot: u64) -> SlotAction {
        SlotAction::Idle
    }

    fn observe(&mut self, _slot: u64, _observation: &SlotObservation) {}

    fn finish(self) -> Self::Output {}
}
