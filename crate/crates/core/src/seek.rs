//! Two-part randomized neighbor discovery.
//!
//! Part one samples channel density: in each step a node picks a uniform
//! channel and a fair role coin, then runs the counting procedure on that
//! channel. Listeners accumulate the returned counts per channel and record
//! any identities heard. Part two seeks: broadcasters pick uniform channels
//! and do a back-off style broadcast over `ceil(lg delta)` slots per step,
//! while listeners revisit channels with probability proportional to the
//! counts collected in part one.
//!
//! The filter variant shortens part one to `~c^2/k_hat` steps and adjusts
//! part two so that all neighbors sharing at least `k_hat >= k` channels are
//! still found.
//!
//! The broadcast payload is pluggable, which is how the global broadcast
//! pipeline reuses a discovery run as a one-shot information exchange among
//! neighbors.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngExt;
use serde::Serialize;

use crate::count::{
    broadcast_probability, ceil_log2, CountConfig, CountError, CountListener,
};
use crate::sim::{
    run_protocol_with, NodeProtocol, NodeSeed, NodeView, Payload, ProtocolRun, RngStream,
    RunOptions, SimError, SlotAction, SlotObservation, StopRule,
};
use crate::topology::{NetworkInstance, NetworkParams};
use crate::{LocalLabel, NodeId};

/// Default step-count multipliers hidden behind the protocol's Theta
/// notation. Calibrated so that the statistical acceptance grids pass with
/// margin; see the README for the measured failure rates at smaller values.
pub const DEFAULT_A1: f64 = 12.0;
pub const DEFAULT_A2: f64 = 12.0;

#[derive(Debug, thiserror::Error)]
pub enum SeekError {
    #[error("filter threshold k_hat={k_hat} below the instance bound k={k}")]
    KHatBelowK { k_hat: u16, k: u16 },
    #[error(transparent)]
    Count(#[from] CountError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Full discovery or the good-neighbor filter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SeekMode {
    Full,
    Filter {
        k_hat: u16,
        /// Bound on the number of good neighbors, when known. Without it the
        /// part-two budget falls back to the delta-based form.
        delta_khat: Option<u32>,
    },
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SeekConfig {
    pub mode: SeekMode,
    /// Part-one step multiplier.
    pub a1: f64,
    /// Part-two step multiplier.
    pub a2: f64,
    /// Trigger slack of the embedded counting procedure.
    pub count_delta: f64,
    /// Round length multiplier of the embedded counting procedure.
    pub count_mult: u32,
}

impl SeekConfig {
    pub fn full() -> Self {
        SeekConfig {
            mode: SeekMode::Full,
            a1: DEFAULT_A1,
            a2: DEFAULT_A2,
            count_delta: 0.5,
            count_mult: 8,
        }
    }

    pub fn filter(k_hat: u16, delta_khat: Option<u32>) -> Self {
        SeekConfig {
            mode: SeekMode::Filter { k_hat, delta_khat },
            ..Self::full()
        }
    }
}

/// Resolved slot budget of one run. All nodes derive the same budget from the
/// shared parameters, so they stay phase-aligned throughout.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SeekBudget {
    pub part1_steps: u64,
    pub part2_steps: u64,
    pub count: CountConfig,
    /// Slots per part-two step: `max(1, ceil(lg delta))`.
    pub part2_slots_per_step: u32,
}

impl SeekBudget {
    pub fn part1_slots(&self) -> u64 {
        self.part1_steps * self.count.slots()
    }

    pub fn part2_slots(&self) -> u64 {
        self.part2_steps * self.part2_slots_per_step as u64
    }

    pub fn total_slots(&self) -> u64 {
        self.part1_slots() + self.part2_slots()
    }
}

/// Computes the closed-form step budgets for the given parameters.
pub fn seek_budget(params: &NetworkParams, cfg: &SeekConfig) -> Result<SeekBudget, SeekError> {
    let n = params.n as f64;
    let c = params.c as f64;
    let k = params.k as f64;
    let k_max = params.k_max as f64;
    let delta = params.delta_max as f64;
    let ln_n = n.ln();

    let (part1_steps, part2_steps) = match cfg.mode {
        SeekMode::Full => {
            let p1 = (cfg.a1 * (c * c / k) * ln_n).ceil() as u64;
            let p2 = (cfg.a2 * (k_max / k) * delta * ln_n).ceil() as u64;
            (p1, p2)
        }
        SeekMode::Filter { k_hat, delta_khat } => {
            if k_hat < params.k {
                return Err(SeekError::KHatBelowK {
                    k_hat,
                    k: params.k,
                });
            }
            let kh = k_hat as f64;
            let p1 = (cfg.a1 * (c * c / kh) * ln_n).ceil() as u64;
            let inner = match delta_khat {
                Some(dk) => (k_max / kh) * dk as f64 + delta + c,
                None => (k_max / kh) * delta + c,
            };
            let p2 = (cfg.a2 * inner * ln_n).ceil() as u64;
            (p1, p2)
        }
    };

    let count = CountConfig::new(params.n, params.delta_max, cfg.count_delta, cfg.count_mult)?;
    Ok(SeekBudget {
        part1_steps: part1_steps.max(1),
        part2_steps: part2_steps.max(1),
        count,
        part2_slots_per_step: ceil_log2(params.delta_max as u64).max(1),
    })
}

/// Per-slot fire probability of the part-two back-off schedule: slot `i` of
/// `1..=l` fires with probability `2^(i-1) / 2^l`, ending at one half.
#[inline]
pub fn part2_fire_probability(l: u32, slot_i: u32) -> f64 {
    debug_assert!(slot_i >= 1 && slot_i <= l);
    (1u64 << (slot_i - 1)) as f64 / (1u64 << l) as f64
}

/// Running discovery state of one node.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SeekState {
    /// Accumulated count per local channel label (index `label - 1`).
    pub counts: Vec<u64>,
    /// Invariant: always equals the total of `counts`.
    pub sum: u64,
    /// Identities discovered so far.
    pub ids: BTreeSet<NodeId>,
    /// Global-clock slot of the first reception from each identity.
    pub first_heard: BTreeMap<NodeId, u64>,
    /// Received payloads, when logging is enabled.
    pub payload_log: Vec<(u64, Payload)>,
}

impl SeekState {
    fn new(c: u16) -> Self {
        SeekState {
            counts: vec![0; c as usize],
            ..Default::default()
        }
    }
}

/// Picks a label with probability `counts[ch] / sum`; uniform when all counts
/// are zero.
pub fn weighted_channel_pick(counts: &[u64], sum: u64, rng: &mut RngStream) -> LocalLabel {
    debug_assert_eq!(sum, counts.iter().sum::<u64>());
    let c = counts.len() as u16;
    if sum == 0 {
        return LocalLabel(rng.random_range(1..=c));
    }
    let mut remaining = rng.random_range(1..=sum);
    for (label, &x) in (1u16..).zip(counts.iter()) {
        if remaining <= x {
            return LocalLabel(label);
        }
        remaining -= x;
    }
    LocalLabel(c)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Role {
    Broadcaster,
    Listener,
}

/// Final per-node output of a run.
#[derive(Clone, Debug, Serialize)]
pub struct SeekOutput {
    pub state: SeekState,
    /// Label tuned at each slot of this run, when recording was requested.
    /// Needed later to resolve dedicated channels from first-heard times.
    pub channel_log: Option<Vec<u16>>,
}

/// The per-node state machine for both discovery variants.
pub struct SeekMachine {
    c: u16,
    budget: SeekBudget,
    payload: Payload,
    rng: RngStream,
    state: SeekState,
    log_payloads: bool,
    channel_log: Option<Vec<u16>>,
    cursor: u64,
    step_role: Role,
    step_label: LocalLabel,
    count_listener: CountListener,
}

impl SeekMachine {
    pub fn new(
        view: NodeView,
        seed: NodeSeed,
        budget: SeekBudget,
        payload: Payload,
        log_payloads: bool,
        record_channel_log: bool,
    ) -> Self {
        SeekMachine {
            c: view.params.c,
            budget,
            payload,
            rng: seed.stream(crate::sim::purpose::PROTOCOL),
            state: SeekState::new(view.params.c),
            log_payloads,
            channel_log: record_channel_log
                .then(|| Vec::with_capacity(budget.total_slots() as usize)),
            cursor: 0,
            step_role: Role::Listener,
            step_label: LocalLabel::FIRST,
            count_listener: CountListener::new(),
        }
    }

    #[inline]
    fn part1_slots(&self) -> u64 {
        self.budget.part1_slots()
    }

    fn merge_heard(&mut self, slot: u64, payload: &Payload) {
        if let Some(id) = payload.sender() {
            self.state.ids.insert(id);
            self.state.first_heard.entry(id).or_insert(slot);
        }
        if self.log_payloads {
            self.state.payload_log.push((slot, payload.clone()));
        }
    }
}

impl NodeProtocol for SeekMachine {
    type Output = SeekOutput;

    fn next_action(&mut self, _slot: u64) -> SlotAction {
        let step_len1 = self.budget.count.slots();
        let action = if self.cursor < self.part1_slots() {
            // Part one: one full counting execution per step.
            let step_pos = self.cursor % step_len1;
            if step_pos == 0 {
                self.step_label = LocalLabel(self.rng.random_range(1..=self.c));
                self.step_role = if self.rng.random_bool(0.5) {
                    Role::Listener
                } else {
                    Role::Broadcaster
                };
                self.count_listener = CountListener::new();
            }
            match self.step_role {
                Role::Listener => SlotAction::Listen {
                    label: self.step_label,
                },
                Role::Broadcaster => {
                    let round_i = (step_pos / self.budget.count.round_len as u64) as u32 + 1;
                    if self.rng.random_bool(broadcast_probability(round_i)) {
                        SlotAction::Broadcast {
                            label: self.step_label,
                            payload: self.payload.clone(),
                        }
                    } else {
                        // Stays tuned to the step channel without transmitting.
                        SlotAction::Idle
                    }
                }
            }
        } else if self.cursor < self.budget.total_slots() {
            // Part two: back-off broadcasts against weighted listening.
            let l = self.budget.part2_slots_per_step;
            let step_pos = ((self.cursor - self.part1_slots()) % l as u64) as u32;
            if step_pos == 0 {
                self.step_role = if self.rng.random_bool(0.5) {
                    Role::Listener
                } else {
                    Role::Broadcaster
                };
                self.step_label = match self.step_role {
                    Role::Broadcaster => LocalLabel(self.rng.random_range(1..=self.c)),
                    Role::Listener => {
                        weighted_channel_pick(&self.state.counts, self.state.sum, &mut self.rng)
                    }
                };
            }
            match self.step_role {
                Role::Listener => SlotAction::Listen {
                    label: self.step_label,
                },
                Role::Broadcaster => {
                    if self
                        .rng
                        .random_bool(part2_fire_probability(l, step_pos + 1))
                    {
                        SlotAction::Broadcast {
                            label: self.step_label,
                            payload: self.payload.clone(),
                        }
                    } else {
                        SlotAction::Idle
                    }
                }
            }
        } else {
            SlotAction::Idle
        };
        if let Some(log) = self.channel_log.as_mut() {
            if self.cursor < self.budget.total_slots() {
                log.push(self.step_label.0);
            }
        }
        action
    }

    fn observe(&mut self, slot: u64, observation: &SlotObservation) {
        if self.cursor >= self.budget.total_slots() {
            return;
        }
        if let Some(payload) = observation.heard() {
            let payload = payload.clone();
            self.merge_heard(slot, &payload);
        }
        if self.cursor < self.part1_slots() && self.step_role == Role::Listener {
            self.count_listener.observe_slot(observation);
            let step_len1 = self.budget.count.slots();
            let step_pos = self.cursor % step_len1;
            let round_len = self.budget.count.round_len as u64;
            if (step_pos + 1).is_multiple_of(round_len) {
                let round_i = ((step_pos + 1) / round_len) as u32;
                self.count_listener.end_round(round_i, &self.budget.count);
            }
            if step_pos + 1 == step_len1 {
                let estimate = self.count_listener.result().estimate;
                self.state.counts[self.step_label.index()] += estimate;
                self.state.sum += estimate;
            }
        }
        self.cursor += 1;
    }

    fn done(&self) -> bool {
        self.cursor >= self.budget.total_slots()
    }

    fn finish(self) -> Self::Output {
        SeekOutput {
            state: self.state,
            channel_log: self.channel_log,
        }
    }
}

/// Options for assembling a run.
pub struct SeekRunOptions<'a> {
    /// Payload each node repeats for the whole run; identity by default.
    pub payload_fn: Option<&'a dyn Fn(NodeId) -> Payload>,
    pub log_payloads: bool,
    pub record_channel_log: bool,
    pub slot_offset: u64,
    pub stop: StopRule,
}

impl Default for SeekRunOptions<'_> {
    fn default() -> Self {
        SeekRunOptions {
            payload_fn: None,
            log_payloads: false,
            record_channel_log: false,
            slot_offset: 0,
            stop: StopRule::Budget,
        }
    }
}

/// Runs full neighbor discovery on the instance.
pub fn cseek(
    net: &NetworkInstance,
    cfg: &SeekConfig,
    master_seed: u64,
) -> Result<ProtocolRun<SeekOutput>, SeekError> {
    assert!(
        matches!(cfg.mode, SeekMode::Full),
        "cseek requires full mode; use ckseek for the filter"
    );
    seek_run(net, cfg, master_seed, SeekRunOptions::default())
}

/// Runs the good-neighbor filter variant.
pub fn ckseek(
    net: &NetworkInstance,
    cfg: &SeekConfig,
    master_seed: u64,
) -> Result<ProtocolRun<SeekOutput>, SeekError> {
    assert!(
        matches!(cfg.mode, SeekMode::Filter { .. }),
        "ckseek requires filter mode"
    );
    seek_run(net, cfg, master_seed, SeekRunOptions::default())
}

/// Shared entry point with full control over payloads, logging, and stop
/// rules.
pub fn seek_run(
    net: &NetworkInstance,
    cfg: &SeekConfig,
    master_seed: u64,
    options: SeekRunOptions<'_>,
) -> Result<ProtocolRun<SeekOutput>, SeekError> {
    let budget = seek_budget(net.params(), cfg)?;
    let run = run_protocol_with(
        net,
        |view: NodeView, seed: NodeSeed| {
            let payload = match options.payload_fn {
                Some(f) => f(view.id),
                None => Payload::Identity(view.id),
            };
            SeekMachine::new(
                view,
                seed,
                budget,
                payload,
                options.log_payloads,
                options.record_channel_log,
            )
        },
        budget.total_slots(),
        master_seed,
        RunOptions {
            stop: options.stop,
            record_trace: false,
            slot_offset: options.slot_offset,
        },
    )?;
    Ok(run)
}
