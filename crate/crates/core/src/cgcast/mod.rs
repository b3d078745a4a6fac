//! Global broadcast.
//!
//! Pipeline: neighbor discovery, a second discovery run exchanging first-heard
//! times, per-edge dedicated channel agreement, a 2*delta edge coloring of the
//! graph obtained by node-coloring its line graph, one more discovery run to
//! hand each edge color to the non-owning endpoint, and finally a colored
//! dissemination schedule of `diam` phases with `2*delta` steps each.
//!
//! Every stage is a fixed number of slots derived from the shared parameters,
//! so all nodes move through the pipeline in lockstep without any global
//! coordinator.

mod coloring;
mod dissem;
mod exchange;

pub use coloring::{color_line_graph, ColoringConfig, ColoringResult, ColoringState, ColorSet};
pub use dissem::{disseminate, DissemConfig, DissemResult};
pub use exchange::{exchange_round, ExchangeResult};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::seek::{seek_budget, seek_run, SeekConfig, SeekError, SeekMode, SeekOutput, SeekRunOptions};
use crate::sim::{purpose, Payload};
use crate::topology::NetworkInstance;
use crate::{EdgeId, LocalLabel, NodeId};

#[derive(Debug, thiserror::Error)]
pub enum CgcastError {
    #[error(transparent)]
    Seek(#[from] SeekError),
    #[error("delta {0} too large for the coloring palette (max 64)")]
    DeltaTooLarge(u32),
    #[error("cgcast requires a full-mode seek configuration")]
    FilterModeRejected,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CgcastConfig {
    pub seek: SeekConfig,
    /// Coloring phase budget multiplier: `ceil(phase_mult * ln n)` phases.
    pub phase_mult: f64,
    /// Back-off rounds per dissemination step; default `ceil(2 ln n)`.
    pub dissem_rounds: Option<u32>,
}

impl Default for CgcastConfig {
    fn default() -> Self {
        CgcastConfig {
            seek: SeekConfig::full(),
            phase_mult: 4.0,
            dissem_rounds: None,
        }
    }
}

impl CgcastConfig {
    pub fn phase_budget(&self, n: u32) -> u32 {
        (self.phase_mult * (n as f64).ln()).ceil() as u32
    }

    pub fn rounds_per_step(&self, n: u32) -> u32 {
        self.dissem_rounds
            .unwrap_or_else(|| (2.0 * (n as f64).ln()).ceil() as u32)
    }
}

/// Per-neighbor dedicated channel labels, from this endpoint's perspective.
/// For every non-flagged edge, the two endpoints' labels resolve to the same
/// global channel.
#[derive(Clone, Debug, Default, Serialize)]
pub struct DedicatedChannelTable {
    pub channels: BTreeMap<NodeId, LocalLabel>,
}

/// Slot accounting of a full pipeline execution. Components are exact closed
/// forms; the total is their sum.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct CgcastSlots {
    pub discovery: u64,
    pub times_exchange: u64,
    pub coloring: u64,
    pub handoff: u64,
    pub dissemination: u64,
}

impl CgcastSlots {
    pub fn total(&self) -> u64 {
        self.discovery + self.times_exchange + self.coloring + self.handoff + self.dissemination
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CgcastOutcome {
    /// Whether every known virtual node decided within the phase budget.
    pub colored: bool,
    /// Highest phase at which some virtual node decided (0 when none).
    pub phases_used: u32,
    /// Final edge colors collected from the owners.
    pub coloring: BTreeMap<EdgeId, u16>,
    /// Edges dropped from the schedule: discovery or time-exchange misses.
    pub flagged_edges: Vec<EdgeId>,
    pub informed: Vec<bool>,
    /// Dissemination slots elapsed when each node first held the message;
    /// 0 for the source, `None` for never-informed nodes.
    pub informed_at: Vec<Option<u64>>,
    pub slots: CgcastSlots,
}

/// Deterministic sub-seed for one pipeline stage.
fn stage_seed(master_seed: u64, stage: u64) -> u64 {
    crate::sim::derive_seed(master_seed, stage, purpose::PROTOCOL)
}

/// Result of the discovery prefix shared by the coloring pipeline.
pub struct DiscoveryArtifacts {
    pub outputs: Vec<SeekOutput>,
    pub dedicated: Vec<DedicatedChannelTable>,
    pub flagged: Vec<EdgeId>,
    pub slots: (u64, u64),
}

/// Runs discovery twice (identities, then identities with first-heard times)
/// and fixes the per-edge dedicated channels.
pub fn discover_and_fix_channels(
    net: &NetworkInstance,
    cfg: &SeekConfig,
    master_seed: u64,
) -> Result<DiscoveryArtifacts, CgcastError> {
    if !matches!(cfg.mode, SeekMode::Full) {
        return Err(CgcastError::FilterModeRejected);
    }
    let budget = seek_budget(net.params(), cfg)?;
    let run1 = seek_run(
        net,
        cfg,
        stage_seed(master_seed, 0),
        SeekRunOptions {
            record_channel_log: true,
            ..Default::default()
        },
    )?;

    // Second run: each node republishes its identity along with the slots at
    // which it first heard each neighbor.
    let times: Vec<Arc<[(NodeId, u64)]>> = run1
        .outputs
        .iter()
        .map(|out| {
            let pairs: Vec<(NodeId, u64)> =
                out.state.first_heard.iter().map(|(&v, &t)| (v, t)).collect();
            Arc::from(pairs)
        })
        .collect();
    let payload_fn = |id: NodeId| Payload::IdentityWithTimes(id, times[id.index()].clone());
    let run2 = seek_run(
        net,
        cfg,
        stage_seed(master_seed, 1),
        SeekRunOptions {
            payload_fn: Some(&payload_fn),
            log_payloads: true,
            slot_offset: budget.total_slots(),
            ..Default::default()
        },
    )?;

    let (dedicated, flagged) = fix_dedicated_channels(net.n(), &run1.outputs, &run2.outputs);
    Ok(DiscoveryArtifacts {
        outputs: run1.outputs,
        dedicated,
        flagged,
        slots: (budget.total_slots(), budget.total_slots()),
    })
}

/// Resolves each edge's dedicated channel from the two endpoints' first-heard
/// times: both pick the channel they used at slot `min(t_uv, t_vu)` of the
/// first run. Neighbors discovered in run one but missing from run two's
/// exchange yield flagged edges.
pub fn fix_dedicated_channels(
    n: usize,
    run1: &[SeekOutput],
    run2: &[SeekOutput],
) -> (Vec<DedicatedChannelTable>, Vec<EdgeId>) {
    let mut tables = vec![DedicatedChannelTable::default(); n];
    let mut flagged = std::collections::BTreeSet::new();

    // Times tables received by each node in run two, keyed by sender.
    type TimesTable<'a> = BTreeMap<NodeId, &'a Arc<[(NodeId, u64)]>>;
    let received: Vec<TimesTable<'_>> = run2
        .iter()
        .map(|out| {
            let mut m = BTreeMap::new();
            for (_, payload) in &out.state.payload_log {
                if let Payload::IdentityWithTimes(v, pairs) = payload {
                    m.entry(*v).or_insert(pairs);
                }
            }
            m
        })
        .collect();

    for u in 0..n {
        let me = NodeId(u as u32);
        let log = run1[u]
            .channel_log
            .as_ref()
            .expect("run one must record the channel log");
        for (&v, &t_uv) in &run1[u].state.first_heard {
            let t_vu = received[u]
                .get(&v)
                .and_then(|pairs| pairs.iter().find(|(w, _)| *w == me).map(|(_, t)| *t));
            match t_vu {
                Some(t_vu) => {
                    let t = t_uv.min(t_vu);
                    tables[u]
                        .channels
                        .insert(v, LocalLabel(log[t as usize]));
                }
                None => {
                    flagged.insert(EdgeId::new(me, v));
                }
            }
        }
    }
    (tables, flagged.into_iter().collect())
}

/// Full global broadcast from `source`.
pub fn cgcast(
    net: &NetworkInstance,
    source: NodeId,
    message: &[u8],
    cfg: &CgcastConfig,
    master_seed: u64,
) -> Result<CgcastOutcome, CgcastError> {
    let params = *net.params();
    if 2 * params.delta_max > 64 {
        return Err(CgcastError::DeltaTooLarge(params.delta_max));
    }
    let budget = seek_budget(&params, &cfg.seek)?;
    let run_slots = budget.total_slots();

    let prefix = discover_and_fix_channels(net, &cfg.seek, master_seed)?;
    let mut offset = prefix.slots.0 + prefix.slots.1;

    let coloring = color_line_graph(
        net,
        &prefix,
        &ColoringConfig {
            seek: cfg.seek,
            phase_budget: cfg.phase_budget(params.n),
        },
        master_seed,
        offset,
    )?;
    let coloring_slots = cfg.phase_budget(params.n) as u64 * 4 * run_slots;
    offset += coloring_slots;

    // Handoff: owners announce final colors so the non-owning endpoints learn
    // their edges' colors.
    let handoff_claims: Vec<Payload> = (0..net.n())
        .map(|u| {
            let claims: Vec<crate::sim::ColorClaim> = coloring.states[u]
                .iter()
                .filter_map(|s| {
                    s.final_color.map(|color| crate::sim::ColorClaim {
                        edge: s.edge,
                        color,
                        phase: coloring.phases_used as u16,
                        stage: crate::sim::ClaimStage::Final,
                    })
                })
                .collect();
            Payload::ColorInfo(Arc::from(claims))
        })
        .collect();
    let handoff = exchange_round(
        net,
        &handoff_claims,
        false,
        &cfg.seek,
        stage_seed(master_seed, 1_000_000),
        offset,
    )?;
    offset += run_slots;

    // Each node's color table for its incident edges: owned finals plus any
    // finals heard during the phases or the handoff.
    let mut edge_colors: Vec<BTreeMap<EdgeId, u16>> = vec![BTreeMap::new(); net.n()];
    for (u, colors) in edge_colors.iter_mut().enumerate() {
        let me = NodeId(u as u32);
        for s in &coloring.states[u] {
            if let Some(color) = s.final_color {
                colors.insert(s.edge, color);
            }
        }
        for claim in coloring.heard_finals[u].iter().chain(&handoff.received[u]) {
            if claim.edge.other(me).is_some() {
                colors.entry(claim.edge).or_insert(claim.color);
            }
        }
    }

    let dissem = disseminate(
        net,
        source,
        message,
        &edge_colors,
        &prefix.dedicated,
        &DissemConfig {
            phases: params.diam,
            two_delta: 2 * params.delta_max,
            rounds_per_step: cfg.rounds_per_step(params.n),
            slots_per_round: budget.part2_slots_per_step,
        },
        stage_seed(master_seed, 2_000_000),
        offset,
    );

    // God-view diagnostics: edges whose owner never learned them are dropped
    // from the schedule just like flagged ones.
    let mut flagged = prefix.flagged.clone();
    let mut colored_edges = BTreeMap::new();
    for u in 0..net.n() {
        for s in &coloring.states[u] {
            if let Some(color) = s.final_color {
                colored_edges.insert(s.edge, color);
            }
        }
    }
    for e in net.edges() {
        if !colored_edges.contains_key(e) && !flagged.contains(e) {
            flagged.push(*e);
        }
    }
    flagged.sort();
    flagged.dedup();

    Ok(CgcastOutcome {
        colored: coloring.complete,
        phases_used: coloring.phases_used,
        coloring: colored_edges,
        flagged_edges: flagged,
        informed: dissem.informed,
        informed_at: dissem.informed_at,
        slots: CgcastSlots {
            discovery: prefix.slots.0,
            times_exchange: prefix.slots.1,
            coloring: coloring_slots,
            handoff: run_slots,
            dissemination: dissem.slots,
        },
    })
}
