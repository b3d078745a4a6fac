//! Trial orchestration: builds instances, runs the scenario per trial, and
//! aggregates deterministic summaries.
//!
//! Trial `i` derives its seeds from `(master_seed, i)`, so trials are
//! independent and the records are identical whether trials execute serially
//! or in parallel.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crn_sim::cgcast::{cgcast, CgcastConfig, CgcastError};
use crn_sim::count::{CountConfig, CountError, CountMachine};
use crn_sim::games::{
    first_joint_shared_slot, make_fresh_pair_player, make_reduction_player, make_uniform_player,
    matching_from_two_node, referee_play, GameError, GameInstance, GameResult,
};
use crn_sim::seek::{seek_budget, seek_run, SeekError, SeekMode, SeekRunOptions};
use crn_sim::sim::{derive_seed, derive_stream, purpose, run_protocol, Payload, SimError, StopRule};
use crn_sim::stats::quantile_u64;
use crn_sim::topology::{
    gen_complete_tree, gen_random, gen_split_overlap, gen_star, gen_two_node, NetworkInstance,
    TopologyError,
};
use crn_sim::{LocalLabel, NodeId};

use crate::config::{
    ExperimentConfig, GeneratorSpec, InstanceSource, PlayerKind, Scenario,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Count(#[from] CountError),
    #[error(transparent)]
    Seek(#[from] SeekError),
    #[error(transparent)]
    Cgcast(#[from] CgcastError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

/// Execution knobs that must not influence results, only resource usage.
#[derive(Clone, Copy, Debug)]
pub struct Execution {
    pub parallel: bool,
}

impl Default for Execution {
    fn default() -> Self {
        Execution { parallel: true }
    }
}

fn instance_seed(master: u64, trial: u64) -> u64 {
    derive_seed(master, trial, purpose::INSTANCE)
}

fn run_seed(master: u64, trial: u64) -> u64 {
    derive_seed(master, trial, purpose::TRIAL)
}

/// Per-node trace summary exported in JSON records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeTrace {
    pub discovered: Vec<u32>,
    pub first_heard: BTreeMap<String, u64>,
    pub informed_at: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub trial: u64,
    pub m: u32,
    pub estimate: u64,
    pub in_range: bool,
    pub slots: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeekRecord {
    pub trial: u64,
    pub n: u32,
    pub c: u16,
    pub k: u16,
    pub k_max: u16,
    pub delta: u32,
    pub diam: u32,
    pub success: bool,
    pub sound: bool,
    /// Closed-form protocol budget in slots.
    pub slot_budget: u64,
    /// Slots elapsed until the scenario's discovery predicate held, when it
    /// did within the simulated horizon.
    pub discovery_slots: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_node: Option<Vec<NodeTrace>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgcastRecord {
    pub trial: u64,
    pub n: u32,
    pub delta: u32,
    pub diam: u32,
    pub colored: bool,
    pub phases_used: u32,
    pub flagged_edges: u32,
    pub informed_count: u32,
    pub all_informed: bool,
    /// Dissemination slots elapsed when the last informed node got the
    /// message.
    pub last_informed_slots: Option<u64>,
    pub dissem_slots: u64,
    pub total_slots: u64,
    /// JSON detail: dissemination slots elapsed per node (null = never).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub informed_at: Option<BTreeMap<String, Option<u64>>>,
    /// JSON detail: the edges dropped from the schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flagged: Option<Vec<(u32, u32)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub game: String,
    pub c: u16,
    pub k: u16,
    pub player: String,
    pub trial: u64,
    pub rounds: u64,
    pub won: bool,
    /// Reduction scenario only: the paired simulation's first shared-channel
    /// slot and whether the win round equals it plus one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_slot: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matches_oracle: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RecordSet {
    Count(Vec<CountRecord>),
    Seek(Vec<SeekRecord>),
    Cgcast(Vec<CgcastRecord>),
    Game(Vec<GameRecord>),
}

impl RecordSet {
    pub fn len(&self) -> usize {
        match self {
            RecordSet::Count(v) => v.len(),
            RecordSet::Seek(v) => v.len(),
            RecordSet::Cgcast(v) => v.len(),
            RecordSet::Game(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Deterministic aggregate over the records (which remain the source of
/// truth; this is always recomputable from them).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub trials: u64,
    pub successes: u64,
    pub success_rate: f64,
    /// Median / p10 / p90 of the scenario's primary metric: estimate for
    /// count, slots-to-success for discovery (censored at the budget),
    /// last-informed dissemination slot for broadcast, rounds for games.
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

pub struct RunOutput {
    pub config: ExperimentConfig,
    pub records: RecordSet,
    pub summary: Summary,
}

pub fn build_instance(
    spec: &GeneratorSpec,
    seed: u64,
) -> Result<NetworkInstance, TopologyError> {
    match *spec {
        GeneratorSpec::TwoNode { c, k } => gen_two_node(c, k, seed),
        GeneratorSpec::Star { delta, c, k, k_max } => gen_star(delta, c, k, k_max, seed),
        GeneratorSpec::CompleteTree { depth, c, delta } => gen_complete_tree(depth, c, delta, seed),
        GeneratorSpec::Random {
            n,
            pool,
            c,
            k,
            k_max,
            density,
        } => gen_random(n, pool.resolve(c), c, k, k_max, density, seed),
        GeneratorSpec::SplitOverlap {
            good_deg,
            good_overlap,
            weak_deg,
        } => gen_split_overlap(good_deg, good_overlap, weak_deg, seed),
    }
}

fn resolve_instance(
    source: &InstanceSource,
    trial_seed: u64,
) -> Result<NetworkInstance, HarnessError> {
    match source {
        InstanceSource::Generator(spec) => Ok(build_instance(spec, trial_seed)?),
        InstanceSource::File { path } => Ok(NetworkInstance::load(path)?),
    }
}

fn node_traces(
    outputs: &[crn_sim::seek::SeekOutput],
    informed_at: Option<&[Option<u64>]>,
) -> Vec<NodeTrace> {
    outputs
        .iter()
        .enumerate()
        .map(|(u, out)| NodeTrace {
            discovered: out.state.ids.iter().map(|id| id.0).collect(),
            first_heard: out
                .state
                .first_heard
                .iter()
                .map(|(id, &t)| (id.0.to_string(), t))
                .collect(),
            informed_at: informed_at.and_then(|v| v[u]),
        })
        .collect()
}

fn count_trial(
    config: &ExperimentConfig,
    m: u32,
    n_param: u32,
    delta_cap: u32,
    trial: u64,
) -> Result<CountRecord, HarnessError> {
    if m < 1 {
        return Err(HarnessError::Other(
            "count scenario needs at least one broadcaster (m >= 1)".into(),
        ));
    }
    let net = gen_star(m, 1, 1, 1, instance_seed(config.master_seed, trial))?;
    let cfg = CountConfig::new(
        n_param,
        delta_cap,
        config.protocol.count_delta,
        config.protocol.count_mult,
    )?;
    let run = run_protocol(
        &net,
        |view, seed| {
            if view.id == NodeId(0) {
                CountMachine::listener(cfg, LocalLabel(1))
            } else {
                CountMachine::broadcaster(
                    cfg,
                    LocalLabel(1),
                    Payload::Identity(view.id),
                    seed.stream(purpose::PROTOCOL),
                )
            }
        },
        cfg.slots(),
        run_seed(config.master_seed, trial),
    )?;
    let result = run.outputs[0]
        .clone()
        .expect("node 0 is the listener");
    let estimate = result.estimate;
    Ok(CountRecord {
        trial,
        m,
        estimate,
        in_range: estimate >= m as u64 && estimate <= 4 * m as u64,
        slots: cfg.slots(),
    })
}

fn seek_trial(
    config: &ExperimentConfig,
    mode: SeekMode,
    trial: u64,
    detailed: bool,
) -> Result<SeekRecord, HarnessError> {
    let source = config.instance.as_ref().expect("validated");
    let net = resolve_instance(source, instance_seed(config.master_seed, trial))?;
    let params = *net.params();
    let cfg = config.protocol.seek_config(mode);
    let budget = seek_budget(&params, &cfg)?;

    // Simulation stops once the success predicate resolves (or at the cap);
    // the reported budget is the closed-form protocol runtime either way.
    let (stop, good_overlap) = match mode {
        SeekMode::Full => (StopRule::FullDiscovery, None),
        SeekMode::Filter { k_hat, .. } => {
            (StopRule::GoodDiscovery { min_overlap: k_hat }, Some(k_hat))
        }
    };
    let horizon = budget
        .total_slots()
        .min(config.slot_budget_cap.unwrap_or(u64::MAX))
        .max(1);
    let run = seek_run(
        &net,
        &cfg,
        run_seed(config.master_seed, trial),
        SeekRunOptions {
            stop,
            ..Default::default()
        },
    )?;
    let discovery_at = match mode {
        SeekMode::Full => run.summary.full_discovery_at,
        SeekMode::Filter { .. } => run.summary.good_discovery_at,
    };
    let discovery_slots = discovery_at
        .map(|t| t + 1)
        .filter(|&t| t <= horizon);

    let mut success = true;
    let mut sound = true;
    for (u, out) in run.outputs.iter().enumerate() {
        let me = NodeId(u as u32);
        let neighbors: std::collections::BTreeSet<NodeId> =
            net.neighbors(me).iter().copied().collect();
        if !out.state.ids.is_subset(&neighbors) {
            sound = false;
        }
        let required: std::collections::BTreeSet<NodeId> = match good_overlap {
            None => neighbors.clone(),
            Some(k_hat) => net.good_neighbors(me, k_hat).into_iter().collect(),
        };
        let complete = match good_overlap {
            None => out.state.ids == neighbors,
            Some(_) => required.is_subset(&out.state.ids),
        };
        if !complete {
            success = false;
        }
    }
    // Under a slot cap shorter than the discovery moment the trial fails.
    if discovery_slots.is_none() {
        success = false;
    }

    Ok(SeekRecord {
        trial,
        n: params.n,
        c: params.c,
        k: params.k,
        k_max: params.k_max,
        delta: params.delta_max,
        diam: params.diam,
        success,
        sound,
        slot_budget: budget.total_slots(),
        discovery_slots,
        per_node: detailed.then(|| node_traces(&run.outputs, None)),
    })
}

fn cgcast_trial(
    config: &ExperimentConfig,
    source_node: u32,
    trial: u64,
    detailed: bool,
) -> Result<CgcastRecord, HarnessError> {
    let source = config.instance.as_ref().expect("validated");
    let net = resolve_instance(source, instance_seed(config.master_seed, trial))?;
    let params = *net.params();
    if source_node >= params.n {
        return Err(HarnessError::Other(format!(
            "source node {source_node} outside 0..{}",
            params.n
        )));
    }
    let cfg = CgcastConfig {
        seek: config.protocol.seek_config(SeekMode::Full),
        phase_mult: config.protocol.phase_mult,
        dissem_rounds: config.protocol.dissem_rounds,
    };
    let out = cgcast(
        &net,
        NodeId(source_node),
        b"broadcast-payload",
        &cfg,
        run_seed(config.master_seed, trial),
    )?;
    let informed_count = out.informed.iter().filter(|&&i| i).count() as u32;
    let last = out
        .informed_at
        .iter()
        .filter_map(|&t| t)
        .max();
    Ok(CgcastRecord {
        trial,
        n: params.n,
        delta: params.delta_max,
        diam: params.diam,
        colored: out.colored,
        phases_used: out.phases_used,
        flagged_edges: out.flagged_edges.len() as u32,
        informed_count,
        all_informed: informed_count == params.n,
        last_informed_slots: (informed_count == params.n).then_some(last.unwrap_or(0)),
        dissem_slots: out.slots.dissemination,
        total_slots: out.slots.total(),
        informed_at: detailed.then(|| {
            out.informed_at
                .iter()
                .enumerate()
                .map(|(u, &t)| (u.to_string(), t))
                .collect()
        }),
        flagged: detailed.then(|| {
            out.flagged_edges
                .iter()
                .map(|e| (e.0 .0, e.1 .0))
                .collect()
        }),
    })
}

fn game_trial(
    config: &ExperimentConfig,
    trial: u64,
) -> Result<GameRecord, HarnessError> {
    let master = config.master_seed;
    // The complete variant is the k = c case of the bipartite game.
    let flat = match &config.scenario {
        Scenario::GameBipartite {
            c,
            k,
            player,
            max_rounds,
        } => Some((*c, *k, *player, *max_rounds)),
        Scenario::GameComplete {
            c,
            player,
            max_rounds,
        } => Some((*c, *c, *player, *max_rounds)),
        _ => None,
    };
    match &config.scenario {
        Scenario::GameBipartite { .. } | Scenario::GameComplete { .. } => {
            let (c, k, player, max_rounds) = flat.expect("matched above");
            let mut referee = derive_stream(master, trial, purpose::REFEREE);
            let game = GameInstance::sample(c, k, &mut referee)?;
            let mut rng = derive_stream(master, trial, purpose::PLAYER);
            let cfg = config.protocol.seek_config(SeekMode::Full);
            let result: GameResult = match player {
                PlayerKind::Uniform => {
                    let mut p = make_uniform_player(c);
                    referee_play(&game, &mut p, max_rounds, &mut rng)?
                }
                PlayerKind::FreshPair => {
                    let mut p = make_fresh_pair_player(c);
                    referee_play(&game, &mut p, max_rounds, &mut rng)?
                }
                PlayerKind::Reduction => {
                    let net = gen_two_node(c, k, instance_seed(master, trial))?;
                    let mut p = make_reduction_player(&net, &cfg, run_seed(master, trial))?;
                    referee_play(&game, &mut p, max_rounds, &mut rng)?
                }
            };
            Ok(GameRecord {
                game: config.scenario.name().into(),
                c,
                k,
                player: player.name().into(),
                trial,
                rounds: result.rounds,
                won: result.won,
                oracle_slot: None,
                matches_oracle: None,
            })
        }
        Scenario::GameReduction { c, k } => {
            let net = gen_two_node(*c, *k, instance_seed(master, trial))?;
            let cfg = config.protocol.seek_config(SeekMode::Full);
            let seed = run_seed(master, trial);
            let matching = matching_from_two_node(&net);
            let game = GameInstance::from_matching(*c, matching)?;
            let budget = seek_budget(net.params(), &cfg)?;
            let mut player = make_reduction_player(&net, &cfg, seed)?;
            let mut rng = derive_stream(master, trial, purpose::PLAYER);
            let result = referee_play(&game, &mut player, budget.total_slots().max(1), &mut rng)?;
            let oracle = first_joint_shared_slot(&net, &cfg, seed)?;
            let matches = match (result.won, oracle) {
                (true, Some(slot)) => result.rounds == slot + 1,
                (false, None) => true,
                _ => false,
            };
            Ok(GameRecord {
                game: "game-reduction".into(),
                c: *c,
                k: *k,
                player: "reduction".into(),
                trial,
                rounds: result.rounds,
                won: result.won,
                oracle_slot: oracle,
                matches_oracle: Some(matches),
            })
        }
        _ => unreachable!("game_trial called for a non-game scenario"),
    }
}

fn run_trials<R, F>(trials: u64, parallel: bool, f: F) -> Result<Vec<R>, HarnessError>
where
    R: Send,
    F: Fn(u64) -> Result<R, HarnessError> + Sync + Send,
{
    if parallel {
        (0..trials).into_par_iter().map(f).collect()
    } else {
        (0..trials).map(f).collect()
    }
}

/// Executes every trial and aggregates the summary. Identical results for
/// serial and parallel execution.
pub fn run(config: &ExperimentConfig, execution: Execution) -> Result<RunOutput, HarnessError> {
    config.validate()?;
    let detailed = matches!(config.format, crate::config::OutputFormat::Json);
    let records = match &config.scenario {
        Scenario::Count {
            m,
            n_param,
            delta_cap,
        } => RecordSet::Count(run_trials(config.trials, execution.parallel, |t| {
            count_trial(config, *m, *n_param, *delta_cap, t)
        })?),
        Scenario::Cseek => RecordSet::Seek(run_trials(config.trials, execution.parallel, |t| {
            seek_trial(config, SeekMode::Full, t, detailed)
        })?),
        Scenario::Ckseek { k_hat, delta_khat } => {
            let mode = SeekMode::Filter {
                k_hat: *k_hat,
                delta_khat: *delta_khat,
            };
            RecordSet::Seek(run_trials(config.trials, execution.parallel, |t| {
                seek_trial(config, mode, t, detailed)
            })?)
        }
        Scenario::Cgcast { source } => {
            RecordSet::Cgcast(run_trials(config.trials, execution.parallel, |t| {
                cgcast_trial(config, *source, t, detailed)
            })?)
        }
        Scenario::GameBipartite { .. }
        | Scenario::GameComplete { .. }
        | Scenario::GameReduction { .. } => {
            RecordSet::Game(run_trials(config.trials, execution.parallel, |t| {
                game_trial(config, t)
            })?)
        }
    };
    let summary = summarize(config.scenario.name(), &records);
    Ok(RunOutput {
        config: config.clone(),
        records,
        summary,
    })
}

/// Recomputes the aggregate from records.
pub fn summarize(scenario: &str, records: &RecordSet) -> Summary {
    let (successes, mut metric): (u64, Vec<u64>) = match records {
        RecordSet::Count(v) => (
            v.iter().filter(|r| r.in_range).count() as u64,
            v.iter().map(|r| r.estimate).collect(),
        ),
        RecordSet::Seek(v) => (
            v.iter().filter(|r| r.success).count() as u64,
            v.iter()
                .map(|r| r.discovery_slots.unwrap_or(r.slot_budget))
                .collect(),
        ),
        RecordSet::Cgcast(v) => (
            v.iter().filter(|r| r.all_informed).count() as u64,
            v.iter()
                .map(|r| r.last_informed_slots.unwrap_or(r.dissem_slots))
                .collect(),
        ),
        RecordSet::Game(v) => (
            v.iter().filter(|r| r.won).count() as u64,
            v.iter().map(|r| r.rounds).collect(),
        ),
    };
    metric.sort_unstable();
    let trials = records.len() as u64;
    let q = |p: f64| {
        if metric.is_empty() {
            0.0
        } else {
            quantile_u64(&metric, p)
        }
    };
    Summary {
        scenario: scenario.to_string(),
        trials,
        successes,
        success_rate: if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        },
        median: q(0.5),
        p10: q(0.1),
        p90: q(0.9),
    }
}
