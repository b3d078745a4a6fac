//! Bipartite hitting games.
//!
//! A referee privately selects a matching `M` of size `k` over the complete
//! bipartite graph on two sides of size `c` (`k = c` for the complete
//! variant). The player proposes one edge per round and wins at the first
//! proposal inside `M`. A player only ever sees its own history of losing
//! guesses.
//!
//! The reduction player replays a two-node neighbor discovery execution:
//! each simulated slot it guesses the pair of channels the two nodes
//! selected, feeding silence back into the simulation on a loss. Its winning
//! round is exactly the first slot at which the simulated pair lands on a
//! shared channel.

use serde::Serialize;

use rand::seq::SliceRandom;
use rand::RngExt;

use crate::seek::{seek_budget, SeekConfig, SeekError, SeekMachine};
use crate::sim::{
    purpose, run_protocol_with, NodeProtocol, NodeSeed, NodeView, Payload, RngStream, RunOptions,
};
use crate::topology::{two_node_label_matching, NetworkInstance};
use crate::NodeId;

/// A proposed edge `(a_i, b_j)`, both coordinates 1-based in `[1, c]`.
pub type GameEdge = (u16, u16);

#[derive(Debug, thiserror::Error)]
pub enum GameError {
    #[error("matching is not injective or out of range")]
    BadMatching,
    #[error("player guessed {guess:?} outside [1, {c}]^2")]
    GuessOutOfRange { guess: GameEdge, c: u16 },
    #[error("no game results to summarize")]
    Empty,
    #[error(transparent)]
    Seek(#[from] SeekError),
}

/// One game: side size, matching size, and the referee's hidden matching.
pub struct GameInstance {
    c: u16,
    k: u16,
    matching: Vec<GameEdge>,
}

impl GameInstance {
    /// Uniformly random `k`-matching: `k` distinct rows, `k` distinct
    /// columns, and a uniform bijection between them.
    pub fn sample(c: u16, k: u16, rng: &mut RngStream) -> Result<Self, GameError> {
        if k < 1 || k > c {
            return Err(GameError::BadMatching);
        }
        let mut rows: Vec<u16> = (1..=c).collect();
        let mut cols: Vec<u16> = (1..=c).collect();
        rows.shuffle(rng);
        cols.shuffle(rng);
        let matching = rows[..k as usize]
            .iter()
            .zip(&cols[..k as usize])
            .map(|(&a, &b)| (a, b))
            .collect();
        Ok(GameInstance { c, k, matching })
    }

    /// The complete variant: a maximum (perfect) matching.
    pub fn complete(c: u16, rng: &mut RngStream) -> Result<Self, GameError> {
        Self::sample(c, c, rng)
    }

    /// Builds a game from an explicit matching, validating injectivity.
    pub fn from_matching(c: u16, matching: Vec<GameEdge>) -> Result<Self, GameError> {
        let k = matching.len() as u16;
        if k < 1 || k > c {
            return Err(GameError::BadMatching);
        }
        let mut rows: Vec<u16> = matching.iter().map(|e| e.0).collect();
        let mut cols: Vec<u16> = matching.iter().map(|e| e.1).collect();
        rows.sort_unstable();
        cols.sort_unstable();
        let in_range = matching
            .iter()
            .all(|&(a, b)| (1..=c).contains(&a) && (1..=c).contains(&b));
        rows.dedup();
        cols.dedup();
        if !in_range || rows.len() != matching.len() || cols.len() != matching.len() {
            return Err(GameError::BadMatching);
        }
        Ok(GameInstance { c, k, matching })
    }

    pub fn c(&self) -> u16 {
        self.c
    }

    pub fn k(&self) -> u16 {
        self.k
    }

    fn contains(&self, e: GameEdge) -> bool {
        self.matching.contains(&e)
    }
}

/// A player sees only its own losing-guess history.
pub trait PlayerStrategy {
    fn next_guess(&mut self, history: &[GameEdge], rng: &mut RngStream) -> GameEdge;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GameResult {
    pub won: bool,
    /// Winning round, or `max_rounds` when capped.
    pub rounds: u64,
}

/// Plays one game to a win or the round cap.
pub fn referee_play(
    instance: &GameInstance,
    player: &mut dyn PlayerStrategy,
    max_rounds: u64,
    rng: &mut RngStream,
) -> Result<GameResult, GameError> {
    assert!(max_rounds >= 1);
    let mut history: Vec<GameEdge> = Vec::new();
    for round in 1..=max_rounds {
        let guess = player.next_guess(&history, rng);
        if !(1..=instance.c).contains(&guess.0) || !(1..=instance.c).contains(&guess.1) {
            return Err(GameError::GuessOutOfRange {
                guess,
                c: instance.c,
            });
        }
        if instance.contains(guess) {
            return Ok(GameResult {
                won: true,
                rounds: round,
            });
        }
        history.push(guess);
    }
    Ok(GameResult {
        won: false,
        rounds: max_rounds,
    })
}

/// I.i.d. uniform guesses over the `c^2` edges.
pub struct UniformPlayer {
    c: u16,
}

pub fn make_uniform_player(c: u16) -> UniformPlayer {
    UniformPlayer { c }
}

impl PlayerStrategy for UniformPlayer {
    fn next_guess(&mut self, _history: &[GameEdge], rng: &mut RngStream) -> GameEdge {
        (
            rng.random_range(1..=self.c),
            rng.random_range(1..=self.c),
        )
    }
}

/// Enumerates all edges row-major without repeating any.
pub struct FreshPairPlayer {
    c: u16,
    cursor: u32,
}

pub fn make_fresh_pair_player(c: u16) -> FreshPairPlayer {
    FreshPairPlayer { c, cursor: 0 }
}

impl PlayerStrategy for FreshPairPlayer {
    fn next_guess(&mut self, _history: &[GameEdge], _rng: &mut RngStream) -> GameEdge {
        // With k >= 1 the enumeration must win within c^2 rounds.
        assert!(
            self.cursor < self.c as u32 * self.c as u32,
            "fresh-pair player exhausted all {}^2 edges without winning",
            self.c
        );
        let a = (self.cursor / self.c as u32) as u16 + 1;
        let b = (self.cursor % self.c as u32) as u16 + 1;
        self.cursor += 1;
        (a, b)
    }
}

/// Replays a two-node discovery execution as a game strategy.
///
/// Each call advances the simulated slot: the guess is the pair of labels the
/// two nodes tuned to, with idle slots consuming a round via the fixed dummy
/// guess (1, 1). Losing guesses feed silence to both machines, which is
/// consistent because no reception can happen before the pair first lands on
/// a shared channel.
pub struct ReductionPlayer {
    machines: (SeekMachine, SeekMachine),
    slot: u64,
    budget: u64,
    slot_open: bool,
}

/// Builds the reduction player from a two-node instance view. The discovery
/// machines are constructed exactly as a real simulation run would build
/// them, so paired seeds reproduce the same execution.
pub fn make_reduction_player(
    net: &NetworkInstance,
    cfg: &SeekConfig,
    master_seed: u64,
) -> Result<ReductionPlayer, GameError> {
    assert_eq!(net.n(), 2, "the reduction simulates a two-node network");
    let params = *net.params();
    let budget = seek_budget(&params, cfg)?;
    let mk = |id: u32| {
        SeekMachine::new(
            NodeView {
                id: NodeId(id),
                params,
            },
            NodeSeed::new(master_seed, id as u64),
            budget,
            Payload::Identity(NodeId(id)),
            false,
            false,
        )
    };
    Ok(ReductionPlayer {
        machines: (mk(0), mk(1)),
        slot: 0,
        budget: budget.total_slots(),
        slot_open: false,
    })
}

impl PlayerStrategy for ReductionPlayer {
    fn next_guess(&mut self, _history: &[GameEdge], _rng: &mut RngStream) -> GameEdge {
        // The referee only calls again after a loss: complete the previous
        // simulated slot by delivering silence to both nodes.
        if self.slot_open {
            self.slot_open = false;
            let silence = crate::sim::SlotObservation::Silence;
            self.machines.0.observe(self.slot, &silence);
            self.machines.1.observe(self.slot, &silence);
            self.slot += 1;
        }
        if self.slot >= self.budget {
            // The discovery algorithm halted; burn the remaining rounds.
            return (1, 1);
        }
        let a = self.machines.0.next_action(self.slot);
        let b = self.machines.1.next_action(self.slot);
        self.slot_open = true;
        match (a.label(), b.label()) {
            (Some(la), Some(lb)) => (la.0, lb.0),
            _ => (1, 1),
        }
    }
}

/// The hidden matching induced by a two-node instance's channel overlap,
/// expressed in the two nodes' local labels. This is the game the reduction
/// player is implicitly playing against.
pub fn matching_from_two_node(net: &NetworkInstance) -> Vec<GameEdge> {
    two_node_label_matching(net)
        .into_iter()
        .map(|(a, b)| (a.0, b.0))
        .collect()
}

/// Independent oracle for the reduction pairing: runs the same two machines
/// inside the real engine and reports the first slot at which both nodes
/// tuned (broadcast or listen) to labels resolving to one shared global
/// channel.
pub fn first_joint_shared_slot(
    net: &NetworkInstance,
    cfg: &SeekConfig,
    master_seed: u64,
) -> Result<Option<u64>, GameError> {
    assert_eq!(net.n(), 2);
    let budget = seek_budget(net.params(), cfg)?;
    let run = run_protocol_with(
        net,
        |view: NodeView, seed: NodeSeed| {
            SeekMachine::new(view, seed, budget, Payload::Identity(view.id), false, false)
        },
        budget.total_slots(),
        master_seed,
        RunOptions {
            record_trace: true,
            ..Default::default()
        },
    )
    .map_err(SeekError::from)?;
    let trace = run.trace.expect("trace recording was requested");
    for record in &trace {
        if let (Some(la), Some(lb)) = (record.actions[0].label(), record.actions[1].label()) {
            let ga = net.global_of(NodeId(0), la);
            let gb = net.global_of(NodeId(1), lb);
            if ga.is_some() && ga == gb {
                return Ok(Some(record.slot));
            }
        }
    }
    Ok(None)
}

/// Runs one reduction game against the matching induced by the instance,
/// with the referee cap at the discovery budget.
pub fn play_reduction_on_instance(
    net: &NetworkInstance,
    cfg: &SeekConfig,
    master_seed: u64,
) -> Result<GameResult, GameError> {
    let matching = matching_from_two_node(net);
    let game = GameInstance::from_matching(net.params().c, matching)?;
    let budget = seek_budget(net.params(), cfg)?;
    let mut player = make_reduction_player(net, cfg, master_seed)?;
    let mut rng = crate::sim::derive_stream(master_seed, 0, purpose::PLAYER);
    referee_play(&game, &mut player, budget.total_slots().max(1), &mut rng)
}

/// Order statistics over a batch of game results.
#[derive(Clone, Debug, Serialize)]
pub struct GameStats {
    pub games: u64,
    pub wins: u64,
    pub mean_rounds: f64,
    pub median_rounds: f64,
    pub p10: f64,
    pub p90: f64,
    /// `P[win <= t]` sampled at the requested thresholds.
    pub win_curve: Vec<(u64, f64)>,
    /// Fraction of games capped at the round limit without a win.
    pub capped_fraction: f64,
}

/// Summarizes results; capped losses count at their cap value and are
/// reported separately.
pub fn game_stats(results: &[GameResult], curve_at: &[u64]) -> Result<GameStats, GameError> {
    if results.is_empty() {
        return Err(GameError::Empty);
    }
    let mut rounds: Vec<u64> = results.iter().map(|r| r.rounds).collect();
    rounds.sort_unstable();
    let wins = results.iter().filter(|r| r.won).count() as u64;
    let win_curve = curve_at
        .iter()
        .map(|&t| {
            let hits = results.iter().filter(|r| r.won && r.rounds <= t).count();
            (t, hits as f64 / results.len() as f64)
        })
        .collect();
    Ok(GameStats {
        games: results.len() as u64,
        wins,
        mean_rounds: crate::stats::mean_u64(&rounds),
        median_rounds: crate::stats::quantile_u64(&rounds, 0.5),
        p10: crate::stats::quantile_u64(&rounds, 0.1),
        p90: crate::stats::quantile_u64(&rounds, 0.9),
        win_curve,
        capped_fraction: (results.len() as u64 - wins) as f64 / results.len() as f64,
    })
}
