//! Broadcaster counting by guess-and-verify.
//!
//! Setting: one listener and an unknown number `m <= delta` of broadcasters
//! share a channel. The procedure runs `ceil(lg(2*delta))` rounds of
//! `a * ceil(lg n)` slots. In round `i` each broadcaster fires per slot with
//! probability `1/2^(i-1)`; the listener counts clear receptions and, at the
//! first round whose heard fraction exceeds the trigger threshold, fixes the
//! estimate `2^(i+1)` and stops updating. Identities heard anywhere in the
//! procedure are accumulated regardless of the trigger.

use std::collections::BTreeSet;

use rand::RngExt;
use serde::Serialize;

use crate::sim::{NodeProtocol, Payload, RngStream, SlotAction, SlotObservation};
use crate::{LocalLabel, NodeId};

/// Smallest `r` with `2^r >= x`; 0 for `x <= 1`.
pub fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CountError {
    #[error("delta_param must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("detection gap closed: (1+d)*8e^-7 = {high:.6} !< (1-d)*2e^-4 = {low:.6}")]
    GapClosed { high: f64, low: f64 },
    #[error("round length multiplier must be >= 1")]
    BadRoundLen,
}

/// Parameters of one counting execution.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CountConfig {
    /// Trigger slack in (0, 1).
    pub delta_param: f64,
    /// Slots per round = `round_len_mult * ceil(lg n)`.
    pub round_len_mult: u32,
    /// `ceil(lg(2 * delta))` rounds, so the estimate range covers `m = delta`.
    pub num_rounds: u32,
    /// Slots per round.
    pub round_len: u32,
    /// Heard-fraction trigger `(1 + delta_param) * 8e^-7`.
    pub threshold: f64,
}

impl CountConfig {
    /// Builds the configuration for population bound `n` and degree bound
    /// `delta_cap`, validating that the detection gap is open.
    pub fn new(
        n: u32,
        delta_cap: u32,
        delta_param: f64,
        round_len_mult: u32,
    ) -> Result<Self, CountError> {
        if !(delta_param > 0.0 && delta_param < 1.0) {
            return Err(CountError::BadDelta(delta_param));
        }
        if round_len_mult < 1 {
            return Err(CountError::BadRoundLen);
        }
        let high = (1.0 + delta_param) * 8.0 * (-7.0f64).exp();
        let low = (1.0 - delta_param) * 2.0 * (-4.0f64).exp();
        if high >= low {
            return Err(CountError::GapClosed { high, low });
        }
        let num_rounds = ceil_log2(2 * delta_cap.max(1) as u64).max(1);
        let round_len = round_len_mult * ceil_log2(n.max(2) as u64);
        Ok(CountConfig {
            delta_param,
            round_len_mult,
            num_rounds,
            round_len,
            threshold: high,
        })
    }

    /// Total slots of one counting execution.
    pub fn slots(&self) -> u64 {
        self.num_rounds as u64 * self.round_len as u64
    }
}

/// Outcome at the listener. The estimate is 0 (nothing detected) or a power
/// of two `>= 4`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CountResult {
    pub estimate: u64,
    pub ids_heard: BTreeSet<NodeId>,
    pub triggered_round: Option<u32>,
}

/// Per-round broadcast probability `1/2^(i-1)` for 1-based round `i`.
#[inline]
pub fn broadcast_probability(round_i: u32) -> f64 {
    debug_assert!(round_i >= 1);
    1.0 / (1u64 << (round_i - 1)) as f64
}

/// One broadcaster slot: fire with the round's probability, otherwise idle on
/// the channel.
pub fn count_broadcaster_action(
    round_i: u32,
    label: LocalLabel,
    payload: &Payload,
    rng: &mut RngStream,
) -> SlotAction {
    if rng.random_bool(broadcast_probability(round_i)) {
        SlotAction::Broadcast {
            label,
            payload: payload.clone(),
        }
    } else {
        SlotAction::Idle
    }
}

/// Listener-side accumulator.
#[derive(Clone, Debug, Default)]
pub struct CountListener {
    heard_in_round: u32,
    estimate: Option<(u64, u32)>,
    ids_heard: BTreeSet<NodeId>,
}

impl CountListener {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe_slot(&mut self, observation: &SlotObservation) {
        if let Some(payload) = observation.heard() {
            self.heard_in_round += 1;
            if let Some(id) = payload.sender() {
                self.ids_heard.insert(id);
            }
        }
    }

    /// Closes round `round_i`: triggers the estimate at the first round whose
    /// heard fraction exceeds the threshold. Once triggered, later rounds
    /// never change the estimate.
    pub fn end_round(&mut self, round_i: u32, cfg: &CountConfig) {
        let fraction = self.heard_in_round as f64 / cfg.round_len as f64;
        if self.estimate.is_none() && fraction > cfg.threshold {
            self.estimate = Some((1u64 << (round_i + 1), round_i));
        }
        self.heard_in_round = 0;
    }

    pub fn result(&self) -> CountResult {
        CountResult {
            estimate: self.estimate.map_or(0, |(e, _)| e),
            ids_heard: self.ids_heard.clone(),
            triggered_round: self.estimate.map(|(_, r)| r),
        }
    }
}

/// Processes one whole round of observations at the listener.
pub fn count_listener_step(
    round_i: u32,
    observations: &[SlotObservation],
    cfg: &CountConfig,
    state: &mut CountListener,
) {
    for obs in observations {
        state.observe_slot(obs);
    }
    state.end_round(round_i, cfg);
}

/// Role played by a node in a standalone counting run.
#[allow(clippy::large_enum_variant)]
pub enum CountMachine {
    Listener {
        cfg: CountConfig,
        label: LocalLabel,
        state: CountListener,
        slots_seen: u64,
    },
    Broadcaster {
        cfg: CountConfig,
        label: LocalLabel,
        payload: Payload,
        rng: RngStream,
        slots_seen: u64,
    },
}

impl CountMachine {
    pub fn listener(cfg: CountConfig, label: LocalLabel) -> Self {
        CountMachine::Listener {
            cfg,
            label,
            state: CountListener::new(),
            slots_seen: 0,
        }
    }

    pub fn broadcaster(cfg: CountConfig, label: LocalLabel, payload: Payload, rng: RngStream) -> Self {
        CountMachine::Broadcaster {
            cfg,
            label,
            payload,
            rng,
            slots_seen: 0,
        }
    }
}

impl NodeProtocol for CountMachine {
    type Output = Option<CountResult>;

    fn next_action(&mut self, _slot: u64) -> SlotAction {
        match self {
            CountMachine::Listener {
                cfg, label, slots_seen, ..
            } => {
                if *slots_seen >= cfg.slots() {
                    SlotAction::Idle
                } else {
                    SlotAction::Listen { label: *label }
                }
            }
            CountMachine::Broadcaster {
                cfg,
                label,
                payload,
                rng,
                slots_seen,
            } => {
                if *slots_seen >= cfg.slots() {
                    SlotAction::Idle
                } else {
                    let round_i = (*slots_seen / cfg.round_len as u64) as u32 + 1;
                    count_broadcaster_action(round_i, *label, payload, rng)
                }
            }
        }
    }

    fn observe(&mut self, _slot: u64, observation: &SlotObservation) {
        match self {
            CountMachine::Listener {
                cfg,
                state,
                slots_seen,
                ..
            } => {
                if *slots_seen < cfg.slots() {
                    state.observe_slot(observation);
                    *slots_seen += 1;
                    if *slots_seen % cfg.round_len as u64 == 0 {
                        let round_i = (*slots_seen / cfg.round_len as u64) as u32;
                        state.end_round(round_i, cfg);
                    }
                }
            }
            CountMachine::Broadcaster { slots_seen, .. } => *slots_seen += 1,
        }
    }

    fn done(&self) -> bool {
        match self {
            CountMachine::Listener { cfg, slots_seen, .. }
            | CountMachine::Broadcaster { cfg, slots_seen, .. } => *slots_seen >= cfg.slots(),
        }
    }

    fn finish(self) -> Self::Output {
        match self {
            CountMachine::Listener { state, .. } => Some(state.result()),
            CountMachine::Broadcaster { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{derive_stream, purpose, run_protocol};
    use crate::topology::gen_star;

    fn cfg_64_32() -> CountConfig {
        CountConfig::new(64, 32, 0.5, 8).unwrap()
    }

    #[test]
    fn config_shape() {
        let cfg = cfg_64_32();
        assert_eq!(cfg.num_rounds, 6); // ceil(lg 64)
        assert_eq!(cfg.round_len, 48); // 8 * ceil(lg 64)
        assert!(cfg.threshold > 0.0109 && cfg.threshold < 0.011);
        assert!(cfg.num_rounds > ceil_log2(32));
    }

    #[test]
    fn closed_gap_is_rejected() {
        assert!(matches!(
            CountConfig::new(64, 32, 0.99, 8),
            Err(CountError::GapClosed { .. })
        ));
        assert!(CountConfig::new(64, 32, 0.0, 8).is_err());
        assert!(CountConfig::new(64, 32, 1.0, 8).is_err());
    }

    #[test]
    fn all_silence_yields_zero() {
        let cfg = cfg_64_32();
        let mut state = CountListener::new();
        let silence = vec![SlotObservation::Silence; cfg.round_len as usize];
        for round in 1..=cfg.num_rounds {
            count_listener_step(round, &silence, &cfg, &mut state);
        }
        let result = state.result();
        assert_eq!(result.estimate, 0);
        assert_eq!(result.triggered_round, None);
    }

    #[test]
    fn single_broadcaster_forces_estimate_four() {
        // m = 1: round one fires every slot, every slot is clear, fraction 1.
        let cfg = cfg_64_32();
        let mut state = CountListener::new();
        let heard = vec![SlotObservation::Heard(Payload::Identity(NodeId(7))); cfg.round_len as usize];
        count_listener_step(1, &heard, &cfg, &mut state);
        let result = state.result();
        assert_eq!(result.estimate, 4);
        assert_eq!(result.triggered_round, Some(1));
        assert!(result.ids_heard.contains(&NodeId(7)));
    }

    #[test]
    fn trigger_is_monotone() {
        let cfg = cfg_64_32();
        let mut state = CountListener::new();
        let heard = vec![SlotObservation::Heard(Payload::Identity(NodeId(1))); cfg.round_len as usize];
        count_listener_step(2, &heard, &cfg, &mut state);
        assert_eq!(state.result().estimate, 8);
        // A later loud round must not move the estimate.
        count_listener_step(3, &heard, &cfg, &mut state);
        assert_eq!(state.result().estimate, 8);
        assert_eq!(state.result().triggered_round, Some(2));
    }

    #[test]
    fn round_one_broadcasts_every_slot() {
        let mut rng = derive_stream(1, 0, purpose::PROTOCOL);
        let payload = Payload::Identity(NodeId(0));
        for _ in 0..100 {
            let action = count_broadcaster_action(1, LocalLabel(1), &payload, &mut rng);
            assert!(matches!(action, SlotAction::Broadcast { .. }));
        }
    }

    #[test]
    fn round_four_fires_at_one_eighth() {
        // 3-sigma binomial band around p = 1/8 over 1e4 draws.
        let mut rng = derive_stream(5, 0, purpose::PROTOCOL);
        let payload = Payload::Identity(NodeId(0));
        let n = 10_000;
        let fired = (0..n)
            .filter(|_| {
                matches!(
                    count_broadcaster_action(4, LocalLabel(1), &payload, &mut rng),
                    SlotAction::Broadcast { .. }
                )
            })
            .count();
        let p = 0.125f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = fired as f64 / n as f64;
        assert!((freq - p).abs() < 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn heard_fraction_peaks_where_the_guess_matches() {
        // For m = 16 broadcasters the clear-slot probability
        // m * p * (1-p)^(m-1) peaks at p = 1/16, i.e. round 5. Monte Carlo
        // over simulated rounds.
        let cfg = cfg_64_32();
        let m = 16usize;
        let mut rng = derive_stream(9, 0, purpose::PROTOCOL);
        let trials = 400;
        let mut heard = vec![0u64; cfg.num_rounds as usize + 1];
        for _ in 0..trials {
            for round in 1..=cfg.num_rounds {
                let p = broadcast_probability(round);
                for _ in 0..cfg.round_len {
                    let firing = (0..m).filter(|_| rng.random_bool(p)).count();
                    if firing == 1 {
                        heard[round as usize] += 1;
                    }
                }
            }
        }
        let peak = (1..=cfg.num_rounds).max_by_key(|&r| heard[r as usize]).unwrap();
        assert_eq!(peak, 5, "heard counts {heard:?}");
    }

    #[test]
    fn estimates_are_zero_or_powers_of_two_at_least_four() {
        // Random observation patterns can only produce 0 or 2^(i+1), i >= 1.
        let cfg = cfg_64_32();
        let mut rng = derive_stream(33, 0, purpose::PROTOCOL);
        for _ in 0..200 {
            let mut state = CountListener::new();
            for round in 1..=cfg.num_rounds {
                let obs: Vec<SlotObservation> = (0..cfg.round_len)
                    .map(|_| {
                        if rng.random_bool(0.05) {
                            SlotObservation::Heard(Payload::Identity(NodeId(1)))
                        } else {
                            SlotObservation::Silence
                        }
                    })
                    .collect();
                count_listener_step(round, &obs, &cfg, &mut state);
            }
            let e = state.result().estimate;
            assert!(e == 0 || (e >= 4 && e.is_power_of_two()), "estimate {e}");
        }
    }

    #[test]
    fn standalone_machine_m1_run() {
        // Hub listener, one leaf broadcaster sharing the single channel.
        let net = gen_star(1, 1, 1, 1, 4).unwrap();
        let cfg = cfg_64_32();
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
            77,
        )
        .unwrap();
        let result = run.outputs[0].clone().unwrap();
        assert_eq!(result.estimate, 4);
        assert!(result.ids_heard.contains(&NodeId(1)));
        assert_eq!(run.summary.slots_used, cfg.slots());
    }
}
