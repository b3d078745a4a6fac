//! One-shot information exchange among neighbors, built on a discovery run.
//!
//! A single run delivers each node's payload to each neighbor w.h.p. With the
//! two-hop flag a second run re-broadcasts every color claim heard in the
//! first, so claims also reach nodes two hops away. That is what the coloring
//! procedure needs: two virtual nodes may be simulated by physical nodes that
//! share an endpoint without being adjacent.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::{stage_seed, CgcastError};
use crate::seek::{seek_run, SeekConfig, SeekRunOptions};
use crate::sim::{ColorClaim, Payload};
use crate::topology::NetworkInstance;
use crate::NodeId;

pub struct ExchangeResult {
    /// Color claims received per node (deduplicated, deterministic order).
    pub received: Vec<Vec<ColorClaim>>,
    /// All payloads received per node in either run, for non-claim uses.
    pub payloads: Vec<Vec<Payload>>,
    pub slots: u64,
}

fn claims_of(payload: &Payload) -> &[ColorClaim] {
    match payload {
        Payload::ColorInfo(claims) => claims,
        _ => &[],
    }
}

/// Delivers each node's payload to its neighbors; with `two_hop`, a second
/// run relays heard color claims one hop further.
pub fn exchange_round(
    net: &NetworkInstance,
    payloads: &[Payload],
    two_hop: bool,
    cfg: &SeekConfig,
    master_seed: u64,
    slot_offset: u64,
) -> Result<ExchangeResult, CgcastError> {
    assert_eq!(payloads.len(), net.n());
    let payload_fn = |id: NodeId| payloads[id.index()].clone();
    let run_a = seek_run(
        net,
        cfg,
        stage_seed(master_seed, 10),
        SeekRunOptions {
            payload_fn: Some(&payload_fn),
            log_payloads: true,
            slot_offset,
            ..Default::default()
        },
    )?;
    let budget = crate::seek::seek_budget(net.params(), cfg)?;
    let mut slots = budget.total_slots();

    let mut claim_sets: Vec<BTreeSet<ColorClaim>> = (0..net.n())
        .map(|u| {
            run_a.outputs[u]
                .state
                .payload_log
                .iter()
                .flat_map(|(_, p)| claims_of(p).iter().copied())
                .collect()
        })
        .collect();
    let mut all_payloads: Vec<Vec<Payload>> = run_a
        .outputs
        .iter()
        .map(|o| o.state.payload_log.iter().map(|(_, p)| p.clone()).collect())
        .collect();

    if two_hop {
        // Relay: own claims plus everything heard in the first run.
        let relay: Vec<Payload> = (0..net.n())
            .map(|u| {
                let mut claims: BTreeSet<ColorClaim> =
                    claims_of(&payloads[u]).iter().copied().collect();
                claims.extend(claim_sets[u].iter().copied());
                Payload::ColorInfo(Arc::from(claims.into_iter().collect::<Vec<_>>()))
            })
            .collect();
        let relay_fn = |id: NodeId| relay[id.index()].clone();
        let run_b = seek_run(
            net,
            cfg,
            stage_seed(master_seed, 11),
            SeekRunOptions {
                payload_fn: Some(&relay_fn),
                log_payloads: true,
                slot_offset: slot_offset + slots,
                ..Default::default()
            },
        )?;
        slots += budget.total_slots();
        for u in 0..net.n() {
            for (_, p) in &run_b.outputs[u].state.payload_log {
                claim_sets[u].extend(claims_of(p).iter().copied());
                all_payloads[u].push(p.clone());
            }
        }
    }

    Ok(ExchangeResult {
        received: claim_sets
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect(),
        payloads: all_payloads,
        slots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ClaimStage;
    use crate::topology::gen_random;
    use crate::EdgeId;

    fn path3() -> NetworkInstance {
        // A 3-node path 0-1-2; build from a random draw until the path shape
        // appears is wasteful, so assemble it directly.
        use crate::topology::{NetworkInstance, NetworkParams};
        use crate::GlobalChannel;
        use std::collections::BTreeSet;
        let params = NetworkParams {
            n: 3,
            c: 2,
            k: 1,
            k_max: 1,
            delta_max: 2,
            diam: 2,
        };
        let sets: Vec<BTreeSet<GlobalChannel>> = vec![
            [GlobalChannel(0), GlobalChannel(1)].into_iter().collect(),
            [GlobalChannel(1), GlobalChannel(2)].into_iter().collect(),
            [GlobalChannel(2), GlobalChannel(3)].into_iter().collect(),
        ];
        let labels = sets
            .iter()
            .map(|s| s.iter().copied().collect())
            .collect();
        NetworkInstance::from_parts(
            params,
            vec![
                EdgeId::new(NodeId(0), NodeId(1)),
                EdgeId::new(NodeId(1), NodeId(2)),
            ],
            sets,
            labels,
        )
        .unwrap()
    }

    fn marker(u: u32) -> Payload {
        Payload::ColorInfo(Arc::from(vec![ColorClaim {
            edge: EdgeId::new(NodeId(u), NodeId(u + 10)),
            color: u as u16 + 1,
            phase: 1,
            stage: ClaimStage::Tentative,
        }]))
    }

    #[test]
    fn one_hop_exchange_reaches_neighbors() {
        let net = path3();
        let cfg = SeekConfig {
            a1: 32.0,
            a2: 32.0,
            ..SeekConfig::full()
        };
        let payloads: Vec<Payload> = (0..3).map(marker).collect();
        let result = exchange_round(&net, &payloads, false, &cfg, 4, 0).unwrap();
        // The middle node hears both ends.
        let mid: BTreeSet<u16> = result.received[1].iter().map(|c| c.color).collect();
        assert!(mid.contains(&1) && mid.contains(&3), "middle heard {mid:?}");
    }

    #[test]
    fn two_hop_exchange_crosses_the_path() {
        let cfg = SeekConfig {
            a1: 32.0,
            a2: 32.0,
            ..SeekConfig::full()
        };
        let payloads: Vec<Payload> = (0..3).map(marker).collect();
        let mut reached = 0;
        let trials = 40;
        for seed in 0..trials {
            let result = exchange_round(&path3(), &payloads, true, &cfg, seed, 0).unwrap();
            let end: BTreeSet<u16> = result.received[2].iter().map(|c| c.color).collect();
            if end.contains(&1) {
                reached += 1;
            }
        }
        assert!(
            reached as f64 >= 0.95 * trials as f64,
            "two-hop relay reached the far end in only {reached}/{trials} trials"
        );
    }

    #[test]
    fn exchange_slot_accounting() {
        let net = gen_random(6, 9, 3, 1, 3, 0.6, 2).unwrap();
        let cfg = SeekConfig {
            a1: 2.0,
            a2: 2.0,
            ..SeekConfig::full()
        };
        let budget = crate::seek::seek_budget(net.params(), &cfg).unwrap();
        let payloads = vec![Payload::ColorInfo(Arc::from(Vec::new())); net.n()];
        let one = exchange_round(&net, &payloads, false, &cfg, 1, 0).unwrap();
        assert_eq!(one.slots, budget.total_slots());
        let two = exchange_round(&net, &payloads, true, &cfg, 1, 0).unwrap();
        assert_eq!(two.slots, 2 * budget.total_slots());
    }
}
