//! Built-in scenarios: the three fault demonstrations and the randomized
//! battery generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::auditor::{ClaimKind, Outcome, Rationale};
use crate::crosschain::RelayConfig;
use crate::crypto::DEFAULT_ITERATIONS;
use crate::ledger::NetworkId;
use crate::snapshot::SchedulerConfig;

use super::scenario::{
    DisputeSpec, FaultEvent, FaultKind, NetworkSpec, ScenarioConfig, SetSelector, WorkloadEntry, SCHEMA_VERSION,
};

fn net(id: &str, peers: usize, seed: u64, scheduler: SchedulerConfig) -> NetworkSpec {
    NetworkSpec {
        id: NetworkId::new(id),
        peers,
        genesis_seed: seed,
        scheduler,
    }
}

fn steady(network: &str, from: u64, to: u64, local: u32, payload: usize) -> WorkloadEntry {
    WorkloadEntry {
        network: NetworkId::new(network),
        from_tick: from,
        to_tick: to,
        every: 1,
        local_txs: local,
        cross_txs: 0,
        cross_to: None,
        payload_bytes: payload,
    }
}

fn cross(network: &str, to: &str, from: u64, until: u64, every: u64, payload: usize) -> WorkloadEntry {
    WorkloadEntry {
        network: NetworkId::new(network),
        from_tick: from,
        to_tick: until,
        every,
        local_txs: 0,
        cross_txs: 1,
        cross_to: Some(NetworkId::new(to)),
        payload_bytes: payload,
    }
}

/// Two four-peer networks exchanging steady traffic, snapshotting every
/// ten blocks. One tick stands for one minute.
pub fn two_networks(ticks: u64) -> ScenarioConfig {
    let sched = SchedulerConfig {
        blocks_per_period: 1.0,
        window_periods: 10.0,
        poll_interval: 5,
    };
    ScenarioConfig {
        schema: SCHEMA_VERSION,
        name: "two-networks".into(),
        tick_note: "1 tick = 1 minute".into(),
        ticks,
        networks: vec![net("n1", 4, 11, sched.clone()), net("n2", 4, 22, sched)],
        cross_chain_timeout: 20,
        relay: RelayConfig::default(),
        kdf_iterations: DEFAULT_ITERATIONS,
        workload: vec![
            steady("n1", 1, ticks, 1, 256),
            steady("n2", 1, ticks, 1, 256),
            cross("n1", "n2", 5, ticks.saturating_sub(30).max(5), 10, 256),
        ],
        faults: Vec::new(),
        disputes: Vec::new(),
    }
}

/// The three fault demonstrations:
/// 1. the destination denies a receipt it signed and archived;
/// 2. the destination loses ledger data and a legitimate demand follows;
/// 3. after the destination's total data loss the source fabricates a
///    transaction and demands fulfillment for it.
pub fn fault_demo(case: u8) -> Option<ScenarioConfig> {
    let mut s = two_networks(120);
    let n1 = NetworkId::new("n1");
    let n2 = NetworkId::new("n2");
    match case {
        1 => {
            s.name = "fault-demo-1-malicious-denial".into();
            s.faults.push(FaultEvent {
                at: 40,
                kind: FaultKind::ReceiptDenial {
                    network: n2,
                    source: n1,
                    selector: SetSelector::Nth(0),
                    dispute_at: 100,
                },
            });
        }
        2 => {
            s.name = "fault-demo-2-data-loss-non-compliance".into();
            s.faults.push(FaultEvent {
                at: 60,
                kind: FaultKind::NetworkCrashWithDataLoss {
                    network: n2.clone(),
                    retain_height: 20,
                    recover_after: 15,
                },
            });
            s.disputes.push(DisputeSpec {
                at: 110,
                kind: ClaimKind::DemandFulfillment,
                claimant: n1,
                respondent: n2,
                selector: SetSelector::Nth(0),
            });
        }
        3 => {
            s.name = "fault-demo-3-fabrication-after-crash".into();
            s.faults.push(FaultEvent {
                at: 50,
                kind: FaultKind::NetworkCrashWithDataLoss {
                    network: n2.clone(),
                    retain_height: -1,
                    recover_after: 20,
                },
            });
            s.faults.push(FaultEvent {
                at: 60,
                kind: FaultKind::MaliciousFabrication {
                    network: n1,
                    target: n2,
                    payload: "invoice:party-A->party-B:5000".into(),
                    claimed_tick: 12,
                    dispute_at: 110,
                },
            });
        }
        _ => return None,
    }
    Some(s)
}

/// The verdict each demonstration must produce.
pub fn fault_demo_expectation(case: u8) -> Option<(Outcome, Rationale)> {
    match case {
        1 => Some((Outcome::ClaimRefuted, Rationale::Case1ValidReceipt)),
        2 => Some((Outcome::ClaimUpheld, Rationale::Case1ValidReceipt)),
        3 => Some((Outcome::ClaimRefuted, Rationale::Case2NoReceipt)),
        _ => None,
    }
}

/// A randomized two-network scenario mixing relay delays, drops, expiries
/// and the fault kinds, for property batteries.
pub fn random_scenario(seed: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let ticks = 160;
    let mut sched = || SchedulerConfig {
        blocks_per_period: rng.gen_range(1..=2) as f64,
        window_periods: rng.gen_range(4..=12) as f64,
        poll_interval: rng.gen_range(1..=6),
    };
    let (s1, s2) = (sched(), sched());
    let p1 = rng.gen_range(3..=5);
    let p2 = rng.gen_range(3..=5);
    let mut s = ScenarioConfig {
        schema: SCHEMA_VERSION,
        name: format!("random-{seed}"),
        tick_note: "1 tick = 1 minute".into(),
        ticks,
        networks: vec![net("n1", p1, seed, s1), net("n2", p2, seed + 1, s2)],
        cross_chain_timeout: rng.gen_range(3..=15),
        relay: RelayConfig {
            latency: rng.gen_range(0..=3),
            jitter: rng.gen_range(0..=4),
            drop_probability: rng.gen_range(0.0..0.3),
        },
        kdf_iterations: 64,
        workload: vec![
            WorkloadEntry {
                every: rng.gen_range(1..=3),
                ..steady("n1", 1, ticks, 1, 96)
            },
            WorkloadEntry {
                every: rng.gen_range(1..=3),
                ..steady("n2", 1, ticks, 1, 96)
            },
            cross("n1", "n2", 2, 110, rng.gen_range(2..=5), 64),
            cross("n2", "n1", 3, 110, rng.gen_range(3..=7), 64),
        ],
        faults: Vec::new(),
        disputes: Vec::new(),
    };
    let n = |k: u8| NetworkId::new(if k == 0 { "n1" } else { "n2" });
    let victim = rng.gen_range(0..2u8);
    let other = 1 - victim;
    if rng.gen_bool(0.5) {
        let spec = &s.networks[victim as usize];
        s.faults.push(FaultEvent {
            at: rng.gen_range(10..100),
            kind: FaultKind::PeerCrash {
                network: spec.id.clone(),
                peer: rng.gen_range(0..spec.peers),
                recover_after: Some(rng.gen_range(1..30)),
            },
        });
    }
    if rng.gen_bool(0.3) {
        let spec = &s.networks[other as usize];
        s.faults.push(FaultEvent {
            at: rng.gen_range(10..100),
            kind: FaultKind::PeerLag {
                network: spec.id.clone(),
                peer: rng.gen_range(0..spec.peers),
                behind_by: rng.gen_range(1..4),
            },
        });
    }
    if rng.gen_bool(0.7) {
        s.faults.push(FaultEvent {
            at: rng.gen_range(40..90),
            kind: FaultKind::NetworkCrashWithDataLoss {
                network: n(victim),
                retain_height: rng.gen_range(-1..40),
                recover_after: rng.gen_range(1..20),
            },
        });
    }
    if rng.gen_bool(0.6) {
        let at = rng.gen_range(60..120);
        s.faults.push(FaultEvent {
            at,
            kind: FaultKind::MaliciousFabrication {
                network: n(other),
                target: n(victim),
                payload: format!("fabricated-{seed}"),
                claimed_tick: rng.gen_range(5..40),
                dispute_at: 150,
            },
        });
    }
    if rng.gen_bool(0.6) {
        s.faults.push(FaultEvent {
            at: rng.gen_range(20..100),
            kind: FaultKind::ReceiptDenial {
                network: n(victim),
                source: n(other),
                selector: SetSelector::Nth(rng.gen_range(0..5)),
                dispute_at: 150,
            },
        });
    }
    if rng.gen_bool(0.3) {
        let from = rng.gen_range(10..100);
        s.faults.push(FaultEvent {
            at: 1,
            kind: FaultKind::RelayOutage {
                from,
                until: from + rng.gen_range(0..15),
            },
        });
    }
    for k in 0..3 {
        let (claimant, respondent) = if rng.gen_bool(0.5) { (n(0), n(1)) } else { (n(1), n(0)) };
        s.disputes.push(DisputeSpec {
            at: 150 + k,
            kind: ClaimKind::DemandFulfillment,
            claimant,
            respondent,
            selector: SetSelector::Nth(rng.gen_range(0..20)),
        });
    }
    s
}
