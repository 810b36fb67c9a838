//! Scenario files: JSON with a versioned `schema` field.
//!
//! One tick is one scheduling quantum. Scenario files state the wall-time
//! equivalent of a tick in `tick_note`; the simulator never reads it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::auditor::ClaimKind;
use crate::crosschain::{RelayConfig, DEFAULT_TIMEOUT};
use crate::crypto::DEFAULT_ITERATIONS;
use crate::ledger::{Height, NetworkId, Tick};
use crate::snapshot::SchedulerConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub tick_note: String,
    pub ticks: Tick,
    pub networks: Vec<NetworkSpec>,
    #[serde(default = "default_timeout")]
    pub cross_chain_timeout: Tick,
    #[serde(default)]
    pub relay: RelayConfig,
    #[serde(default = "default_iterations")]
    pub kdf_iterations: u32,
    #[serde(default)]
    pub workload: Vec<WorkloadEntry>,
    #[serde(default)]
    pub faults: Vec<FaultEvent>,
    #[serde(default)]
    pub disputes: Vec<DisputeSpec>,
}

fn default_timeout() -> Tick {
    DEFAULT_TIMEOUT
}

fn default_iterations() -> u32 {
    DEFAULT_ITERATIONS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub id: NetworkId,
    pub peers: usize,
    pub genesis_seed: u64,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
}

/// Submissions on `network` at every `every`-th tick of `[from_tick, to_tick]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadEntry {
    pub network: NetworkId,
    pub from_tick: Tick,
    pub to_tick: Tick,
    #[serde(default = "one")]
    pub every: Tick,
    #[serde(default)]
    pub local_txs: u32,
    #[serde(default)]
    pub cross_txs: u32,
    #[serde(default)]
    pub cross_to: Option<NetworkId>,
    #[serde(default = "default_payload")]
    pub payload_bytes: usize,
}

fn one() -> Tick {
    1
}

fn default_payload() -> usize {
    1024
}

impl WorkloadEntry {
    pub fn active_at(&self, tick: Tick) -> bool {
        self.from_tick <= tick && tick <= self.to_tick && (tick - self.from_tick).is_multiple_of(self.every)
    }
}

/// Picks one workload transaction set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetSelector {
    /// The n-th (0-based) workload set initiated by the source towards the
    /// destination.
    Nth(usize),
    /// A set id in hex.
    SetId(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FaultKind {
    PeerCrash {
        network: NetworkId,
        peer: usize,
        #[serde(default)]
        recover_after: Option<Tick>,
    },
    NetworkCrashWithDataLoss {
        network: NetworkId,
        retain_height: Height,
        recover_after: Tick,
    },
    /// `network` commits a cross-chain invoke towards `target` that is never
    /// sent, dated `claimed_tick`, then demands fulfillment at `dispute_at`.
    MaliciousFabrication {
        network: NetworkId,
        target: NetworkId,
        payload: String,
        claimed_tick: Tick,
        dispute_at: Tick,
    },
    /// `network` (a destination) denies having received a set from `source`.
    ReceiptDenial {
        network: NetworkId,
        source: NetworkId,
        selector: SetSelector,
        dispute_at: Tick,
    },
    RelayOutage {
        from: Tick,
        until: Tick,
    },
    PeerLag {
        network: NetworkId,
        peer: usize,
        behind_by: Height,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub at: Tick,
    #[serde(flatten)]
    pub kind: FaultKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisputeSpec {
    pub at: Tick,
    pub kind: ClaimKind,
    pub claimant: NetworkId,
    pub respondent: NetworkId,
    pub selector: SetSelector,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("unsupported schema version {0}")]
    Schema(u32),
    #[error("scenario needs at least one network")]
    NoNetworks,
    #[error("duplicate network {0}")]
    DuplicateNetwork(NetworkId),
    #[error("network {0} has no peers")]
    NoPeers(NetworkId),
    #[error("network {0} scheduler: {1}")]
    Scheduler(NetworkId, String),
    #[error("unknown network {0}")]
    UnknownNetwork(NetworkId),
    #[error("cross-chain timeout must be positive")]
    ZeroTimeout,
    #[error("kdf iterations must be positive")]
    ZeroIterations,
    #[error("relay drop probability must lie in [0, 1]")]
    DropProbability,
    #[error("workload entry {0}: {1}")]
    Workload(usize, String),
    #[error("invalid fault {0}: {1}")]
    InvalidFault(usize, String),
    #[error("dispute {0}: {1}")]
    Dispute(usize, String),
    #[error("scenario does not parse: {0}")]
    Parse(String),
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn network_ids(&self) -> impl Iterator<Item = &NetworkId> {
        self.networks.iter().map(|n| &n.id)
    }

    fn spec(&self, id: &NetworkId) -> Option<&NetworkSpec> {
        self.networks.iter().find(|n| &n.id == id)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema != SCHEMA_VERSION {
            return Err(ConfigError::Schema(self.schema));
        }
        if self.networks.is_empty() {
            return Err(ConfigError::NoNetworks);
        }
        let mut seen = BTreeSet::new();
        for n in &self.networks {
            if !seen.insert(&n.id) || n.id.as_str() == crate::auditor::AUDITOR_ID {
                return Err(ConfigError::DuplicateNetwork(n.id.clone()));
            }
            if n.peers == 0 {
                return Err(ConfigError::NoPeers(n.id.clone()));
            }
            n.scheduler
                .validate()
                .map_err(|e| ConfigError::Scheduler(n.id.clone(), e.to_string()))?;
        }
        if self.cross_chain_timeout == 0 {
            return Err(ConfigError::ZeroTimeout);
        }
        if self.kdf_iterations == 0 {
            return Err(ConfigError::ZeroIterations);
        }
        if !(0.0..=1.0).contains(&self.relay.drop_probability) {
            return Err(ConfigError::DropProbability);
        }
        let known = |id: &NetworkId| {
            if self.spec(id).is_some() {
                Ok(())
            } else {
                Err(ConfigError::UnknownNetwork(id.clone()))
            }
        };
        for (i, w) in self.workload.iter().enumerate() {
            known(&w.network)?;
            if w.every == 0 || w.from_tick > w.to_tick {
                return Err(ConfigError::Workload(i, "empty or zero-step tick range".into()));
            }
            if w.payload_bytes == 0 {
                return Err(ConfigError::Workload(i, "payloads must be non-empty".into()));
            }
            match &w.cross_to {
                Some(d) => {
                    known(d)?;
                    if d == &w.network {
                        return Err(ConfigError::Workload(i, "cross-chain target is the source".into()));
                    }
                }
                None if w.cross_txs > 0 => return Err(ConfigError::Workload(i, "cross_txs without cross_to".into())),
                None => {}
            }
        }
        for (i, f) in self.faults.iter().enumerate() {
            self.validate_fault(f).map_err(|m| ConfigError::InvalidFault(i, m))?;
        }
        for (i, d) in self.disputes.iter().enumerate() {
            for n in [&d.claimant, &d.respondent] {
                if self.spec(n).is_none() {
                    return Err(ConfigError::Dispute(i, format!("unknown network {n}")));
                }
            }
            if d.claimant == d.respondent {
                return Err(ConfigError::Dispute(i, "claimant and respondent coincide".into()));
            }
        }
        Ok(())
    }

    fn validate_fault(&self, f: &FaultEvent) -> Result<(), String> {
        let net = |id: &NetworkId| self.spec(id).ok_or_else(|| format!("unknown network {id}"));
        match &f.kind {
            FaultKind::PeerCrash { network, peer, .. } | FaultKind::PeerLag { network, peer, .. } => {
                let spec = net(network)?;
                if *peer >= spec.peers {
                    return Err(format!("peer {peer} out of range for {network}"));
                }
                if let FaultKind::PeerLag { behind_by, .. } = &f.kind {
                    if *behind_by < 0 {
                        return Err("negative lag".into());
                    }
                }
            }
            FaultKind::NetworkCrashWithDataLoss {
                network, retain_height, ..
            } => {
                net(network)?;
                if *retain_height < -1 {
                    return Err("retain_height below -1".into());
                }
            }
            FaultKind::MaliciousFabrication {
                network,
                target,
                payload,
                claimed_tick,
                dispute_at,
            } => {
                net(network)?;
                net(target)?;
                if network == target || payload.is_empty() {
                    return Err("fabrication needs a foreign target and a payload".into());
                }
                if *claimed_tick > f.at || *dispute_at < f.at {
                    return Err("claimed tick must precede the fabrication, the dispute follow it".into());
                }
            }
            FaultKind::ReceiptDenial {
                network,
                source,
                dispute_at,
                ..
            } => {
                net(network)?;
                net(source)?;
                if network == source || *dispute_at < f.at {
                    return Err("denial needs a foreign source and a later dispute".into());
                }
            }
            FaultKind::RelayOutage { from, until } => {
                if from > until {
                    return Err("outage window is empty".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"schema":1,"ticks":10,"networks":[{"id":"a","peers":4,"genesis_seed":1},{"id":"b","peers":4,"genesis_seed":2}]}"#
    }

    #[test]
    fn defaults_fill_in() {
        let c = ScenarioConfig::from_json(minimal()).unwrap();
        assert_eq!(c.cross_chain_timeout, DEFAULT_TIMEOUT);
        assert_eq!(c.kdf_iterations, DEFAULT_ITERATIONS);
        assert_eq!(c.networks[0].scheduler.threshold(), 240.0);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_schema = minimal().replace("\"schema\":1", "\"schema\":2");
        assert_eq!(ScenarioConfig::from_json(&bad_schema), Err(ConfigError::Schema(2)));
        assert!(matches!(
            ScenarioConfig::from_json(&minimal().replace("\"ticks\"", "\"tickz\"")),
            Err(ConfigError::Parse(_))
        ));
        let mut c = ScenarioConfig::from_json(minimal()).unwrap();
        c.faults.push(FaultEvent {
            at: 3,
            kind: FaultKind::PeerCrash {
                network: NetworkId::new("a"),
                peer: 9,
                recover_after: None,
            },
        });
        assert!(matches!(c.validate(), Err(ConfigError::InvalidFault(0, _))));
        c.faults[0].kind = FaultKind::NetworkCrashWithDataLoss {
            network: NetworkId::new("a"),
            retain_height: -2,
            recover_after: 1,
        };
        assert!(matches!(c.validate(), Err(ConfigError::InvalidFault(0, _))));
        c.faults[0].kind = FaultKind::RelayOutage { from: 5, until: 2 };
        assert!(matches!(c.validate(), Err(ConfigError::InvalidFault(0, _))));
    }

    #[test]
    fn fault_json_shape() {
        let f: FaultEvent = serde_json::from_str(
            r#"{"at":5,"kind":"network_crash_with_data_loss","network":"b","retain_height":-1,"recover_after":10}"#,
        )
        .unwrap();
        assert_eq!(
            f.kind,
            FaultKind::NetworkCrashWithDataLoss {
                network: NetworkId::new("b"),
                retain_height: -1,
                recover_after: 10
            }
        );
        let s: SetSelector = serde_json::from_str(r#"{"nth":2}"#).unwrap();
        assert_eq!(s, SetSelector::Nth(2));
    }
}
