//! Re-checks a finished run from its exported files alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::auditor::{ClaimKind, Outcome};
use crate::cas::CasStore;
use crate::crosschain::{IdentityRegistry, SetStatus};
use crate::ledger::{verify_chain, NetworkId};
use crate::snapshot::SnapshotArchive;

use super::bootstrap::fetch_archive;
use super::metrics::RunSummary;
use super::world::ExportedState;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, thiserror::Error, Serialize)]
pub enum VerifyError {
    #[error("cannot read {0}: {1}")]
    Read(String, String),
    #[error("cannot parse {0}: {1}")]
    Parse(String, String),
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T, VerifyError> {
    let bytes = fs::read(dir.join(name)).map_err(|e| VerifyError::Read(name.into(), e.to_string()))?;
    serde_json::from_slice(&bytes).map_err(|e| VerifyError::Parse(name.into(), e.to_string()))
}

struct Checks(Vec<Check>);

impl Checks {
    fn add(&mut self, name: &str, failures: Vec<String>) {
        self.0.push(Check {
            name: name.into(),
            passed: failures.is_empty(),
            detail: if failures.is_empty() {
                "ok".into()
            } else {
                let more = failures.len().saturating_sub(5);
                let mut d = failures.into_iter().take(5).collect::<Vec<_>>().join("; ");
                if more > 0 {
                    d.push_str(&format!("; and {more} more"));
                }
                d
            },
        });
    }
}

pub fn verify_run(dir: &Path) -> Result<VerifyReport, VerifyError> {
    let state: ExportedState = read_json(dir, "state.json")?;
    let summary: RunSummary = read_json(dir, "summary.json")?;
    let store_root = dir.join("store");
    let store = CasStore::open(&store_root).map_err(|e| VerifyError::Read("store".into(), e.to_string()))?;
    let secret = store.swarm().secret;
    let mut registry = IdentityRegistry::new();
    for n in &state.networks {
        registry.register_network(&n.config);
    }
    let mut checks = Checks(Vec::new());

    // ledgers
    let mut failures = Vec::new();
    for n in &state.networks {
        if let Err(e) = verify_chain(&n.config.network_id, &n.ledger.blocks, None) {
            failures.push(format!("{}: {e}", n.config.network_id));
        }
        let tip = n.ledger.blocks.last().map(|b| b.block_hash);
        let reported = summary
            .networks
            .iter()
            .find(|s| s.network_id == n.config.network_id)
            .map(|s| s.tip_hash);
        if tip != reported {
            failures.push(format!("{}: tip differs from summary", n.config.network_id));
        }
    }
    if summary.state_hash != state.state_hash {
        failures.push("state hash differs between state.json and summary.json".into());
    }
    checks.add("ledger_hash_chains", failures);

    // store
    let mut failures = Vec::new();
    let holder = state.networks.first().map(|n| n.config.network_id.clone());
    for cid in store.cids() {
        if let Some(h) = &holder {
            if let Err(e) = store.get(cid, &secret, h) {
                failures.push(format!("{cid}: {e}"));
            }
        }
    }
    checks.add("store_content_ids", failures);

    // archives
    let mut archives: BTreeMap<(NetworkId, crate::cas::ContentId), SnapshotArchive> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut contiguity = Vec::new();
    for n in &state.networks {
        let id = &n.config.network_id;
        let mut prev_to = None;
        for e in &n.catalogue {
            let Some(key) = n.wallet.get(&e.cid.to_string()) else {
                failures.push(format!("{id}: no wallet key for {}", e.cid));
                continue;
            };
            match fetch_archive(&store, &secret, id, &e.cid, &key.key) {
                Ok(a) => {
                    if let Some(p) = prev_to {
                        if a.manifest.from_height != p {
                            contiguity.push(format!(
                                "{id}: archive {} starts at {} after {p}",
                                e.cid, a.manifest.from_height
                            ));
                        }
                    }
                    prev_to = Some(a.manifest.to_height);
                    for s in &a.snapshots {
                        for set in &s.completed_sets {
                            if let Err(err) = set.verify_evidence(&registry) {
                                failures.push(format!("{id}: set {} in {}: {err}", set.set_id, e.cid));
                            }
                        }
                    }
                    archives.insert((id.clone(), e.cid), a);
                }
                Err(err) => failures.push(format!("{id}: {}: {err}", e.cid)),
            }
        }
    }
    checks.add("archived_sets_carry_verifying_receipts", failures);
    checks.add("archive_height_contiguity", contiguity);

    // atomicity
    let mut failures = Vec::new();
    for n in &state.networks {
        for tr in &n.book.transitions {
            if tr.from == SetStatus::Incomplete && tr.to == SetStatus::Complete {
                failures.push(format!(
                    "{}: set {} went incomplete -> complete",
                    n.config.network_id, tr.set_id
                ));
            }
        }
        for set in n.book.sets.values().filter(|s| s.status == SetStatus::Complete) {
            if let Err(e) = set.verify_evidence(&registry) {
                failures.push(format!("{}: complete set {}: {e}", n.config.network_id, set.set_id));
            }
        }
    }
    checks.add("set_atomicity", failures);

    // stages
    let mut failures = Vec::new();
    for (stage, c) in &summary.stages {
        if !c.reconciles() {
            failures.push(format!("{stage}: {} + {} != {}", c.pass, c.fail, c.attempts));
        }
    }
    checks.add("stage_reconciliation", failures);

    checks.add(
        "fault_containment",
        if summary.containment_violations == 0 {
            Vec::new()
        } else {
            vec![format!("{} violations", summary.containment_violations)]
        },
    );

    // verdicts
    // A set counts as completed if its source completed it, or if the
    // destination receipted it and the source never expired it (the source
    // may have lost the response in a crash).
    let fabricated: BTreeSet<_> = state.fabricated.iter().map(|f| f.set_id).collect();
    let expired: BTreeSet<_> = state
        .networks
        .iter()
        .flat_map(|n| n.book.transitions.iter())
        .filter(|tr| tr.to == SetStatus::Incomplete)
        .map(|tr| tr.set_id)
        .collect();
    let genuine = |id: &crate::crosschain::SetId| {
        !fabricated.contains(id)
            && (state.completed.contains(id) || (state.receipted.contains(id) && !expired.contains(id)))
    };
    let mut soundness = Vec::new();
    let mut fraud = Vec::new();
    for d in &state.disputes {
        let (Some(case), Some(v)) = (&d.case, &d.verdict) else {
            continue;
        };
        let claimed = case.reference.set_id;
        if v.outcome == Outcome::ClaimUpheld {
            if v.evidence.is_empty() {
                soundness.push(format!("tick {}: upheld without evidence", d.tick));
            }
            for c in &v.evidence {
                let set = archives
                    .get(&(c.network_id.clone(), c.cid))
                    .and_then(|a| a.snapshots.iter().find(|s| s.snapshot_id == c.snapshot_id))
                    .and_then(|s| s.completed_sets.iter().find(|s| s.set_id == c.set_id));
                match set {
                    Some(set) if set.verify_evidence(&registry).is_ok() => {}
                    _ => soundness.push(format!("tick {}: citation {} does not verify", d.tick, c.cid)),
                }
            }
            if case.kind == ClaimKind::DemandFulfillment {
                if let Some(id) = claimed {
                    if !genuine(&id) {
                        fraud.push(format!("tick {}: upheld demand for never-completed set {id}", d.tick));
                    }
                }
            }
        }
    }
    checks.add("verdict_soundness", soundness);
    checks.add("fraud_rejection", fraud);

    let passed = checks.0.iter().all(|c| c.passed);
    Ok(VerifyReport {
        passed,
        checks: checks.0,
    })
}
