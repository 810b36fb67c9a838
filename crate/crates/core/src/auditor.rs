//! The trusted auditor: ingests every network's encrypted archives and
//! resolves disputes from the dual-endorsed sets found in them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cas::{CasError, CasStore, ContentId, SwarmSecret};
use crate::codec::Hash32;
use crate::crosschain::{IdentityRegistry, SetId, TransactionSet};
use crate::crypto::{decrypt_archive_bytes, SymmetricKey};
use crate::ledger::{verify_chain, Block, EndorsementError, KeyResolver, LedgerEntry, NetworkId, Tick};
use crate::snapshot::{parse_archive, SnapshotArchive};

pub const AUDITOR_ID: &str = "auditor";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexedArchive {
    pub cid: ContentId,
    pub archive: SnapshotArchive,
    pub ingested_tick: Tick,
}

impl IndexedArchive {
    /// Tick of the newest archived block.
    pub fn archived_through(&self) -> Tick {
        self.archive.blocks().last().map(|b| b.tick).unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestRecord {
    pub network_id: NetworkId,
    pub cid: ContentId,
    pub tick: Tick,
    pub accepted: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("fetch failed: {0}")]
    Fetch(CasError),
    #[error("archive does not authenticate under the delivered key")]
    Auth,
    #[error("malformed archive: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AuditorState {
    pub index: BTreeMap<NetworkId, Vec<IndexedArchive>>,
    pub log: Vec<IngestRecord>,
    pub quarantine: BTreeSet<ContentId>,
    /// Ticks after a span's end by which any receipt for it is settled; used
    /// for coverage checks.
    pub settlement_ticks: Tick,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimKind {
    /// The source demands what the destination owes for a delivered set.
    DemandFulfillment,
    /// The destination denies having received the set.
    DenyReceipt,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetReference {
    pub set_id: Option<SetId>,
    pub payload_digest: Option<Hash32>,
    /// Inclusive tick span of the invoke's commit.
    pub span: (Tick, Tick),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisputeCase {
    pub claimant: NetworkId,
    pub respondent: NetworkId,
    pub reference: SetReference,
    pub kind: ClaimKind,
}

impl DisputeCase {
    fn source_and_dest(&self) -> (&NetworkId, &NetworkId) {
        match self.kind {
            ClaimKind::DemandFulfillment => (&self.claimant, &self.respondent),
            ClaimKind::DenyReceipt => (&self.respondent, &self.claimant),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    ClaimUpheld,
    ClaimRefuted,
    Indeterminate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationale {
    Case1ValidReceipt,
    Case2NoReceipt,
    EndorsementFailure,
    SpanNotCovered,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Citation {
    pub network_id: NetworkId,
    pub cid: ContentId,
    pub snapshot_id: Hash32,
    pub set_id: SetId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub rationale: Rationale,
    pub evidence: Vec<Citation>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Completed sets archived by exactly one of the parties.
    pub only_in: Vec<(NetworkId, SetId)>,
    /// Sets archived by both parties with differing or unverifiable evidence.
    pub mismatched: Vec<SetId>,
    /// Sets the destination completed but the source expired.
    pub expired_at_source: Vec<SetId>,
}

impl ConsistencyReport {
    pub fn is_clean(&self) -> bool {
        self.only_in.is_empty() && self.mismatched.is_empty() && self.expired_at_source.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("archives do not cover the span")]
pub struct SpanNotCovered;

/// Checks an entry's endorsements, including any attached set over the same
/// transaction.
fn verify_entry(entry: &LedgerEntry, keys: &impl KeyResolver) -> Result<(), EndorsementError> {
    entry.endorsements.verify(&entry.tx, keys)?;
    let mut attached = entry.endorsements.attached.as_deref();
    while let Some(a) = attached {
        if a.subject_tx == entry.tx.tx_id {
            a.verify(&entry.tx, keys)?;
        }
        attached = a.attached.as_deref();
    }
    Ok(())
}

/// Structural and cryptographic validation of a decrypted archive.
pub fn validate_archive(
    archive: &SnapshotArchive,
    network: &NetworkId,
    anchor: Option<Hash32>,
    registry: &IdentityRegistry,
) -> Result<(), String> {
    if &archive.manifest.network_id != network {
        return Err(format!("archive belongs to {}", archive.manifest.network_id));
    }
    let mut prev = anchor;
    for snap in &archive.snapshots {
        if snap.compute_id() != snap.snapshot_id {
            return Err("snapshot id mismatch".into());
        }
        let heights: Vec<_> = snap.blocks.iter().map(|b| b.height).collect();
        if heights.first() != Some(&(snap.from_height + 1)) || heights.last() != Some(&snap.to_height) {
            return Err(format!("snapshot {} does not span its heights", snap.snapshot_id));
        }
        if snap.from_height == -1 && snap.blocks[0] != Block::genesis(network) {
            return Err("unexpected genesis block".into());
        }
        verify_chain(network, &snap.blocks, prev).map_err(|e| e.to_string())?;
        prev = snap.blocks.last().map(|b| b.block_hash);
        for b in &snap.blocks {
            for e in &b.transactions {
                verify_entry(e, registry).map_err(|err| format!("tx {}: {err}", e.tx.tx_id))?;
            }
        }
        for set in &snap.completed_sets {
            set.verify_evidence(registry)
                .map_err(|err| format!("set {}: {err}", set.set_id))?;
        }
    }
    Ok(())
}

impl AuditorState {
    pub fn new(settlement_ticks: Tick) -> Self {
        AuditorState {
            settlement_ticks,
            ..Default::default()
        }
    }

    pub fn id() -> NetworkId {
        NetworkId::new(AUDITOR_ID)
    }

    pub fn archives(&self, network: &NetworkId) -> &[IndexedArchive] {
        self.index.get(network).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn archive_count(&self) -> usize {
        self.index.values().map(Vec::len).sum()
    }

    /// Fetches, re-verifies, decrypts, parses, validates and indexes one
    /// archive. Archives failing validation are quarantined.
    #[allow(clippy::too_many_arguments)]
    pub fn ingest_snapshot(
        &mut self,
        network: &NetworkId,
        cid: &ContentId,
        key: &SymmetricKey,
        swarm: &SwarmSecret,
        store: &CasStore,
        registry: &IdentityRegistry,
        now: Tick,
    ) -> Result<(), IngestError> {
        let result = self.try_ingest(network, cid, key, swarm, store, registry, now);
        if let Err(IngestError::Malformed(_)) = &result {
            self.quarantine.insert(*cid);
        }
        self.log.push(IngestRecord {
            network_id: network.clone(),
            cid: *cid,
            tick: now,
            accepted: result.is_ok(),
            detail: match &result {
                Ok(()) => String::new(),
                Err(e) => e.to_string(),
            },
        });
        result
    }

    #[allow(clippy::too_many_arguments)]
    fn try_ingest(
        &mut self,
        network: &NetworkId,
        cid: &ContentId,
        key: &SymmetricKey,
        swarm: &SwarmSecret,
        store: &CasStore,
        registry: &IdentityRegistry,
        now: Tick,
    ) -> Result<(), IngestError> {
        let bytes = store.get(cid, swarm, &Self::id()).map_err(IngestError::Fetch)?;
        let plain = decrypt_archive_bytes(&bytes, key).map_err(|_| IngestError::Auth)?;
        let archive = parse_archive(&plain).map_err(|e| IngestError::Malformed(e.to_string()))?;
        let existing = self.archives(network);
        if existing.iter().any(|a| a.cid == *cid) {
            return Ok(());
        }
        let (from, to) = (archive.manifest.from_height, archive.manifest.to_height);
        if existing
            .iter()
            .any(|a| a.archive.manifest.from_height < to && from < a.archive.manifest.to_height)
        {
            return Err(IngestError::Malformed("overlaps indexed history".into()));
        }
        let anchor = existing
            .iter()
            .find(|a| a.archive.manifest.to_height == from)
            .and_then(|a| a.archive.blocks().last())
            .map(|b| b.block_hash);
        validate_archive(&archive, network, anchor, registry).map_err(IngestError::Malformed)?;
        let list = self.index.entry(network.clone()).or_default();
        list.push(IndexedArchive {
            cid: *cid,
            archive,
            ingested_tick: now,
        });
        list.sort_by_key(|a| a.archive.manifest.from_height);
        Ok(())
    }

    /// A party covers a span once it has archived a block sealed at least
    /// `settlement_ticks` after the span's end.
    fn covered(&self, network: &NetworkId, span_end: Tick) -> bool {
        self.archives(network)
            .iter()
            .map(IndexedArchive::archived_through)
            .max()
            .is_some_and(|t| t >= span_end + self.settlement_ticks)
    }

    fn matches(reference: &SetReference, set_id: &SetId, invoke: &LedgerEntry) -> bool {
        if reference.set_id == Some(*set_id) {
            return true;
        }
        let t = invoke.tx.logical_time;
        reference.payload_digest == Some(invoke.tx.payload_digest()) && reference.span.0 <= t && t <= reference.span.1
    }

    /// Every archived completed set between `source` and `dest` matching the
    /// reference, with its citation.
    fn matching_sets<'a>(
        &'a self,
        source: &NetworkId,
        dest: &NetworkId,
        reference: &SetReference,
    ) -> Vec<(Citation, &'a TransactionSet)> {
        let mut out = Vec::new();
        for party in [source, dest] {
            for ia in self.archives(party) {
                for snap in &ia.archive.snapshots {
                    for set in &snap.completed_sets {
                        if &set.source_network == source
                            && &set.dest_network == dest
                            && Self::matches(reference, &set.set_id, &set.invoke)
                        {
                            out.push((
                                Citation {
                                    network_id: party.clone(),
                                    cid: ia.cid,
                                    snapshot_id: snap.snapshot_id,
                                    set_id: set.set_id,
                                },
                                set,
                            ));
                        }
                    }
                }
            }
        }
        out
    }

    /// Sets the source flagged incomplete that match the reference.
    fn expired_matches(&self, source: &NetworkId, reference: &SetReference) -> Vec<Citation> {
        let mut out = Vec::new();
        for ia in self.archives(source) {
            for snap in &ia.archive.snapshots {
                for rec in &snap.incomplete_sets {
                    let hit = reference.set_id == Some(rec.set_id)
                        || rec
                            .invoke
                            .as_ref()
                            .is_some_and(|inv| Self::matches(reference, &rec.set_id, inv));
                    if hit {
                        out.push(Citation {
                            network_id: source.clone(),
                            cid: ia.cid,
                            snapshot_id: snap.snapshot_id,
                            set_id: rec.set_id,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn resolve_dispute(&self, case: &DisputeCase, registry: &IdentityRegistry) -> Verdict {
        let (source, dest) = case.source_and_dest();
        let expired = self.expired_matches(source, &case.reference);
        let expired_ids: BTreeSet<SetId> = expired.iter().map(|c| c.set_id).collect();
        let candidates: Vec<_> = self
            .matching_sets(source, dest, &case.reference)
            .into_iter()
            .filter(|(c, _)| !expired_ids.contains(&c.set_id))
            .collect();
        let mut evidence: Vec<Citation> = candidates
            .iter()
            .filter(|(_, set)| set.verify_evidence(registry).is_ok())
            .map(|(c, _)| c.clone())
            .collect();
        evidence.sort();
        evidence.dedup();

        if !evidence.is_empty() {
            let outcome = match case.kind {
                ClaimKind::DemandFulfillment => Outcome::ClaimUpheld,
                ClaimKind::DenyReceipt => Outcome::ClaimRefuted,
            };
            return Verdict {
                outcome,
                rationale: Rationale::Case1ValidReceipt,
                evidence,
            };
        }
        if !candidates.is_empty() {
            let mut evidence: Vec<Citation> = candidates.into_iter().map(|(c, _)| c).collect();
            evidence.sort();
            evidence.dedup();
            return Verdict {
                outcome: Outcome::Indeterminate,
                rationale: Rationale::EndorsementFailure,
                evidence,
            };
        }
        let span_end = case.reference.span.1;
        if !(self.covered(source, span_end) && self.covered(dest, span_end)) {
            return Verdict {
                outcome: Outcome::Indeterminate,
                rationale: Rationale::SpanNotCovered,
                evidence: Vec::new(),
            };
        }
        let mut evidence = expired;
        evidence.sort();
        evidence.dedup();
        let outcome = match case.kind {
            ClaimKind::DemandFulfillment => Outcome::ClaimRefuted,
            ClaimKind::DenyReceipt => Outcome::Indeterminate,
        };
        Verdict {
            outcome,
            rationale: Rationale::Case2NoReceipt,
            evidence,
        }
    }

    fn completed_between<'a>(
        &'a self,
        party: &NetworkId,
        a: &NetworkId,
        b: &NetworkId,
        span: (Tick, Tick),
    ) -> BTreeMap<SetId, &'a TransactionSet> {
        let pair = |s: &TransactionSet| {
            (&s.source_network == a && &s.dest_network == b) || (&s.source_network == b && &s.dest_network == a)
        };
        let mut out = BTreeMap::new();
        for ia in self.archives(party) {
            for snap in &ia.archive.snapshots {
                for set in &snap.completed_sets {
                    let t = set.invoke.tx.logical_time;
                    if pair(set) && span.0 <= t && t <= span.1 {
                        out.insert(set.set_id, set);
                    }
                }
            }
        }
        out
    }

    pub fn cross_check_archives(
        &self,
        a: &NetworkId,
        b: &NetworkId,
        span: (Tick, Tick),
        registry: &IdentityRegistry,
    ) -> Result<ConsistencyReport, SpanNotCovered> {
        if !(self.covered(a, span.1) && self.covered(b, span.1)) {
            return Err(SpanNotCovered);
        }
        let in_a = self.completed_between(a, a, b, span);
        let in_b = self.completed_between(b, a, b, span);
        let expired: BTreeSet<SetId> = [a, b]
            .into_iter()
            .flat_map(|n| self.archives(n))
            .flat_map(|ia| ia.archive.snapshots.iter())
            .flat_map(|s| s.incomplete_sets.iter().map(|r| r.set_id))
            .collect();
        let mut report = ConsistencyReport::default();
        for (holder, mine, theirs) in [(a, &in_a, &in_b), (b, &in_b, &in_a)] {
            for (id, set) in mine.iter() {
                match theirs.get(id) {
                    None if expired.contains(id) => {
                        if holder == &set.dest_network {
                            report.expired_at_source.push(*id);
                        }
                    }
                    None => report.only_in.push((holder.clone(), *id)),
                    Some(other) => {
                        let ok = set.invoke == other.invoke
                            && set.receipt == other.receipt
                            && set.verify_evidence(registry).is_ok();
                        if !ok && holder == a {
                            report.mismatched.push(*id);
                        }
                    }
                }
            }
        }
        Ok(report)
    }
}
