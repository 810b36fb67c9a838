//! Run metrics and their export. Tick-based files are deterministic;
//! wall-clock measurements go to separate files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::auditor::{DisputeCase, Outcome, Rationale, Verdict};
use crate::cas::ContentId;
use crate::codec::{canonical_json_pretty, Hash32};
use crate::ledger::{Height, NetworkId, PeerId, Tick};

pub const STAGES: [&str; 5] = ["archive", "compress", "encrypt", "store_upload", "interop_initiate"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounter {
    pub attempts: u64,
    pub pass: u64,
    pub fail: u64,
}

impl StageCounter {
    pub fn record(&mut self, ok: bool) {
        self.attempts += 1;
        if ok {
            self.pass += 1;
        } else {
            self.fail += 1;
        }
    }

    pub fn reconciles(&self) -> bool {
        self.pass + self.fail == self.attempts
    }
}

/// Wall-clock time around the crypto, compression and store calls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineTiming {
    pub capture_ms: f64,
    pub compress_ms: f64,
    pub kdf_ms: f64,
    pub encrypt_ms: f64,
    pub store_put_ms: f64,
    pub envelope_ms: f64,
}

impl PipelineTiming {
    pub fn total_ms(&self) -> f64 {
        self.capture_ms + self.compress_ms + self.kdf_ms + self.encrypt_ms + self.store_put_ms
    }
}

pub fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub network_id: NetworkId,
    pub index: usize,
    pub peer_id: PeerId,
    pub from_height: Height,
    pub to_height: Height,
    pub blocks: usize,
    pub tx_count: usize,
    pub completed_sets: usize,
    pub incomplete_sets: usize,
    pub capture_tick: Tick,
    pub archive_bytes: usize,
    pub encrypted_bytes: usize,
    pub cid: ContentId,
    #[serde(skip)]
    pub timing: PipelineTiming,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRecord {
    pub network_id: NetworkId,
    pub tick: Tick,
    pub archives_used: usize,
    pub height_before: Height,
    pub restored_height: Height,
    pub prefix_identical: bool,
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisputeRecord {
    pub tick: Tick,
    pub origin: String,
    pub case: Option<DisputeCase>,
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxCounters {
    pub submitted: u64,
    pub committed: u64,
    pub failed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub relay_down: u64,
    pub rejected_at_delivery: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub stages: BTreeMap<String, StageCounter>,
    pub snapshots: Vec<SnapshotRecord>,
    pub bootstraps: Vec<BootstrapRecord>,
    pub disputes: Vec<DisputeRecord>,
    pub local_txs: TxCounters,
    pub cross_sets: TxCounters,
    pub relay: RelayCounters,
    pub auditor_ingested: u64,
    pub auditor_rejected: u64,
    pub containment_violations: u64,
    #[serde(skip)]
    pub wall_total_ms: f64,
}

impl MetricsReport {
    pub fn new() -> Self {
        MetricsReport {
            stages: STAGES
                .iter()
                .map(|s| (s.to_string(), StageCounter::default()))
                .collect(),
            ..Default::default()
        }
    }

    pub fn stage(&mut self, name: &str) -> &mut StageCounter {
        self.stages.get_mut(name).expect("known stage")
    }

    pub fn stages_reconcile(&self) -> bool {
        self.stages.values().all(StageCounter::reconciles)
    }

    /// Passes over attempts across every stage.
    pub fn success_rate(&self) -> f64 {
        let (pass, attempts) = self
            .stages
            .values()
            .fold((0, 0), |(p, a), s| (p + s.pass, a + s.attempts));
        if attempts == 0 {
            1.0
        } else {
            pass as f64 / attempts as f64
        }
    }

    pub fn verdict_summary(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for d in &self.disputes {
            let key = match &d.verdict {
                Some(v) => format!("{}/{}", outcome_name(v.outcome), rationale_name(v.rationale)),
                None => "unresolved".to_string(),
            };
            *out.entry(key).or_insert(0) += 1;
        }
        out
    }

    /// Snapshot pipeline rate from measured per-snapshot wall time.
    pub fn snapshots_per_minute(&self) -> f64 {
        let total: f64 = self.snapshots.iter().map(|s| s.timing.total_ms()).sum();
        if total == 0.0 {
            0.0
        } else {
            self.snapshots.len() as f64 * 60_000.0 / total
        }
    }
}

pub fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::ClaimUpheld => "claim_upheld",
        Outcome::ClaimRefuted => "claim_refuted",
        Outcome::Indeterminate => "indeterminate",
    }
}

pub fn rationale_name(r: Rationale) -> &'static str {
    match r {
        Rationale::Case1ValidReceipt => "case1_valid_receipt",
        Rationale::Case2NoReceipt => "case2_no_receipt",
        Rationale::EndorsementFailure => "endorsement_failure",
        Rationale::SpanNotCovered => "span_not_covered",
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub network_id: NetworkId,
    pub height: Height,
    pub tip_hash: Hash32,
    pub snapshots: usize,
    pub last_snapshot_height: Height,
    pub sets_complete: usize,
    pub sets_incomplete: usize,
    pub sets_pending: usize,
    pub late_receipts: usize,
    pub wallet_entries: usize,
}

/// Deterministic run summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub ticks: Tick,
    pub state_hash: Hash32,
    pub trace_hash: Hash32,
    pub trace_events: u64,
    pub networks: Vec<NetworkSummary>,
    pub stages: BTreeMap<String, StageCounter>,
    pub stages_reconcile: bool,
    pub success_rate: f64,
    pub local_txs: TxCounters,
    pub cross_sets: TxCounters,
    pub relay: RelayCounters,
    pub auditor_ingested: u64,
    pub auditor_rejected: u64,
    pub containment_violations: u64,
    pub bootstraps: Vec<BootstrapRecord>,
    pub verdicts: BTreeMap<String, u64>,
    pub store_objects: usize,
}

#[derive(Debug, thiserror::Error)]
#[error("export failed: {0}")]
pub struct ExportError(#[from] pub std::io::Error);

/// Writes `snapshots.csv`, `stages.csv`, `verdicts.json`, `summary.json`
/// (deterministic) and `latency.csv`, `throughput.csv`, `transfer.csv`,
/// `timing.json` (wall clock).
pub fn export_metrics(report: &MetricsReport, summary: &RunSummary, dir: &Path) -> Result<(), ExportError> {
    fs::create_dir_all(dir)?;

    let mut snaps = String::from(
        "network,index,peer,from_height,to_height,blocks,tx_count,completed_sets,incomplete_sets,capture_tick,archive_bytes,encrypted_bytes,cid\n",
    );
    for s in &report.snapshots {
        let _ = writeln!(
            snaps,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.network_id,
            s.index,
            s.peer_id,
            s.from_height,
            s.to_height,
            s.blocks,
            s.tx_count,
            s.completed_sets,
            s.incomplete_sets,
            s.capture_tick,
            s.archive_bytes,
            s.encrypted_bytes,
            s.cid
        );
    }
    fs::write(dir.join("snapshots.csv"), snaps)?;

    let mut stages = String::from("stage,attempts,pass,fail\n");
    for name in STAGES {
        let c = report.stages.get(name).copied().unwrap_or_default();
        let _ = writeln!(stages, "{name},{},{},{}", c.attempts, c.pass, c.fail);
    }
    fs::write(dir.join("stages.csv"), stages)?;

    fs::write(
        dir.join("verdicts.json"),
        canonical_json_pretty(&report.disputes).expect("serializable"),
    )?;
    fs::write(
        dir.join("summary.json"),
        canonical_json_pretty(summary).expect("serializable"),
    )?;

    let mut latency = String::from(
        "network,capture_tick,ledger_height,tx_count,capture_ms,compress_encrypt_ms,store_put_ms,total_ms\n",
    );
    let mut throughput = String::from("ledger_height,snapshots_per_min\n");
    let mut transfer =
        String::from("network,cid,archive_bytes,encrypted_bytes,kdf_ms,encrypt_ms,store_put_ms,envelope_ms\n");
    for s in &report.snapshots {
        let t = &s.timing;
        let _ = writeln!(
            latency,
            "{},{},{},{},{:.3},{:.3},{:.3},{:.3}",
            s.network_id,
            s.capture_tick,
            s.to_height,
            s.tx_count,
            t.capture_ms,
            t.compress_ms + t.kdf_ms + t.encrypt_ms,
            t.store_put_ms,
            t.total_ms()
        );
        let rate = if t.total_ms() > 0.0 {
            60_000.0 / t.total_ms()
        } else {
            0.0
        };
        let _ = writeln!(throughput, "{},{:.2}", s.to_height, rate);
        let _ = writeln!(
            transfer,
            "{},{},{},{},{:.3},{:.3},{:.3},{:.3}",
            s.network_id,
            s.cid,
            s.archive_bytes,
            s.encrypted_bytes,
            t.kdf_ms,
            t.encrypt_ms,
            t.store_put_ms,
            t.envelope_ms
        );
    }
    fs::write(dir.join("latency.csv"), latency)?;
    fs::write(dir.join("throughput.csv"), throughput)?;
    fs::write(dir.join("transfer.csv"), transfer)?;

    let timing = serde_json::json!({
        "wall_total_ms": report.wall_total_ms,
        "snapshots_per_minute": report.snapshots_per_minute(),
        "bootstrap_ms": report.bootstraps.iter().map(|b| b.wall_ms).collect::<Vec<_>>(),
    });
    fs::write(
        dir.join("timing.json"),
        serde_json::to_string_pretty(&timing).expect("json"),
    )?;
    Ok(())
}
