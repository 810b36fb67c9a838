//! Need-based snapshot scheduling, generating-peer selection, ledger delta
//! capture and the canonical compressed archive format.
//!
//! Archive plaintext (before encryption) is raw DEFLATE over
//!
//! ```text
//! "ISNAP1" ‖ u32be(len) manifest-json ‖ { u32be(len) snapshot-json }*
//! ```
//!
//! where every JSON record has recursively sorted keys.

use std::io::{Read as _, Write as _};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{canonical_json, Hash32};
use crate::crosschain::{parse_expiry_marker, SetBook, SetId, SetStatus, TransactionSet};
use crate::ledger::{Block, Height, LedgerEntry, Network, NetworkId, PeerId, PeerStatus, Tick, TxKind};

pub const ARCHIVE_MAGIC: &[u8; 6] = b"ISNAP1";
const COMPRESSION_LEVEL: u32 = 6;

/// Δ = G × T, polled every `poll_interval` ticks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    /// G: average blocks added per period.
    pub blocks_per_period: f64,
    /// T: number of periods worth of growth that triggers a snapshot.
    pub window_periods: f64,
    /// h, in ticks.
    pub poll_interval: Tick,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            blocks_per_period: 10.0,
            window_periods: 24.0,
            poll_interval: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedulerConfigError {
    #[error("blocks per period must be finite and non-negative")]
    BadRate,
    #[error("window must be finite and positive")]
    BadWindow,
    #[error("poll interval must be positive")]
    ZeroPoll,
}

impl SchedulerConfig {
    pub fn threshold(&self) -> f64 {
        self.blocks_per_period * self.window_periods
    }

    pub fn validate(&self) -> Result<(), SchedulerConfigError> {
        if !(self.blocks_per_period.is_finite() && self.blocks_per_period >= 0.0) {
            return Err(SchedulerConfigError::BadRate);
        }
        if !(self.window_periods.is_finite() && self.window_periods > 0.0) {
            return Err(SchedulerConfigError::BadWindow);
        }
        if self.poll_interval == 0 {
            return Err(SchedulerConfigError::ZeroPoll);
        }
        Ok(())
    }

    pub fn is_poll_tick(&self, tick: Tick) -> bool {
        tick.is_multiple_of(self.poll_interval)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub network_id: NetworkId,
    /// |S|: height covered by the last snapshot, -1 before the first.
    pub last_snapshot_height: Height,
}

impl SchedulerState {
    pub fn new(network_id: NetworkId) -> Self {
        SchedulerState {
            network_id,
            last_snapshot_height: -1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    /// Archive the span `(from_height, to_height]`.
    Trigger {
        from_height: Height,
        to_height: Height,
    },
    Skip,
}

/// Triggers when growth since the last snapshot reaches `threshold`, and
/// advances the snapshot height on trigger.
pub fn process_snapshot(state: &mut SchedulerState, ledger_height: Height, threshold: f64) -> Decision {
    debug_assert!(ledger_height >= state.last_snapshot_height);
    let growth = ledger_height - state.last_snapshot_height;
    if growth as f64 >= threshold {
        let from_height = state.last_snapshot_height;
        state.last_snapshot_height = ledger_height;
        Decision::Trigger {
            from_height,
            to_height: ledger_height,
        }
    } else {
        Decision::Skip
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SnapshotError {
    #[error("no ready peer to generate the snapshot")]
    NoReadyPeer,
    #[error("peer {0} is unavailable")]
    PeerUnavailable(PeerId),
    #[error("nothing to capture above height {0}")]
    EmptyDelta(Height),
    #[error("snapshots are empty or not height-contiguous")]
    NonContiguousSnapshots,
}

/// Picks a ready peer with maximal replica height; ties are broken uniformly.
pub fn select_snapshot_peer(topology: &[PeerStatus], rng: &mut impl Rng) -> Result<PeerId, SnapshotError> {
    let best = topology
        .iter()
        .filter(|p| p.ready)
        .map(|p| p.replica_height)
        .max()
        .ok_or(SnapshotError::NoReadyPeer)?;
    let candidates: Vec<&PeerStatus> = topology
        .iter()
        .filter(|p| p.ready && p.replica_height == best)
        .collect();
    let pick = if candidates.len() == 1 {
        0
    } else {
        rng.gen_range(0..candidates.len())
    };
    Ok(candidates[pick].peer_id.clone())
}

/// An expired set, recorded only as a flag.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncompleteRecord {
    pub set_id: SetId,
    pub source_network: NetworkId,
    pub invoke: Option<LedgerEntry>,
    pub expired_tick: Tick,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub snapshot_id: Hash32,
    pub network_id: NetworkId,
    pub peer_id: PeerId,
    /// Exclusive.
    pub from_height: Height,
    /// Inclusive.
    pub to_height: Height,
    pub blocks: Vec<Block>,
    pub completed_sets: Vec<TransactionSet>,
    pub incomplete_sets: Vec<IncompleteRecord>,
    pub state_digest: Hash32,
    pub capture_tick: Tick,
}

impl Snapshot {
    pub fn tx_count(&self) -> usize {
        self.blocks.iter().map(|b| b.transactions.len()).sum()
    }

    pub fn compute_id(&self) -> Hash32 {
        Hash32::tagged(
            "isnap.snapshot",
            &[
                self.network_id.as_str().as_bytes(),
                &self.from_height.to_be_bytes(),
                &self.to_height.to_be_bytes(),
                &self.capture_tick.to_be_bytes(),
                &self.state_digest.0,
            ],
        )
    }
}

pub fn state_digest(network: &NetworkId, to_height: Height, tip: &Hash32) -> Hash32 {
    Hash32::tagged(
        "isnap.state",
        &[network.as_str().as_bytes(), &to_height.to_be_bytes(), &tip.0],
    )
}

/// Reassembles the dual-network evidence for a receipt found on `network`'s
/// ledger, from either side of the exchange.
fn completed_set_for(network: &Network, book: &SetBook, receipt_entry: &LedgerEntry) -> Option<TransactionSet> {
    let invoke_id = receipt_entry.tx.references?;
    let invoke_entry = network.ledger.entry(&invoke_id)?;
    let me = network.id();
    let (source_endorsements, dest_receipt) = if &invoke_entry.tx.origin_network == me {
        // source side: our receipt entry wraps the destination's endorsements
        (
            invoke_entry.endorsements.clone(),
            receipt_entry.endorsements.attached.as_deref()?.clone(),
        )
    } else {
        (
            invoke_entry.endorsements.attached.as_deref()?.clone(),
            receipt_entry.endorsements.clone(),
        )
    };
    let deadline = book
        .get(&invoke_id)
        .map(|s| s.deadline)
        .unwrap_or(receipt_entry.tx.logical_time);
    Some(TransactionSet {
        set_id: invoke_id,
        source_network: invoke_entry.tx.origin_network.clone(),
        dest_network: invoke_entry.tx.counterparty.clone()?,
        invoke: LedgerEntry {
            tx: invoke_entry.tx.clone(),
            endorsements: source_endorsements,
        },
        receipt: Some(LedgerEntry {
            tx: receipt_entry.tx.clone(),
            endorsements: dest_receipt,
        }),
        status: SetStatus::Complete,
        deadline,
    })
}

/// Captures `(from_height, replica height]` as held by `peer_id`, with every
/// transaction set completed and every set expired within the span.
pub fn capture_snapshot(
    network: &Network,
    book: &SetBook,
    peer_id: &PeerId,
    from_height: Height,
    now: Tick,
) -> Result<Snapshot, SnapshotError> {
    let peer = network
        .peer(peer_id)
        .filter(|p| p.ready)
        .ok_or_else(|| SnapshotError::PeerUnavailable(peer_id.clone()))?;
    let to_height = peer.replica_height;
    if to_height <= from_height {
        return Err(SnapshotError::EmptyDelta(from_height));
    }
    let replica = network.replica_blocks(peer_id).expect("peer exists");
    let blocks: Vec<Block> = replica[(from_height + 1) as usize..].to_vec();

    let mut completed_sets = Vec::new();
    let mut incomplete_sets = Vec::new();
    for b in &blocks {
        for e in &b.transactions {
            match e.tx.kind {
                TxKind::CrossReceipt => {
                    if let Some(set) = completed_set_for(network, book, e) {
                        completed_sets.push(set);
                    }
                }
                TxKind::Local if e.tx.origin_network == *network.id() => {
                    if let Some(set_id) = parse_expiry_marker(&e.tx.payload) {
                        incomplete_sets.push(IncompleteRecord {
                            set_id,
                            source_network: network.id().clone(),
                            invoke: network
                                .ledger
                                .entry(&set_id)
                                .or_else(|| book.sets.get(&set_id).map(|s| &s.invoke))
                                .cloned(),
                            expired_tick: e.tx.logical_time,
                        });
                    }
                }
                _ => {}
            }
        }
    }
    let tip = blocks.last().expect("non-empty delta").block_hash;
    let mut snap = Snapshot {
        snapshot_id: Hash32::ZERO,
        network_id: network.id().clone(),
        peer_id: peer_id.clone(),
        from_height,
        to_height,
        blocks,
        completed_sets,
        incomplete_sets,
        state_digest: state_digest(network.id(), to_height, &tip),
        capture_tick: now,
    };
    snap.snapshot_id = snap.compute_id();
    Ok(snap)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub network_id: NetworkId,
    pub from_height: Height,
    pub to_height: Height,
    pub snapshot_count: usize,
    pub creation_ticks: Vec<Tick>,
}

/// Height-contiguous snapshots of one network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotArchive {
    pub manifest: ArchiveManifest,
    pub snapshots: Vec<Snapshot>,
}

impl SnapshotArchive {
    pub fn new(snapshots: Vec<Snapshot>) -> Result<Self, SnapshotError> {
        let first = snapshots.first().ok_or(SnapshotError::NonContiguousSnapshots)?;
        let contiguous = snapshots
            .windows(2)
            .all(|w| w[1].from_height == w[0].to_height && w[1].network_id == w[0].network_id);
        if !contiguous {
            return Err(SnapshotError::NonContiguousSnapshots);
        }
        Ok(SnapshotArchive {
            manifest: ArchiveManifest {
                network_id: first.network_id.clone(),
                from_height: first.from_height,
                to_height: snapshots.last().unwrap().to_height,
                snapshot_count: snapshots.len(),
                creation_ticks: snapshots.iter().map(|s| s.capture_tick).collect(),
            },
            snapshots,
        })
    }

    pub fn tx_count(&self) -> usize {
        self.snapshots.iter().map(Snapshot::tx_count).sum()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.snapshots.iter().flat_map(|s| s.blocks.iter())
    }

    /// Canonical serialization without compression.
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ARCHIVE_MAGIC);
        push_record(&mut out, &self.manifest);
        for s in &self.snapshots {
            push_record(&mut out, s);
        }
        out
    }
}

fn push_record<T: Serialize>(out: &mut Vec<u8>, value: &T) {
    let json = canonical_json(value).expect("archive records serialize");
    out.extend_from_slice(&(json.len() as u32).to_be_bytes());
    out.extend_from_slice(json.as_bytes());
}

/// Canonical serialization followed by DEFLATE with fixed parameters.
pub fn assemble_archive(snapshots: &[Snapshot]) -> Result<Vec<u8>, SnapshotError> {
    let archive = SnapshotArchive::new(snapshots.to_vec())?;
    Ok(compress(&archive.to_canonical_bytes()))
}

pub fn compress(bytes: &[u8]) -> Vec<u8> {
    let mut enc = DeflateEncoder::new(Vec::with_capacity(bytes.len() / 2), Compression::new(COMPRESSION_LEVEL));
    enc.write_all(bytes).expect("writing to a Vec does not fail");
    enc.finish().expect("writing to a Vec does not fail")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArchiveFormatError {
    #[error("archive does not inflate")]
    Inflate,
    #[error("missing ISNAP1 magic")]
    BadMagic,
    #[error("malformed archive record: {0}")]
    Record(String),
    #[error("manifest does not describe the snapshots")]
    ManifestMismatch,
}

/// Inverse of [`assemble_archive`].
pub fn parse_archive(compressed: &[u8]) -> Result<SnapshotArchive, ArchiveFormatError> {
    let mut raw = Vec::new();
    DeflateDecoder::new(compressed)
        .read_to_end(&mut raw)
        .map_err(|_| ArchiveFormatError::Inflate)?;
    parse_canonical(&raw)
}

pub fn parse_canonical(raw: &[u8]) -> Result<SnapshotArchive, ArchiveFormatError> {
    let body = raw
        .strip_prefix(ARCHIVE_MAGIC.as_slice())
        .ok_or(ArchiveFormatError::BadMagic)?;
    let mut records = Vec::new();
    let mut rest = body;
    while !rest.is_empty() {
        if rest.len() < 4 {
            return Err(ArchiveFormatError::Record("truncated length".into()));
        }
        let n = u32::from_be_bytes(rest[..4].try_into().unwrap()) as usize;
        let rec = rest
            .get(4..4 + n)
            .ok_or_else(|| ArchiveFormatError::Record("truncated record".into()))?;
        records.push(rec);
        rest = &rest[4 + n..];
    }
    let (manifest, snaps) = records
        .split_first()
        .ok_or_else(|| ArchiveFormatError::Record("no manifest".into()))?;
    let manifest: ArchiveManifest =
        serde_json::from_slice(manifest).map_err(|e| ArchiveFormatError::Record(e.to_string()))?;
    let snapshots = snaps
        .iter()
        .map(|r| serde_json::from_slice::<Snapshot>(r))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ArchiveFormatError::Record(e.to_string()))?;
    let archive = SnapshotArchive::new(snapshots).map_err(|_| ArchiveFormatError::ManifestMismatch)?;
    if archive.manifest != manifest {
        return Err(ArchiveFormatError::ManifestMismatch);
    }
    Ok(archive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crosschain::{accept_and_receipt, complete_set, expire_sets, initiate_cross_tx, IdentityRegistry};
    use crate::ledger::{NetworkConfig, Transaction};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn status(id: &str, h: Height, ready: bool) -> PeerStatus {
        PeerStatus {
            peer_id: PeerId(id.into()),
            replica_height: h,
            ready,
        }
    }

    #[test]
    fn scheduler_examples() {
        let mut s = SchedulerState::new(NetworkId::new("a"));
        assert_eq!(process_snapshot(&mut s, 0, 240.0), Decision::Skip);
        s.last_snapshot_height = 100;
        assert_eq!(
            process_snapshot(&mut s, 341, 240.0),
            Decision::Trigger {
                from_height: 100,
                to_height: 341
            }
        );
        assert_eq!(s.last_snapshot_height, 341);

        let cfg = SchedulerConfig {
            blocks_per_period: 10.0,
            window_periods: 24.0,
            poll_interval: 1,
        };
        assert_eq!(cfg.threshold(), 240.0);
        s.last_snapshot_height = 0;
        assert_eq!(process_snapshot(&mut s, 239, cfg.threshold()), Decision::Skip);
        assert!(matches!(
            process_snapshot(&mut s, 240, cfg.threshold()),
            Decision::Trigger { .. }
        ));
    }

    #[test]
    fn scheduler_config_validation() {
        assert!(SchedulerConfig::default().validate().is_ok());
        let bad = SchedulerConfig {
            poll_interval: 0,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(SchedulerConfigError::ZeroPoll));
    }

    #[test]
    fn selection_prefers_max_ready_height() {
        let topo = vec![
            status("p1", 5, true),
            status("p2", 9, true),
            status("p3", 9, true),
            status("p4", 3, true),
        ];
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = select_snapshot_peer(&topo, &mut rng).unwrap();
            assert!(p.0 == "p2" || p.0 == "p3");
            seen.insert(p.0);
        }
        assert_eq!(seen.len(), 2, "both tied peers get picked across seeds");
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(select_snapshot_peer(&topo, &mut a), select_snapshot_peer(&topo, &mut b));
    }

    #[test]
    fn selection_skips_unready_and_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let topo = vec![status("p1", 5, true), status("p2", 9, false), status("p3", 7, true)];
        assert_eq!(select_snapshot_peer(&topo, &mut rng).unwrap().0, "p3");
        assert_eq!(
            select_snapshot_peer(&[status("only", 0, true)], &mut rng).unwrap().0,
            "only"
        );
        assert_eq!(
            select_snapshot_peer(&[status("p", 3, false)], &mut rng),
            Err(SnapshotError::NoReadyPeer)
        );
    }

    struct Pair {
        a: Network,
        b: Network,
        reg: IdentityRegistry,
        book_a: SetBook,
        book_b: SetBook,
    }

    fn pair() -> Pair {
        let ca = NetworkConfig::new("a", 3, 1);
        let cb = NetworkConfig::new("b", 4, 2);
        let mut reg = IdentityRegistry::new();
        reg.register_network(&ca);
        reg.register_network(&cb);
        Pair {
            a: Network::new(ca),
            b: Network::new(cb),
            reg,
            book_a: SetBook::new(),
            book_b: SetBook::new(),
        }
    }

    fn filler(p: &mut Pair, t: Tick) {
        for n in [&mut p.a, &mut p.b] {
            let tx = Transaction::local(n.id().clone(), format!("local-{t}").into_bytes(), t);
            n.endorse_and_commit(tx, None).unwrap();
            n.seal(t);
        }
    }

    fn complete_one(p: &mut Pair, t: Tick) -> SetId {
        let b = p.b.id().clone();
        let (_, req) = initiate_cross_tx(&mut p.a, &mut p.book_a, &b, b"asset".to_vec(), t, 30).unwrap();
        p.a.seal(t);
        let resp = accept_and_receipt(&mut p.b, &req, &p.reg, t + 1).unwrap();
        p.b.seal(t + 1);
        complete_set(&mut p.a, &mut p.book_a, &p.reg, &resp, t + 2).unwrap();
        p.a.seal(t + 2);
        req.set_id
    }

    fn first_peer(n: &Network) -> PeerId {
        n.peers[0].id.clone()
    }

    #[test]
    fn capture_includes_completed_set_from_both_sides() {
        let mut p = pair();
        filler(&mut p, 1);
        let id = complete_one(&mut p, 2);
        let sa = capture_snapshot(&p.a, &p.book_a, &first_peer(&p.a), -1, 10).unwrap();
        let sb = capture_snapshot(&p.b, &p.book_b, &first_peer(&p.b), -1, 10).unwrap();
        for s in [&sa, &sb] {
            assert_eq!(s.completed_sets.len(), 1);
            let set = &s.completed_sets[0];
            assert_eq!(set.set_id, id);
            set.verify_evidence(&p.reg).unwrap();
            assert!(s.incomplete_sets.is_empty());
        }
        assert_eq!(sa.completed_sets[0].invoke, sb.completed_sets[0].invoke);
        assert_eq!(sa.completed_sets[0].receipt, sb.completed_sets[0].receipt);
    }

    #[test]
    fn capture_flags_expired_sets() {
        let mut p = pair();
        let b = p.b.id().clone();
        let (s, _) = initiate_cross_tx(&mut p.a, &mut p.book_a, &b, b"lost".to_vec(), 1, 3).unwrap();
        p.a.seal(1);
        expire_sets(&mut p.a, &mut p.book_a, 5);
        p.a.seal(5);
        let snap = capture_snapshot(&p.a, &p.book_a, &first_peer(&p.a), -1, 6).unwrap();
        assert!(snap.completed_sets.is_empty());
        assert_eq!(snap.incomplete_sets.len(), 1);
        assert_eq!(snap.incomplete_sets[0].set_id, s.set_id);
    }

    #[test]
    fn consecutive_captures_are_contiguous() {
        let mut p = pair();
        let mut sched = SchedulerState::new(p.a.id().clone());
        let mut snaps = Vec::new();
        for t in 1..=30 {
            filler(&mut p, t);
            if let Decision::Trigger { from_height, .. } = process_snapshot(&mut sched, p.a.ledger.height(), 7.0) {
                snaps.push(capture_snapshot(&p.a, &p.book_a, &first_peer(&p.a), from_height, t).unwrap());
            }
        }
        assert!(snaps.len() >= 3);
        for w in snaps.windows(2) {
            assert_eq!(w[1].from_height, w[0].to_height);
        }
        assert!(SnapshotArchive::new(snaps).is_ok());
    }

    #[test]
    fn capture_errors() {
        let mut p = pair();
        filler(&mut p, 1);
        let peer = first_peer(&p.a);
        assert_eq!(
            capture_snapshot(&p.a, &p.book_a, &peer, 1, 2),
            Err(SnapshotError::EmptyDelta(1))
        );
        p.a.peers[0].ready = false;
        assert_eq!(
            capture_snapshot(&p.a, &p.book_a, &peer, -1, 2),
            Err(SnapshotError::PeerUnavailable(peer))
        );
    }

    #[test]
    fn archive_is_deterministic_and_round_trips() {
        let mut p = pair();
        filler(&mut p, 1);
        complete_one(&mut p, 2);
        filler(&mut p, 5);
        let s1 = capture_snapshot(&p.a, &p.book_a, &first_peer(&p.a), -1, 6).unwrap();
        filler(&mut p, 7);
        let s2 = capture_snapshot(&p.a, &p.book_a, &first_peer(&p.a), s1.to_height, 8).unwrap();
        let snaps = vec![s1, s2];
        let a = assemble_archive(&snaps).unwrap();
        let b = assemble_archive(&snaps).unwrap();
        assert_eq!(a, b);
        let parsed = parse_archive(&a).unwrap();
        assert_eq!(parsed.snapshots, snaps);
        assert_eq!(parsed.manifest.snapshot_count, 2);

        let mut changed = snaps.clone();
        changed[0].blocks[1].transactions[0].tx.payload[0] ^= 1;
        assert_ne!(assemble_archive(&changed).unwrap(), a);

        let mut raw = Vec::new();
        DeflateDecoder::new(&a[..]).read_to_end(&mut raw).unwrap();
        assert_eq!(&raw[..6], b"ISNAP1");
    }

    #[test]
    fn non_contiguous_archive_rejected() {
        let mut p = pair();
        for t in 1..=4 {
            filler(&mut p, t);
        }
        let peer = first_peer(&p.a);
        let s1 = capture_snapshot(&p.a, &p.book_a, &peer, -1, 5).unwrap();
        let s2 = capture_snapshot(&p.a, &p.book_a, &peer, 1, 5).unwrap();
        assert_eq!(assemble_archive(&[s1, s2]), Err(SnapshotError::NonContiguousSnapshots));
        assert_eq!(assemble_archive(&[]), Err(SnapshotError::NonContiguousSnapshots));
    }
}
