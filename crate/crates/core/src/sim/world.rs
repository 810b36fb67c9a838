//! The deterministic world: logical clock, event queue, networks, relay,
//! store and auditor.
//!
//! Each tick runs in fixed phases: fault events, workload submissions,
//! relay deliveries, set expiry, scheduler polls (with the snapshot
//! pipeline), disputes, and finally block sealing. Events at the same tick
//! and phase run in insertion order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::auditor::{AuditorState, ClaimKind, DisputeCase, SetReference};
use crate::cas::{CasError, CasStore, ContentId, SwarmKey, SwarmSecret};
use crate::codec::{canonical_json, Hash32};
use crate::crosschain::{
    accept_and_receipt, complete_set, expire_sets, initiate_cross_tx, Direction, IdentityRegistry, InteropMessage,
    Relay, RelayError, SetBook, SetId, SetStatus,
};
use crate::crypto::{
    derive_key, encrypt_archive, fresh_passphrase, unwrap, wrap_for_destination, ArchiveMetadata, EnvelopeContents,
    KeyWallet, Salt,
};
use crate::ledger::{Height, LedgerRecord, Network, NetworkConfig, NetworkId, Tick, Transaction};
use crate::snapshot::{
    capture_snapshot, compress, process_snapshot, select_snapshot_peer, Decision, SchedulerConfig, SchedulerState,
    SnapshotArchive,
};

use super::bootstrap::bootstrap_peer_from_archive;
use super::metrics::{
    ms, BootstrapRecord, DisputeRecord, MetricsReport, NetworkSummary, PipelineTiming, RunSummary, SnapshotRecord,
};
use super::scenario::{ConfigError, FaultKind, ScenarioConfig, SetSelector};

/// Prefix of cross-chain payloads that carry an archive envelope.
pub const ENVELOPE_TAG: &[u8] = b"isnap.envelope:";
/// Prefix of the local transaction recording a published archive.
pub const CID_RECORD_TAG: &str = "isnap.cid:";

const PHASE_FAULT: u8 = 0;
const PHASE_DELIVER: u8 = 1;
const PHASE_DISPUTE: u8 = 2;

// rng streams
const STREAM_SETUP: u64 = 0;
const STREAM_WORKLOAD: u64 = 1;
const STREAM_RELAY: u64 = 2;
const STREAM_SELECT: u64 = 3;
const STREAM_CRYPTO: u64 = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogueEntry {
    pub cid: ContentId,
    pub from_height: Height,
    pub to_height: Height,
    pub capture_tick: Tick,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitiatedSet {
    pub source: NetworkId,
    pub dest: NetworkId,
    pub set_id: SetId,
    pub tick: Tick,
    pub payload_digest: Hash32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FabricationRecord {
    pub fabricator: NetworkId,
    pub target: NetworkId,
    pub set_id: SetId,
    pub claimed_tick: Tick,
    pub committed: bool,
}

/// One network with its off-ledger companions.
#[derive(Clone, Debug)]
pub struct NetworkSlot {
    pub network: Network,
    pub book: SetBook,
    pub scheduler: SchedulerState,
    pub scheduler_config: SchedulerConfig,
    pub wallet: KeyWallet,
    /// Archives this network published, in order; kept beside the wallet.
    pub catalogue: Vec<CatalogueEntry>,
    /// Archive envelopes received from counterparties.
    pub received: Vec<EnvelopeContents>,
    pub down: bool,
    /// Block hashes just before the latest data-loss fault.
    pub pre_fault: Vec<Hash32>,
}

#[derive(Clone, Debug)]
enum DisputeTarget {
    Selector(SetSelector),
    Reference(SetReference),
}

#[derive(Clone, Debug)]
enum Event {
    Fault(FaultKind),
    RecoverPeer {
        net: usize,
        peer: usize,
    },
    RecoverNetwork {
        net: usize,
    },
    /// Driver-encoded message.
    Deliver(String),
    Dispute {
        origin: &'static str,
        kind: ClaimKind,
        claimant: NetworkId,
        respondent: NetworkId,
        target: DisputeTarget,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("config_invalid: {0}")]
    Config(#[from] ConfigError),
    #[error("store: {0}")]
    Store(#[from] CasError),
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

pub struct World {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub tick: Tick,
    queue: BTreeMap<(Tick, u8, u64), Event>,
    seq: u64,
    pub slots: Vec<NetworkSlot>,
    pub registry: IdentityRegistry,
    pub relay: Relay,
    pub store: CasStore,
    pub swarm_secret: SwarmSecret,
    pub auditor: AuditorState,
    auditor_secret: [u8; 32],
    workload_rng: ChaCha8Rng,
    relay_rng: ChaCha8Rng,
    select_rng: ChaCha8Rng,
    crypto_rng: ChaCha8Rng,
    pub metrics: MetricsReport,
    trace: Sha256,
    pub trace_events: u64,
    pub initiated: Vec<InitiatedSet>,
    pub fabricated: Vec<FabricationRecord>,
    /// Every set a source ever completed, for oracle checks.
    pub completed: BTreeSet<SetId>,
    /// Every set a destination accepted and receipted.
    pub receipted: BTreeSet<SetId>,
    started: Option<Instant>,
}

impl World {
    /// Builds the world. With `store_root`, the content store persists there.
    pub fn new(config: ScenarioConfig, seed: u64, store_root: Option<&Path>) -> Result<World, WorldError> {
        config.validate()?;
        let mut setup = stream(seed, STREAM_SETUP);
        let mut registry = IdentityRegistry::new();
        let mut slots = Vec::new();
        for spec in &config.networks {
            let cfg = NetworkConfig {
                network_id: spec.id.clone(),
                peer_count: spec.peers,
                genesis_seed: spec.genesis_seed,
            };
            registry.register_network(&cfg);
            slots.push(NetworkSlot {
                network: Network::new(cfg),
                book: SetBook::new(),
                scheduler: SchedulerState::new(spec.id.clone()),
                scheduler_config: spec.scheduler.clone(),
                wallet: KeyWallet::new(spec.id.clone()),
                catalogue: Vec::new(),
                received: Vec::new(),
                down: false,
                pre_fault: Vec::new(),
            });
        }
        let mut auditor_secret = [0u8; 32];
        setup.fill_bytes(&mut auditor_secret);
        let auditor_pub = x25519_dalek::PublicKey::from(&x25519_dalek::StaticSecret::from(auditor_secret)).to_bytes();
        registry.register_recipient(AuditorState::id(), auditor_pub);

        let swarm_secret = SwarmSecret::generate(&mut setup);
        let mut holders: BTreeSet<NetworkId> = config.network_ids().cloned().collect();
        holders.insert(AuditorState::id());
        let swarm = SwarmKey {
            secret: swarm_secret,
            holders,
        };
        let store = match store_root {
            Some(root) => CasStore::create(root, swarm)?,
            None => CasStore::in_memory(swarm),
        };
        let relay = Relay::new(config.relay.clone());

        let mut world = World {
            seed,
            tick: 0,
            queue: BTreeMap::new(),
            seq: 0,
            slots,
            registry,
            relay,
            store,
            swarm_secret,
            auditor: AuditorState::new(config.cross_chain_timeout + 1),
            auditor_secret,
            workload_rng: stream(seed, STREAM_WORKLOAD),
            relay_rng: stream(seed, STREAM_RELAY),
            select_rng: stream(seed, STREAM_SELECT),
            crypto_rng: stream(seed, STREAM_CRYPTO),
            metrics: MetricsReport::new(),
            trace: Sha256::new(),
            trace_events: 0,
            initiated: Vec::new(),
            fabricated: Vec::new(),
            completed: BTreeSet::new(),
            receipted: BTreeSet::new(),
            started: None,
            config,
        };
        for f in world.config.faults.clone() {
            world.schedule(f.at, PHASE_FAULT, Event::Fault(f.kind));
        }
        for d in world.config.disputes.clone() {
            world.schedule(
                d.at,
                PHASE_DISPUTE,
                Event::Dispute {
                    origin: "scripted",
                    kind: d.kind,
                    claimant: d.claimant,
                    respondent: d.respondent,
                    target: DisputeTarget::Selector(d.selector),
                },
            );
        }
        Ok(world)
    }

    fn schedule(&mut self, tick: Tick, phase: u8, ev: Event) {
        self.seq += 1;
        self.queue.insert((tick, phase, self.seq), ev);
    }

    fn record(&mut self, line: String) {
        self.trace.update(line.as_bytes());
        self.trace.update(b"\n");
        self.trace_events += 1;
    }

    pub fn slot_index(&self, id: &NetworkId) -> Option<usize> {
        self.slots.iter().position(|s| s.network.id() == id)
    }

    pub fn slot(&self, id: &NetworkId) -> &NetworkSlot {
        &self.slots[self.slot_index(id).expect("known network")]
    }

    /// Runs every remaining tick.
    pub fn run(&mut self) {
        while self.tick < self.config.ticks {
            self.step();
        }
    }

    /// Advances one tick.
    pub fn step(&mut self) {
        let started = *self.started.get_or_insert_with(Instant::now);
        self.tick += 1;
        let t = self.tick;
        self.drain(PHASE_FAULT);
        self.workload(t);
        self.drain(PHASE_DELIVER);
        for i in 0..self.slots.len() {
            if self.slots[i].down {
                continue;
            }
            let slot = &mut self.slots[i];
            let expired = expire_sets(&mut slot.network, &mut slot.book, t);
            for id in expired {
                self.record(format!("{t} expire {}", id));
            }
        }
        for i in 0..self.slots.len() {
            if !self.slots[i].down && self.slots[i].scheduler_config.is_poll_tick(t) {
                self.poll(i);
            }
        }
        self.drain(PHASE_DISPUTE);
        for i in 0..self.slots.len() {
            if let Some(h) = self.slots[i].network.seal(t) {
                let line = format!(
                    "{t} seal {} {h} {}",
                    self.slots[i].network.id(),
                    self.slots[i].network.ledger.tip_hash()
                );
                self.record(line);
            }
        }
        self.metrics.wall_total_ms = ms(started.elapsed());
    }

    fn drain(&mut self, phase: u8) {
        let t = self.tick;
        while let Some((&key, _)) = self.queue.range((t, phase, 0)..=(t, phase, u64::MAX)).next() {
            let ev = self.queue.remove(&key).expect("present");
            self.handle(ev);
        }
    }

    fn handle(&mut self, ev: Event) {
        match ev {
            Event::Fault(kind) => self.apply_fault(kind),
            Event::RecoverPeer { net, peer } => {
                let n = &mut self.slots[net].network;
                n.peers[peer].ready = true;
                n.sync_replicas();
                let line = format!("{} recover-peer {}", self.tick, n.peers[peer].id);
                self.record(line);
            }
            Event::RecoverNetwork { net } => self.recover_network(net),
            Event::Deliver(wire) => self.deliver(&wire),
            Event::Dispute {
                origin,
                kind,
                claimant,
                respondent,
                target,
            } => self.dispute(origin, kind, claimant, respondent, target),
        }
    }

    fn payload(&mut self, len: usize) -> Vec<u8> {
        let mut p = vec![0u8; len];
        self.workload_rng.fill_bytes(&mut p);
        p
    }

    fn workload(&mut self, t: Tick) {
        let entries: Vec<_> = self
            .config
            .workload
            .iter()
            .filter(|w| w.active_at(t))
            .cloned()
            .collect();
        for w in entries {
            let i = self.slot_index(&w.network).expect("validated");
            for _ in 0..w.local_txs {
                let payload = self.payload(w.payload_bytes);
                self.metrics.local_txs.submitted += 1;
                let tx = Transaction::local(w.network.clone(), payload, t);
                let ok = !self.slots[i].down
                    && matches!(self.slots[i].network.endorse_and_commit(tx, None), Ok((o, _)) if o.is_committed());
                if ok {
                    self.metrics.local_txs.committed += 1;
                } else {
                    self.metrics.local_txs.failed += 1;
                }
            }
            for _ in 0..w.cross_txs {
                let dest = w.cross_to.clone().expect("validated");
                let payload = self.payload(w.payload_bytes);
                let digest = Hash32::of(&payload);
                self.metrics.cross_sets.submitted += 1;
                if self.slots[i].down {
                    self.metrics.cross_sets.failed += 1;
                    continue;
                }
                let slot = &mut self.slots[i];
                match initiate_cross_tx(
                    &mut slot.network,
                    &mut slot.book,
                    &dest,
                    payload,
                    t,
                    self.config.cross_chain_timeout,
                ) {
                    Ok((set, msg)) => {
                        self.initiated.push(InitiatedSet {
                            source: w.network.clone(),
                            dest,
                            set_id: set.set_id,
                            tick: t,
                            payload_digest: digest,
                        });
                        self.record(format!("{t} initiate {}", set.set_id));
                        self.send(msg);
                    }
                    Err(e) => {
                        self.metrics.cross_sets.failed += 1;
                        self.record(format!("{t} initiate-failed {e}"));
                    }
                }
            }
        }
    }

    fn send(&mut self, msg: InteropMessage) {
        self.metrics.relay.sent += 1;
        let t = self.tick;
        match self.relay.relay_deliver(&msg, t, &mut self.relay_rng) {
            Ok(at) => {
                self.record(format!("{t} send {:?} {} at {at}", msg.direction, msg.set_id));
                self.schedule(at, PHASE_DELIVER, Event::Deliver(msg.to_json()));
            }
            Err(e) => {
                match e {
                    RelayError::Dropped => self.metrics.relay.dropped += 1,
                    RelayError::RelayDown => self.metrics.relay.relay_down += 1,
                }
                self.record(format!("{t} lost {} {e}", msg.set_id));
            }
        }
    }

    fn deliver(&mut self, wire: &str) {
        let t = self.tick;
        let Ok(msg) = InteropMessage::from_json(wire) else {
            self.metrics.relay.rejected_at_delivery += 1;
            return;
        };
        let Some(i) = self.slot_index(&msg.dest_network) else {
            self.metrics.relay.rejected_at_delivery += 1;
            return;
        };
        self.metrics.relay.delivered += 1;
        match msg.direction {
            Direction::Request => {
                if self.slots[i].down {
                    self.metrics.relay.rejected_at_delivery += 1;
                    self.record(format!("{t} refused {} (down)", msg.set_id));
                    return;
                }
                match accept_and_receipt(&mut self.slots[i].network, &msg, &self.registry, t) {
                    Ok(resp) => {
                        self.receipted.insert(msg.set_id);
                        self.record(format!("{t} accept {}", msg.set_id));
                        if let Ok(tx) = msg.transaction() {
                            if let Some(env) = tx.payload.strip_prefix(ENVELOPE_TAG) {
                                self.open_envelope(i, env);
                            }
                        }
                        self.send(resp);
                    }
                    Err(e) => {
                        self.metrics.relay.rejected_at_delivery += 1;
                        self.record(format!("{t} reject {} {e}", msg.set_id));
                    }
                }
            }
            Direction::Response => {
                let slot = &mut self.slots[i];
                let workload = self.initiated.iter().any(|s| s.set_id == msg.set_id);
                match complete_set(&mut slot.network, &mut slot.book, &self.registry, &msg, t) {
                    Ok(status) => {
                        if status == SetStatus::Complete && self.completed.insert(msg.set_id) && workload {
                            self.metrics.cross_sets.committed += 1;
                        }
                        self.record(format!("{t} complete {}", msg.set_id));
                    }
                    Err(e) => self.record(format!("{t} receipt-refused {} {e}", msg.set_id)),
                }
            }
        }
    }

    fn open_envelope(&mut self, i: usize, env: &[u8]) {
        let secret = self.slots[i].network.config.network_secret();
        let opened = serde_json::from_slice(env).ok().and_then(|e| unwrap(&e, &secret).ok());
        match opened {
            Some(contents) => {
                let line = format!("{} envelope {} {}", self.tick, self.slots[i].network.id(), contents.cid);
                self.slots[i].received.push(contents);
                self.record(line);
            }
            None => self.record(format!("{} envelope-unreadable", self.tick)),
        }
    }

    fn poll(&mut self, i: usize) {
        let topo = self.slots[i].network.discover_topology();
        let Some(max_h) = topo.iter().filter(|p| p.ready).map(|p| p.replica_height).max() else {
            return;
        };
        let threshold = self.slots[i].scheduler_config.threshold();
        if let Decision::Trigger { from_height, .. } = process_snapshot(&mut self.slots[i].scheduler, max_h, threshold)
        {
            if !self.publish(i, &topo, from_height) {
                self.slots[i].scheduler.last_snapshot_height = from_height;
            }
        }
    }

    /// Capture → assemble → compress → encrypt → store → record → deliver.
    fn publish(&mut self, i: usize, topo: &[crate::ledger::PeerStatus], from: Height) -> bool {
        let t = self.tick;
        let net_id = self.slots[i].network.id().clone();
        let mut timing = PipelineTiming::default();

        let clock = Instant::now();
        let captured = select_snapshot_peer(topo, &mut self.select_rng).and_then(|peer| {
            let slot = &self.slots[i];
            capture_snapshot(&slot.network, &slot.book, &peer, from, t)
        });
        let snap = match captured.and_then(|s| SnapshotArchive::new(vec![s])) {
            Ok(a) => a,
            Err(e) => {
                self.metrics.stage("archive").record(false);
                self.record(format!("{t} archive-failed {net_id} {e}"));
                return false;
            }
        };
        let canonical = snap.to_canonical_bytes();
        timing.capture_ms = ms(clock.elapsed());
        self.metrics.stage("archive").record(true);

        let clock = Instant::now();
        let compressed = compress(&canonical);
        timing.compress_ms = ms(clock.elapsed());
        self.metrics.stage("compress").record(!compressed.is_empty());

        let clock = Instant::now();
        let passphrase = fresh_passphrase(&mut self.crypto_rng);
        let salt = Salt::generate(&mut self.crypto_rng);
        let derived = derive_key(&passphrase, salt, self.config.kdf_iterations);
        timing.kdf_ms = ms(clock.elapsed());
        let clock = Instant::now();
        let encrypted = derived
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|k| encrypt_archive(&compressed, k, &mut self.crypto_rng));
        timing.encrypt_ms = ms(clock.elapsed());
        let (derived, encrypted) = match (derived, encrypted) {
            (Ok(d), Ok(e)) => (d, e.to_bytes()),
            _ => {
                self.metrics.stage("encrypt").record(false);
                return false;
            }
        };
        self.metrics.stage("encrypt").record(true);

        let clock = Instant::now();
        let put = self.store.put(&encrypted, &self.swarm_secret, &net_id);
        timing.store_put_ms = ms(clock.elapsed());
        let cid = match put {
            Ok(cid) => cid,
            Err(e) => {
                self.metrics.stage("store_upload").record(false);
                self.record(format!("{t} store-failed {net_id} {e}"));
                return false;
            }
        };
        self.metrics.stage("store_upload").record(true);

        let manifest = &snap.manifest;
        let (from_height, to_height) = (manifest.from_height, manifest.to_height);
        let contents = EnvelopeContents {
            cid,
            key: derived.key,
            metadata: ArchiveMetadata {
                network_id: net_id.clone(),
                archive_id: cid.to_string(),
                from_height,
                to_height,
            },
        };
        {
            let slot = &mut self.slots[i];
            slot.wallet.put(cid.to_string(), derived);
            slot.catalogue.push(CatalogueEntry {
                cid,
                from_height,
                to_height,
                capture_tick: t,
            });
            let record = Transaction::local(
                net_id.clone(),
                format!("{CID_RECORD_TAG}{cid}:{from_height}:{to_height}").into_bytes(),
                t,
            );
            let _ = slot.network.endorse_and_commit(record, None);
        }
        self.record(format!("{t} publish {net_id} {from_height} {to_height} {cid}"));

        // auditor delivery
        let clock = Instant::now();
        let ingest = wrap_for_destination(&contents, &AuditorState::id(), &self.registry, &mut self.crypto_rng)
            .and_then(|env| unwrap(&env, &self.auditor_secret));
        match ingest {
            Ok(c) => {
                let r = self.auditor.ingest_snapshot(
                    &net_id,
                    &c.cid,
                    &c.key,
                    &self.swarm_secret,
                    &self.store,
                    &self.registry,
                    t,
                );
                if r.is_ok() {
                    self.metrics.auditor_ingested += 1;
                } else {
                    self.metrics.auditor_rejected += 1;
                }
            }
            Err(_) => self.metrics.auditor_rejected += 1,
        }

        // counterparty transfer as a cross-chain transaction
        let others: Vec<NetworkId> = self.config.network_ids().filter(|n| **n != net_id).cloned().collect();
        for dest in others {
            let env = wrap_for_destination(&contents, &dest, &self.registry, &mut self.crypto_rng)
                .expect("registered network");
            let payload = [ENVELOPE_TAG, canonical_json(&env).expect("json").as_bytes()].concat();
            let slot = &mut self.slots[i];
            match initiate_cross_tx(
                &mut slot.network,
                &mut slot.book,
                &dest,
                payload,
                t,
                self.config.cross_chain_timeout,
            ) {
                Ok((_, msg)) => {
                    self.metrics.stage("interop_initiate").record(true);
                    self.send(msg);
                }
                Err(e) => {
                    self.metrics.stage("interop_initiate").record(false);
                    self.record(format!("{t} transfer-failed {net_id} {dest} {e}"));
                }
            }
        }
        timing.envelope_ms = ms(clock.elapsed());

        let snap0 = &snap.snapshots[0];
        let index = self.metrics.snapshots.iter().filter(|s| s.network_id == net_id).count();
        self.metrics.snapshots.push(SnapshotRecord {
            network_id: net_id,
            index,
            peer_id: snap0.peer_id.clone(),
            from_height,
            to_height,
            blocks: snap0.blocks.len(),
            tx_count: snap.tx_count(),
            completed_sets: snap0.completed_sets.len(),
            incomplete_sets: snap0.incomplete_sets.len(),
            capture_tick: t,
            archive_bytes: compressed.len(),
            encrypted_bytes: encrypted.len(),
            cid,
            timing,
        });
        true
    }

    /// Digest over the store and every wallet; faults must leave it unchanged.
    fn protected_digest(&self) -> Hash32 {
        let wallets: Vec<&KeyWallet> = self.slots.iter().map(|s| &s.wallet).collect();
        Hash32::tagged(
            "isnap.protected",
            &[
                &self.store.content_digest().0,
                canonical_json(&wallets).expect("json").as_bytes(),
            ],
        )
    }

    fn apply_fault(&mut self, kind: FaultKind) {
        let t = self.tick;
        let before = self.protected_digest();
        self.record(format!("{t} fault {}", serde_json::to_string(&kind).expect("json")));
        match kind {
            FaultKind::PeerCrash {
                network,
                peer,
                recover_after,
            } => {
                let i = self.slot_index(&network).expect("validated");
                self.slots[i].network.peers[peer].ready = false;
                if let Some(r) = recover_after {
                    self.schedule(t + r, PHASE_FAULT, Event::RecoverPeer { net: i, peer });
                }
            }
            FaultKind::NetworkCrashWithDataLoss {
                network,
                retain_height,
                recover_after,
            } => {
                let i = self.slot_index(&network).expect("validated");
                let slot = &mut self.slots[i];
                slot.pre_fault = slot.network.ledger.blocks().iter().map(|b| b.block_hash).collect();
                let retain = retain_height.min(slot.network.ledger.height());
                slot.network.ledger.truncate(retain);
                for p in &mut slot.network.peers {
                    p.ready = false;
                }
                slot.network.sync_replicas();
                slot.down = true;
                self.schedule(t + recover_after, PHASE_FAULT, Event::RecoverNetwork { net: i });
            }
            FaultKind::MaliciousFabrication {
                network,
                target,
                payload,
                claimed_tick,
                dispute_at,
            } => {
                let i = self.slot_index(&network).expect("validated");
                let tx = Transaction::cross_invoke(network.clone(), target.clone(), payload.into_bytes(), claimed_tick);
                let set_id = tx.tx_id;
                let digest = tx.payload_digest();
                let committed = matches!(
                    self.slots[i].network.endorse_and_commit(tx, None),
                    Ok((o, _)) if o.is_committed()
                );
                self.fabricated.push(FabricationRecord {
                    fabricator: network.clone(),
                    target: target.clone(),
                    set_id,
                    claimed_tick,
                    committed,
                });
                self.schedule(
                    dispute_at,
                    PHASE_DISPUTE,
                    Event::Dispute {
                        origin: "fabrication",
                        kind: ClaimKind::DemandFulfillment,
                        claimant: network,
                        respondent: target,
                        target: DisputeTarget::Reference(SetReference {
                            set_id: Some(set_id),
                            payload_digest: Some(digest),
                            span: (claimed_tick, claimed_tick),
                        }),
                    },
                );
            }
            FaultKind::ReceiptDenial {
                network,
                source,
                selector,
                dispute_at,
            } => {
                self.schedule(
                    dispute_at,
                    PHASE_DISPUTE,
                    Event::Dispute {
                        origin: "receipt_denial",
                        kind: ClaimKind::DenyReceipt,
                        claimant: network,
                        respondent: source,
                        target: DisputeTarget::Selector(selector),
                    },
                );
            }
            FaultKind::RelayOutage { from, until } => self.relay.outages.push((from, until)),
            FaultKind::PeerLag {
                network,
                peer,
                behind_by,
            } => {
                let i = self.slot_index(&network).expect("validated");
                let n = &mut self.slots[i].network;
                n.peers[peer].lag = behind_by;
                n.sync_replicas();
            }
        }
        if self.protected_digest() != before {
            self.metrics.containment_violations += 1;
        }
    }

    /// Revives a crashed network, restoring lost history from its archives.
    fn recover_network(&mut self, i: usize) {
        let t = self.tick;
        let clock = Instant::now();
        let slot = &mut self.slots[i];
        let height_before = slot.network.ledger.height();
        let mut entries: Vec<CatalogueEntry> = slot
            .catalogue
            .iter()
            .filter(|e| e.to_height > height_before)
            .cloned()
            .collect();
        entries.sort_by_key(|e| e.from_height);
        let mut used = 0;
        let mut error = None;
        for e in &entries {
            let Some(key) = slot.wallet.get(&e.cid.to_string()).map(|k| k.key) else {
                error = Some(format!("no wallet key for {}", e.cid));
                break;
            };
            match bootstrap_peer_from_archive(&mut slot.network, &self.store, &self.swarm_secret, &e.cid, &key) {
                Ok(_) => used += 1,
                Err(err) => {
                    error = Some(err.to_string());
                    break;
                }
            }
        }
        for p in &mut slot.network.peers {
            p.ready = true;
        }
        slot.network.sync_replicas();
        slot.down = false;
        let restored = slot.network.ledger.height();
        let prefix_identical = slot
            .network
            .ledger
            .blocks()
            .iter()
            .zip(&slot.pre_fault)
            .all(|(b, h)| &b.block_hash == h);
        slot.scheduler.last_snapshot_height = slot.scheduler.last_snapshot_height.min(restored);
        slot.book.forget_lost(&slot.network);
        slot.book.requeue_lost_markers(&slot.network);
        let record = BootstrapRecord {
            network_id: slot.network.id().clone(),
            tick: t,
            archives_used: used,
            height_before,
            restored_height: restored,
            prefix_identical,
            error,
            wall_ms: ms(clock.elapsed()),
        };
        self.record(format!(
            "{t} recover {} {height_before}->{restored} via {used}",
            record.network_id
        ));
        self.metrics.bootstraps.push(record);
    }

    fn resolve_selector(&self, selector: &SetSelector, source: &NetworkId, dest: &NetworkId) -> Option<SetReference> {
        let found = match selector {
            SetSelector::Nth(k) => self
                .initiated
                .iter()
                .filter(|s| &s.source == source && &s.dest == dest)
                .nth(*k),
            SetSelector::SetId(hex) => {
                let id = Hash32::from_hex(hex).ok()?;
                self.initiated.iter().find(|s| s.set_id == id)
            }
        }?;
        Some(SetReference {
            set_id: Some(found.set_id),
            payload_digest: Some(found.payload_digest),
            span: (found.tick, found.tick),
        })
    }

    fn dispute(
        &mut self,
        origin: &'static str,
        kind: ClaimKind,
        claimant: NetworkId,
        respondent: NetworkId,
        target: DisputeTarget,
    ) {
        let t = self.tick;
        let (source, dest) = match kind {
            ClaimKind::DemandFulfillment => (&claimant, &respondent),
            ClaimKind::DenyReceipt => (&respondent, &claimant),
        };
        let reference = match target {
            DisputeTarget::Reference(r) => Some(r),
            DisputeTarget::Selector(s) => self.resolve_selector(&s, source, dest),
        };
        let record = match reference {
            Some(reference) => {
                let case = DisputeCase {
                    claimant,
                    respondent,
                    reference,
                    kind,
                };
                let verdict = self.auditor.resolve_dispute(&case, &self.registry);
                DisputeRecord {
                    tick: t,
                    origin: origin.to_string(),
                    case: Some(case),
                    verdict: Some(verdict),
                    error: None,
                }
            }
            None => DisputeRecord {
                tick: t,
                origin: origin.to_string(),
                case: None,
                verdict: None,
                error: Some("selector matches no initiated set".into()),
            },
        };
        self.record(format!("{t} dispute {}", canonical_json(&record).expect("json")));
        self.metrics.disputes.push(record);
    }

    pub fn trace_hash(&self) -> Hash32 {
        Hash32(self.trace.clone().finalize().into())
    }

    /// Hash of the final deterministic state.
    pub fn state_hash(&self) -> Hash32 {
        #[derive(Serialize)]
        struct NetState<'a> {
            id: &'a NetworkId,
            height: Height,
            tip: Hash32,
            book: Hash32,
            last_snapshot_height: Height,
            wallet: Hash32,
            received: usize,
        }
        let nets: Vec<NetState> = self
            .slots
            .iter()
            .map(|s| NetState {
                id: s.network.id(),
                height: s.network.ledger.height(),
                tip: s.network.ledger.tip_hash(),
                book: Hash32::of(canonical_json(&s.book).expect("json").as_bytes()),
                last_snapshot_height: s.scheduler.last_snapshot_height,
                wallet: Hash32::of(canonical_json(&s.wallet).expect("json").as_bytes()),
                received: s.received.len(),
            })
            .collect();
        let auditor: BTreeMap<&NetworkId, Vec<ContentId>> = self
            .auditor
            .index
            .iter()
            .map(|(n, v)| (n, v.iter().map(|a| a.cid).collect()))
            .collect();
        let digest = serde_json::json!({
            "networks": nets,
            "store": self.store.content_digest(),
            "auditor": auditor,
            "quarantine": self.auditor.quarantine,
            "disputes": self.metrics.disputes,
            "trace": self.trace_hash(),
        });
        Hash32::tagged("isnap.world", &[canonical_json(&digest).expect("json").as_bytes()])
    }

    pub fn summary(&self) -> RunSummary {
        let m = &self.metrics;
        RunSummary {
            scenario: self.config.name.clone(),
            seed: self.seed,
            ticks: self.tick,
            state_hash: self.state_hash(),
            trace_hash: self.trace_hash(),
            trace_events: self.trace_events,
            networks: self
                .slots
                .iter()
                .map(|s| NetworkSummary {
                    network_id: s.network.id().clone(),
                    height: s.network.ledger.height(),
                    tip_hash: s.network.ledger.tip_hash(),
                    snapshots: s.catalogue.len(),
                    last_snapshot_height: s.scheduler.last_snapshot_height,
                    sets_complete: s.book.count(SetStatus::Complete),
                    sets_incomplete: s.book.count(SetStatus::Incomplete),
                    sets_pending: s.book.count(SetStatus::Pending),
                    late_receipts: s.book.late_receipts.len(),
                    wallet_entries: s.wallet.len(),
                })
                .collect(),
            stages: m.stages.clone(),
            stages_reconcile: m.stages_reconcile(),
            success_rate: m.success_rate(),
            local_txs: m.local_txs,
            cross_sets: m.cross_sets,
            relay: m.relay,
            auditor_ingested: m.auditor_ingested,
            auditor_rejected: m.auditor_rejected,
            containment_violations: m.containment_violations,
            bootstraps: m.bootstraps.clone(),
            verdicts: m.verdict_summary(),
            store_objects: self.store.len(),
        }
    }

    /// Everything `verify` needs to re-check a finished run.
    pub fn exported_state(&self) -> ExportedState {
        ExportedState {
            schema: 1,
            scenario: self.config.clone(),
            seed: self.seed,
            state_hash: self.state_hash(),
            networks: self
                .slots
                .iter()
                .map(|s| ExportedNetwork {
                    config: s.network.config.clone(),
                    ledger: s.network.ledger.to_record(),
                    book: s.book.clone(),
                    scheduler: s.scheduler.clone(),
                    wallet: s.wallet.clone(),
                    catalogue: s.catalogue.clone(),
                })
                .collect(),
            initiated: self.initiated.clone(),
            fabricated: self.fabricated.clone(),
            completed: self.completed.clone(),
            receipted: self.receipted.clone(),
            disputes: self.metrics.disputes.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExportedNetwork {
    pub config: NetworkConfig,
    pub ledger: LedgerRecord,
    pub book: SetBook,
    pub scheduler: SchedulerState,
    pub wallet: KeyWallet,
    pub catalogue: Vec<CatalogueEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExportedState {
    pub schema: u32,
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub state_hash: Hash32,
    pub networks: Vec<ExportedNetwork>,
    pub initiated: Vec<InitiatedSet>,
    pub fabricated: Vec<FabricationRecord>,
    pub completed: BTreeSet<SetId>,
    pub receipted: BTreeSet<SetId>,
    pub disputes: Vec<DisputeRecord>,
}
