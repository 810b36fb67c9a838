//! Cross-chain transaction sets: an invoke endorsed by the source network,
//! accepted and acknowledged by the destination with a quorum-endorsed
//! receipt, and completed at the source before a deadline.

use std::collections::BTreeMap;

use ed25519_dalek::VerifyingKey;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{b64, Hash32};
use crate::ledger::{
    CommitOutcome, EndorsementError, EndorsementSet, KeyResolver, LedgerEntry, Network, NetworkConfig, NetworkId,
    PeerId, RejectReason, Tick, Transaction, TxError, TxKind,
};

pub type SetId = Hash32;

pub const DEFAULT_TIMEOUT: Tick = 30;

/// Peer verification keys and per-network envelope public keys.
#[derive(Clone, Debug, Default)]
pub struct IdentityRegistry {
    peers: BTreeMap<(NetworkId, PeerId), VerifyingKey>,
    networks: BTreeMap<NetworkId, RegisteredNetwork>,
}

#[derive(Clone, Debug)]
struct RegisteredNetwork {
    peer_count: usize,
    envelope_key: [u8; 32],
}

impl IdentityRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_network(&mut self, config: &NetworkConfig) {
        for i in 0..config.peer_count {
            self.peers.insert(
                (config.network_id.clone(), PeerId::new(&config.network_id, i)),
                config.peer_signing_key(i).verifying_key(),
            );
        }
        let secret = x25519_dalek::StaticSecret::from(config.network_secret());
        self.networks.insert(
            config.network_id.clone(),
            RegisteredNetwork {
                peer_count: config.peer_count,
                envelope_key: x25519_dalek::PublicKey::from(&secret).to_bytes(),
            },
        );
    }

    /// Registers an envelope recipient with no peers (the auditor).
    pub fn register_recipient(&mut self, id: NetworkId, envelope_key: [u8; 32]) {
        self.networks.insert(
            id,
            RegisteredNetwork {
                peer_count: 0,
                envelope_key,
            },
        );
    }

    pub fn remove_peer(&mut self, network: &NetworkId, peer: &PeerId) {
        self.peers.remove(&(network.clone(), peer.clone()));
    }

    pub fn envelope_key(&self, network: &NetworkId) -> Option<[u8; 32]> {
        self.networks.get(network).map(|n| n.envelope_key)
    }

    pub fn networks(&self) -> impl Iterator<Item = &NetworkId> {
        self.networks.keys()
    }
}

impl KeyResolver for IdentityRegistry {
    fn peer_key(&self, network: &NetworkId, peer: &PeerId) -> Option<VerifyingKey> {
        self.peers.get(&(network.clone(), peer.clone())).copied()
    }

    fn peer_count(&self, network: &NetworkId) -> Option<usize> {
        self.networks.get(network).map(|n| n.peer_count).filter(|&n| n > 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Request,
    Response,
}

/// A message crossing the relay. `body` is the canonical encoding of the
/// carried transaction; `attestation` signs `body` followed by its attached
/// endorsement set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteropMessage {
    pub direction: Direction,
    pub source_network: NetworkId,
    pub dest_network: NetworkId,
    pub set_id: SetId,
    #[serde(with = "b64")]
    pub body: Vec<u8>,
    pub attestation: EndorsementSet,
    pub sent_tick: Tick,
}

impl InteropMessage {
    pub fn to_json(&self) -> String {
        crate::codec::canonical_json(self).expect("message serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn transaction(&self) -> Result<Transaction, TxError> {
        Transaction::decode(&self.body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttestationError {
    #[error("signer is not in the identity registry")]
    UnknownPeer,
    #[error("a signature does not verify over the message body")]
    BadSignature,
    #[error("endorsement count below the sender's quorum")]
    InsufficientQuorum,
    #[error("message body is not a well-formed transaction for this exchange")]
    Malformed,
}

/// Pure check of a message's attestation against the registry.
pub fn verify_attestations(msg: &InteropMessage, registry: &IdentityRegistry) -> Result<(), AttestationError> {
    let tx = msg.transaction().map_err(|_| AttestationError::Malformed)?;
    let expected_kind = match msg.direction {
        Direction::Request => TxKind::CrossInvoke,
        Direction::Response => TxKind::CrossReceipt,
    };
    if tx.kind != expected_kind
        || tx.origin_network != msg.source_network
        || tx.counterparty.as_ref() != Some(&msg.dest_network)
        || msg.attestation.signer_network != msg.source_network
        || msg.attestation.subject_tx != tx.tx_id
    {
        return Err(AttestationError::Malformed);
    }
    msg.attestation.verify_bytes(&msg.body, registry).map_err(|e| match e {
        EndorsementError::UnknownPeer(_) | EndorsementError::UnknownNetwork { .. } => AttestationError::UnknownPeer,
        EndorsementError::BadSignature(_) | EndorsementError::DuplicatePeer(_) => AttestationError::BadSignature,
        EndorsementError::InsufficientQuorum { .. } => AttestationError::InsufficientQuorum,
        EndorsementError::SubjectMismatch => AttestationError::Malformed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetStatus {
    Pending,
    Complete,
    Incomplete,
}

/// The atomic pair of an invoke and its receipt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionSet {
    pub set_id: SetId,
    pub source_network: NetworkId,
    pub dest_network: NetworkId,
    pub invoke: LedgerEntry,
    pub receipt: Option<LedgerEntry>,
    pub status: SetStatus,
    pub deadline: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SetVerifyError {
    #[error("set has no receipt")]
    MissingReceipt,
    #[error("receipt does not reference the invoke")]
    ReceiptMismatch,
    #[error("invoke endorsements: {0}")]
    Invoke(EndorsementError),
    #[error("receipt endorsements: {0}")]
    Receipt(EndorsementError),
}

impl TransactionSet {
    /// Checks the dual-network evidence: the invoke carries a source quorum,
    /// the receipt a destination quorum over the receipt plus the source's
    /// endorsements.
    pub fn verify_evidence(&self, keys: &impl KeyResolver) -> Result<(), SetVerifyError> {
        let receipt = self.receipt.as_ref().ok_or(SetVerifyError::MissingReceipt)?;
        let inv = &self.invoke;
        if inv.tx.kind != TxKind::CrossInvoke
            || receipt.tx.kind != TxKind::CrossReceipt
            || receipt.tx.references != Some(inv.tx.tx_id)
            || inv.tx.tx_id != self.set_id
            || inv.tx.origin_network != self.source_network
            || inv.tx.counterparty.as_ref() != Some(&self.dest_network)
            || receipt.tx.origin_network != self.dest_network
            || inv.endorsements.signer_network != self.source_network
            || receipt.endorsements.signer_network != self.dest_network
            || receipt.endorsements.attached.as_deref() != Some(&inv.endorsements)
            || inv.tx.check().is_err()
            || receipt.tx.check().is_err()
        {
            return Err(SetVerifyError::ReceiptMismatch);
        }
        inv.endorsements.verify(&inv.tx, keys).map_err(SetVerifyError::Invoke)?;
        receipt
            .endorsements
            .verify(&receipt.tx, keys)
            .map_err(SetVerifyError::Receipt)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusTransition {
    pub set_id: SetId,
    pub from: SetStatus,
    pub to: SetStatus,
    pub tick: Tick,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LateReceipt {
    pub set_id: SetId,
    pub tick: Tick,
}

/// Transaction sets initiated by one network.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SetBook {
    pub sets: BTreeMap<SetId, TransactionSet>,
    pub late_receipts: Vec<LateReceipt>,
    pub transitions: Vec<StatusTransition>,
    /// Expired sets whose marker is not yet on the ledger.
    pub unmarked: Vec<SetId>,
    /// Initiation order, for scenario selectors.
    pub order: Vec<SetId>,
}

impl SetBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &SetId) -> Option<&TransactionSet> {
        self.sets.get(id)
    }

    pub fn pending(&self) -> impl Iterator<Item = &TransactionSet> {
        self.sets.values().filter(|s| s.status == SetStatus::Pending)
    }

    pub fn count(&self, status: SetStatus) -> usize {
        self.sets.values().filter(|s| s.status == status).count()
    }

    fn transition(&mut self, id: SetId, to: SetStatus, tick: Tick) {
        let set = self.sets.get_mut(&id).expect("known set");
        self.transitions.push(StatusTransition {
            set_id: id,
            from: set.status,
            to,
            tick,
        });
        set.status = to;
    }

    /// Queues a fresh marker for every expired set whose marker is missing
    /// from `network`'s ledger (lost with ledger data).
    pub fn requeue_lost_markers(&mut self, network: &Network) {
        let marked: std::collections::BTreeSet<SetId> = network
            .ledger
            .blocks()
            .iter()
            .flat_map(|b| b.transactions.iter())
            .filter_map(|e| parse_expiry_marker(&e.tx.payload))
            .collect();
        for s in self.sets.values() {
            if s.status == SetStatus::Incomplete && !marked.contains(&s.set_id) && !self.unmarked.contains(&s.set_id) {
                self.unmarked.push(s.set_id);
            }
        }
    }

    /// Drops sets whose invoke is no longer on `network`'s ledger. Expired
    /// sets are kept so their markers can be re-issued.
    pub fn forget_lost(&mut self, network: &Network) {
        self.sets
            .retain(|id, s| s.status == SetStatus::Incomplete || network.ledger.contains(id));
        let sets = &self.sets;
        self.unmarked.retain(|id| sets.contains_key(id));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CrossChainError {
    #[error("payload must be non-empty")]
    EmptyPayload,
    #[error("source network cannot reach endorsement quorum")]
    SourceQuorumUnreachable,
    #[error("destination network cannot reach endorsement quorum")]
    DestQuorumUnreachable,
    #[error("attestation rejected: {0}")]
    AttestationRejected(AttestationError),
    #[error("ledger rejected commit: {0:?}")]
    CommitRejected(RejectReason),
    #[error("message is not addressed to this network or has the wrong direction")]
    Misrouted,
    #[error("no pending set for this receipt")]
    UnknownSet,
    #[error("receipt arrived after the deadline")]
    LateReceipt,
}

fn committed(out: CommitOutcome) -> Result<(), CrossChainError> {
    match out {
        CommitOutcome::Committed { .. } => Ok(()),
        CommitOutcome::Rejected(r) => Err(CrossChainError::CommitRejected(r)),
    }
}

/// Endorses and commits a cross-chain invoke at the source and returns the
/// pending set with the request message for the relay.
pub fn initiate_cross_tx(
    source: &mut Network,
    book: &mut SetBook,
    dest: &NetworkId,
    payload: Vec<u8>,
    now: Tick,
    timeout: Tick,
) -> Result<(TransactionSet, InteropMessage), CrossChainError> {
    if payload.is_empty() {
        return Err(CrossChainError::EmptyPayload);
    }
    let tx = Transaction::cross_invoke(source.id().clone(), dest.clone(), payload, now);
    let endorsements = source
        .endorse(&tx, None)
        .map_err(|_| CrossChainError::SourceQuorumUnreachable)?;
    committed(source.ledger.commit_transaction(tx.clone(), endorsements.clone()))?;
    let msg = InteropMessage {
        direction: Direction::Request,
        source_network: source.id().clone(),
        dest_network: dest.clone(),
        set_id: tx.tx_id,
        body: tx.canonical_bytes(),
        attestation: endorsements.clone(),
        sent_tick: now,
    };
    let set = TransactionSet {
        set_id: tx.tx_id,
        source_network: source.id().clone(),
        dest_network: dest.clone(),
        invoke: LedgerEntry { tx, endorsements },
        receipt: None,
        status: SetStatus::Pending,
        deadline: now + timeout,
    };
    book.sets.insert(set.set_id, set.clone());
    book.order.push(set.set_id);
    Ok((set, msg))
}

pub const RECEIPT_PAYLOAD: &[u8] = b"isnap.receipt:accepted";

/// Destination side: verify the request, commit the invoke together with the
/// source endorsements, then issue and commit the receipt.
pub fn accept_and_receipt(
    dest: &mut Network,
    msg: &InteropMessage,
    registry: &IdentityRegistry,
    now: Tick,
) -> Result<InteropMessage, CrossChainError> {
    if msg.direction != Direction::Request || &msg.dest_network != dest.id() {
        return Err(CrossChainError::Misrouted);
    }
    verify_attestations(msg, registry).map_err(CrossChainError::AttestationRejected)?;
    if dest.live_peers().count() < dest.quorum() {
        return Err(CrossChainError::DestQuorumUnreachable);
    }
    let invoke = msg.transaction().expect("verified above");
    let source_endorsements = msg.attestation.clone();

    let receipt = Transaction::cross_receipt(dest.id().clone(), &invoke, RECEIPT_PAYLOAD.to_vec(), now);
    let accept = dest
        .endorse(&invoke, Some(source_endorsements.clone()))
        .map_err(|_| CrossChainError::DestQuorumUnreachable)?;
    let ack = dest
        .endorse(&receipt, Some(source_endorsements))
        .map_err(|_| CrossChainError::DestQuorumUnreachable)?;
    committed(dest.ledger.commit_transaction(invoke.clone(), accept))?;
    committed(dest.ledger.commit_transaction(receipt.clone(), ack.clone()))?;
    Ok(InteropMessage {
        direction: Direction::Response,
        source_network: dest.id().clone(),
        dest_network: invoke.origin_network.clone(),
        set_id: invoke.tx_id,
        body: receipt.canonical_bytes(),
        attestation: ack,
        sent_tick: now,
    })
}

/// Source side: accept an on-time, verifying receipt, commit it and mark the
/// set complete. Late or invalid receipts leave the set pending.
pub fn complete_set(
    source: &mut Network,
    book: &mut SetBook,
    registry: &IdentityRegistry,
    response: &InteropMessage,
    now: Tick,
) -> Result<SetStatus, CrossChainError> {
    if response.direction != Direction::Response || &response.dest_network != source.id() {
        return Err(CrossChainError::Misrouted);
    }
    let set_id = response.set_id;
    let set = book.sets.get(&set_id).ok_or(CrossChainError::UnknownSet)?;
    match set.status {
        SetStatus::Complete => return Ok(SetStatus::Complete),
        SetStatus::Incomplete => {
            book.late_receipts.push(LateReceipt { set_id, tick: now });
            return Err(CrossChainError::LateReceipt);
        }
        SetStatus::Pending => {}
    }
    if now > set.deadline {
        book.late_receipts.push(LateReceipt { set_id, tick: now });
        return Err(CrossChainError::LateReceipt);
    }
    verify_attestations(response, registry).map_err(CrossChainError::AttestationRejected)?;
    let receipt = response.transaction().expect("verified above");
    if receipt.references != Some(set_id)
        || response.source_network != set.dest_network
        || response.attestation.attached.as_deref() != Some(&set.invoke.endorsements)
    {
        return Err(CrossChainError::AttestationRejected(AttestationError::Malformed));
    }
    let (out, _) = source
        .endorse_and_commit(receipt.clone(), Some(response.attestation.clone()))
        .map_err(|_| CrossChainError::SourceQuorumUnreachable)?;
    committed(out)?;
    let set = book.sets.get_mut(&set_id).expect("checked");
    set.receipt = Some(LedgerEntry {
        tx: receipt,
        endorsements: response.attestation.clone(),
    });
    book.transition(set_id, SetStatus::Complete, now);
    Ok(SetStatus::Complete)
}

const EXPIRY_TAG: &str = "isnap.expired:";

pub fn expiry_marker_payload(set_id: &SetId) -> Vec<u8> {
    format!("{EXPIRY_TAG}{}", set_id.to_hex()).into_bytes()
}

pub fn parse_expiry_marker(payload: &[u8]) -> Option<SetId> {
    let s = std::str::from_utf8(payload).ok()?;
    Hash32::from_hex(s.strip_prefix(EXPIRY_TAG)?).ok()
}

/// Marks every pending set with `deadline < now` incomplete and records an
/// expiry marker on the source ledger for each (retried while the network
/// cannot reach quorum).
pub fn expire_sets(source: &mut Network, book: &mut SetBook, now: Tick) -> Vec<SetId> {
    let expired: Vec<SetId> = book.pending().filter(|s| s.deadline < now).map(|s| s.set_id).collect();
    for id in &expired {
        book.transition(*id, SetStatus::Incomplete, now);
        book.unmarked.push(*id);
    }
    let mut still = Vec::new();
    for id in std::mem::take(&mut book.unmarked) {
        let tx = Transaction::local(source.id().clone(), expiry_marker_payload(&id), now);
        match source.endorse_and_commit(tx, None) {
            Ok((CommitOutcome::Committed { .. }, _)) => {}
            Ok((CommitOutcome::Rejected(RejectReason::DuplicateTx), _)) => {}
            _ => still.push(id),
        }
    }
    book.unmarked = still;
    expired
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelayConfig {
    pub latency: Tick,
    /// Extra uniform delay in `0..=jitter` ticks per message.
    pub jitter: Tick,
    pub drop_probability: f64,
}

impl Default for RelayConfig {
    fn default() -> Self {
        RelayConfig {
            latency: 1,
            jitter: 0,
            drop_probability: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelayError {
    #[error("relay is down")]
    RelayDown,
    #[error("message lost in transit")]
    Dropped,
}

/// The relay/driver path between networks.
#[derive(Clone, Debug, Default)]
pub struct Relay {
    pub config: RelayConfig,
    /// Inclusive tick windows during which the relay loses every message.
    pub outages: Vec<(Tick, Tick)>,
}

impl Relay {
    pub fn new(config: RelayConfig) -> Self {
        Relay {
            config,
            outages: Vec::new(),
        }
    }

    pub fn is_down(&self, tick: Tick) -> bool {
        self.outages.iter().any(|&(a, b)| a <= tick && tick <= b)
    }

    /// Delivery tick for a message sent at `now`.
    pub fn relay_deliver(&self, msg: &InteropMessage, now: Tick, rng: &mut impl Rng) -> Result<Tick, RelayError> {
        let _ = msg;
        if self.is_down(now) {
            return Err(RelayError::RelayDown);
        }
        let jitter = if self.config.jitter > 0 {
            rng.gen_range(0..=self.config.jitter)
        } else {
            0
        };
        if self.config.drop_probability > 0.0 && rng.gen_bool(self.config.drop_probability.min(1.0)) {
            return Err(RelayError::Dropped);
        }
        Ok(now + self.config.latency + jitter)
    }
}
