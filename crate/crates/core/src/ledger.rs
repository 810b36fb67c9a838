//! Permissioned networks: peers replicating an append-only, hash-chained
//! ledger whose entries are admitted only with a quorum of peer endorsements.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use ed25519_dalek::{Signer as _, SigningKey, Verifier as _, VerifyingKey};
use serde::{Deserialize, Serialize};

use crate::codec::{b64, DecodeError, Hash32, Reader, Writer};

pub type TxId = Hash32;
pub type Tick = u64;
/// Ledger heights are signed so that `-1` can mean "before genesis".
pub type Height = i64;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NetworkId(pub String);

impl NetworkId {
    pub fn new(s: impl Into<String>) -> Self {
        NetworkId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NetworkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for NetworkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeerId(pub String);

impl PeerId {
    pub fn new(network: &NetworkId, index: usize) -> Self {
        PeerId(format!("{}/p{}", network.0, index))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Smallest endorsement count `t` with `3t >= 2n`, i.e. `ceil(2n / 3)`.
pub fn quorum_threshold(n: usize) -> usize {
    assert!(n >= 1, "a network has at least one peer");
    (2 * n).div_ceil(3)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    Local,
    CrossInvoke,
    CrossReceipt,
}

impl TxKind {
    fn code(self) -> u8 {
        match self {
            TxKind::Local => 0,
            TxKind::CrossInvoke => 1,
            TxKind::CrossReceipt => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => TxKind::Local,
            1 => TxKind::CrossInvoke,
            2 => TxKind::CrossReceipt,
            _ => return None,
        })
    }
}

/// A ledger transaction. `tx_id` is the hash of every other field.
///
/// `counterparty` names the foreign network for cross-chain kinds: the
/// destination of an invoke, or the network whose invoke a receipt
/// acknowledges. `references` is set exactly for receipts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_id: TxId,
    #[serde(with = "b64")]
    pub payload: Vec<u8>,
    pub kind: TxKind,
    pub origin_network: NetworkId,
    pub counterparty: Option<NetworkId>,
    pub logical_time: Tick,
    pub references: Option<TxId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TxError {
    #[error("tx_id does not match the transaction contents")]
    IdMismatch,
    #[error("receipt must reference exactly one invoke, other kinds none")]
    BadReference,
    #[error("cross-chain transactions must name a counterparty network")]
    MissingCounterparty,
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

impl Transaction {
    fn build(
        payload: Vec<u8>,
        kind: TxKind,
        origin_network: NetworkId,
        counterparty: Option<NetworkId>,
        logical_time: Tick,
        references: Option<TxId>,
    ) -> Self {
        let mut tx = Transaction {
            tx_id: Hash32::ZERO,
            payload,
            kind,
            origin_network,
            counterparty,
            logical_time,
            references,
        };
        tx.tx_id = tx.compute_id();
        tx
    }

    pub fn local(origin: NetworkId, payload: Vec<u8>, now: Tick) -> Self {
        Self::build(payload, TxKind::Local, origin, None, now, None)
    }

    pub fn cross_invoke(origin: NetworkId, dest: NetworkId, payload: Vec<u8>, now: Tick) -> Self {
        Self::build(payload, TxKind::CrossInvoke, origin, Some(dest), now, None)
    }

    pub fn cross_receipt(origin: NetworkId, invoke: &Transaction, payload: Vec<u8>, now: Tick) -> Self {
        Self::build(
            payload,
            TxKind::CrossReceipt,
            origin,
            Some(invoke.origin_network.clone()),
            now,
            Some(invoke.tx_id),
        )
    }

    /// Length-prefixed fields in declaration order, `tx_id` excluded.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&self.payload)
            .u8(self.kind.code())
            .str(self.origin_network.as_str())
            .str(self.counterparty.as_ref().map(NetworkId::as_str).unwrap_or(""))
            .u64(self.logical_time)
            .bytes(self.references.as_ref().map(|h| &h.0[..]).unwrap_or(&[]));
        w.finish()
    }

    pub fn compute_id(&self) -> TxId {
        Hash32::tagged("isnap.tx", &[&self.canonical_bytes()])
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TxError> {
        let mut r = Reader::new(bytes);
        let payload = r.bytes()?.to_vec();
        let kind = TxKind::from_code(r.u8()?).ok_or(DecodeError { offset: 4 })?;
        let origin_network = NetworkId(r.string()?);
        let cp = r.string()?;
        let logical_time = r.u64()?;
        let refs = r.bytes()?;
        r.expect_end()?;
        let references = match refs.len() {
            0 => None,
            32 => Some(Hash32(refs.try_into().unwrap())),
            _ => return Err(TxError::BadReference),
        };
        let counterparty = (!cp.is_empty()).then_some(NetworkId(cp));
        let tx = Self::build(payload, kind, origin_network, counterparty, logical_time, references);
        tx.check()?;
        Ok(tx)
    }

    pub fn check(&self) -> Result<(), TxError> {
        if self.compute_id() != self.tx_id {
            return Err(TxError::IdMismatch);
        }
        if (self.kind == TxKind::CrossReceipt) != self.references.is_some() {
            return Err(TxError::BadReference);
        }
        if self.kind != TxKind::Local && self.counterparty.is_none() {
            return Err(TxError::MissingCounterparty);
        }
        Ok(())
    }

    pub fn payload_digest(&self) -> Hash32 {
        Hash32::of(&self.payload)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endorsement {
    pub peer_id: PeerId,
    #[serde(with = "b64")]
    pub signature: Vec<u8>,
}

/// Signatures from one network's peers over a transaction, optionally
/// covering a previously attached endorsement set (the foreign attestation
/// a receipt acknowledges).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndorsementSet {
    pub subject_tx: TxId,
    pub signer_network: NetworkId,
    pub signatures: Vec<Endorsement>,
    pub attached: Option<Box<EndorsementSet>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EndorsementError {
    #[error("endorsement set is for a different transaction")]
    SubjectMismatch,
    #[error("signer {0} is not registered")]
    UnknownPeer(PeerId),
    #[error("signer {0} appears more than once")]
    DuplicatePeer(PeerId),
    #[error("signature by {0} does not verify")]
    BadSignature(PeerId),
    #[error("network {network} is not registered")]
    UnknownNetwork { network: NetworkId },
    #[error("{have} valid endorsements, quorum needs {need}")]
    InsufficientQuorum { have: usize, need: usize },
}

/// Resolves peer verification keys and network sizes.
pub trait KeyResolver {
    fn peer_key(&self, network: &NetworkId, peer: &PeerId) -> Option<VerifyingKey>;
    fn peer_count(&self, network: &NetworkId) -> Option<usize>;
}

/// Bytes a peer signs: the transaction's canonical bytes followed by the
/// canonical bytes of the attached endorsement set, if any.
pub fn signing_message(tx_bytes: &[u8], attached: Option<&EndorsementSet>) -> Vec<u8> {
    let mut w = Writer::new();
    w.str("isnap.endorse")
        .bytes(tx_bytes)
        .bytes(&attached.map(EndorsementSet::canonical_bytes).unwrap_or_default());
    w.finish()
}

impl EndorsementSet {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&self.subject_tx.0)
            .str(self.signer_network.as_str())
            .u32(self.signatures.len() as u32);
        for e in &self.signatures {
            w.str(e.peer_id.as_str()).bytes(&e.signature);
        }
        match &self.attached {
            Some(a) => w.u8(1).bytes(&a.canonical_bytes()),
            None => w.u8(0),
        };
        w.finish()
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    /// Checks every signature over `tx` (plus the attached set) and that the
    /// signer count meets the signer network's quorum. Signatures are checked
    /// before the count, so a forged entry reports `BadSignature` even when
    /// the set is also short of quorum.
    pub fn verify(&self, tx: &Transaction, keys: &impl KeyResolver) -> Result<(), EndorsementError> {
        if self.subject_tx != tx.tx_id {
            return Err(EndorsementError::SubjectMismatch);
        }
        self.verify_bytes(&tx.canonical_bytes(), keys)
    }

    pub fn verify_bytes(&self, tx_bytes: &[u8], keys: &impl KeyResolver) -> Result<(), EndorsementError> {
        let n = keys
            .peer_count(&self.signer_network)
            .ok_or_else(|| EndorsementError::UnknownNetwork {
                network: self.signer_network.clone(),
            })?;
        let msg = signing_message(tx_bytes, self.attached.as_deref());
        let mut seen = std::collections::BTreeSet::new();
        let mut vks = Vec::with_capacity(self.signatures.len());
        let mut sigs = Vec::with_capacity(self.signatures.len());
        for e in &self.signatures {
            if !seen.insert(&e.peer_id) {
                return Err(EndorsementError::DuplicatePeer(e.peer_id.clone()));
            }
            let key = keys
                .peer_key(&self.signer_network, &e.peer_id)
                .ok_or_else(|| EndorsementError::UnknownPeer(e.peer_id.clone()))?;
            let sig = ed25519_dalek::Signature::from_slice(&e.signature)
                .map_err(|_| EndorsementError::BadSignature(e.peer_id.clone()))?;
            vks.push(key);
            sigs.push(sig);
        }
        let msgs: Vec<&[u8]> = vec![&msg; sigs.len()];
        if ed25519_dalek::verify_batch(&msgs, &sigs, &vks).is_err() {
            // locate the offending signer
            for ((e, key), sig) in self.signatures.iter().zip(&vks).zip(&sigs) {
                key.verify(&msg, sig)
                    .map_err(|_| EndorsementError::BadSignature(e.peer_id.clone()))?;
            }
        }
        let need = quorum_threshold(n);
        if self.signatures.len() < need {
            return Err(EndorsementError::InsufficientQuorum {
                have: self.signatures.len(),
                need,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub network_id: NetworkId,
    pub peer_count: usize,
    pub genesis_seed: u64,
}

impl NetworkConfig {
    pub fn new(network_id: impl Into<String>, peer_count: usize, genesis_seed: u64) -> Self {
        NetworkConfig {
            network_id: NetworkId::new(network_id),
            peer_count,
            genesis_seed,
        }
    }

    pub fn peer_ids(&self) -> Vec<PeerId> {
        (0..self.peer_count).map(|i| PeerId::new(&self.network_id, i)).collect()
    }

    /// Deterministic signing key for peer `index`, derived from the genesis seed.
    pub fn peer_signing_key(&self, index: usize) -> SigningKey {
        let h = Hash32::tagged(
            "isnap.peer-key",
            &[
                &self.genesis_seed.to_be_bytes(),
                self.network_id.0.as_bytes(),
                &(index as u64).to_be_bytes(),
            ],
        );
        SigningKey::from_bytes(&h.0)
    }

    /// Secret half of the network's envelope key pair.
    pub fn network_secret(&self) -> [u8; 32] {
        Hash32::tagged(
            "isnap.network-key",
            &[&self.genesis_seed.to_be_bytes(), self.network_id.0.as_bytes()],
        )
        .0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub tx: Transaction,
    pub endorsements: EndorsementSet,
}

impl LedgerEntry {
    fn hash_into(&self, w: &mut Writer) {
        w.bytes(&self.tx.canonical_bytes())
            .bytes(&self.endorsements.canonical_bytes());
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: Height,
    pub prev_hash: Hash32,
    pub tick: Tick,
    pub transactions: Vec<LedgerEntry>,
    pub block_hash: Hash32,
}

impl Block {
    pub fn genesis(network: &NetworkId) -> Self {
        Self::seal(network, 0, Hash32::ZERO, 0, Vec::new())
    }

    fn seal(
        network: &NetworkId,
        height: Height,
        prev_hash: Hash32,
        tick: Tick,
        transactions: Vec<LedgerEntry>,
    ) -> Self {
        let mut b = Block {
            height,
            prev_hash,
            tick,
            transactions,
            block_hash: Hash32::ZERO,
        };
        b.block_hash = b.compute_hash(network);
        b
    }

    pub fn compute_hash(&self, network: &NetworkId) -> Hash32 {
        let mut w = Writer::new();
        w.str(network.as_str())
            .i64(self.height)
            .bytes(&self.prev_hash.0)
            .u64(self.tick)
            .u32(self.transactions.len() as u32);
        for e in &self.transactions {
            e.hash_into(&mut w);
        }
        Hash32::tagged("isnap.block", &[&w.finish()])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("block at position {position} has height {found}")]
    HeightGap { position: usize, found: Height },
    #[error("block {height} does not link to its predecessor")]
    BrokenLink { height: Height },
    #[error("block {height} hash does not match its contents")]
    HashMismatch { height: Height },
}

/// Verifies that `blocks` form a hash chain starting at `blocks[0].height`,
/// linked to `anchor` (the hash of the block before the first, if any).
pub fn verify_chain(network: &NetworkId, blocks: &[Block], anchor: Option<Hash32>) -> Result<(), ChainError> {
    let mut prev = anchor;
    let start = blocks.first().map(|b| b.height).unwrap_or(0);
    for (i, b) in blocks.iter().enumerate() {
        if b.height != start + i as Height {
            return Err(ChainError::HeightGap {
                position: i,
                found: b.height,
            });
        }
        let expected_prev = match prev {
            Some(h) => h,
            None if b.height == 0 => Hash32::ZERO,
            None => b.prev_hash,
        };
        if b.prev_hash != expected_prev {
            return Err(ChainError::BrokenLink { height: b.height });
        }
        if b.compute_hash(network) != b.block_hash {
            return Err(ChainError::HashMismatch { height: b.height });
        }
        prev = Some(b.block_hash);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome", content = "detail")]
pub enum CommitOutcome {
    /// Accepted into the block that will be sealed at `height`.
    Committed {
        height: Height,
    },
    Rejected(RejectReason),
}

impl CommitOutcome {
    pub fn is_committed(&self) -> bool {
        matches!(self, CommitOutcome::Committed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    InsufficientQuorum,
    BadSignature,
    DuplicateTx,
    UnknownSigner,
    MalformedTx,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("height {requested} is outside -1..={height}")]
    OutOfRange { requested: Height, height: Height },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TxLocation {
    pub height: Height,
    pub position: usize,
}

/// The canonical chain of one network plus the batch pending for the
/// current tick. Every commit in a tick lands in the same block.
#[derive(Clone, Debug)]
pub struct Ledger {
    network_id: NetworkId,
    peer_count: usize,
    keys: BTreeMap<PeerId, VerifyingKey>,
    blocks: Vec<Block>,
    pending: Vec<LedgerEntry>,
    index: HashMap<TxId, TxLocation>,
}

impl KeyResolver for Ledger {
    fn peer_key(&self, network: &NetworkId, peer: &PeerId) -> Option<VerifyingKey> {
        (network == &self.network_id)
            .then(|| self.keys.get(peer).copied())
            .flatten()
    }

    fn peer_count(&self, network: &NetworkId) -> Option<usize> {
        (network == &self.network_id).then_some(self.peer_count)
    }
}

impl Ledger {
    pub fn new(config: &NetworkConfig) -> Self {
        let keys = (0..config.peer_count)
            .map(|i| {
                (
                    PeerId::new(&config.network_id, i),
                    config.peer_signing_key(i).verifying_key(),
                )
            })
            .collect();
        Ledger {
            network_id: config.network_id.clone(),
            peer_count: config.peer_count,
            keys,
            blocks: vec![Block::genesis(&config.network_id)],
            pending: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn network_id(&self) -> &NetworkId {
        &self.network_id
    }

    pub fn peer_count(&self) -> usize {
        self.peer_count
    }

    /// |L|: height of the last sealed block.
    pub fn height(&self) -> Height {
        self.blocks.len() as Height - 1
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, height: Height) -> Option<&Block> {
        usize::try_from(height).ok().and_then(|h| self.blocks.get(h))
    }

    pub fn tip_hash(&self) -> Hash32 {
        self.blocks.last().expect("genesis always present").block_hash
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    pub fn contains(&self, tx_id: &TxId) -> bool {
        self.index.contains_key(tx_id)
    }

    /// Location of a sealed transaction.
    pub fn locate(&self, tx_id: &TxId) -> Option<TxLocation> {
        self.index.get(tx_id).copied().filter(|loc| loc.height <= self.height())
    }

    pub fn entry(&self, tx_id: &TxId) -> Option<&LedgerEntry> {
        let loc = self.locate(tx_id)?;
        self.block(loc.height)?.transactions.get(loc.position)
    }

    pub fn commit_transaction(&mut self, tx: Transaction, endorsements: EndorsementSet) -> CommitOutcome {
        use CommitOutcome::Rejected;
        if tx.check().is_err() {
            return Rejected(RejectReason::MalformedTx);
        }
        if self.index.contains_key(&tx.tx_id) {
            return Rejected(RejectReason::DuplicateTx);
        }
        if endorsements.signer_network != self.network_id {
            return Rejected(RejectReason::UnknownSigner);
        }
        match endorsements.verify(&tx, self) {
            Ok(()) => {}
            Err(EndorsementError::InsufficientQuorum { .. }) => return Rejected(RejectReason::InsufficientQuorum),
            Err(EndorsementError::SubjectMismatch) => return Rejected(RejectReason::MalformedTx),
            Err(EndorsementError::UnknownPeer(_)) | Err(EndorsementError::UnknownNetwork { .. }) => {
                return Rejected(RejectReason::UnknownSigner)
            }
            Err(EndorsementError::BadSignature(_)) | Err(EndorsementError::DuplicatePeer(_)) => {
                return Rejected(RejectReason::BadSignature)
            }
        }
        let height = self.height() + 1;
        self.index.insert(
            tx.tx_id,
            TxLocation {
                height,
                position: self.pending.len(),
            },
        );
        self.pending.push(LedgerEntry { tx, endorsements });
        CommitOutcome::Committed { height }
    }

    /// Seals the pending batch into a block stamped with `tick`.
    pub fn seal_block(&mut self, tick: Tick) -> Option<Height> {
        if self.pending.is_empty() {
            return None;
        }
        let entries = std::mem::take(&mut self.pending);
        let b = Block::seal(&self.network_id, self.height() + 1, self.tip_hash(), tick, entries);
        self.blocks.push(b);
        Some(self.height())
    }

    /// Blocks with height strictly greater than `from_height`.
    pub fn blocks_since(&self, from_height: Height) -> Result<&[Block], LedgerError> {
        if from_height < -1 || from_height > self.height() {
            return Err(LedgerError::OutOfRange {
                requested: from_height,
                height: self.height(),
            });
        }
        Ok(&self.blocks[(from_height + 1) as usize..])
    }

    pub fn verify_chain(&self) -> Result<(), ChainError> {
        verify_chain(&self.network_id, &self.blocks, None)
    }

    /// Drops every block above `retain_height` and the pending batch. A
    /// negative height loses everything and rebuilds genesis.
    pub fn truncate(&mut self, retain_height: Height) {
        let keep = (retain_height.max(0) as usize + 1).min(self.blocks.len());
        self.blocks.truncate(keep);
        if retain_height < 0 {
            self.blocks = vec![Block::genesis(&self.network_id)];
        }
        self.pending.clear();
        self.rebuild_index();
    }

    /// Appends blocks that continue the current tip. Overlapping blocks must
    /// match the existing chain exactly.
    pub fn extend_verified(&mut self, blocks: &[Block]) -> Result<Height, ChainError> {
        let Some(first) = blocks.first() else {
            return Ok(self.height());
        };
        if first.height < 0 || first.height > self.height() + 1 {
            return Err(ChainError::HeightGap {
                position: 0,
                found: first.height,
            });
        }
        let anchor = if first.height == 0 {
            None
        } else {
            Some(self.blocks[first.height as usize - 1].block_hash)
        };
        verify_chain(&self.network_id, blocks, anchor)?;
        for b in blocks {
            match self.block(b.height) {
                Some(existing) if existing.block_hash == b.block_hash => {}
                Some(_) => return Err(ChainError::BrokenLink { height: b.height }),
                None => {
                    for (position, e) in b.transactions.iter().enumerate() {
                        self.index.insert(
                            e.tx.tx_id,
                            TxLocation {
                                height: b.height,
                                position,
                            },
                        );
                    }
                    self.blocks.push(b.clone());
                }
            }
        }
        Ok(self.height())
    }

    fn rebuild_index(&mut self) {
        self.index.clear();
        for b in &self.blocks {
            for (position, e) in b.transactions.iter().enumerate() {
                self.index.insert(
                    e.tx.tx_id,
                    TxLocation {
                        height: b.height,
                        position,
                    },
                );
            }
        }
    }

    /// Serializable view for golden files and exports.
    pub fn to_record(&self) -> LedgerRecord {
        LedgerRecord {
            network_id: self.network_id.clone(),
            height: self.height(),
            blocks: self.blocks.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub network_id: NetworkId,
    pub height: Height,
    pub blocks: Vec<Block>,
}

#[derive(Clone, Debug)]
pub struct Peer {
    pub id: PeerId,
    signing_key: SigningKey,
    pub ready: bool,
    pub replica_height: Height,
    /// Blocks this replica trails the canonical tip by while live.
    pub lag: Height,
}

impl Peer {
    pub fn sign(&self, msg: &[u8]) -> Vec<u8> {
        self.signing_key.sign(msg).to_bytes().to_vec()
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.signing_key.verifying_key()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerStatus {
    pub peer_id: PeerId,
    pub replica_height: Height,
    pub ready: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{live} live peers cannot reach quorum {need}")]
pub struct QuorumUnreachable {
    pub live: usize,
    pub need: usize,
}

/// One permissioned network: its configuration, canonical ledger and peers.
#[derive(Clone, Debug)]
pub struct Network {
    pub config: NetworkConfig,
    pub ledger: Ledger,
    pub peers: Vec<Peer>,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Self {
        assert!(config.peer_count >= 1, "network needs at least one peer");
        let ledger = Ledger::new(&config);
        let peers = (0..config.peer_count)
            .map(|i| Peer {
                id: PeerId::new(&config.network_id, i),
                signing_key: config.peer_signing_key(i),
                ready: true,
                replica_height: 0,
                lag: 0,
            })
            .collect();
        Network { config, ledger, peers }
    }

    pub fn id(&self) -> &NetworkId {
        &self.config.network_id
    }

    pub fn quorum(&self) -> usize {
        quorum_threshold(self.config.peer_count)
    }

    pub fn live_peers(&self) -> impl Iterator<Item = &Peer> {
        self.peers.iter().filter(|p| p.ready)
    }

    pub fn peer(&self, id: &PeerId) -> Option<&Peer> {
        self.peers.iter().find(|p| &p.id == id)
    }

    pub fn peer_mut(&mut self, id: &PeerId) -> Option<&mut Peer> {
        self.peers.iter_mut().find(|p| &p.id == id)
    }

    /// Every live peer signs `tx` (covering `attached`). Fails when the live
    /// peers cannot reach quorum.
    pub fn endorse(
        &self,
        tx: &Transaction,
        attached: Option<EndorsementSet>,
    ) -> Result<EndorsementSet, QuorumUnreachable> {
        let need = self.quorum();
        let live = self.live_peers().count();
        if live < need {
            return Err(QuorumUnreachable { live, need });
        }
        let msg = signing_message(&tx.canonical_bytes(), attached.as_ref());
        let signatures = self
            .live_peers()
            .map(|p| Endorsement {
                peer_id: p.id.clone(),
                signature: p.sign(&msg),
            })
            .collect();
        Ok(EndorsementSet {
            subject_tx: tx.tx_id,
            signer_network: self.id().clone(),
            signatures,
            attached: attached.map(Box::new),
        })
    }

    /// Endorses and commits in one step.
    pub fn endorse_and_commit(
        &mut self,
        tx: Transaction,
        attached: Option<EndorsementSet>,
    ) -> Result<(CommitOutcome, EndorsementSet), QuorumUnreachable> {
        let e = self.endorse(&tx, attached)?;
        let out = self.ledger.commit_transaction(tx, e.clone());
        Ok((out, e))
    }

    /// Seals the tick's batch and advances live replicas.
    pub fn seal(&mut self, tick: Tick) -> Option<Height> {
        let sealed = self.ledger.seal_block(tick);
        self.sync_replicas();
        sealed
    }

    pub fn sync_replicas(&mut self) {
        let tip = self.ledger.height();
        for p in &mut self.peers {
            if p.ready {
                p.replica_height = (tip - p.lag).max(0);
            } else {
                p.replica_height = p.replica_height.min(tip);
            }
        }
    }

    pub fn discover_topology(&self) -> Vec<PeerStatus> {
        self.peers
            .iter()
            .map(|p| PeerStatus {
                peer_id: p.id.clone(),
                replica_height: p.replica_height,
                ready: p.ready,
            })
            .collect()
    }

    /// The replica held by `peer`: a prefix of the canonical chain.
    pub fn replica_blocks(&self, peer: &PeerId) -> Option<&[Block]> {
        let p = self.peer(peer)?;
        Some(&self.ledger.blocks()[..=p.replica_height as usize])
    }
}
