//! Rebuilding a network's ledger from archives in the store, or from a
//! local replica file for comparison.

use std::fs;
use std::path::Path;

use crate::cas::{CasError, CasStore, ContentId, SwarmSecret};
use crate::crypto::{decrypt_archive_bytes, SymmetricKey};
use crate::ledger::{Block, ChainError, Height, LedgerRecord, Network, NetworkId};
use crate::snapshot::{parse_archive, ArchiveFormatError, SnapshotArchive};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BootstrapError {
    #[error("fetch failed: {0}")]
    Fetch(#[from] CasError),
    #[error("archive does not authenticate")]
    Auth,
    #[error("archive format: {0}")]
    Format(#[from] ArchiveFormatError),
    #[error("archive belongs to {0}")]
    WrongNetwork(NetworkId),
    #[error("chain verification failed: {0}")]
    Chain(#[from] ChainError),
    #[error("local replica: {0}")]
    Local(String),
}

pub fn fetch_archive(
    store: &CasStore,
    secret: &SwarmSecret,
    caller: &NetworkId,
    cid: &ContentId,
    key: &SymmetricKey,
) -> Result<SnapshotArchive, BootstrapError> {
    let bytes = store.get(cid, secret, caller)?;
    let plain = decrypt_archive_bytes(&bytes, key).map_err(|_| BootstrapError::Auth)?;
    Ok(parse_archive(&plain)?)
}

fn install(network: &mut Network, blocks: &[Block]) -> Result<Height, BootstrapError> {
    let h = network.ledger.extend_verified(blocks)?;
    for p in &mut network.peers {
        p.ready = true;
    }
    network.sync_replicas();
    Ok(h)
}

/// Applies one archive on top of the network's current chain and marks its
/// peers ready. The archive must continue (or overlap) the current tip.
pub fn bootstrap_peer_from_archive(
    network: &mut Network,
    store: &CasStore,
    secret: &SwarmSecret,
    cid: &ContentId,
    key: &SymmetricKey,
) -> Result<Height, BootstrapError> {
    let archive = fetch_archive(store, secret, network.id(), cid, key)?;
    if &archive.manifest.network_id != network.id() {
        return Err(BootstrapError::WrongNetwork(archive.manifest.network_id));
    }
    let blocks: Vec<Block> = archive.blocks().cloned().collect();
    install(network, &blocks)
}

/// Peer-to-peer catch-up from a surviving replica's chain.
pub fn catch_up(network: &mut Network, donor: &[Block]) -> Result<Height, BootstrapError> {
    let from = network.ledger.height();
    let missing: Vec<Block> = donor.iter().filter(|b| b.height > from).cloned().collect();
    install(network, &missing)
}

pub fn write_local_replica(record: &LedgerRecord, path: &Path) -> Result<(), BootstrapError> {
    let json = serde_json::to_vec(record).map_err(|e| BootstrapError::Local(e.to_string()))?;
    fs::write(path, json).map_err(|e| BootstrapError::Local(e.to_string()))
}

/// Restores from an uncompressed, unencrypted replica file.
pub fn restore_local_replica(network: &mut Network, path: &Path) -> Result<Height, BootstrapError> {
    let bytes = fs::read(path).map_err(|e| BootstrapError::Local(e.to_string()))?;
    let record: LedgerRecord = serde_json::from_slice(&bytes).map_err(|e| BootstrapError::Local(e.to_string()))?;
    if &record.network_id != network.id() {
        return Err(BootstrapError::WrongNetwork(record.network_id));
    }
    install(network, &record.blocks)
}
