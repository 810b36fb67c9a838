//! Private content-addressed store. Objects are addressed by the SHA-256 of
//! their bytes and only swarm-key holders may read or write.
//!
//! On-disk layout under the persistence root:
//!
//! ```text
//! <root>/swarm.key          64 hex chars
//! <root>/manifest.json      holders and object list
//! <root>/objects/<cid>.bin  raw object bytes
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codec::{canonical_json_pretty, Hash32};
use crate::ledger::NetworkId;

const CID_PREFIX: &str = "cid1-";

/// SHA-256 of the stored bytes, written `cid1-<hex>`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentId(pub Hash32);

impl ContentId {
    pub fn of(bytes: &[u8]) -> Self {
        ContentId(Hash32::of(bytes))
    }

    pub fn digest(&self) -> &Hash32 {
        &self.0
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{CID_PREFIX}{}", self.0.to_hex())
    }
}

impl fmt::Debug for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentId({})", &self.0.to_hex()[..12])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a content id: {0:?}")]
pub struct ParseCidError(pub String);

impl FromStr for ContentId {
    type Err = ParseCidError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex = s.strip_prefix(CID_PREFIX).ok_or_else(|| ParseCidError(s.to_string()))?;
        if hex.len() != 64 || hex.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(ParseCidError(s.to_string()));
        }
        Hash32::from_hex(hex)
            .map(ContentId)
            .map_err(|_| ParseCidError(s.to_string()))
    }
}

impl Serialize for ContentId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContentId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The 256-bit shared secret gating the private store.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SwarmSecret(pub [u8; 32]);

impl SwarmSecret {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        SwarmSecret(b)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut b = [0u8; 32];
        hex::decode_to_slice(s.trim(), &mut b).ok()?;
        Some(SwarmSecret(b))
    }
}

impl fmt::Debug for SwarmSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SwarmSecret(..)")
    }
}

#[derive(Clone, Debug)]
pub struct SwarmKey {
    pub secret: SwarmSecret,
    pub holders: BTreeSet<NetworkId>,
}

impl SwarmKey {
    pub fn admits(&self, presented: &SwarmSecret, caller: &NetworkId) -> bool {
        presented == &self.secret && self.holders.contains(caller)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CasError {
    #[error("caller does not hold the swarm key")]
    AccessDenied,
    #[error("no object {0}")]
    NotFound(ContentId),
    #[error("stored bytes for {0} no longer hash to their content id")]
    IntegrityMismatch(ContentId),
    #[error("store i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for CasError {
    fn from(e: std::io::Error) -> Self {
        CasError::Io(e.to_string())
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    holders: Vec<NetworkId>,
    objects: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    cid: ContentId,
    size: usize,
}

/// The store. Objects live in memory and, when a persistence root is set,
/// on disk; reads from a persistent store go to disk.
#[derive(Clone, Debug)]
pub struct CasStore {
    swarm: SwarmKey,
    objects: BTreeMap<ContentId, Vec<u8>>,
    root: Option<PathBuf>,
}

impl CasStore {
    pub fn in_memory(swarm: SwarmKey) -> Self {
        CasStore {
            swarm,
            objects: BTreeMap::new(),
            root: None,
        }
    }

    /// Creates (or reopens) a persistent store at `root` with the given key.
    pub fn create(root: impl AsRef<Path>, swarm: SwarmKey) -> Result<Self, CasError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("objects"))?;
        fs::write(root.join("swarm.key"), swarm.secret.to_hex())?;
        let mut store = CasStore {
            swarm,
            objects: BTreeMap::new(),
            root: Some(root),
        };
        if store.manifest_path().map(|p| p.exists()).unwrap_or(false) {
            store.load_objects()?;
        }
        store.write_manifest()?;
        Ok(store)
    }

    /// Reloads a persistent store from its root.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, CasError> {
        let root = root.as_ref().to_path_buf();
        let secret = SwarmSecret::from_hex(&fs::read_to_string(root.join("swarm.key"))?)
            .ok_or_else(|| CasError::Io("swarm.key is not 64 hex chars".into()))?;
        let manifest: Manifest =
            serde_json::from_slice(&fs::read(root.join("manifest.json"))?).map_err(|e| CasError::Io(e.to_string()))?;
        let mut store = CasStore {
            swarm: SwarmKey {
                secret,
                holders: manifest.holders.into_iter().collect(),
            },
            objects: BTreeMap::new(),
            root: Some(root),
        };
        store.load_objects()?;
        Ok(store)
    }

    fn load_objects(&mut self) -> Result<(), CasError> {
        let path = self.manifest_path().expect("persistent");
        let manifest: Manifest = serde_json::from_slice(&fs::read(path)?).map_err(|e| CasError::Io(e.to_string()))?;
        for e in manifest.objects {
            let bytes = fs::read(self.object_path(&e.cid).expect("persistent"))?;
            self.objects.insert(e.cid, bytes);
        }
        Ok(())
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn swarm(&self) -> &SwarmKey {
        &self.swarm
    }

    pub fn admit(&mut self, holder: NetworkId) -> Result<(), CasError> {
        self.swarm.holders.insert(holder);
        self.write_manifest()
    }

    fn manifest_path(&self) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join("manifest.json"))
    }

    pub fn object_path(&self, cid: &ContentId) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join("objects").join(format!("{cid}.bin")))
    }

    fn write_manifest(&self) -> Result<(), CasError> {
        let Some(path) = self.manifest_path() else {
            return Ok(());
        };
        let m = Manifest {
            holders: self.swarm.holders.iter().cloned().collect(),
            objects: self
                .objects
                .iter()
                .map(|(cid, b)| ManifestEntry {
                    cid: *cid,
                    size: b.len(),
                })
                .collect(),
        };
        let text = canonical_json_pretty(&m).map_err(|e| CasError::Io(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    fn check_access(&self, presented: &SwarmSecret, caller: &NetworkId) -> Result<(), CasError> {
        if self.swarm.admits(presented, caller) {
            Ok(())
        } else {
            Err(CasError::AccessDenied)
        }
    }

    /// Stores `bytes` idempotently and returns their content id.
    pub fn put(&mut self, bytes: &[u8], presented: &SwarmSecret, caller: &NetworkId) -> Result<ContentId, CasError> {
        self.check_access(presented, caller)?;
        let cid = ContentId::of(bytes);
        if self.objects.contains_key(&cid) {
            return Ok(cid);
        }
        if let Some(path) = self.object_path(&cid) {
            fs::write(path, bytes)?;
        }
        self.objects.insert(cid, bytes.to_vec());
        self.write_manifest()?;
        Ok(cid)
    }

    /// Fetches and re-verifies an object. Corrupted bytes are never returned.
    pub fn get(&self, cid: &ContentId, presented: &SwarmSecret, caller: &NetworkId) -> Result<Vec<u8>, CasError> {
        self.check_access(presented, caller)?;
        let bytes = match self.object_path(cid) {
            Some(path) if self.objects.contains_key(cid) => fs::read(path)?,
            _ => self.objects.get(cid).ok_or(CasError::NotFound(*cid))?.clone(),
        };
        if ContentId::of(&bytes) != *cid {
            return Err(CasError::IntegrityMismatch(*cid));
        }
        Ok(bytes)
    }

    pub fn contains(&self, cid: &ContentId) -> bool {
        self.objects.contains_key(cid)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn cids(&self) -> impl Iterator<Item = &ContentId> {
        self.objects.keys()
    }

    /// Hash over every (cid, bytes) pair in cid order.
    pub fn content_digest(&self) -> Hash32 {
        let mut parts: Vec<&[u8]> = Vec::with_capacity(self.objects.len() * 2);
        for (cid, bytes) in &self.objects {
            parts.push(&cid.0 .0);
            parts.push(bytes);
        }
        Hash32::tagged("isnap.store", &parts)
    }
}
