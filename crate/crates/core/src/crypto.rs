//! Archive encryption: passphrase key derivation, AES-128-GCM archive
//! encryption, the per-network key wallet, and public-key envelopes that
//! carry a (content id, key) pair to one recipient network.

use std::collections::BTreeMap;
use std::fmt;

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes128Gcm, KeyInit, Nonce};
use hkdf::Hkdf;
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256, Sha512};

use crate::cas::ContentId;
use crate::codec::{canonical_json, Hash32};
use crate::crosschain::IdentityRegistry;
use crate::ledger::{Height, NetworkId};

pub const KEY_LEN: usize = 16;
pub const SALT_LEN: usize = 8;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const FORMAT_VERSION: u8 = 1;
pub const DEFAULT_ITERATIONS: u32 = 65_536;
const HEADER_LEN: usize = 1 + SALT_LEN + 4 + NONCE_LEN;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("passphrase must be non-empty")]
    EmptyPassphrase,
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error("plaintext must be non-empty")]
    EmptyPlaintext,
    /// Wrong key and tampering are deliberately indistinguishable.
    #[error("archive failed authentication")]
    AuthFailure,
    #[error("no envelope key registered for {0}")]
    UnknownDestination(NetworkId),
    #[error("envelope could not be opened")]
    UnwrapFailure,
}

macro_rules! hex_bytes {
    ($name:ident, $len:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub [u8; $len]);

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&hex::encode(self.0))
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                let mut out = [0u8; $len];
                hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
                Ok($name(out))
            }
        }
    };
}

hex_bytes!(SymmetricKey, KEY_LEN);
hex_bytes!(Salt, SALT_LEN);

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

impl fmt::Debug for Salt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Salt({})", hex::encode(self.0))
    }
}

impl Salt {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        let mut b = [0u8; SALT_LEN];
        rng.fill_bytes(&mut b);
        Salt(b)
    }
}

/// Symmetric key plus the parameters that produced it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedKey {
    pub key: SymmetricKey,
    pub salt: Salt,
    pub iterations: u32,
    /// SHA-256 of the passphrase; a lookup aid, never the passphrase itself.
    pub passphrase_fingerprint: Hash32,
}

/// Iterated SHA-512 over `salt ‖ passphrase`, truncated to 128 bits.
///
/// The first round hashes `salt ‖ passphrase`; each further round hashes the
/// previous digest followed by `salt ‖ passphrase` again.
pub fn derive_key(passphrase: &[u8], salt: Salt, iterations: u32) -> Result<DerivedKey, CryptoError> {
    if passphrase.is_empty() {
        return Err(CryptoError::EmptyPassphrase);
    }
    if iterations == 0 {
        return Err(CryptoError::ZeroIterations);
    }
    let mut h = Sha512::new();
    h.update(salt.0);
    h.update(passphrase);
    let mut digest = h.finalize();
    for _ in 1..iterations {
        let mut h = Sha512::new();
        h.update(digest);
        h.update(salt.0);
        h.update(passphrase);
        digest = h.finalize();
    }
    let mut key = [0u8; KEY_LEN];
    key.copy_from_slice(&digest[..KEY_LEN]);
    Ok(DerivedKey {
        key: SymmetricKey(key),
        salt,
        iterations,
        passphrase_fingerprint: Hash32(Sha256::digest(passphrase).into()),
    })
}

/// A fresh 32-byte passphrase.
pub fn fresh_passphrase(rng: &mut impl RngCore) -> [u8; 32] {
    let mut p = [0u8; 32];
    rng.fill_bytes(&mut p);
    p
}

/// `version ‖ salt ‖ iterations (u32 BE) ‖ nonce ‖ ciphertext ‖ tag`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptedArchive {
    pub version: u8,
    pub salt: Salt,
    pub iterations: u32,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl EncryptedArchive {
    fn header(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0] = self.version;
        h[1..1 + SALT_LEN].copy_from_slice(&self.salt.0);
        h[1 + SALT_LEN..5 + SALT_LEN].copy_from_slice(&self.iterations.to_be_bytes());
        h[5 + SALT_LEN..].copy_from_slice(&self.nonce);
        h
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.ciphertext.len() + TAG_LEN);
        out.extend_from_slice(&self.header());
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.tag);
        out
    }

    /// Parses the on-disk layout. Anything too short to hold a header and a
    /// tag cannot authenticate and is reported as such.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < HEADER_LEN + TAG_LEN || bytes[0] != FORMAT_VERSION {
            return Err(CryptoError::AuthFailure);
        }
        let (header, rest) = bytes.split_at(HEADER_LEN);
        let (ciphertext, tag) = rest.split_at(rest.len() - TAG_LEN);
        Ok(EncryptedArchive {
            version: header[0],
            salt: Salt(header[1..1 + SALT_LEN].try_into().unwrap()),
            iterations: u32::from_be_bytes(header[1 + SALT_LEN..5 + SALT_LEN].try_into().unwrap()),
            nonce: header[5 + SALT_LEN..].try_into().unwrap(),
            ciphertext: ciphertext.to_vec(),
            tag: tag.try_into().unwrap(),
        })
    }
}

/// AES-128-GCM under `key`, authenticating the header as associated data.
pub fn encrypt_archive(
    plaintext: &[u8],
    key: &DerivedKey,
    nonce_source: &mut impl RngCore,
) -> Result<EncryptedArchive, CryptoError> {
    if plaintext.is_empty() {
        return Err(CryptoError::EmptyPlaintext);
    }
    let mut nonce = [0u8; NONCE_LEN];
    nonce_source.fill_bytes(&mut nonce);
    let mut out = EncryptedArchive {
        version: FORMAT_VERSION,
        salt: key.salt,
        iterations: key.iterations,
        nonce,
        ciphertext: Vec::new(),
        tag: [0u8; TAG_LEN],
    };
    let cipher = Aes128Gcm::new_from_slice(&key.key.0).expect("16-byte key");
    let mut sealed = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: plaintext,
                aad: &out.header(),
            },
        )
        .expect("in-memory encryption does not fail");
    let tag = sealed.split_off(sealed.len() - TAG_LEN);
    out.tag.copy_from_slice(&tag);
    out.ciphertext = sealed;
    Ok(out)
}

pub fn decrypt_archive(archive: &EncryptedArchive, key: &SymmetricKey) -> Result<Vec<u8>, CryptoError> {
    let cipher = Aes128Gcm::new_from_slice(&key.0).expect("16-byte key");
    let mut sealed = Vec::with_capacity(archive.ciphertext.len() + TAG_LEN);
    sealed.extend_from_slice(&archive.ciphertext);
    sealed.extend_from_slice(&archive.tag);
    cipher
        .decrypt(
            Nonce::from_slice(&archive.nonce),
            Payload {
                msg: &sealed,
                aad: &archive.header(),
            },
        )
        .map_err(|_| CryptoError::AuthFailure)
}

/// Parses and decrypts the on-disk archive layout.
pub fn decrypt_archive_bytes(bytes: &[u8], key: &SymmetricKey) -> Result<Vec<u8>, CryptoError> {
    decrypt_archive(&EncryptedArchive::from_bytes(bytes)?, key)
}

/// What an envelope carries to its recipient.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvelopeContents {
    pub cid: ContentId,
    pub key: SymmetricKey,
    pub metadata: ArchiveMetadata,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveMetadata {
    pub network_id: NetworkId,
    pub archive_id: String,
    pub from_height: Height,
    pub to_height: Height,
}

/// Hybrid public-key encryption: ephemeral X25519 agreement with the
/// recipient's network key, HKDF-SHA256, then AES-128-GCM.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub recipient: NetworkId,
    #[serde(with = "hex::serde")]
    pub ephemeral_public: [u8; 32],
    #[serde(with = "hex::serde")]
    pub nonce: [u8; NONCE_LEN],
    #[serde(with = "crate::codec::b64")]
    pub wrapped: Vec<u8>,
}

fn envelope_cipher(
    shared: &[u8; 32],
    ephemeral: &[u8; 32],
    recipient_pub: &[u8; 32],
    recipient: &NetworkId,
) -> Aes128Gcm {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(ephemeral);
    salt[32..].copy_from_slice(recipient_pub);
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared);
    let mut key = [0u8; KEY_LEN];
    let info = [b"isnap.envelope:".as_slice(), recipient.as_str().as_bytes()].concat();
    hk.expand(&info, &mut key).expect("16 bytes is a valid hkdf length");
    Aes128Gcm::new_from_slice(&key).expect("16-byte key")
}

pub fn wrap_for_destination(
    contents: &EnvelopeContents,
    dest: &NetworkId,
    registry: &IdentityRegistry,
    rng: &mut impl RngCore,
) -> Result<Envelope, CryptoError> {
    let recipient_pub = registry
        .envelope_key(dest)
        .ok_or_else(|| CryptoError::UnknownDestination(dest.clone()))?;
    let mut eph = [0u8; 32];
    rng.fill_bytes(&mut eph);
    let eph = x25519_dalek::StaticSecret::from(eph);
    let ephemeral_public = x25519_dalek::PublicKey::from(&eph).to_bytes();
    let shared = eph.diffie_hellman(&x25519_dalek::PublicKey::from(recipient_pub));
    let cipher = envelope_cipher(shared.as_bytes(), &ephemeral_public, &recipient_pub, dest);
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let plaintext = canonical_json(contents).expect("contents serialize");
    let wrapped = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: plaintext.as_bytes(),
                aad: dest.as_str().as_bytes(),
            },
        )
        .expect("in-memory encryption does not fail");
    Ok(Envelope {
        recipient: dest.clone(),
        ephemeral_public,
        nonce,
        wrapped,
    })
}

/// Opens an envelope with the recipient's private key.
pub fn unwrap(envelope: &Envelope, private_key: &[u8; 32]) -> Result<EnvelopeContents, CryptoError> {
    let secret = x25519_dalek::StaticSecret::from(*private_key);
    let own_pub = x25519_dalek::PublicKey::from(&secret).to_bytes();
    let shared = secret.diffie_hellman(&x25519_dalek::PublicKey::from(envelope.ephemeral_public));
    let cipher = envelope_cipher(
        shared.as_bytes(),
        &envelope.ephemeral_public,
        &own_pub,
        &envelope.recipient,
    );
    let plaintext = cipher
        .decrypt(
            Nonce::from_slice(&envelope.nonce),
            Payload {
                msg: &envelope.wrapped,
                aad: envelope.recipient.as_str().as_bytes(),
            },
        )
        .map_err(|_| CryptoError::UnwrapFailure)?;
    serde_json::from_slice(&plaintext).map_err(|_| CryptoError::UnwrapFailure)
}

/// Off-ledger key backup for one network, keyed by archive id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyWallet {
    pub network_id: Option<NetworkId>,
    entries: BTreeMap<String, DerivedKey>,
}

impl KeyWallet {
    pub fn new(network_id: NetworkId) -> Self {
        KeyWallet {
            network_id: Some(network_id),
            entries: BTreeMap::new(),
        }
    }

    pub fn put(&mut self, archive_id: impl Into<String>, key: DerivedKey) {
        self.entries.insert(archive_id.into(), key);
    }

    pub fn get(&self, archive_id: &str) -> Option<&DerivedKey> {
        self.entries.get(archive_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &DerivedKey)> {
        self.entries.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::NetworkConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn key(seed: u64) -> DerivedKey {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        derive_key(&fresh_passphrase(&mut rng), Salt::generate(&mut rng), 16).unwrap()
    }

    #[test]
    fn kdf_single_round_vector() {
        // sha512(0x0000000000000000 || "a")[..16], computed with an external hash tool
        let k = derive_key(b"a", Salt([0u8; 8]), 1).unwrap();
        assert_eq!(hex::encode(k.key.0), "907312efa6e237f3777a8b31955e578f");
    }

    #[test]
    fn kdf_three_round_vector() {
        // h1 = sha512(salt||p); h(i+1) = sha512(h(i)||salt||p), external computation
        let k = derive_key(b"passphrase", Salt(*b"saltsalt"), 3).unwrap();
        assert_eq!(hex::encode(k.key.0), "efcda467f962eaa4b947ad2851480bec");
    }

    #[test]
    fn kdf_is_deterministic_and_salt_sensitive() {
        let a = derive_key(b"pw", Salt([1; 8]), 100).unwrap();
        let b = derive_key(b"pw", Salt([1; 8]), 100).unwrap();
        let c = derive_key(b"pw", Salt([2; 8]), 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.key, c.key);
        assert_eq!(a.passphrase_fingerprint, Hash32::of(b"pw"));
    }

    #[test]
    fn kdf_rejects_bad_parameters() {
        assert_eq!(derive_key(b"", Salt([0; 8]), 1), Err(CryptoError::EmptyPassphrase));
        assert_eq!(derive_key(b"x", Salt([0; 8]), 0), Err(CryptoError::ZeroIterations));
    }

    #[test]
    fn round_trip_and_layout() {
        let k = key(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let enc = encrypt_archive(b"snapshot archive", &k, &mut rng).unwrap();
        let bytes = enc.to_bytes();
        assert_eq!(bytes[0], FORMAT_VERSION);
        assert_eq!(&bytes[1..9], &k.salt.0);
        assert_eq!(&bytes[9..13], &16u32.to_be_bytes());
        assert_eq!(bytes.len(), HEADER_LEN + 16 + TAG_LEN);
        assert_eq!(decrypt_archive_bytes(&bytes, &k.key).unwrap(), b"snapshot archive");
    }

    #[test]
    fn tamper_wrong_key_and_truncation_fail() {
        let k = key(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bytes = encrypt_archive(b"payload bytes", &k, &mut rng).unwrap().to_bytes();
        let mut flipped = bytes.clone();
        flipped[HEADER_LEN + 2] ^= 0x10;
        assert_eq!(decrypt_archive_bytes(&flipped, &k.key), Err(CryptoError::AuthFailure));
        assert_eq!(
            decrypt_archive_bytes(&bytes, &key(3).key),
            Err(CryptoError::AuthFailure)
        );
        assert_eq!(
            decrypt_archive_bytes(&bytes[..bytes.len() - 1], &k.key),
            Err(CryptoError::AuthFailure)
        );
        let mut header = bytes.clone();
        header[4] ^= 1;
        assert_eq!(decrypt_archive_bytes(&header, &k.key), Err(CryptoError::AuthFailure));
    }

    #[test]
    fn fresh_nonces_give_distinct_ciphertexts() {
        let k = key(1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = encrypt_archive(b"same", &k, &mut rng).unwrap();
        let b = encrypt_archive(b"same", &k, &mut rng).unwrap();
        assert_ne!(a.to_bytes(), b.to_bytes());
        assert_eq!(encrypt_archive(b"", &k, &mut rng), Err(CryptoError::EmptyPlaintext));
    }

    fn registry() -> (IdentityRegistry, Vec<NetworkConfig>) {
        let cfgs: Vec<_> = ["a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, n)| NetworkConfig::new(*n, 3, i as u64))
            .collect();
        let mut reg = IdentityRegistry::new();
        for c in &cfgs {
            reg.register_network(c);
        }
        (reg, cfgs)
    }

    fn contents() -> EnvelopeContents {
        EnvelopeContents {
            cid: ContentId::of(b"archive"),
            key: key(4).key,
            metadata: ArchiveMetadata {
                network_id: NetworkId::new("a"),
                archive_id: "a/0".into(),
                from_height: -1,
                to_height: 240,
            },
        }
    }

    #[test]
    fn envelope_opens_only_for_recipient() {
        let (reg, cfgs) = registry();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let env = wrap_for_destination(&contents(), &NetworkId::new("b"), &reg, &mut rng).unwrap();
        assert_eq!(unwrap(&env, &cfgs[1].network_secret()).unwrap(), contents());
        for (i, c) in cfgs.iter().enumerate() {
            assert_eq!(unwrap(&env, &c.network_secret()).is_ok(), i == 1);
        }
        // replaying the envelope to a third network by relabelling it
        let mut replay = env.clone();
        replay.recipient = NetworkId::new("c");
        assert_eq!(
            unwrap(&replay, &cfgs[2].network_secret()),
            Err(CryptoError::UnwrapFailure)
        );
        assert_eq!(
            wrap_for_destination(&contents(), &NetworkId::new("zz"), &reg, &mut rng),
            Err(CryptoError::UnknownDestination(NetworkId::new("zz")))
        );
    }

    #[test]
    fn wallet_put_get() {
        let mut w = KeyWallet::new(NetworkId::new("a"));
        w.put("a/0", key(1));
        assert_eq!(w.get("a/0"), Some(&key(1)));
        assert_eq!(w.get("a/1"), None);
    }
}
