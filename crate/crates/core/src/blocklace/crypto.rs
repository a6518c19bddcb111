//! Agent identities, digests and signatures.
//!
//! Hashing is SHA-256 and signing is Ed25519. Everything above this module
//! only relies on the [`Signer`] trait and [`verify_signature`], so the
//! scheme can be swapped without touching the protocol code.

use std::fmt;

use ed25519_dalek::{Signer as _, SigningKey, Verifier as _, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

/// Length in bytes of an [`AgentId`].
pub const AGENT_ID_LEN: usize = 32;
/// Length in bytes of a [`Digest`].
pub const DIGEST_LEN: usize = 32;
/// Length in bytes of a [`Signature`].
pub const SIGNATURE_LEN: usize = 64;

/// An agent, identified by its public verification key.
///
/// Ordering is lexicographic over the key bytes, which gives every
/// collection keyed by agents a deterministic iteration order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId([u8; AGENT_ID_LEN]);

impl AgentId {
    pub const fn from_bytes(bytes: [u8; AGENT_ID_LEN]) -> Self {
        Self(bytes)
    }

    pub const fn as_bytes(&self) -> &[u8; AGENT_ID_LEN] {
        &self.0
    }

    /// First four bytes in hex, for logs.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AgentId({})", self.short())
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Serialize for AgentId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for AgentId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; AGENT_ID_LEN];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Self(out))
    }
}

/// SHA-256 digest of a block's canonical encoding.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest([u8; DIGEST_LEN]);

impl Digest {
    pub const fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Self(bytes)
    }

    pub fn of(data: &[u8]) -> Self {
        Self(Sha256::digest(data).into())
    }

    pub const fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Ed25519 signature bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature([u8; SIGNATURE_LEN]);

impl Signature {
    pub const fn from_bytes(bytes: [u8; SIGNATURE_LEN]) -> Self {
        Self(bytes)
    }

    pub const fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..4]))
    }
}

/// Anything that can sign block digests on behalf of one agent.
pub trait Signer {
    fn agent_id(&self) -> AgentId;
    fn sign(&self, digest: &Digest) -> Signature;
}

/// An Ed25519 keypair.
#[derive(Clone)]
pub struct Keypair {
    signing: SigningKey,
    id: AgentId,
}

impl Keypair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self::from_secret(SigningKey::generate(rng).to_bytes())
    }

    pub fn from_secret(secret: [u8; 32]) -> Self {
        let signing = SigningKey::from_bytes(&secret);
        let id = AgentId(signing.verifying_key().to_bytes());
        Self { signing, id }
    }

    /// Deterministic keypair derived from a label. Only meant for
    /// simulations and fixtures, where reproducible identities matter more
    /// than secrecy.
    pub fn from_label(label: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"grassroots-flash/agent-key/");
        h.update(label.as_bytes());
        Self::from_secret(h.finalize().into())
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn id(&self) -> AgentId {
        self.id
    }
}

impl fmt::Debug for Keypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keypair").field("id", &self.id).finish_non_exhaustive()
    }
}

impl Signer for Keypair {
    fn agent_id(&self) -> AgentId {
        self.id
    }

    fn sign(&self, digest: &Digest) -> Signature {
        Signature(self.signing.sign(digest.as_bytes()).to_bytes())
    }
}

/// Checks `signature` over `digest` under `agent`'s key.
pub fn verify_signature(agent: &AgentId, digest: &Digest, signature: &Signature) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(agent.as_bytes()) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(signature.as_bytes());
    key.verify(digest.as_bytes(), &sig).is_ok()
}
