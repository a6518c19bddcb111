use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::codec::canonical_encode;
use super::crypto::{verify_signature, AgentId, Digest, Signature, Signer};

/// A signed hash pointer: the digest of a block, the block's creator and the
/// creator's signature over the digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct BlockHash {
    pub digest: Digest,
    pub creator: AgentId,
    pub signature: Signature,
}

impl PartialOrd for BlockHash {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BlockHash {
    // Pointers are ordered by digest first; the remaining fields only break
    // ties between (infeasible) digest collisions.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.digest
            .cmp(&other.digest)
            .then_with(|| self.creator.cmp(&other.creator))
            .then_with(|| self.signature.cmp(&other.signature))
    }
}

/// A payment of `amount` coins to `recipient`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Payment {
    pub recipient: AgentId,
    pub amount: u64,
}

impl Payment {
    pub const fn new(recipient: AgentId, amount: u64) -> Self {
        Self { recipient, amount }
    }
}

/// The reason attached to a transaction.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub enum Comment {
    #[default]
    None,
    /// Redemption claim with an ordered list of preferred repayment currencies.
    Redeem(Vec<AgentId>),
    /// Repayment of the redemption claim with this hash.
    Repay(BlockHash),
    FreeText(String),
}

/// Longest free-text comment a correct agent will write.
pub const MAX_FREE_TEXT: usize = 256;

/// A set of payments in one currency.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Transaction {
    pub currency: AgentId,
    pub payments: Vec<Payment>,
    pub comment: Comment,
}

impl Transaction {
    /// Amount paid to `agent` in this transaction, if any.
    pub fn paid_to(&self, agent: &AgentId) -> Option<u64> {
        self.payments
            .iter()
            .find(|p| p.recipient == *agent)
            .map(|p| p.amount)
    }

    pub fn total(&self) -> u128 {
        self.payments.iter().map(|p| p.amount as u128).sum()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ApprovalVerdict {
    Approve,
    /// `evidence` points at the target itself when it is unbalanced, or at a
    /// block equivocating with it.
    Disapprove { evidence: BlockHash },
}

/// A sovereign's decision on one payment in its currency.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Approval {
    pub target: BlockHash,
    pub verdict: ApprovalVerdict,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Payload {
    /// First block of every agent; stands for the zero self-payment.
    Genesis,
    Transaction(Transaction),
    Approval(Approval),
    /// Friendship declaration towards another agent.
    Friend(AgentId),
}

impl Payload {
    pub fn transaction(&self) -> Option<&Transaction> {
        match self {
            Payload::Transaction(tx) => Some(tx),
            _ => None,
        }
    }

    pub fn approval(&self) -> Option<&Approval> {
        match self {
            Payload::Approval(a) => Some(a),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Genesis => "genesis",
            Payload::Transaction(_) => "transaction",
            Payload::Approval(_) => "approval",
            Payload::Friend(_) => "friend",
        }
    }
}

/// An immutable signed block `(h, x, H)`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Block {
    hash: BlockHash,
    payload: Payload,
    pointers: Vec<BlockHash>,
}

/// Blocks are shared between blocklaces, messages and traces.
pub type BlockRef = Arc<Block>;

impl Block {
    /// Assembles a block without checking anything. Decoding and tests use
    /// this; honest construction goes through [`create_block`].
    pub fn from_parts(hash: BlockHash, payload: Payload, pointers: Vec<BlockHash>) -> Self {
        Self {
            hash,
            payload,
            pointers,
        }
    }

    pub fn hash(&self) -> &BlockHash {
        &self.hash
    }

    pub fn digest(&self) -> Digest {
        self.hash.digest
    }

    pub fn creator(&self) -> AgentId {
        self.hash.creator
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn pointers(&self) -> &[BlockHash] {
        &self.pointers
    }

    pub fn is_genesis(&self) -> bool {
        self.pointers.is_empty()
    }

    /// Pointers to blocks by the same creator.
    pub fn self_pointers(&self) -> impl Iterator<Item = &BlockHash> {
        let me = self.creator();
        self.pointers.iter().filter(move |p| p.creator == me)
    }

    pub fn points_to(&self, digest: &Digest) -> bool {
        self.pointers.iter().any(|p| p.digest == *digest)
    }

    pub fn transaction(&self) -> Option<&Transaction> {
        self.payload.transaction()
    }
}

/// Signs `payload` over `pointers`. Pointers are sorted and de-duplicated
/// here, so any list is accepted. No chain discipline is enforced: an
/// adversary can build two blocks over the same predecessor.
pub fn create_block<S: Signer + ?Sized>(
    signer: &S,
    payload: Payload,
    pointers: impl IntoIterator<Item = BlockHash>,
) -> Block {
    let mut pointers: Vec<BlockHash> = pointers.into_iter().collect();
    pointers.sort();
    pointers.dedup_by(|a, b| a.digest == b.digest);
    let creator = signer.agent_id();
    let bytes = canonical_encode(&creator, &payload, &pointers)
        .expect("pointers are sorted and unique");
    let digest = Digest::of(&bytes);
    let signature = signer.sign(&digest);
    Block {
        hash: BlockHash {
            digest,
            creator,
            signature,
        },
        payload,
        pointers,
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum VerifyError {
    #[error("digest does not match block contents")]
    BadDigest,
    #[error("signature does not verify under the creator's key")]
    BadSignature,
}

/// Recomputes the digest and checks the creator's signature.
pub fn verify_block(block: &Block) -> Result<(), VerifyError> {
    let bytes = canonical_encode(&block.creator(), &block.payload, &block.pointers)
        .map_err(|_| VerifyError::BadDigest)?;
    if Digest::of(&bytes) != block.hash.digest {
        return Err(VerifyError::BadDigest);
    }
    if !verify_signature(&block.hash.creator, &block.hash.digest, &block.hash.signature) {
        return Err(VerifyError::BadSignature);
    }
    Ok(())
}
