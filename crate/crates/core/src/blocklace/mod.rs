//! The blocklace: a set of signed hash-pointer blocks forming a DAG.
//!
//! Every block in a [`Blocklace`] has all of its pointers resolved inside the
//! same blocklace, so local insertion order is a topological order and each
//! block carries the full bitmap of its ancestors. Blocks whose pointers are
//! not yet all present wait in a bounded out-of-order buffer and are drained
//! as soon as their last missing predecessor arrives.

mod block;
pub mod codec;
mod crypto;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use thiserror::Error;

pub use block::{
    create_block, verify_block, Approval, ApprovalVerdict, Block, BlockHash, BlockRef, Comment,
    Payload, Payment, Transaction, VerifyError, MAX_FREE_TEXT,
};
pub use codec::{canonical_encode, decode_block, encode_block, read_dump, write_dump};
pub use crypto::{
    verify_signature, AgentId, Digest, Keypair, Signature, Signer, AGENT_ID_LEN, DIGEST_LEN,
    SIGNATURE_LEN,
};

/// Default capacity of the out-of-order buffer.
pub const DEFAULT_BUFFER_CAP: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LaceError {
    #[error("block {0:?} is not in the blocklace")]
    NotPresent(Digest),
    #[error("out-of-order buffer is full ({0} blocks)")]
    BufferFull(usize),
}

/// Outcome of [`Blocklace::insert`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Inserted {
    /// Blocks moved into the blocklace, in insertion order. Starts with the
    /// inserted block, followed by any buffered blocks it released.
    Added(Vec<BlockRef>),
    /// The block waits in the buffer for the listed missing pointers.
    Buffered(Vec<Digest>),
    Duplicate,
}

impl Inserted {
    pub fn added(&self) -> &[BlockRef] {
        match self {
            Inserted::Added(v) => v,
            _ => &[],
        }
    }
}

/// Two blocks by the same agent, neither observing the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForkEvidence {
    pub first: BlockHash,
    pub second: BlockHash,
}

struct Entry {
    block: BlockRef,
    /// Reflexive-transitive closure over pointers, by local index.
    ancestors: FixedBitSet,
    children: Vec<u32>,
}

#[derive(Default)]
struct AgentIndex {
    blocks: Vec<u32>,
    /// Union of the ancestor sets of this agent's blocks.
    observed: FixedBitSet,
}

#[derive(Default)]
struct Buffer {
    blocks: BTreeMap<Digest, (BlockRef, usize)>,
    /// Missing digest -> buffered blocks waiting on it.
    waiting: BTreeMap<Digest, Vec<Digest>>,
}

/// A set of blocks closed under pointers, with reachability indices.
///
/// Single-owner: mutate through [`insert`](Self::insert) only.
pub struct Blocklace {
    entries: Vec<Entry>,
    index: HashMap<Digest, u32>,
    agents: BTreeMap<AgentId, AgentIndex>,
    tips: BTreeSet<Digest>,
    /// Friend declarations `(from, to)` present in the blocklace.
    friend_decls: BTreeSet<(AgentId, AgentId)>,
    buffer: Buffer,
    buffer_cap: usize,
}

impl Default for Blocklace {
    fn default() -> Self {
        Self::new()
    }
}

impl Blocklace {
    pub fn new() -> Self {
        Self::with_buffer_cap(DEFAULT_BUFFER_CAP)
    }

    pub fn with_buffer_cap(buffer_cap: usize) -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
            agents: BTreeMap::new(),
            tips: BTreeSet::new(),
            friend_decls: BTreeSet::new(),
            buffer: Buffer::default(),
            buffer_cap,
        }
    }

    /// Builds a blocklace from blocks in any order; blocks left with missing
    /// pointers stay buffered.
    pub fn from_blocks(blocks: impl IntoIterator<Item = BlockRef>) -> Result<Self, LaceError> {
        let mut lace = Self::with_buffer_cap(usize::MAX);
        for b in blocks {
            lace.insert(b)?;
        }
        lace.buffer_cap = DEFAULT_BUFFER_CAP;
        Ok(lace)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, digest: &Digest) -> bool {
        self.index.contains_key(digest)
    }

    pub fn get(&self, digest: &Digest) -> Option<&BlockRef> {
        self.index.get(digest).map(|&i| &self.entries[i as usize].block)
    }

    pub fn block(&self, digest: &Digest) -> Result<&BlockRef, LaceError> {
        self.get(digest).ok_or(LaceError::NotPresent(*digest))
    }

    /// Local index of a block; indices follow insertion order.
    pub fn index_of(&self, digest: &Digest) -> Option<usize> {
        self.index.get(digest).map(|&i| i as usize)
    }

    pub fn by_index(&self, i: usize) -> &BlockRef {
        &self.entries[i].block
    }

    /// Blocks in insertion order, which is a topological order.
    pub fn iter(&self) -> impl Iterator<Item = &BlockRef> + '_ {
        self.entries.iter().map(|e| &e.block)
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentId> + '_ {
        self.agents.keys()
    }

    /// Blocks created by `agent`, in insertion order.
    pub fn blocks_of(&self, agent: &AgentId) -> impl Iterator<Item = &BlockRef> + '_ {
        self.agents
            .get(agent)
            .into_iter()
            .flat_map(|a| a.blocks.iter().map(|&i| &self.entries[i as usize].block))
    }

    pub fn is_buffered(&self, digest: &Digest) -> bool {
        self.buffer.blocks.contains_key(digest)
    }

    pub fn buffered_len(&self) -> usize {
        self.buffer.blocks.len()
    }

    /// True if some buffered block is waiting for `digest`.
    pub fn is_awaited(&self, digest: &Digest) -> bool {
        self.buffer.waiting.contains_key(digest)
    }

    /// Adds `block`, or buffers it until all of its pointers are present.
    ///
    /// The caller is expected to have run [`verify_block`].
    pub fn insert(&mut self, block: BlockRef) -> Result<Inserted, LaceError> {
        let digest = block.digest();
        if self.contains(&digest) || self.is_buffered(&digest) {
            return Ok(Inserted::Duplicate);
        }
        let missing: Vec<Digest> = block
            .pointers()
            .iter()
            .map(|p| p.digest)
            .filter(|d| !self.contains(d))
            .collect();
        if !missing.is_empty() {
            if self.buffer.blocks.len() >= self.buffer_cap {
                return Err(LaceError::BufferFull(self.buffer_cap));
            }
            for d in &missing {
                self.buffer.waiting.entry(*d).or_default().push(digest);
            }
            self.buffer.blocks.insert(digest, (block, missing.len()));
            return Ok(Inserted::Buffered(missing));
        }
        let mut added = vec![];
        let mut ready = vec![block];
        while let Some(b) = ready.pop() {
            let d = b.digest();
            self.add(b.clone());
            added.push(b);
            if let Some(waiters) = self.buffer.waiting.remove(&d) {
                // Released blocks are pushed in reverse so they drain in the
                // order they were buffered.
                for w in waiters.into_iter().rev() {
                    let slot = self.buffer.blocks.get_mut(&w).expect("waiter is buffered");
                    slot.1 -= 1;
                    if slot.1 == 0 {
                        let (blk, _) = self.buffer.blocks.remove(&w).expect("present");
                        ready.push(blk);
                    }
                }
            }
        }
        Ok(Inserted::Added(added))
    }

    fn add(&mut self, block: BlockRef) {
        let i = self.entries.len() as u32;
        let n = i as usize + 1;
        let mut ancestors = FixedBitSet::with_capacity(n);
        ancestors.insert(i as usize);
        for p in block.pointers() {
            let j = self.index[&p.digest];
            let parent = &mut self.entries[j as usize];
            ancestors.union_with(&parent.ancestors);
            parent.children.push(i);
            self.tips.remove(&p.digest);
        }
        let creator = block.creator();
        let agent = self.agents.entry(creator).or_default();
        agent.blocks.push(i);
        agent.observed.grow(n);
        agent.observed.union_with(&ancestors);
        if let Payload::Friend(other) = block.payload() {
            self.friend_decls.insert((creator, *other));
        }
        self.tips.insert(block.digest());
        self.index.insert(block.digest(), i);
        self.entries.push(Entry {
            block,
            ancestors,
            children: Vec::new(),
        });
    }

    fn idx(&self, digest: &Digest) -> Result<usize, LaceError> {
        self.index_of(digest).ok_or(LaceError::NotPresent(*digest))
    }

    /// Index-level [`observes`](Self::observes).
    pub fn observes_idx(&self, a: usize, b: usize) -> bool {
        self.entries[a].ancestors.contains(b)
    }

    /// `a` observes `b`: `a == b` or a pointer path leads from `a` to `b`.
    pub fn observes(&self, a: &Digest, b: &Digest) -> Result<bool, LaceError> {
        Ok(self.observes_idx(self.idx(a)?, self.idx(b)?))
    }

    /// Ancestor bitmap of the block at index `i`, including `i` itself.
    pub fn ancestors_idx(&self, i: usize) -> &FixedBitSet {
        &self.entries[i].ancestors
    }

    /// Indices of blocks pointing directly at block `i`.
    pub fn children_idx(&self, i: usize) -> &[u32] {
        &self.entries[i].children
    }

    /// Blocks pointing directly at `digest`.
    pub fn children(&self, digest: &Digest) -> impl Iterator<Item = &BlockRef> + '_ {
        let kids = self.index_of(digest).map(|i| self.children_idx(i)).unwrap_or(&[]);
        kids.iter().map(|&c| &self.entries[c as usize].block)
    }

    pub fn agent_observes_idx(&self, agent: &AgentId, b: usize) -> bool {
        self.agents
            .get(agent)
            .is_some_and(|a| a.observed.contains(b))
    }

    /// Some `agent`-block in the blocklace observes `b`.
    pub fn agent_observes(&self, agent: &AgentId, b: &Digest) -> Result<bool, LaceError> {
        Ok(self.agent_observes_idx(agent, self.idx(b)?))
    }

    /// Indices of every block observed by some `agent`-block.
    pub fn observed_by(&self, agent: &AgentId) -> Option<&FixedBitSet> {
        self.agents.get(agent).map(|a| &a.observed)
    }

    pub fn equivocation_idx(&self, a: usize, b: usize) -> bool {
        a != b
            && self.entries[a].block.creator() == self.entries[b].block.creator()
            && !self.observes_idx(a, b)
            && !self.observes_idx(b, a)
    }

    /// Same creator, distinct, and neither observes the other.
    pub fn equivocation(&self, a: &Digest, b: &Digest) -> Result<bool, LaceError> {
        Ok(self.equivocation_idx(self.idx(a)?, self.idx(b)?))
    }

    /// A block observed by `a` that equivocates with `b`, if any.
    pub fn observed_equivocation_idx(&self, a: usize, b: usize) -> Option<usize> {
        let creator = self.entries[b].block.creator();
        self.agents[&creator]
            .blocks
            .iter()
            .map(|&i| i as usize)
            .find(|&i| self.observes_idx(a, i) && self.equivocation_idx(i, b))
    }

    /// `a` observes `b` and no block equivocating with `b`.
    pub fn block_approves(&self, a: &Digest, b: &Digest) -> Result<bool, LaceError> {
        let (a, b) = (self.idx(a)?, self.idx(b)?);
        Ok(self.block_approves_idx(a, b))
    }

    pub fn block_approves_idx(&self, a: usize, b: usize) -> bool {
        self.observes_idx(a, b) && self.observed_equivocation_idx(a, b).is_none()
    }

    /// Blocks not pointed to by any block, ascending by digest.
    pub fn tips(&self) -> impl Iterator<Item = &BlockHash> + '_ {
        self.tips.iter().map(|d| self.get(d).expect("tip present").hash())
    }

    /// Whether `from` has declared friendship towards `to`.
    pub fn declared_friend(&self, from: &AgentId, to: &AgentId) -> bool {
        self.friend_decls.contains(&(*from, *to))
    }

    /// Mutual friendship: both declarations are present.
    pub fn are_friends(&self, a: &AgentId, b: &AgentId) -> bool {
        a != b && self.declared_friend(a, b) && self.declared_friend(b, a)
    }

    /// Agents in a mutual friendship with `agent`, ascending.
    pub fn friends_of(&self, agent: &AgentId) -> Vec<AgentId> {
        self.friend_decls
            .range((*agent, AgentId::from_bytes([0; AGENT_ID_LEN]))..)
            .take_while(|(from, _)| from == agent)
            .filter(|(_, to)| self.declared_friend(to, agent) && to != agent)
            .map(|(_, to)| *to)
            .collect()
    }

    /// Number of friend declarations, which only grows.
    pub fn friend_declarations(&self) -> usize {
        self.friend_decls.len()
    }

    /// The blocks of `agent` oldest first, or a pair witnessing that they do
    /// not form a single chain from one genesis.
    pub fn personal_chain(&self, agent: &AgentId) -> Result<Vec<BlockRef>, ForkEvidence> {
        let Some(a) = self.agents.get(agent) else {
            return Ok(vec![]);
        };
        let depth = |i: usize| {
            a.blocks
                .iter()
                .filter(|&&j| self.observes_idx(i, j as usize))
                .count()
        };
        let mut order: Vec<(usize, usize)> = a
            .blocks
            .iter()
            .map(|&i| (depth(i as usize), i as usize))
            .collect();
        order.sort_unstable();
        for w in order.windows(2) {
            let (lo, hi) = (w[0].1, w[1].1);
            if !self.observes_idx(hi, lo) {
                return Err(ForkEvidence {
                    first: *self.entries[lo].block.hash(),
                    second: *self.entries[hi].block.hash(),
                });
            }
        }
        Ok(order
            .into_iter()
            .map(|(_, i)| self.entries[i].block.clone())
            .collect())
    }

    /// The most recent block of `agent` if its blocks form a chain.
    pub fn latest_of(&self, agent: &AgentId) -> Option<&BlockRef> {
        let a = self.agents.get(agent)?;
        let last = *a.blocks.last()? as usize;
        a.blocks
            .iter()
            .all(|&j| self.observes_idx(last, j as usize))
            .then(|| &self.entries[last].block)
    }
}

impl std::fmt::Debug for Blocklace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Blocklace")
            .field("blocks", &self.entries.len())
            .field("agents", &self.agents.len())
            .field("buffered", &self.buffer.blocks.len())
            .finish()
    }
}

impl Clone for Blocklace {
    fn clone(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    block: e.block.clone(),
                    ancestors: e.ancestors.clone(),
                    children: e.children.clone(),
                })
                .collect(),
            index: self.index.clone(),
            agents: self
                .agents
                .iter()
                .map(|(k, v)| {
                    (
                        *k,
                        AgentIndex {
                            blocks: v.blocks.clone(),
                            observed: v.observed.clone(),
                        },
                    )
                })
                .collect(),
            tips: self.tips.clone(),
            friend_decls: self.friend_decls.clone(),
            buffer: Buffer {
                blocks: self.buffer.blocks.clone(),
                waiting: self.buffer.waiting.clone(),
            },
            buffer_cap: self.buffer_cap,
        }
    }
}

/// Convenience for wrapping freshly created blocks.
pub fn shared(block: Block) -> BlockRef {
    Arc::new(block)
}
