use std::collections::{BTreeMap, BTreeSet};

use fixedbitset::FixedBitSet;

use crate::blocklace::{
    shared, AgentId, Block, BlockHash, BlockRef, Blocklace, Digest, Inserted, Keypair, LaceError,
    Payload,
};

/// The latest self-payment of an agent in one currency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelfPayment {
    pub block: BlockHash,
    pub amount: u64,
}

/// One agent's identity and local view.
///
/// Derived fields track the agent's own chain and are updated for every block
/// that enters the blocklace, whichever way it arrives.
#[derive(Debug, Clone)]
pub struct AgentState {
    keys: Keypair,
    lace: Blocklace,
    last: Option<BlockHash>,
    holdings: BTreeMap<AgentId, SelfPayment>,
    consumed: BTreeSet<Digest>,
    /// Unsettled foreign payments in this agent's currency. New blocks avoid
    /// observing them, except the one a block is about.
    guarded: BTreeSet<Digest>,
}

impl AgentState {
    pub fn new(keys: Keypair) -> Self {
        Self::with_lace(keys, Blocklace::new())
    }

    pub fn with_lace(keys: Keypair, lace: Blocklace) -> Self {
        let mut s = Self {
            keys,
            lace: Blocklace::new(),
            last: None,
            holdings: BTreeMap::new(),
            consumed: BTreeSet::new(),
            guarded: BTreeSet::new(),
        };
        for b in lace.iter() {
            s.insert(b.clone()).expect("source blocklace is closed");
        }
        s
    }

    pub fn id(&self) -> AgentId {
        self.keys.id()
    }

    pub fn keys(&self) -> &Keypair {
        &self.keys
    }

    pub fn lace(&self) -> &Blocklace {
        &self.lace
    }

    /// The agent's most recent block.
    pub fn last_block(&self) -> Option<&BlockHash> {
        self.last.as_ref()
    }

    pub fn holding(&self, currency: &AgentId) -> Option<SelfPayment> {
        self.holdings.get(currency).copied()
    }

    /// Balance recorded by the latest self-payment, 0 if none.
    pub fn balance_in(&self, currency: &AgentId) -> u64 {
        self.holding(currency).map_or(0, |h| h.amount)
    }

    /// Currencies with a recorded self-payment and their balances.
    pub fn holdings(&self) -> impl Iterator<Item = (AgentId, u64)> + '_ {
        self.holdings.iter().map(|(c, h)| (*c, h.amount))
    }

    /// Whether one of this agent's blocks consumes `digest`.
    pub fn is_consumed(&self, digest: &Digest) -> bool {
        self.consumed.contains(digest)
    }

    /// Agents this agent has declared friendship towards, ascending.
    pub fn declared_friends(&self) -> Vec<AgentId> {
        let me = self.id();
        self.lace
            .blocks_of(&me)
            .filter_map(|b| match b.payload() {
                Payload::Friend(q) => Some(*q),
                _ => None,
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn guard(&mut self, digest: Digest) {
        self.guarded.insert(digest);
    }

    pub fn unguard(&mut self, digest: &Digest) {
        self.guarded.remove(digest);
    }

    pub fn guarded(&self) -> &BTreeSet<Digest> {
        &self.guarded
    }

    /// Inserts a received block; own-chain bookkeeping follows every block
    /// that actually enters the blocklace.
    pub fn insert(&mut self, block: BlockRef) -> Result<Inserted, LaceError> {
        let out = self.lace.insert(block)?;
        for b in out.added() {
            if b.creator() == self.id() {
                self.track_own(b);
            }
        }
        Ok(out)
    }

    /// Inserts a block this agent just created.
    pub fn append(&mut self, block: Block) -> BlockRef {
        let b = shared(block);
        let out = self.insert(b.clone()).expect("own block");
        debug_assert!(
            matches!(out, Inserted::Added(_)),
            "own block must point only at present blocks"
        );
        b
    }

    fn track_own(&mut self, b: &BlockRef) {
        let newest = self
            .last
            .is_none_or(|l| self.lace.observes(&b.digest(), &l.digest).unwrap_or(false));
        if newest {
            self.last = Some(*b.hash());
        }
        let Some(tx) = b.transaction() else { return };
        let me = self.id();
        for p in b.pointers() {
            let c = self.lace.get(&p.digest).expect("closed");
            if super::consumes(b, c) {
                self.consumed.insert(p.digest);
            }
        }
        if let Some(amount) = tx.paid_to(&me) {
            let newer = self.holdings.get(&tx.currency).is_none_or(|h| {
                self.lace
                    .observes(&b.digest(), &h.block.digest)
                    .unwrap_or(false)
            });
            if newer {
                self.holdings.insert(
                    tx.currency,
                    SelfPayment {
                        block: *b.hash(),
                        amount,
                    },
                );
            }
        }
    }

    /// Pointer set for a new block: the previous own block, the `required`
    /// pointers, and every tip that is safe to observe.
    ///
    /// A tip is skipped if it is a `currency` transaction paying this agent
    /// (pointing at it would consume it), or if it observes a guarded payment
    /// other than `about`.
    pub(crate) fn pointers_for(
        &self,
        currency: Option<AgentId>,
        required: &[BlockHash],
        about: Option<Digest>,
    ) -> Vec<BlockHash> {
        let me = self.id();
        let guarded: Vec<usize> = self
            .guarded
            .iter()
            .filter(|d| Some(**d) != about)
            .filter_map(|d| self.lace.index_of(d))
            .collect();
        let mut out: Vec<BlockHash> = self.last.into_iter().chain(required.iter().copied()).collect();
        for tip in self.lace.tips() {
            if out.iter().any(|p| p.digest == tip.digest) {
                continue;
            }
            let b = self.lace.get(&tip.digest).expect("tip present");
            if let (Some(c), Some(tx)) = (currency, b.transaction()) {
                if tx.currency == c && tx.paid_to(&me).is_some() {
                    continue;
                }
            }
            let i = self.lace.index_of(&tip.digest).expect("tip present");
            if guarded.iter().any(|&g| self.lace.observes_idx(i, g)) {
                continue;
            }
            out.push(*tip);
        }
        out
    }

    /// Ancestors of a prospective block with the given pointers.
    pub(crate) fn observed_through(&self, pointers: &[BlockHash]) -> FixedBitSet {
        let mut anc = FixedBitSet::with_capacity(self.lace.len());
        for p in pointers {
            if let Some(i) = self.lace.index_of(&p.digest) {
                anc.union_with(self.lace.ancestors_idx(i));
            }
        }
        anc
    }
}
