//! Cordial dissemination: friends send each other every block the other
//! needs and is not yet known to have.
//!
//! What a friend already has is inferred from its own blocks: anything a
//! friend's block observes, the friend holds. There are no separate
//! acknowledgements.

mod node;

use std::collections::{BTreeMap, BTreeSet};

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::blocklace::{create_block, AgentId, Block, BlockRef, Blocklace, Digest, Payload};
use crate::flashpay::AgentState;

pub use node::{Activation, Intent, Node, NodeConfig, Policy, ApprovePolicy, Receipt, ReceiveOutcome};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DisseminationError {
    #[error("an agent cannot befriend itself")]
    SelfFriend,
    #[error("agent has no genesis block yet")]
    NoGenesis,
}

/// Whether `q` needs `b` given what `lace` shows:
///
/// 1. `b` is by a friend of `q`;
/// 2. `b` pays `q`;
/// 3. `b` is a payment in `q`'s currency by another agent;
/// 4. `b` is a sovereign's verdict on a payment issued by or paying `q`;
/// 5. `b` declares friendship towards `q`.
pub fn needs(q: &AgentId, b: &Block, lace: &Blocklace) -> bool {
    let creator = b.creator();
    if creator == *q {
        return false;
    }
    if lace.are_friends(q, &creator) {
        return true;
    }
    match b.payload() {
        Payload::Transaction(tx) => tx.paid_to(q).is_some() || tx.currency == *q,
        Payload::Approval(a) => lace.get(&a.target.digest).is_some_and(|t| {
            t.creator() == *q || t.transaction().is_some_and(|tx| tx.paid_to(q).is_some())
        }),
        Payload::Friend(other) => other == q,
        Payload::Genesis => false,
    }
}

/// Declares friendship towards `other`. The friendship holds once `other`
/// declares it back.
pub fn befriend(state: &AgentState, other: AgentId) -> Result<Block, DisseminationError> {
    if other == state.id() {
        return Err(DisseminationError::SelfFriend);
    }
    if state.last_block().is_none() {
        return Err(DisseminationError::NoGenesis);
    }
    let pointers = state.pointers_for(None, &[], None);
    Ok(create_block(state.keys(), Payload::Friend(other), pointers))
}

/// Blocks this agent can prove `friend` observes.
#[derive(Debug, Clone, Copy)]
pub struct KnowledgeFrontier<'a> {
    lace: &'a Blocklace,
    observed: Option<&'a FixedBitSet>,
}

impl<'a> KnowledgeFrontier<'a> {
    pub fn of(lace: &'a Blocklace, friend: &AgentId) -> Self {
        Self {
            lace,
            observed: lace.observed_by(friend),
        }
    }

    pub fn contains(&self, digest: &Digest) -> bool {
        match (self.observed, self.lace.index_of(digest)) {
            (Some(o), Some(i)) => o.contains(i),
            _ => false,
        }
    }

    pub fn contains_idx(&self, i: usize) -> bool {
        self.observed.is_some_and(|o| o.contains(i))
    }

    pub fn len(&self) -> usize {
        self.observed.map_or(0, |o| o.count_ones(..))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Every block in `state`'s blocklace that `friend` needs and is not known
/// to have, together with the ancestors of those blocks `friend` is not known
/// to have, in insertion (hence topological) order.
pub fn cordial_round(state: &AgentState, friend: &AgentId) -> Vec<BlockRef> {
    let lace = state.lace();
    let frontier = KnowledgeFrontier::of(lace, friend);
    let mut send = FixedBitSet::with_capacity(lace.len());
    for (i, b) in lace.iter().enumerate() {
        if !frontier.contains_idx(i) && !send.contains(i) && needs(friend, b, lace) {
            send.union_with(lace.ancestors_idx(i));
        }
    }
    send.ones()
        .filter(|&i| !frontier.contains_idx(i))
        .map(|i| lace.by_index(i).clone())
        .collect()
}

/// Undirected friendships: an edge for every pair of mutual declarations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SocialGraph {
    adjacency: BTreeMap<AgentId, BTreeSet<AgentId>>,
}

impl SocialGraph {
    pub fn of(lace: &Blocklace) -> Self {
        let mut g = Self::default();
        let agents: Vec<AgentId> = lace.agents().copied().collect();
        for a in &agents {
            for b in lace.friends_of(a) {
                g.adjacency.entry(*a).or_default().insert(b);
            }
        }
        g
    }

    pub fn from_edges(edges: impl IntoIterator<Item = (AgentId, AgentId)>) -> Self {
        let mut g = Self::default();
        for (a, b) in edges {
            if a != b {
                g.adjacency.entry(a).or_default().insert(b);
                g.adjacency.entry(b).or_default().insert(a);
            }
        }
        g
    }

    pub fn are_friends(&self, a: &AgentId, b: &AgentId) -> bool {
        self.adjacency.get(a).is_some_and(|n| n.contains(b))
    }

    pub fn neighbours(&self, a: &AgentId) -> impl Iterator<Item = &AgentId> + '_ {
        self.adjacency.get(a).into_iter().flatten()
    }

    /// Edges `(a, b)` with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.adjacency
            .iter()
            .flat_map(|(a, n)| n.iter().filter(move |b| a < *b).map(move |b| (*a, *b)))
    }

    /// An agent that is, or is a friend of, each of `agents`. Each of the
    /// agents counts as its own friend here, so a star centre among them
    /// qualifies.
    pub fn common_friend(&self, agents: &[AgentId]) -> Option<AgentId> {
        let mut candidates: BTreeSet<AgentId> = self.adjacency.keys().copied().collect();
        candidates.extend(agents.iter().copied());
        candidates.into_iter().find(|c| {
            agents
                .iter()
                .all(|a| a == c || self.are_friends(a, c))
        })
    }
}

#[cfg(test)]
mod tests;
