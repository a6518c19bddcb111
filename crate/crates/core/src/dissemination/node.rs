use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use fixedbitset::FixedBitSet;

use super::{befriend, needs};
use crate::blocklace::{
    create_block, verify_block, AgentId, ApprovalVerdict, BlockRef, Comment, Digest, Inserted,
    Keypair, LaceError, Payload, VerifyError, DEFAULT_BUFFER_CAP,
};
use crate::flashpay::{
    approval_of, make_accept, make_approval, make_issue, make_mint_burn, make_redemption_claim,
    payment_status, repay, AgentState, FlashError, PaymentRef, PaymentStatus,
};
use crate::simnet::adversary;

/// Tunables of a disseminating agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeConfig {
    /// Minimum ticks between two transmissions of one block to one friend.
    pub resend_after: u64,
    /// Capacity of the store for received blocks not (yet) needed.
    pub holding_cap: usize,
    pub buffer_cap: usize,
}

impl Default for NodeConfig {
    fn default() -> Self {
        Self {
            resend_after: 4,
            holding_cap: 4096,
            buffer_cap: DEFAULT_BUFFER_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApprovePolicy {
    /// Approve or disapprove per the correct block forms.
    Honest,
    Never,
    /// Approve every payment, ignoring equivocations.
    Always,
}

/// How an agent reacts to blocks it receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Policy {
    pub approve: ApprovePolicy,
    pub accept: bool,
    pub repay: bool,
}

impl Default for Policy {
    fn default() -> Self {
        Self {
            approve: ApprovePolicy::Honest,
            accept: true,
            repay: true,
        }
    }
}

/// An action an agent performs as soon as it becomes feasible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Intent {
    Befriend(AgentId),
    /// Raise the balance of one's own coins by `amount`.
    Mint { amount: u64 },
    /// Lower the balance of one's own coins by `amount`.
    Burn { amount: u64 },
    Issue {
        currency: AgentId,
        to: AgentId,
        amount: u64,
    },
    Redeem {
        sovereign: AgentId,
        amount: u64,
        preferences: Vec<AgentId>,
    },
    /// Two payments consuming the same self-payment. Freezes the agent.
    DoubleSpend {
        currency: AgentId,
        to: [AgentId; 2],
        amount: u64,
    },
    /// A payment exceeding the balance. Freezes the agent.
    Overspend {
        currency: AgentId,
        to: AgentId,
        amount: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReceiveOutcome {
    Inserted,
    Buffered,
    /// Not needed yet; kept in case a needed block turns out to point at it.
    Held,
    Duplicate,
    Rejected(VerifyError),
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub outcome: ReceiveOutcome,
    /// Blocks that entered the blocklace, in order.
    pub added: Vec<BlockRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Activation {
    pub created: Vec<BlockRef>,
    pub sends: Vec<(AgentId, BlockRef)>,
    /// Intents dropped as infeasible, with the reason.
    pub dropped: Vec<(Intent, String)>,
}

enum Attempt {
    Done(Vec<BlockRef>),
    Wait,
    Fail(String),
}

/// A disseminating agent: local state, reactions to received blocks,
/// pending intents, and the cordial send loop.
#[derive(Debug, Clone)]
pub struct Node {
    state: AgentState,
    config: NodeConfig,
    policy: Policy,
    frozen: bool,
    intents: VecDeque<Intent>,
    holding: BTreeMap<Digest, BlockRef>,
    holding_order: VecDeque<Digest>,
    /// Per declared friend: needed blocks not yet observed by the friend.
    pending: BTreeMap<AgentId, BTreeSet<usize>>,
    last_sent: HashMap<(AgentId, usize), u64>,
    to_approve: VecDeque<Digest>,
    to_accept: VecDeque<Digest>,
    friend_decls: usize,
}

impl Node {
    pub fn new(keys: Keypair, config: NodeConfig, policy: Policy) -> Self {
        let state = AgentState::with_lace(
            keys,
            crate::blocklace::Blocklace::with_buffer_cap(config.buffer_cap),
        );
        Self {
            state,
            config,
            policy,
            frozen: false,
            intents: VecDeque::new(),
            holding: BTreeMap::new(),
            holding_order: VecDeque::new(),
            pending: BTreeMap::new(),
            last_sent: HashMap::new(),
            to_approve: VecDeque::new(),
            to_accept: VecDeque::new(),
            friend_decls: 0,
        }
    }

    pub fn id(&self) -> AgentId {
        self.state.id()
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn push_intent(&mut self, intent: Intent) {
        self.intents.push_back(intent);
    }

    pub fn pending_intents(&self) -> usize {
        self.intents.len()
    }

    /// Reactions queued for the next activation.
    pub fn pending_reactions(&self) -> usize {
        self.to_approve.len() + self.to_accept.len()
    }

    pub fn held(&self) -> usize {
        self.holding.len()
    }

    /// Whether some friend still lacks a block it needs from this agent.
    pub fn owes(&self, friend: &AgentId) -> bool {
        let lace = self.state.lace();
        self.pending
            .get(friend)
            .is_some_and(|s| s.iter().any(|&i| !lace.agent_observes_idx(friend, i)))
    }

    /// Handles a block arriving from the network.
    pub fn receive(&mut self, block: BlockRef) -> Receipt {
        self.receive_checked(block, false)
    }

    /// As [`Node::receive`], for a block whose digest and signature the
    /// caller has already verified.
    pub fn receive_verified(&mut self, block: BlockRef) -> Receipt {
        self.receive_checked(block, true)
    }

    fn receive_checked(&mut self, block: BlockRef, verified: bool) -> Receipt {
        let d = block.digest();
        let lace = self.state.lace();
        if lace.contains(&d) || lace.is_buffered(&d) {
            return self.receipt(ReceiveOutcome::Duplicate, vec![]);
        }
        let was_held = self.holding.remove(&d).is_some();
        if !was_held && !verified {
            if let Err(e) = verify_block(&block) {
                return self.receipt(ReceiveOutcome::Rejected(e), vec![]);
            }
        }
        let lace = self.state.lace();
        if !needs(&self.id(), &block, lace) && !lace.is_awaited(&d) {
            self.hold(block);
            return self.receipt(ReceiveOutcome::Held, vec![]);
        }
        match self.admit(block) {
            Ok(added) => {
                let outcome = if self.state.lace().contains(&d) {
                    ReceiveOutcome::Inserted
                } else {
                    ReceiveOutcome::Buffered
                };
                let mut all = added.clone();
                all.extend(self.absorb(&added));
                self.receipt(outcome, all)
            }
            Err(_) => self.receipt(ReceiveOutcome::Overflow, vec![]),
        }
    }

    fn receipt(&self, outcome: ReceiveOutcome, added: Vec<BlockRef>) -> Receipt {
        Receipt { outcome, added }
    }

    fn hold(&mut self, block: BlockRef) {
        let d = block.digest();
        if self.holding.insert(d, block).is_none() {
            self.holding_order.push_back(d);
        }
        while self.holding.len() > self.config.holding_cap {
            let Some(old) = self.holding_order.pop_front() else { break };
            self.holding.remove(&old);
        }
    }

    /// Inserts `block`, pulling any held blocks it is missing.
    fn admit(&mut self, block: BlockRef) -> Result<Vec<BlockRef>, LaceError> {
        let mut added = Vec::new();
        let mut stack = vec![block];
        while let Some(b) = stack.pop() {
            match self.state.insert(b)? {
                Inserted::Added(v) => added.extend(v),
                Inserted::Buffered(missing) => {
                    for m in missing {
                        if let Some(h) = self.holding.remove(&m) {
                            stack.push(h);
                        }
                    }
                }
                Inserted::Duplicate => {}
            }
        }
        self.holding_order.retain(|d| self.holding.contains_key(d));
        Ok(added)
    }

    /// Bookkeeping for blocks that entered the blocklace. Returns any further
    /// blocks admitted from holding as a consequence.
    fn absorb(&mut self, added: &[BlockRef]) -> Vec<BlockRef> {
        let me = self.id();
        let mut new_friends = Vec::new();
        for b in added {
            let i = self.state.lace().index_of(&b.digest()).expect("added");
            for (q, set) in self.pending.iter_mut() {
                if needs(q, b, self.state.lace()) {
                    set.insert(i);
                }
            }
            if b.creator() == me {
                if let Payload::Friend(q) = b.payload() {
                    new_friends.push(*q);
                }
            } else {
                self.react(b);
            }
        }
        for q in new_friends {
            self.pending.entry(q).or_default();
            self.rescan(&q);
        }
        let mut more = Vec::new();
        if self.state.lace().friend_declarations() != self.friend_decls {
            self.friend_decls = self.state.lace().friend_declarations();
            let friends: Vec<AgentId> = self.pending.keys().copied().collect();
            for q in friends {
                self.rescan(&q);
            }
            let now_needed: Vec<Digest> = self
                .holding_order
                .iter()
                .filter(|d| needs(&me, &self.holding[*d], self.state.lace()))
                .copied()
                .collect();
            for d in now_needed {
                if let Some(b) = self.holding.remove(&d) {
                    if let Ok(v) = self.admit(b) {
                        more.extend(v);
                    }
                }
            }
            if !more.is_empty() {
                let again = self.absorb(&more.clone());
                more.extend(again);
            }
        }
        more
    }

    fn rescan(&mut self, q: &AgentId) {
        let lace = self.state.lace();
        let set: BTreeSet<usize> = lace
            .iter()
            .enumerate()
            .filter(|(i, b)| !lace.agent_observes_idx(q, *i) && needs(q, b, lace))
            .map(|(i, _)| i)
            .collect();
        self.pending.insert(*q, set);
    }

    fn react(&mut self, b: &BlockRef) {
        let me = self.id();
        let d = b.digest();
        if let Some(tx) = b.transaction() {
            let pays_other = tx.payments.iter().any(|x| x.recipient != b.creator());
            if tx.currency == me
                && pays_other
                && self.policy.approve != ApprovePolicy::Never
                && payment_status(b, self.state.lace()) == PaymentStatus::Pending
            {
                self.to_approve.push_back(d);
                if self.policy.approve == ApprovePolicy::Honest {
                    self.state.guard(d);
                }
            }
            if tx.paid_to(&me).is_some() && b.creator() == tx.currency {
                self.to_accept.push_back(d);
            }
        }
        if let Some(a) = b.payload().approval() {
            let lace = self.state.lace();
            let pays_me = lace.get(&a.target.digest).is_some_and(|t| {
                t.transaction()
                    .is_some_and(|tx| tx.currency == b.creator() && tx.paid_to(&me).is_some())
            });
            if a.verdict == ApprovalVerdict::Approve && pays_me {
                self.to_accept.push_back(a.target.digest);
            }
        }
    }

    /// Appends a block this agent created and does the bookkeeping.
    fn commit(&mut self, block: crate::blocklace::Block, out: &mut Vec<BlockRef>) {
        let b = self.state.append(block);
        out.push(b.clone());
        let more = self.absorb(std::slice::from_ref(&b));
        debug_assert!(more.iter().all(|m| m.creator() != self.id()));
    }

    /// One scheduling step: reactions, then intents, then (when `gossip`) a
    /// cordial round to every declared friend.
    pub fn activate(&mut self, now: u64, gossip: bool) -> Activation {
        let mut act = Activation::default();
        if self.state.last_block().is_none() {
            let g = create_block(self.state.keys(), Payload::Genesis, []);
            self.commit(g, &mut act.created);
        }
        if !self.frozen {
            self.run_approvals(&mut act.created);
            self.run_accepts(&mut act.created);
            self.run_intents(&mut act);
        }
        if gossip {
            act.sends = self.gossip(now);
        }
        act
    }

    fn run_approvals(&mut self, out: &mut Vec<BlockRef>) {
        let me = self.id();
        while let Some(t) = self.to_approve.pop_front() {
            let lace = self.state.lace();
            let Some(target) = lace.get(&t).cloned() else { continue };
            let decided = lace.children(&t).any(|c| {
                c.creator() == me && c.payload().approval().is_some_and(|a| a.target.digest == t)
            });
            if decided {
                self.state.unguard(&t);
                continue;
            }
            let block = match self.policy.approve {
                ApprovePolicy::Always => Ok(adversary::approve_blindly(&self.state, &target)),
                _ => make_approval(&self.state, &t),
            };
            self.state.unguard(&t);
            let Ok(block) = block else { continue };
            let approves = block
                .payload()
                .approval()
                .is_some_and(|a| a.verdict == ApprovalVerdict::Approve);
            self.commit(block, out);
            if approves && target.transaction().is_some_and(|tx| tx.paid_to(&me).is_some()) {
                self.to_accept.push_back(t);
            }
        }
    }

    fn run_accepts(&mut self, out: &mut Vec<BlockRef>) {
        if !self.policy.accept {
            self.to_accept.clear();
            return;
        }
        let me = self.id();
        while let Some(t) = self.to_accept.pop_front() {
            if self.state.is_consumed(&t) {
                continue;
            }
            let lace = self.state.lace();
            let Some(block) = lace.get(&t).cloned() else { continue };
            let Some(pay) = PaymentRef::find(&block, &me) else { continue };
            let approval = if block.creator() == pay.currency {
                None
            } else {
                match approval_of(&block, lace) {
                    Some(a) => Some(*a.hash()),
                    None => continue,
                }
            };
            let Ok(acc) = make_accept(&self.state, &pay, approval, Comment::None) else {
                continue;
            };
            self.commit(acc, out);
            let is_claim = pay.currency == me
                && block
                    .transaction()
                    .is_some_and(|tx| matches!(tx.comment, Comment::Redeem(_)));
            if is_claim && self.policy.repay {
                if let Ok(blocks) = repay(&mut self.state, &t) {
                    for b in blocks {
                        out.push(b.clone());
                        self.absorb(std::slice::from_ref(&b));
                    }
                }
            }
        }
    }

    fn run_intents(&mut self, act: &mut Activation) {
        while let Some(head) = self.intents.front().cloned() {
            match self.attempt(&head) {
                Attempt::Done(blocks) => {
                    self.intents.pop_front();
                    act.created.extend(blocks);
                }
                Attempt::Wait => break,
                Attempt::Fail(why) => {
                    self.intents.pop_front();
                    act.dropped.push((head, why));
                }
            }
            if self.frozen {
                break;
            }
        }
    }

    fn attempt(&mut self, intent: &Intent) -> Attempt {
        let me = self.id();
        let s = &self.state;
        let made: Result<Vec<crate::blocklace::Block>, FlashError> = match intent {
            Intent::Befriend(q) => match befriend(s, *q) {
                Ok(b) => Ok(vec![b]),
                Err(e) => return Attempt::Fail(e.to_string()),
            },
            Intent::Mint { amount } => {
                make_mint_burn(s, me, s.balance_in(&me) + amount, Comment::None).map(|b| vec![b])
            }
            Intent::Burn { amount } => match s.balance_in(&me).checked_sub(*amount) {
                Some(z) => make_mint_burn(s, me, z, Comment::None).map(|b| vec![b]),
                None => return Attempt::Wait,
            },
            Intent::Issue {
                currency,
                to,
                amount,
            } => make_issue(s, *currency, *to, *amount, Comment::None).map(|b| vec![b]),
            Intent::Redeem {
                sovereign,
                amount,
                preferences,
            } => make_redemption_claim(s, *sovereign, *amount, preferences.clone()).map(|b| vec![b]),
            Intent::DoubleSpend {
                currency,
                to,
                amount,
            } => adversary::double_spend(s, *currency, *to, *amount).map(|b| b.to_vec()),
            Intent::Overspend {
                currency,
                to,
                amount,
            } => adversary::overspend(s, *currency, *to, *amount).map(|b| vec![b]),
        };
        match made {
            Ok(blocks) => {
                let mut out = Vec::new();
                for b in blocks {
                    self.commit(b, &mut out);
                }
                if matches!(intent, Intent::DoubleSpend { .. } | Intent::Overspend { .. }) {
                    self.frozen = true;
                }
                Attempt::Done(out)
            }
            Err(FlashError::InsufficientBalance { .. }) | Err(FlashError::NoGenesis) => {
                Attempt::Wait
            }
            Err(e) => Attempt::Fail(e.to_string()),
        }
    }

    /// Blocks to send now: for each declared friend, the needed blocks it is
    /// not known to observe plus their unobserved ancestors, skipping any
    /// sent to that friend within the last `resend_after` ticks.
    pub fn gossip(&mut self, now: u64) -> Vec<(AgentId, BlockRef)> {
        let mut out = Vec::new();
        let lace = self.state.lace();
        for (q, set) in self.pending.iter_mut() {
            set.retain(|&i| !lace.agent_observes_idx(q, i));
            if set.is_empty() {
                continue;
            }
            let mut send = FixedBitSet::with_capacity(lace.len());
            for &i in set.iter() {
                send.union_with(lace.ancestors_idx(i));
            }
            for i in send.ones() {
                if lace.agent_observes_idx(q, i) {
                    continue;
                }
                let key = (*q, i);
                if let Some(&t) = self.last_sent.get(&key) {
                    if now < t + self.config.resend_after {
                        continue;
                    }
                }
                self.last_sent.insert(key, now);
                out.push((*q, lace.by_index(i).clone()));
            }
        }
        out
    }
}
