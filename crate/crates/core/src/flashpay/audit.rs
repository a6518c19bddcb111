use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;

use super::{consumes, is_balanced};
use crate::blocklace::{
    AgentId, ApprovalVerdict, Block, BlockHash, Blocklace, Comment, LaceError, Payload,
    MAX_FREE_TEXT,
};

/// Classification of a block against the correct block forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    CorrectGenesis,
    CorrectFriend,
    CorrectIssue,
    CorrectAccept,
    CorrectMintBurn,
    CorrectApproval,
    /// Never empty.
    Incorrect(Vec<Violation>),
}

impl Verdict {
    pub fn is_correct(&self) -> bool {
        !matches!(self, Verdict::Incorrect(_))
    }
}

/// Signed evidence of a safety violation. Every variant names blocks that
/// together prove the violation to any third party.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    /// A transaction whose payments differ from what it consumes, other than
    /// a sovereign minting or burning its own coins.
    Unbalanced { block: BlockHash },
    /// Two blocks by one agent, neither observing the other.
    Equivocation { first: BlockHash, second: BlockHash },
    /// One payment consumed by two blocks of its recipient.
    DoubleConsume {
        consumed: BlockHash,
        first: BlockHash,
        second: BlockHash,
    },
    /// A foreign payment consumed without a pointer to an approval of it.
    UnapprovedAccept { block: BlockHash },
    /// An approval that observes a block equivocating with its target.
    ApprovedFork { approval: BlockHash, fork: BlockHash },
    /// A non-genesis block not pointing at its creator's preceding block.
    MissingSelfPointer { block: BlockHash },
    /// A block that fits none of the correct forms.
    Malformed { block: BlockHash, reason: String },
}

impl Violation {
    pub const KINDS: [&'static str; 7] = [
        "unbalanced",
        "equivocation",
        "double_consume",
        "unapproved_accept",
        "approved_fork",
        "missing_self_pointer",
        "malformed",
    ];

    pub fn kind(&self) -> &'static str {
        match self {
            Violation::Unbalanced { .. } => "unbalanced",
            Violation::Equivocation { .. } => "equivocation",
            Violation::DoubleConsume { .. } => "double_consume",
            Violation::UnapprovedAccept { .. } => "unapproved_accept",
            Violation::ApprovedFork { .. } => "approved_fork",
            Violation::MissingSelfPointer { .. } => "missing_self_pointer",
            Violation::Malformed { .. } => "malformed",
        }
    }

    /// The agent whose signed blocks constitute the evidence.
    pub fn culprit(&self) -> AgentId {
        match self {
            Violation::Unbalanced { block }
            | Violation::UnapprovedAccept { block }
            | Violation::MissingSelfPointer { block }
            | Violation::Malformed { block, .. } => block.creator,
            Violation::Equivocation { first, .. } => first.creator,
            Violation::DoubleConsume { first, .. } => first.creator,
            Violation::ApprovedFork { approval, .. } => approval.creator,
        }
    }

    /// Blocks constituting the evidence.
    pub fn evidence(&self) -> Vec<BlockHash> {
        match self {
            Violation::Unbalanced { block }
            | Violation::UnapprovedAccept { block }
            | Violation::MissingSelfPointer { block }
            | Violation::Malformed { block, .. } => vec![*block],
            Violation::Equivocation { first, second } => vec![*first, *second],
            Violation::DoubleConsume {
                consumed,
                first,
                second,
            } => vec![*consumed, *first, *second],
            Violation::ApprovedFork { approval, fork } => vec![*approval, *fork],
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} by {}", self.kind(), self.culprit().short())?;
        for h in self.evidence() {
            write!(f, " {}", h.digest.short())?;
        }
        if let Violation::Malformed { reason, .. } = self {
            write!(f, " ({reason})")?;
        }
        Ok(())
    }
}

/// A block placed against a blocklace it may or may not belong to.
struct Placed<'a> {
    lace: &'a Blocklace,
    block: &'a Block,
    idx: Option<usize>,
    /// Strict ancestors of the block.
    anc: FixedBitSet,
}

impl<'a> Placed<'a> {
    fn new(block: &'a Block, lace: &'a Blocklace) -> Result<Self, LaceError> {
        let mut anc = FixedBitSet::with_capacity(lace.len());
        for p in block.pointers() {
            let i = lace.index_of(&p.digest).ok_or(LaceError::NotPresent(p.digest))?;
            anc.union_with(lace.ancestors_idx(i));
        }
        Ok(Self {
            lace,
            block,
            idx: lace.index_of(&block.digest()),
            anc,
        })
    }

    fn observes(&self, i: usize) -> bool {
        self.anc.contains(i) || Some(i) == self.idx
    }

    fn observed_by(&self, i: usize) -> bool {
        self.idx.is_some_and(|me| self.lace.observes_idx(i, me))
    }

    /// Indices of the creator's other blocks this block observes.
    fn own_ancestors(&self) -> Vec<usize> {
        let me = self.block.creator();
        self.lace
            .blocks_of(&me)
            .map(|b| self.lace.index_of(&b.digest()).expect("present"))
            .filter(|&i| Some(i) != self.idx && self.anc.contains(i))
            .collect()
    }

    fn pointed(&self, digest: &crate::blocklace::Digest) -> Option<usize> {
        self.block
            .points_to(digest)
            .then(|| self.lace.index_of(digest))
            .flatten()
    }
}

/// Classifies `b` against `lace`. `b` need not be in `lace`, but all of its
/// pointers must resolve there.
pub fn validate_block(b: &Block, lace: &Blocklace) -> Result<Verdict, LaceError> {
    let placed = Placed::new(b, lace)?;
    let mut v = Vec::new();
    let form = local_violations(&placed, &mut v);
    // Equivocations and double consumption against the rest of the lace.
    let me = b.creator();
    for other in lace.blocks_of(&me) {
        let i = lace.index_of(&other.digest()).expect("present");
        if Some(i) == placed.idx {
            continue;
        }
        if !placed.observes(i) && !placed.observed_by(i) {
            v.push(ordered_equivocation(b.hash(), other.hash()));
        }
    }
    for p in b.pointers() {
        let c = lace.get(&p.digest).expect("resolved");
        if !consumes(b, c) {
            continue;
        }
        for rival in lace.children(&p.digest) {
            if rival.digest() != b.digest() && rival.creator() == me && consumes(rival, c) {
                let (first, second) = ordered(b.hash(), rival.hash());
                v.push(Violation::DoubleConsume {
                    consumed: *p,
                    first,
                    second,
                });
            }
        }
    }
    if v.is_empty() {
        Ok(form.expect("a block without violations has a form"))
    } else {
        v.sort();
        v.dedup();
        Ok(Verdict::Incorrect(v))
    }
}

fn ordered(a: &BlockHash, b: &BlockHash) -> (BlockHash, BlockHash) {
    if a <= b {
        (*a, *b)
    } else {
        (*b, *a)
    }
}

fn ordered_equivocation(a: &BlockHash, b: &BlockHash) -> Violation {
    let (first, second) = ordered(a, b);
    Violation::Equivocation { first, second }
}

/// Violations visible from the block and its ancestry alone. Returns the
/// block's form when it fits one.
fn local_violations(pl: &Placed<'_>, v: &mut Vec<Violation>) -> Option<Verdict> {
    let b = pl.block;
    let h = *b.hash();
    let malformed = |v: &mut Vec<Violation>, reason: &str| {
        v.push(Violation::Malformed {
            block: h,
            reason: reason.to_owned(),
        })
    };

    if let Payload::Genesis = b.payload() {
        if !b.pointers().is_empty() {
            malformed(v, "genesis payload with pointers");
            return None;
        }
        return Some(Verdict::CorrectGenesis);
    }
    if !self_pointer_ok(pl) {
        v.push(Violation::MissingSelfPointer { block: h });
    }
    let form = match b.payload() {
        Payload::Genesis => unreachable!(),
        Payload::Friend(q) => {
            if *q == b.creator() {
                malformed(v, "friendship with self");
                None
            } else {
                Some(Verdict::CorrectFriend)
            }
        }
        Payload::Approval(_) => approval_form(pl, v),
        Payload::Transaction(_) => transaction_form(pl, v),
    };
    if v.is_empty() {
        form
    } else {
        None
    }
}

/// Non-genesis blocks point at the creator's preceding block: some
/// self-pointer observes every other block of the creator this block
/// observes.
fn self_pointer_ok(pl: &Placed<'_>) -> bool {
    let own = pl.own_ancestors();
    pl.block.self_pointers().any(|p| {
        let Some(i) = pl.lace.index_of(&p.digest) else {
            return false;
        };
        own.iter().all(|&j| pl.lace.observes_idx(i, j))
    })
}

fn approval_form(pl: &Placed<'_>, v: &mut Vec<Violation>) -> Option<Verdict> {
    let b = pl.block;
    let h = *b.hash();
    let a = b.payload().approval().expect("approval payload");
    let mut bad = |reason: &str| {
        v.push(Violation::Malformed {
            block: h,
            reason: reason.to_owned(),
        });
        None
    };
    let Some(ti) = pl.pointed(&a.target.digest) else {
        return bad("approval does not point at its target");
    };
    let target = pl.lace.by_index(ti);
    let Some(tx) = target.transaction() else {
        return bad("approval target is not a transaction");
    };
    if tx.currency != b.creator() || target.creator() == b.creator() {
        return bad("approval target is not a foreign payment in the approver's currency");
    }
    let balanced = is_balanced(target, pl.lace).expect("closed");
    let creator = target.creator();
    let forks: Vec<usize> = pl
        .lace
        .blocks_of(&creator)
        .map(|x| pl.lace.index_of(&x.digest()).expect("present"))
        .filter(|&i| pl.observes(i) && pl.lace.equivocation_idx(i, ti))
        .collect();
    match a.verdict {
        ApprovalVerdict::Approve => {
            if !balanced {
                return bad("approves an unbalanced payment");
            }
            for f in forks {
                v.push(Violation::ApprovedFork {
                    approval: h,
                    fork: *pl.lace.by_index(f).hash(),
                });
            }
        }
        ApprovalVerdict::Disapprove { evidence } => {
            let Some(ei) = pl.pointed(&evidence.digest) else {
                return bad("disapproval does not point at its evidence");
            };
            let founded = if ei == ti {
                !balanced
            } else {
                pl.lace.equivocation_idx(ei, ti)
            };
            if !founded {
                return bad("disapproval evidence proves nothing");
            }
        }
    }
    v.is_empty().then_some(Verdict::CorrectApproval)
}

fn transaction_form(pl: &Placed<'_>, v: &mut Vec<Violation>) -> Option<Verdict> {
    let b = pl.block;
    let h = *b.hash();
    let me = b.creator();
    let tx = b.transaction().expect("transaction payload");
    let r = tx.currency;
    let bad = |v: &mut Vec<Violation>, reason: &str| {
        v.push(Violation::Malformed {
            block: h,
            reason: reason.to_owned(),
        })
    };

    if tx.payments.is_empty() {
        bad(v, "transaction without payments");
    }
    let recipients: BTreeSet<AgentId> = tx.payments.iter().map(|p| p.recipient).collect();
    if recipients.len() != tx.payments.len() {
        bad(v, "two payments to one recipient");
    }
    match &tx.comment {
        Comment::Redeem(prefs) => {
            let distinct: BTreeSet<_> = prefs.iter().collect();
            if prefs.is_empty() || distinct.len() != prefs.len() {
                bad(v, "redemption preferences empty or repeated");
            }
        }
        Comment::FreeText(s) if s.len() > MAX_FREE_TEXT => bad(v, "comment too long"),
        _ => {}
    }

    let mut own_in: Vec<usize> = Vec::new();
    let mut foreign_in: Vec<usize> = Vec::new();
    let mut inflow: u128 = 0;
    for p in b.pointers() {
        let i = pl.lace.index_of(&p.digest).expect("resolved");
        let c = pl.lace.by_index(i);
        if !consumes(b, c) {
            continue;
        }
        inflow += c.transaction().and_then(|t| t.paid_to(&me)).unwrap_or(0) as u128;
        if c.creator() == me {
            own_in.push(i);
        } else {
            foreign_in.push(i);
        }
    }
    let balanced = inflow == tx.total();

    // The latest observed self-payment in this currency must be consumed, and
    // no other own block may be.
    let own_payments: Vec<usize> = pl
        .own_ancestors()
        .into_iter()
        .filter(|&i| {
            pl.lace
                .by_index(i)
                .transaction()
                .is_some_and(|t| t.currency == r && t.paid_to(&me).is_some())
        })
        .collect();
    let latest = own_payments
        .iter()
        .copied()
        .find(|&i| own_payments.iter().all(|&j| pl.lace.observes_idx(i, j)));
    match (latest, own_in.as_slice()) {
        (None, []) => {}
        (Some(l), [c]) if *c == l => {}
        (None, _) if own_payments.len() > 1 => {}
        _ => bad(v, "does not consume exactly the latest own self-payment"),
    }

    // Finality: a trader consumes foreign payments only when approved. A
    // sovereign's own payment block approves itself.
    if me != r {
        for &f in &foreign_in {
            let approved = pl.lace.by_index(f).creator() == r || b.pointers().iter().any(|p| {
                let Some(ai) = pl.lace.index_of(&p.digest) else {
                    return false;
                };
                let ab = pl.lace.by_index(ai);
                ab.creator() == r
                    && ab.payload().approval().is_some_and(|a| {
                        a.verdict == ApprovalVerdict::Approve
                            && a.target.digest == pl.lace.by_index(f).digest()
                    })
                    && pl.lace.block_approves_idx(ai, f)
            });
            if !approved {
                v.push(Violation::UnapprovedAccept { block: h });
            }
        }
    }

    let others: Vec<_> = tx.payments.iter().filter(|p| p.recipient != me).collect();
    let self_paid = tx.paid_to(&me);
    let form = if me == r && others.is_empty() {
        if !foreign_in.is_empty() && balanced {
            Verdict::CorrectAccept
        } else {
            Verdict::CorrectMintBurn
        }
    } else if !balanced {
        v.push(Violation::Unbalanced { block: h });
        return None;
    } else if others.len() == 1
        && self_paid.is_some()
        && tx.payments.len() == 2
        && foreign_in.is_empty()
        && others[0].amount > 0
    {
        Verdict::CorrectIssue
    } else if others.is_empty()
        && me != r
        && foreign_in.len() == 1
        && self_paid.is_some_and(|z| z > 0)
    {
        Verdict::CorrectAccept
    } else {
        bad(v, "transaction fits no correct form");
        return None;
    };
    v.is_empty().then_some(form)
}

/// Every detectable safety violation in `lace`, sorted.
///
/// Equivocations are reported as minimal pairs: a pair is omitted when an
/// earlier block of one side already equivocates with the other side.
pub fn audit(lace: &Blocklace) -> Vec<Violation> {
    let mut out = BTreeSet::new();
    for b in lace.iter() {
        let pl = Placed::new(b, lace).expect("closed");
        let mut v = Vec::new();
        local_violations(&pl, &mut v);
        out.extend(v);
    }
    let agents: Vec<AgentId> = lace.agents().copied().collect();
    for p in agents {
        let own: Vec<usize> = lace
            .blocks_of(&p)
            .map(|b| lace.index_of(&b.digest()).expect("present"))
            .collect();
        let strict_own = |x: usize| own.iter().copied().filter(move |&y| y != x && lace.observes_idx(x, y));
        for (k, &a) in own.iter().enumerate() {
            for &b in &own[k + 1..] {
                if !lace.equivocation_idx(a, b) {
                    continue;
                }
                let minimal = !strict_own(a).any(|a2| lace.equivocation_idx(a2, b))
                    && !strict_own(b).any(|b2| lace.equivocation_idx(a, b2));
                if minimal {
                    out.insert(ordered_equivocation(lace.by_index(a).hash(), lace.by_index(b).hash()));
                }
            }
        }
    }
    for c in lace.iter() {
        let mut by: Vec<&BlockHash> = lace
            .children(&c.digest())
            .filter(|x| consumes(x, c))
            .map(|x| x.hash())
            .collect();
        by.sort();
        for (k, x) in by.iter().enumerate() {
            for y in &by[k + 1..] {
                if x.creator == y.creator {
                    out.insert(Violation::DoubleConsume {
                        consumed: *c.hash(),
                        first: **x,
                        second: **y,
                    });
                }
            }
        }
    }
    out.into_iter().collect()
}
