//! Payment semantics over the blocklace.
//!
//! A transaction block in `r`-coins *consumes* the blocks it points to that
//! pay its creator in `r`-coins, and is *balanced* when its payments sum to
//! what it consumes. The latest self-payment of an agent in a currency
//! records its balance there. Sovereigns approve or disapprove foreign
//! payments in their currency, and traders only consume approved payments.

mod audit;
mod ops;
mod state;

use serde::{Deserialize, Serialize};

use crate::blocklace::{
    AgentId, ApprovalVerdict, Block, BlockHash, BlockRef, Blocklace, ForkEvidence, LaceError,
};

pub use audit::{audit, validate_block, Verdict, Violation};
pub use ops::{
    make_accept, make_approval, make_issue, make_mint_burn, make_redemption_claim, plan_repayment,
    repay, FlashError,
};
pub use state::{AgentState, SelfPayment};

/// One payment entry inside a transaction block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PaymentRef {
    pub block: BlockHash,
    pub recipient: AgentId,
    pub currency: AgentId,
    pub amount: u64,
}

impl PaymentRef {
    /// The payment to `recipient` inside `block`, if there is one.
    pub fn find(block: &Block, recipient: &AgentId) -> Option<Self> {
        let tx = block.transaction()?;
        Some(Self {
            block: *block.hash(),
            recipient: *recipient,
            currency: tx.currency,
            amount: tx.paid_to(recipient)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaymentStatus {
    Approved,
    Disapproved,
    Pending,
}

/// `b` consumes `c`: both are transactions in the same currency, `b` points
/// to `c`, and `c` pays `b`'s creator.
pub fn consumes(b: &Block, c: &Block) -> bool {
    let (Some(x), Some(y)) = (b.transaction(), c.transaction()) else {
        return false;
    };
    x.currency == y.currency && b.points_to(&c.digest()) && y.paid_to(&b.creator()).is_some()
}

/// The blocks `b` consumes, in pointer order.
pub fn consumed<'a>(b: &Block, lace: &'a Blocklace) -> Result<Vec<&'a BlockRef>, LaceError> {
    let mut out = Vec::new();
    for p in b.pointers() {
        let c = lace.block(&p.digest)?;
        if consumes(b, c) {
            out.push(c);
        }
    }
    Ok(out)
}

/// Coins flowing into `b`: payments to its creator in the blocks it consumes.
pub fn consumed_amount(b: &Block, lace: &Blocklace) -> Result<u128, LaceError> {
    let me = b.creator();
    Ok(consumed(b, lace)?
        .iter()
        .filter_map(|c| c.transaction()?.paid_to(&me))
        .map(u128::from)
        .sum())
}

/// Payments of `b` sum to the payments to its creator in the blocks it
/// consumes. False for non-transaction blocks.
pub fn is_balanced(b: &Block, lace: &Blocklace) -> Result<bool, LaceError> {
    let Some(tx) = b.transaction() else {
        return Ok(false);
    };
    Ok(tx.total() == consumed_amount(b, lace)?)
}

/// Approval state of a payment block as recorded by its currency's sovereign.
pub fn payment_status(b: &Block, lace: &Blocklace) -> PaymentStatus {
    let Some(tx) = b.transaction() else {
        return PaymentStatus::Pending;
    };
    if b.creator() == tx.currency {
        return PaymentStatus::Approved;
    }
    let mut status = PaymentStatus::Pending;
    for c in lace.children(&b.digest()) {
        let Some(a) = c.payload().approval() else { continue };
        if c.creator() != tx.currency || a.target.digest != b.digest() {
            continue;
        }
        match a.verdict {
            ApprovalVerdict::Disapprove { .. } => return PaymentStatus::Disapproved,
            ApprovalVerdict::Approve => status = PaymentStatus::Approved,
        }
    }
    status
}

/// A sovereign block that approves `b`: an approve verdict on `b` by the
/// currency's sovereign that observes no block equivocating with `b`.
pub fn approval_of<'a>(b: &Block, lace: &'a Blocklace) -> Option<&'a BlockRef> {
    let tx = b.transaction()?;
    let bi = lace.index_of(&b.digest())?;
    lace.children(&b.digest()).find(|c| {
        c.creator() == tx.currency
            && c.payload().approval().is_some_and(|a| {
                a.target.digest == b.digest() && a.verdict == ApprovalVerdict::Approve
            })
            && lace.block_approves_idx(lace.index_of(&c.digest()).expect("present"), bi)
    })
}

/// Accepted minus issued `r`-coins over `p`'s blocks. Self-payments are
/// excluded, except that a sovereign's blocks in its own currency contribute
/// the difference between what they pay out and what they consume, which is
/// the amount minted or burnt.
pub fn balance(p: &AgentId, r: &AgentId, lace: &Blocklace) -> Result<i128, ForkEvidence> {
    let chain = lace.personal_chain(p)?;
    let mut total: i128 = 0;
    for b in &chain {
        let Some(tx) = b.transaction() else { continue };
        if tx.currency != *r {
            continue;
        }
        let mut accepted: i128 = 0;
        let mut consumed_all: i128 = 0;
        for c in consumed(b, lace).expect("closed") {
            let z = c.transaction().and_then(|t| t.paid_to(p)).unwrap_or(0) as i128;
            consumed_all += z;
            if c.creator() != *p {
                accepted += z;
            }
        }
        let issued: i128 = tx
            .payments
            .iter()
            .filter(|x| x.recipient != *p)
            .map(|x| x.amount as i128)
            .sum();
        total += accepted - issued;
        if p == r {
            total += tx.total() as i128 - consumed_all;
        }
    }
    Ok(total)
}

/// Amount in `p`'s latest `r`-coin self-payment, if `p` has one and its
/// blocks form a chain.
pub fn last_self_payment(p: &AgentId, r: &AgentId, lace: &Blocklace) -> Option<u64> {
    let chain = lace.personal_chain(p).ok()?;
    chain.iter().rev().find_map(|b| {
        let tx = b.transaction()?;
        (tx.currency == *r).then(|| tx.paid_to(p)).flatten()
    })
}

#[cfg(test)]
mod tests;
