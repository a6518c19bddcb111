use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{is_balanced, AgentState, PaymentRef};
use crate::blocklace::{
    create_block, AgentId, Approval, ApprovalVerdict, Block, BlockHash, BlockRef, Comment, Digest,
    Payload, Payment, Transaction, MAX_FREE_TEXT,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlashError {
    #[error("balance {have} is below {need}")]
    InsufficientBalance { have: u64, need: u64 },
    #[error("cannot pay oneself")]
    SelfTarget,
    #[error("payments must be positive")]
    ZeroAmount,
    #[error("payment is not approved by its sovereign")]
    NotApproved,
    #[error("payment was already consumed")]
    AlreadyConsumed,
    #[error("only the sovereign of a currency may do this")]
    NotSovereign,
    #[error("block {0:?} is not known")]
    TargetUnknown(Digest),
    #[error("block does not pay this agent")]
    NotRecipient,
    #[error("redemption needs at least one preferred currency")]
    EmptyPreferences,
    #[error("redemption preferences repeat an agent")]
    DuplicatePreference,
    #[error("comment exceeds {MAX_FREE_TEXT} bytes")]
    CommentTooLong,
    #[error("agent has no genesis block yet")]
    NoGenesis,
    #[error("block is not a redemption claim against this agent")]
    NotAClaim,
}

fn check_comment(c: &Comment) -> Result<(), FlashError> {
    match c {
        Comment::FreeText(s) if s.len() > MAX_FREE_TEXT => Err(FlashError::CommentTooLong),
        Comment::Redeem(p) if p.is_empty() => Err(FlashError::EmptyPreferences),
        Comment::Redeem(p) if p.iter().collect::<BTreeSet<_>>().len() != p.len() => {
            Err(FlashError::DuplicatePreference)
        }
        _ => Ok(()),
    }
}

fn started(state: &AgentState) -> Result<(), FlashError> {
    state.last_block().map(|_| ()).ok_or(FlashError::NoGenesis)
}

/// A balanced payment of `amount` `currency`-coins to `to`, consuming the
/// agent's latest self-payment in that currency.
pub fn make_issue(
    state: &AgentState,
    currency: AgentId,
    to: AgentId,
    amount: u64,
    comment: Comment,
) -> Result<Block, FlashError> {
    started(state)?;
    let me = state.id();
    if to == me {
        return Err(FlashError::SelfTarget);
    }
    if amount == 0 {
        return Err(FlashError::ZeroAmount);
    }
    check_comment(&comment)?;
    let have = state.balance_in(&currency);
    let Some(holding) = state.holding(&currency).filter(|_| have >= amount) else {
        return Err(FlashError::InsufficientBalance { have, need: amount });
    };
    let payload = Payload::Transaction(Transaction {
        currency,
        payments: vec![Payment::new(to, amount), Payment::new(me, have - amount)],
        comment,
    });
    let pointers = state.pointers_for(Some(currency), &[holding.block], None);
    Ok(create_block(state.keys(), payload, pointers))
}

/// Consumes an incoming payment into a new self-payment.
///
/// A payment by a trader in a foreign currency needs `approval`, an
/// approving block by the sovereign. Payments issued by the sovereign itself,
/// and a sovereign accepting its own coins, need none.
pub fn make_accept(
    state: &AgentState,
    incoming: &PaymentRef,
    approval: Option<BlockHash>,
    comment: Comment,
) -> Result<Block, FlashError> {
    started(state)?;
    let me = state.id();
    let lace = state.lace();
    let digest = incoming.block.digest;
    let Some(bi) = lace.index_of(&digest) else {
        return Err(FlashError::TargetUnknown(digest));
    };
    let block = lace.by_index(bi);
    let Some(pay) = PaymentRef::find(block, &me) else {
        return Err(FlashError::NotRecipient);
    };
    if incoming.recipient != me || block.creator() == me || pay.currency != incoming.currency {
        return Err(FlashError::NotRecipient);
    }
    if pay.amount == 0 {
        return Err(FlashError::ZeroAmount);
    }
    check_comment(&comment)?;
    if state.is_consumed(&digest) {
        return Err(FlashError::AlreadyConsumed);
    }
    let currency = pay.currency;
    // A sovereign's own payment block approves itself.
    if currency != me && block.creator() != currency {
        let ok = approval.is_some_and(|a| {
            lace.index_of(&a.digest).is_some_and(|ai| {
                let ab = lace.by_index(ai);
                ab.creator() == currency
                    && ab.payload().approval().is_some_and(|x| {
                        x.verdict == ApprovalVerdict::Approve && x.target.digest == digest
                    })
                    && lace.block_approves_idx(ai, bi)
            })
        });
        if !ok {
            return Err(FlashError::NotApproved);
        }
    }
    let prior = state.holding(&currency);
    let new = prior.map_or(0, |p| p.amount) + pay.amount;
    let payload = Payload::Transaction(Transaction {
        currency,
        payments: vec![Payment::new(me, new)],
        comment,
    });
    let required: Vec<BlockHash> = [Some(incoming.block), approval, prior.map(|p| p.block)]
        .into_iter()
        .flatten()
        .collect();
    let pointers = state.pointers_for(Some(currency), &required, Some(digest));
    Ok(create_block(state.keys(), payload, pointers))
}

/// A sovereign's self-payment setting its balance of its own coins.
pub fn make_mint_burn(
    state: &AgentState,
    currency: AgentId,
    new_balance: u64,
    comment: Comment,
) -> Result<Block, FlashError> {
    started(state)?;
    let me = state.id();
    if currency != me {
        return Err(FlashError::NotSovereign);
    }
    check_comment(&comment)?;
    let payload = Payload::Transaction(Transaction {
        currency: me,
        payments: vec![Payment::new(me, new_balance)],
        comment,
    });
    let required: Vec<BlockHash> = state.holding(&me).map(|h| h.block).into_iter().collect();
    let pointers = state.pointers_for(Some(me), &required, None);
    Ok(create_block(state.keys(), payload, pointers))
}

/// The sovereign's verdict on a foreign payment in its currency: approve
/// unless the payment is unbalanced or the new block would observe a block
/// equivocating with it.
pub fn make_approval(state: &AgentState, target: &Digest) -> Result<Block, FlashError> {
    started(state)?;
    let me = state.id();
    let lace = state.lace();
    let Some(ti) = lace.index_of(target) else {
        return Err(FlashError::TargetUnknown(*target));
    };
    let t = lace.by_index(ti);
    let Some(tx) = t.transaction() else {
        return Err(FlashError::NotSovereign);
    };
    if tx.currency != me || t.creator() == me {
        return Err(FlashError::NotSovereign);
    }
    let mut pointers = state.pointers_for(None, &[*t.hash()], Some(*target));
    let verdict = if !is_balanced(t, lace).expect("closed") {
        ApprovalVerdict::Disapprove { evidence: *t.hash() }
    } else {
        let seen = state.observed_through(&pointers);
        let fork = lace
            .blocks_of(&t.creator())
            .map(|x| lace.index_of(&x.digest()).expect("present"))
            .find(|&i| seen.contains(i) && lace.equivocation_idx(i, ti));
        match fork {
            Some(f) => ApprovalVerdict::Disapprove {
                evidence: *lace.by_index(f).hash(),
            },
            None => ApprovalVerdict::Approve,
        }
    };
    if let ApprovalVerdict::Disapprove { evidence } = verdict {
        pointers.push(evidence);
    }
    let payload = Payload::Approval(Approval {
        target: *t.hash(),
        verdict,
    });
    Ok(create_block(state.keys(), payload, pointers))
}

/// Pays `amount` `sovereign`-coins back to the sovereign, asking to be repaid
/// in the listed currencies in order of preference.
pub fn make_redemption_claim(
    state: &AgentState,
    sovereign: AgentId,
    amount: u64,
    preferences: Vec<AgentId>,
) -> Result<Block, FlashError> {
    make_issue(state, sovereign, sovereign, amount, Comment::Redeem(preferences))
}

/// Splits a repayment of `amount` over the preferred currencies, exhausting
/// each before moving to the next, with any remainder in `own` coins.
///
/// `own` is never exhausted, since the sovereign can always mint.
pub fn plan_repayment(
    holdings: &BTreeMap<AgentId, u64>,
    amount: u64,
    preferences: &[AgentId],
    own: AgentId,
) -> Vec<(AgentId, u64)> {
    let mut plan: Vec<(AgentId, u64)> = Vec::new();
    let mut rest = amount;
    for c in preferences {
        if rest == 0 {
            break;
        }
        let take = if *c == own {
            rest
        } else {
            rest.min(holdings.get(c).copied().unwrap_or(0))
        };
        if take > 0 {
            plan.push((*c, take));
            rest -= take;
        }
    }
    if rest > 0 {
        plan.push((own, rest));
    }
    plan
}

/// Repays a redemption claim against this agent: one issue per currency in
/// the plan, each tagged with the claim, minting first when its own coins
/// fall short. The blocks are appended to `state` and returned in order.
pub fn repay(state: &mut AgentState, claim: &Digest) -> Result<Vec<BlockRef>, FlashError> {
    let me = state.id();
    let c = state
        .lace()
        .get(claim)
        .ok_or(FlashError::TargetUnknown(*claim))?
        .clone();
    let (Some(tx), true) = (c.transaction(), c.creator() != me) else {
        return Err(FlashError::NotAClaim);
    };
    let Comment::Redeem(prefs) = &tx.comment else {
        return Err(FlashError::NotAClaim);
    };
    let amount = match tx.paid_to(&me) {
        Some(z) if tx.currency == me && z > 0 => z,
        _ => return Err(FlashError::NotAClaim),
    };
    let holdings: BTreeMap<AgentId, u64> = state.holdings().collect();
    let plan = plan_repayment(&holdings, amount, prefs, me);
    let mut out = Vec::new();
    for (currency, z) in plan {
        if currency == me && state.balance_in(&me) < z {
            let mint = make_mint_burn(state, me, z, Comment::None)?;
            out.push(state.append(mint));
        }
        let issue = make_issue(state, currency, c.creator(), z, Comment::Repay(*c.hash()))?;
        out.push(state.append(issue));
    }
    Ok(out)
}
