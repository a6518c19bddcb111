//! Block constructors for Byzantine behaviour. Every block is validly
//! signed by the misbehaving agent; only its content is incorrect.

use crate::blocklace::{
    create_block, AgentId, Approval, ApprovalVerdict, Block, BlockRef, Comment, Payload, Payment,
    Transaction,
};
use crate::flashpay::{make_issue, AgentState, FlashError};

/// Two payments consuming the same self-payment, neither observing the other.
pub fn double_spend(
    state: &AgentState,
    currency: AgentId,
    to: [AgentId; 2],
    amount: u64,
) -> Result<[Block; 2], FlashError> {
    let comment = |i: usize| {
        if to[0] == to[1] {
            Comment::FreeText(format!("fork {i}"))
        } else {
            Comment::None
        }
    };
    let a = make_issue(state, currency, to[0], amount, comment(0))?;
    let b = make_issue(state, currency, to[1], amount, comment(1))?;
    Ok([a, b])
}

/// A payment of `amount` to `to` that also keeps the whole current balance.
pub fn overspend(
    state: &AgentState,
    currency: AgentId,
    to: AgentId,
    amount: u64,
) -> Result<Block, FlashError> {
    let me = state.id();
    if state.last_block().is_none() {
        return Err(FlashError::NoGenesis);
    }
    if to == me {
        return Err(FlashError::SelfTarget);
    }
    if amount == 0 {
        return Err(FlashError::ZeroAmount);
    }
    let holding = state.holding(&currency);
    let mut payments = vec![Payment::new(to, amount)];
    if let Some(h) = holding.filter(|h| h.amount > 0) {
        payments.push(Payment::new(me, h.amount));
    }
    let payload = Payload::Transaction(Transaction {
        currency,
        payments,
        comment: Comment::None,
    });
    let required: Vec<_> = holding.map(|h| h.block).into_iter().collect();
    let pointers = state.pointers_for(Some(currency), &required, None);
    Ok(create_block(state.keys(), payload, pointers))
}

/// An approval of `target` regardless of what the approver observes.
pub fn approve_blindly(state: &AgentState, target: &BlockRef) -> Block {
    let pointers = state.pointers_for(None, &[*target.hash()], None);
    let payload = Payload::Approval(Approval {
        target: *target.hash(),
        verdict: ApprovalVerdict::Approve,
    });
    create_block(state.keys(), payload, pointers)
}
