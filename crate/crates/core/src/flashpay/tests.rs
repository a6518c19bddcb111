use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::blocklace::{
    create_block, AgentId, BlockRef, Comment, Keypair, Payload, Payment, Transaction,
};

fn agent(label: &str) -> AgentState {
    let mut s = AgentState::new(Keypair::from_label(label));
    let g = create_block(s.keys(), Payload::Genesis, []);
    s.append(g);
    s
}

/// Copies every block of `from` into `to`.
fn sync(to: &mut AgentState, from: &AgentState) {
    for b in from.lace().iter() {
        to.insert(b.clone()).unwrap();
    }
}

fn mint(s: &mut AgentState, z: u64) -> BlockRef {
    let b = make_mint_burn(s, s.id(), z, Comment::None).unwrap();
    s.append(b)
}

fn issue(s: &mut AgentState, cur: AgentId, to: AgentId, z: u64) -> BlockRef {
    let b = make_issue(s, cur, to, z, Comment::None).unwrap();
    s.append(b)
}

fn accept(s: &mut AgentState, pay: &BlockRef, approval: Option<&BlockRef>) -> BlockRef {
    let r = PaymentRef::find(pay, &s.id()).unwrap();
    let b = make_accept(s, &r, approval.map(|a| *a.hash()), Comment::None).unwrap();
    s.append(b)
}

fn approve(s: &mut AgentState, target: &BlockRef) -> BlockRef {
    let b = make_approval(s, &target.digest()).unwrap();
    s.append(b)
}

fn assert_all_correct(s: &AgentState) {
    for b in s.lace().iter() {
        let v = validate_block(b, s.lace()).unwrap();
        assert!(v.is_correct(), "{:?}: {v:?}", b.payload());
    }
    assert_eq!(audit(s.lace()), vec![]);
}

/// Black sovereign funding green with 3 and red with 5 black coins.
fn funded() -> (AgentState, AgentState, AgentState) {
    let (mut black, mut green, mut red) = (agent("black"), agent("green"), agent("red"));
    let k = black.id();
    mint(&mut black, 8);
    let to_green = issue(&mut black, k, green.id(), 3);
    let to_red = issue(&mut black, k, red.id(), 5);
    sync(&mut green, &black);
    sync(&mut red, &black);
    accept(&mut green, &to_green, None);
    accept(&mut red, &to_red, None);
    (black, green, red)
}

#[test]
fn fig2a_payment_approval_accept() {
    let (mut black, mut green, mut red) = funded();
    let k = black.id();
    let pay = issue(&mut green, k, red.id(), 1);
    let tx = pay.transaction().unwrap();
    assert_eq!(
        tx.payments,
        vec![Payment::new(red.id(), 1), Payment::new(green.id(), 2)]
    );
    assert!(is_balanced(&pay, green.lace()).unwrap());

    sync(&mut black, &green);
    assert_eq!(payment_status(&pay, black.lace()), PaymentStatus::Pending);
    let ok = approve(&mut black, &pay);
    assert_eq!(payment_status(&pay, black.lace()), PaymentStatus::Approved);

    sync(&mut red, &green);
    sync(&mut red, &black);
    let r = PaymentRef::find(&pay, &red.id()).unwrap();
    assert_eq!(
        make_accept(&red, &r, None, Comment::None),
        Err(FlashError::NotApproved)
    );
    let acc = accept(&mut red, &pay, Some(&ok));
    assert!(consumes(&acc, &pay));
    assert_eq!(red.balance_in(&k), 6);
    assert_eq!(balance(&red.id(), &k, red.lace()), Ok(6));
    assert_eq!(balance(&green.id(), &k, red.lace()), Ok(2));
    assert_eq!(
        make_accept(&red, &r, Some(*ok.hash()), Comment::None),
        Err(FlashError::AlreadyConsumed)
    );
    assert_all_correct(&red);
}

#[test]
fn fig2b_equivocation_is_disapproved() {
    let (mut black, green, mut red) = funded();
    let blue = agent("blue");
    let k = black.id();
    // Two green blocks over the same self-payment.
    let mut fork_red = green.clone();
    let a = issue(&mut fork_red, k, red.id(), 1);
    let mut fork_blue = green.clone();
    let b = issue(&mut fork_blue, k, blue.id(), 1);

    sync(&mut black, &fork_red);
    let first = approve(&mut black, &a);
    sync(&mut black, &fork_blue);
    let second = approve(&mut black, &b);
    let verdict = second.payload().approval().unwrap().verdict;
    assert_eq!(
        verdict,
        crate::blocklace::ApprovalVerdict::Disapprove { evidence: *a.hash() }
    );
    assert_eq!(payment_status(&a, black.lace()), PaymentStatus::Approved);
    assert_eq!(payment_status(&b, black.lace()), PaymentStatus::Disapproved);
    assert!(black.lace().equivocation(&a.digest(), &b.digest()).unwrap());
    assert!(!black.lace().block_approves(&second.digest(), &b.digest()).unwrap());
    assert!(black.lace().block_approves(&first.digest(), &a.digest()).unwrap());

    let ev = black.lace().personal_chain(&green.id()).unwrap_err();
    assert_eq!(
        std::collections::BTreeSet::from([ev.first, ev.second]),
        std::collections::BTreeSet::from([*a.hash(), *b.hash()])
    );
    assert!(matches!(
        validate_block(&b, black.lace()).unwrap(),
        Verdict::Incorrect(v) if v.iter().any(|x| matches!(x, Violation::Equivocation { .. }))
    ));

    let found = audit(black.lace());
    let equivocations: Vec<_> = found.iter().filter(|v| v.kind() == "equivocation").collect();
    assert_eq!(equivocations.len(), 1);
    assert!(found.iter().all(|v| v.culprit() == green.id()), "{found:?}");

    sync(&mut red, &black);
    accept(&mut red, &a, Some(&first));
    assert_eq!(red.balance_in(&k), 6);
}

#[test]
fn fig2c_redemption_and_repayment() {
    let (mut black, mut green) = (agent("black"), agent("green"));
    let (k, g) = (black.id(), green.id());
    mint(&mut green, 7);
    let greens = issue(&mut green, g, k, 7);
    mint(&mut black, 4);
    let blacks = issue(&mut black, k, g, 1);
    sync(&mut black, &green);
    sync(&mut green, &black);
    accept(&mut black, &greens, None);
    accept(&mut green, &blacks, None);
    assert_eq!((black.balance_in(&k), black.balance_in(&g)), (3, 7));

    let claim = make_redemption_claim(&green, k, 1, vec![g]).unwrap();
    let claim = green.append(claim);
    sync(&mut black, &green);
    let ok = approve(&mut black, &claim);
    assert_eq!(ok.payload().approval().unwrap().verdict, crate::blocklace::ApprovalVerdict::Approve);
    accept(&mut black, &claim, Some(&ok));
    let repaid = repay(&mut black, &claim.digest()).unwrap();
    assert_eq!(repaid.len(), 1);
    let tx = repaid[0].transaction().unwrap();
    assert_eq!(tx.currency, g);
    assert_eq!(tx.comment, Comment::Repay(*claim.hash()));
    assert_eq!((black.balance_in(&k), black.balance_in(&g)), (4, 6));
    assert_eq!(balance(&k, &k, black.lace()), Ok(4));
    assert_eq!(balance(&k, &g, black.lace()), Ok(6));
    assert_all_correct(&black);
    assert_eq!(
        make_redemption_claim(&green, k, 1, vec![]),
        Err(FlashError::EmptyPreferences)
    );
}

#[test]
fn fig2d_mint_is_the_only_unbalanced_correct_block() {
    let mut black = agent("black");
    let k = black.id();
    mint(&mut black, 3);
    let m = mint(&mut black, 4);
    assert!(!is_balanced(&m, black.lace()).unwrap());
    assert_eq!(validate_block(&m, black.lace()).unwrap(), Verdict::CorrectMintBurn);
    assert_eq!(balance(&k, &k, black.lace()), Ok(4));
    let burn = mint(&mut black, 0);
    assert_eq!(burn.transaction().unwrap().paid_to(&k), Some(0));
    let green = agent("green");
    assert_eq!(
        make_mint_burn(&green, k, 1, Comment::None),
        Err(FlashError::NotSovereign)
    );
}

#[test]
fn issue_boundaries() {
    let (_, mut green, red) = funded();
    let k = Keypair::from_label("black").id();
    assert_eq!(
        make_issue(&green, k, red.id(), 4, Comment::None),
        Err(FlashError::InsufficientBalance { have: 3, need: 4 })
    );
    assert_eq!(
        make_issue(&green, k, green.id(), 1, Comment::None),
        Err(FlashError::SelfTarget)
    );
    let all = issue(&mut green, k, red.id(), 3);
    assert_eq!(all.transaction().unwrap().paid_to(&green.id()), Some(0));
    assert_eq!(balance(&green.id(), &k, green.lace()), Ok(0));
}

#[test]
fn unbalanced_payment_is_disapproved_with_itself_as_evidence() {
    let (mut black, green, red) = funded();
    let k = black.id();
    let prev = green.holding(&k).unwrap();
    let bad = create_block(
        green.keys(),
        Payload::Transaction(Transaction {
            currency: k,
            payments: vec![Payment::new(red.id(), 5), Payment::new(green.id(), 0)],
            comment: Comment::None,
        }),
        [*green.last_block().unwrap(), prev.block],
    );
    let mut g2 = green.clone();
    let bad = g2.append(bad);
    sync(&mut black, &g2);
    let d = approve(&mut black, &bad);
    assert_eq!(
        d.payload().approval().unwrap().verdict,
        crate::blocklace::ApprovalVerdict::Disapprove { evidence: *bad.hash() }
    );
    assert_eq!(audit(black.lace()), vec![Violation::Unbalanced { block: *bad.hash() }]);
    assert_eq!(validate_block(&d, black.lace()).unwrap(), Verdict::CorrectApproval);
}

#[test]
fn accept_without_approval_pointer_is_flagged() {
    let (black, mut green, mut red) = funded();
    let k = black.id();
    let pay = issue(&mut green, k, red.id(), 1);
    sync(&mut red, &green);
    let forged = create_block(
        red.keys(),
        Payload::Transaction(Transaction {
            currency: k,
            payments: vec![Payment::new(red.id(), 6)],
            comment: Comment::None,
        }),
        [*red.last_block().unwrap(), *pay.hash()],
    );
    let forged = red.append(forged);
    assert_eq!(
        audit(red.lace()),
        vec![Violation::UnapprovedAccept { block: *forged.hash() }]
    );
}

#[test]
fn payment_ref_and_consumes() {
    let (black, green, red) = funded();
    let k = black.id();
    let to_green = black
        .lace()
        .iter()
        .find(|b| b.transaction().is_some_and(|t| t.paid_to(&green.id()).is_some()))
        .unwrap()
        .clone();
    assert!(PaymentRef::find(&to_green, &red.id()).is_none());
    let acc = green.lace().get(&green.last_block().unwrap().digest).unwrap();
    assert!(consumes(acc, &to_green));
    // Blocks in different currencies never consume each other.
    let red_mint = create_block(
        red.keys(),
        Payload::Transaction(Transaction {
            currency: red.id(),
            payments: vec![Payment::new(red.id(), 1)],
            comment: Comment::None,
        }),
        [*to_green.hash()],
    );
    assert!(!consumes(&red_mint, &to_green));
    let _ = k;
}

/// Every split of `amount` over `prefs` then `own`, keeping the
/// lexicographically greatest vector of amounts: the unique greedy split.
fn greedy_oracle(
    holdings: &BTreeMap<AgentId, u64>,
    amount: u64,
    prefs: &[AgentId],
    own: AgentId,
) -> Vec<(AgentId, u64)> {
    let caps: Vec<u64> = prefs
        .iter()
        .map(|c| if *c == own { amount } else { holdings.get(c).copied().unwrap_or(0) })
        .collect();
    let mut best: Option<Vec<u64>> = None;
    let mut cur = vec![0u64; prefs.len()];
    fn rec(i: usize, left: u64, caps: &[u64], cur: &mut Vec<u64>, best: &mut Option<Vec<u64>>) {
        if i == caps.len() {
            let mut v = cur.clone();
            v.push(left);
            if best.as_ref().is_none_or(|b| v > *b) {
                *best = Some(v);
            }
            return;
        }
        for z in 0..=caps[i].min(left) {
            cur[i] = z;
            rec(i + 1, left - z, caps, cur, best);
        }
    }
    rec(0, amount, &caps, &mut cur, &mut best);
    let best = best.unwrap();
    let mut out: Vec<(AgentId, u64)> = Vec::new();
    for (c, z) in prefs.iter().chain([&own]).zip(best) {
        if z > 0 {
            out.push((*c, z));
        }
    }
    out
}

#[test]
fn plan_repayment_examples() {
    let own = Keypair::from_label("r").id();
    let p1 = Keypair::from_label("p1").id();
    let p2 = Keypair::from_label("p2").id();
    let h = BTreeMap::from([(p1, 3), (p2, 10)]);
    assert_eq!(plan_repayment(&h, 5, &[p1, p2], own), vec![(p1, 3), (p2, 2)]);
    assert_eq!(plan_repayment(&h, 5, &[p1, p2], own), greedy_oracle(&h, 5, &[p1, p2], own));
    let p = Keypair::from_label("p").id();
    assert_eq!(plan_repayment(&BTreeMap::from([(p, 0)]), 5, &[p], own), vec![(own, 5)]);
    assert_eq!(plan_repayment(&BTreeMap::from([(p, 9)]), 5, &[p], own), vec![(p, 5)]);
}

#[test]
fn plan_repayment_exhaustive() {
    let own = Keypair::from_label("own").id();
    let cs: Vec<AgentId> = (0..3).map(|i| Keypair::from_label(&format!("c{i}")).id()).collect();
    for len in 1..=3 {
        for code in 0..6u32.pow(len as u32) {
            let mut h = BTreeMap::new();
            let mut x = code;
            for c in &cs[..len] {
                h.insert(*c, (x % 6) as u64);
                x /= 6;
            }
            for amount in 1..=8 {
                let prefs = &cs[..len];
                let plan = plan_repayment(&h, amount, prefs, own);
                assert_eq!(plan.iter().map(|p| p.1).sum::<u64>(), amount);
                for (k, (c, _)) in plan.iter().enumerate() {
                    let pos = prefs.iter().position(|p| p == c).unwrap_or(len);
                    for earlier in &prefs[..pos] {
                        let used = plan[..k].iter().find(|p| p.0 == *earlier).map_or(0, |p| p.1);
                        assert_eq!(used, h[earlier], "preference skipped before exhaustion");
                    }
                }
                assert_eq!(plan, greedy_oracle(&h, amount, prefs, own));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Random interleavings of mint, issue, approve and accept among correct
    /// agents: every block validates and every recorded balance matches.
    #[test]
    fn correct_ops_yield_correct_blocks(steps in prop::collection::vec((0u8..4, 0u8..5, 0u8..4, 1u64..4), 1..40)) {
        let mut agents: Vec<AgentState> = (0..4).map(|i| agent(&format!("x{i}"))).collect();
        for (who, op, other, z) in steps {
            let w = who as usize;
            let o = other as usize;
            match op {
                0 => {
                    let cur = agents[w].balance_in(&agents[w].id());
                    let b = make_mint_burn(&agents[w], agents[w].id(), cur + z, Comment::None).unwrap();
                    agents[w].append(b);
                }
                1 if o != w => {
                    let cur = agents[(w + o) % 4].id();
                    let to = agents[o].id();
                    if let Ok(b) = make_issue(&agents[w], cur, to, z, Comment::None) {
                        agents[w].append(b);
                    }
                }
                2 => {
                    let src = agents[o].clone();
                    sync(&mut agents[w], &src);
                }
                _ => {
                    let me = agents[w].id();
                    let pending: Vec<BlockRef> = agents[w].lace().iter()
                        .filter(|b| b.creator() != me && b.transaction().is_some_and(|t| t.currency == me))
                        .filter(|b| payment_status(b, agents[w].lace()) == PaymentStatus::Pending)
                        .cloned().collect();
                    for t in pending {
                        let b = make_approval(&agents[w], &t.digest()).unwrap();
                        agents[w].append(b);
                    }
                    let incoming: Vec<BlockRef> = agents[w].lace().iter()
                        .filter(|b| b.creator() != me && !agents[w].is_consumed(&b.digest()))
                        .filter(|b| PaymentRef::find(b, &me).is_some())
                        .cloned().collect();
                    for p in incoming {
                        let appr = approval_of(&p, agents[w].lace()).map(|a| *a.hash());
                        let r = PaymentRef::find(&p, &me).unwrap();
                        if let Ok(b) = make_accept(&agents[w], &r, appr, Comment::None) {
                            agents[w].append(b);
                        }
                    }
                }
            }
        }
        for a in &agents {
            for b in a.lace().iter() {
                let v = validate_block(b, a.lace()).unwrap();
                prop_assert!(v.is_correct(), "{:?}", v);
            }
            prop_assert_eq!(audit(a.lace()), vec![]);
            for (cur, z) in a.holdings() {
                prop_assert_eq!(balance(&a.id(), &cur, a.lace()), Ok(z as i128));
                prop_assert_eq!(last_self_payment(&a.id(), &cur, a.lace()), Some(z));
            }
            prop_assert!(a.lace().personal_chain(&a.id()).is_ok());
        }
    }
}
