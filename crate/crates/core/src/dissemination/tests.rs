use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::blocklace::{shared, Comment, Keypair};
use crate::flashpay::{make_approval, make_issue, make_mint_burn};

fn node(label: &str) -> Node {
    let mut n = Node::new(Keypair::from_label(label), NodeConfig::default(), Policy::default());
    n.activate(0, false);
    n
}

fn id(label: &str) -> AgentId {
    Keypair::from_label(label).id()
}

/// Delivers everything each node gossips until nobody sends anything new.
/// `now` advances past the resend interval each round.
fn pump(nodes: &mut [Node], now: &mut u64) {
    for _ in 0..64 {
        *now += 100;
        for n in nodes.iter_mut() {
            n.activate(*now, false);
        }
        let mut sends = Vec::new();
        for n in nodes.iter_mut() {
            sends.extend(n.gossip(*now));
        }
        let mut changed = false;
        for (to, b) in sends {
            if let Some(n) = nodes.iter_mut().find(|n| n.id() == to) {
                changed |= !n.receive(b).added.is_empty();
            }
        }
        if !changed {
            return;
        }
    }
    panic!("gossip did not settle");
}

fn befriend_all(nodes: &mut [Node], pairs: &[(usize, usize)]) {
    for &(a, b) in pairs {
        let (ia, ib) = (nodes[a].id(), nodes[b].id());
        nodes[a].push_intent(Intent::Befriend(ib));
        nodes[b].push_intent(Intent::Befriend(ia));
    }
}

fn state_with(label: &str) -> AgentState {
    let mut s = AgentState::new(Keypair::from_label(label));
    let g = create_block(s.keys(), Payload::Genesis, []);
    s.append(g);
    s
}

#[test]
fn needs_follows_friendship_payments_and_approvals() {
    let mut p = state_with("p");
    let mut q = state_with("q");
    let mut r = state_with("r");
    let (pid, qid, rid, uid) = (p.id(), q.id(), r.id(), id("u"));

    r.append(make_mint_burn(&r, rid, 5, Comment::None).unwrap());
    let pay_p = r.append(make_issue(&r, rid, pid, 3, Comment::None).unwrap());
    for b in r.lace().iter().cloned().collect::<Vec<_>>() {
        let _ = p.insert(b);
    }
    let acc = crate::flashpay::make_accept(
        &p,
        &crate::flashpay::PaymentRef::find(&pay_p, &pid).unwrap(),
        None,
        Comment::None,
    )
    .unwrap();
    let acc = p.append(acc);
    let pay_q = p.append(make_issue(&p, rid, qid, 1, Comment::None).unwrap());
    let lace = p.lace();

    // A p-block paying q in r-coins is needed by q and by r, not by u.
    assert!(needs(&qid, &pay_q, lace));
    assert!(needs(&rid, &pay_q, lace));
    assert!(!needs(&uid, &pay_q, lace));
    // An accept in r-coins is needed by r only.
    assert!(needs(&rid, &acc, lace));
    assert!(!needs(&qid, &acc, lace));
    // A creator never needs its own block.
    assert!(!needs(&pid, &pay_q, lace));

    for b in p.lace().iter().cloned().collect::<Vec<_>>() {
        let _ = r.insert(b);
    }
    let appr = r.append(make_approval(&r, &pay_q.digest()).unwrap());
    // The verdict is needed by the payer and the payee.
    assert!(needs(&pid, &appr, r.lace()));
    assert!(needs(&qid, &appr, r.lace()));
    assert!(!needs(&uid, &appr, r.lace()));

    // Friendship: every block of a friend is needed, once mutual.
    let to_u = q.append(befriend(&q, uid).unwrap());
    assert!(needs(&uid, &to_u, q.lace()), "a declaration is needed by its addressee");
    let genesis = q
        .lace()
        .blocks_of(&qid)
        .find(|b| b.is_genesis())
        .unwrap()
        .clone();
    assert!(!needs(&uid, &genesis, q.lace()), "one-sided declaration is not friendship");
    let mut u = state_with("u");
    let back = u.append(befriend(&u, qid).unwrap());
    for b in u.lace().iter().cloned().collect::<Vec<_>>() {
        let _ = q.insert(b);
    }
    assert!(q.lace().are_friends(&qid, &uid));
    assert!(needs(&uid, &genesis, q.lace()));
    assert!(needs(&qid, &back, q.lace()));
}

#[test]
fn unrelated_block_is_not_needed() {
    let a = state_with("a");
    let b = a.lace().iter().next().unwrap().clone();
    assert!(!needs(&id("z"), &b, a.lace()));
}

#[test]
fn befriend_errors() {
    let s = state_with("p");
    assert_eq!(befriend(&s, s.id()), Err(DisseminationError::SelfFriend));
    let fresh = AgentState::new(Keypair::from_label("fresh"));
    assert_eq!(befriend(&fresh, id("p")), Err(DisseminationError::NoGenesis));
}

#[test]
fn social_graph_needs_both_declarations() {
    let mut nodes = vec![node("a"), node("b"), node("c")];
    let (a, b, c) = (nodes[0].id(), nodes[1].id(), nodes[2].id());
    befriend_all(&mut nodes, &[(0, 1)]);
    nodes[2].push_intent(Intent::Befriend(a));
    let mut now = 0;
    pump(&mut nodes, &mut now);
    let g = SocialGraph::of(nodes[0].state().lace());
    assert!(g.are_friends(&a, &b));
    assert!(g.are_friends(&b, &a));
    assert!(!g.are_friends(&a, &c));
    assert!(nodes[0].state().lace().declared_friend(&c, &a));
    assert_eq!(g.edges().count(), 1);
    assert_eq!(g.common_friend(&[a, b]), Some(a.min(b)));
    assert_eq!(g.common_friend(&[a, c]), None);
}

#[test]
fn cordial_round_is_empty_when_friend_has_everything() {
    let mut nodes = vec![node("a"), node("b")];
    befriend_all(&mut nodes, &[(0, 1)]);
    let mut now = 0;
    pump(&mut nodes, &mut now);
    // b's newest block observes everything a had when b created it.
    nodes[1].push_intent(Intent::Mint { amount: 1 });
    pump(&mut nodes, &mut now);
    let b = nodes[1].id();
    assert!(cordial_round(nodes[0].state(), &b).is_empty());
}

/// The star of Fig 3: p, q and r each befriend the hub only.
fn star() -> (Vec<Node>, u64) {
    let mut nodes = vec![node("p"), node("q"), node("r"), node("hub")];
    befriend_all(&mut nodes, &[(0, 3), (1, 3), (2, 3)]);
    let mut now = 0;
    pump(&mut nodes, &mut now);
    let (p, r) = (nodes[0].id(), nodes[2].id());
    nodes[2].push_intent(Intent::Mint { amount: 10 });
    nodes[2].push_intent(Intent::Issue { currency: r, to: p, amount: 3 });
    pump(&mut nodes, &mut now);
    (nodes, now)
}

#[test]
fn hub_relays_payment_and_verdict() {
    let (mut nodes, _) = star();
    let (p, q, r) = (nodes[0].id(), nodes[1].id(), nodes[2].id());
    assert_eq!(nodes[0].state().balance_in(&r), 3);

    // p pays q; only the hub receives it.
    let act = nodes[0].clone().activate(0, false);
    assert!(act.created.is_empty());
    nodes[0].push_intent(Intent::Issue { currency: r, to: q, amount: 1 });
    let pay = nodes[0].activate(1_000, false).created.pop().unwrap();
    let closure = cordial_round(nodes[0].state(), &nodes[3].id());
    for b in closure {
        nodes[3].receive(b);
    }
    let hub = nodes[3].state();
    assert!(hub.lace().contains(&pay.digest()));
    // The hub holds the payment, so it sends it to both q and r.
    assert!(cordial_round(hub, &q).iter().any(|b| b.digest() == pay.digest()));
    assert!(cordial_round(hub, &r).iter().any(|b| b.digest() == pay.digest()));

    for b in cordial_round(hub, &r) {
        nodes[2].receive(b);
    }
    let verdict = nodes[2].activate(1_001, false).created.pop().unwrap();
    assert!(verdict.payload().approval().is_some());
    for b in cordial_round(nodes[2].state(), &nodes[3].id()) {
        nodes[3].receive(b);
    }
    // Once the verdict reaches the hub, it sends it to both p and q.
    let hub = nodes[3].state();
    assert!(cordial_round(hub, &p).iter().any(|b| b.digest() == verdict.digest()));
    assert!(cordial_round(hub, &q).iter().any(|b| b.digest() == verdict.digest()));

    let mut now = 2_000;
    pump(&mut nodes, &mut now);
    assert_eq!(nodes[1].state().balance_in(&r), 1);
    assert_eq!(nodes[0].state().balance_in(&r), 2);
}

#[test]
fn cordial_round_is_topological_and_closed() {
    let (nodes, _) = star();
    let hub = nodes[3].state();
    let lace = hub.lace();
    for f in [nodes[0].id(), nodes[1].id(), nodes[2].id()] {
        let known = KnowledgeFrontier::of(lace, &f);
        let mut sent = BTreeSet::new();
        for b in cordial_round(hub, &f) {
            for ptr in b.pointers() {
                assert!(
                    sent.contains(&ptr.digest) || known.contains(&ptr.digest),
                    "pointer sent after its block"
                );
            }
            sent.insert(b.digest());
        }
    }
}

#[test]
fn receive_handles_duplicates_forgeries_and_unneeded_blocks() {
    let (mut nodes, _) = star();
    let some = nodes[0].state().lace().iter().last().unwrap().clone();
    let before = nodes[3].state().lace().len();
    assert_eq!(nodes[3].receive(some.clone()).outcome, ReceiveOutcome::Duplicate);
    assert_eq!(nodes[3].state().lace().len(), before);

    let stranger = node("stranger");
    let g = stranger.state().lace().iter().next().unwrap().clone();
    let mut forged = *g.hash();
    forged.signature = nodes[0].state().lace().iter().next().unwrap().hash().signature;
    let tampered = shared(Block::from_parts(forged, g.payload().clone(), g.pointers().to_vec()));
    assert!(matches!(
        nodes[3].receive(tampered).outcome,
        ReceiveOutcome::Rejected(_)
    ));
    assert_eq!(nodes[3].receive(g).outcome, ReceiveOutcome::Held);
    assert_eq!(nodes[3].held(), 1);
}

#[test]
fn held_ancestors_are_pulled_in() {
    // b declares friendship towards a; a holds b's genesis (not needed on its
    // own) until the declaration arrives and requires it.
    let mut a = node("a");
    let mut b = node("b");
    b.push_intent(Intent::Befriend(a.id()));
    let created = b.activate(1, false).created;
    let genesis = b.state().lace().iter().next().unwrap().clone();
    assert_eq!(a.receive(genesis.clone()).outcome, ReceiveOutcome::Held);
    let decl = created.last().unwrap().clone();
    let r = a.receive(decl.clone());
    assert_eq!(r.outcome, ReceiveOutcome::Inserted);
    assert_eq!(r.added.len(), 2);
    assert!(a.state().lace().contains(&genesis.digest()));
    assert_eq!(a.held(), 0);
}

#[test]
fn resends_wait_for_the_interval() {
    let mut nodes = vec![node("a"), node("b")];
    befriend_all(&mut nodes, &[(0, 1)]);
    nodes[0].activate(0, false);
    let first = nodes[0].gossip(10);
    assert!(!first.is_empty());
    assert!(nodes[0].gossip(11).is_empty());
    let again = nodes[0].gossip(10 + NodeConfig::default().resend_after);
    assert_eq!(first, again);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The incrementally maintained send set agrees with a full scan, after
    /// arbitrary partial deliveries among three friends.
    #[test]
    fn gossip_matches_full_scan(ops in prop::collection::vec((0usize..3, 0usize..4, any::<bool>()), 1..25)) {
        let mut nodes = vec![node("x"), node("y"), node("z")];
        befriend_all(&mut nodes, &[(0, 1), (1, 2), (0, 2)]);
        let ids: Vec<AgentId> = nodes.iter().map(Node::id).collect();
        let mut now = 0u64;
        for (who, op, deliver) in ops {
            now += 1_000;
            match op {
                0 => nodes[who].push_intent(Intent::Mint { amount: 5 }),
                1 => {
                    let to = ids[(who + 1) % 3];
                    nodes[who].push_intent(Intent::Issue { currency: ids[who], to, amount: 1 });
                }
                2 => {
                    let to = ids[(who + 2) % 3];
                    let c = ids[(who + 1) % 3];
                    nodes[who].push_intent(Intent::Issue { currency: c, to, amount: 1 });
                }
                _ => {}
            }
            nodes[who].activate(now, false);
            for i in 0..3 {
                let expected: BTreeMap<AgentId, BTreeSet<crate::blocklace::Digest>> = ids
                    .iter()
                    .filter(|q| **q != ids[i] && nodes[i].state().declared_friends().contains(q))
                    .map(|q| (*q, cordial_round(nodes[i].state(), q).iter().map(|b| b.digest()).collect()))
                    .collect();
                let mut got: BTreeMap<AgentId, BTreeSet<crate::blocklace::Digest>> =
                    expected.keys().map(|q| (*q, BTreeSet::new())).collect();
                let sends = nodes[i].gossip(now);
                for (q, b) in &sends {
                    got.entry(*q).or_default().insert(b.digest());
                }
                prop_assert_eq!(&got, &expected);
                if deliver {
                    for (q, b) in sends {
                        let j = ids.iter().position(|x| *x == q).unwrap();
                        nodes[j].receive(b);
                    }
                }
            }
        }
    }
}
