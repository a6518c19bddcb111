//! Bounded exhaustive check that a group of agents behaves the same alone as
//! inside a larger group whose extra members stay silent, and that the larger
//! group lets it do strictly more.
//!
//! A configuration holds one local state per agent. An agent's moves depend
//! only on its own state, except that it may receive a block (with the
//! ancestors it lacks) that another agent holds, needs to give it, and has
//! declared friendship towards it.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::rc::Rc;

use serde::Serialize;

use crate::blocklace::{create_block, AgentId, Comment, Digest, Keypair, Payload};
use crate::dissemination::{befriend, needs};
use crate::flashpay::{
    approval_of, make_accept, make_approval, make_issue, make_mint_burn, payment_status,
    AgentState, PaymentRef, PaymentStatus,
};

/// Largest own-coin balance an agent mints up to; keeps the space finite.
const MINT_CAP: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Move {
    Befriend(AgentId),
    Mint,
    Issue { currency: AgentId, to: AgentId },
    Approve(Digest),
    Accept(Digest),
    Receive { from: AgentId, block: Digest },
}

type Key = Vec<Digest>;

#[derive(Debug)]
struct Local {
    state: AgentState,
    key: Key,
}

impl Local {
    fn new(state: AgentState) -> Self {
        let mut key: Key = state.lace().iter().map(|b| b.digest()).collect();
        key.sort();
        Self { state, key }
    }
}

type Config = Vec<Rc<Local>>;

fn config_key(c: &Config) -> Vec<Key> {
    c.iter().map(|l| l.key.clone()).collect()
}

/// Transition system over a fixed universe of agents, with memoised moves.
struct System {
    ids: Vec<AgentId>,
    cache: HashMap<(Key, Move), Rc<Local>>,
}

impl System {
    fn new(ids: Vec<AgentId>) -> Self {
        Self {
            ids,
            cache: HashMap::new(),
        }
    }

    fn initial(keys: &[Keypair]) -> Config {
        keys.iter()
            .map(|k| {
                let mut s = AgentState::new(k.clone());
                let g = create_block(s.keys(), Payload::Genesis, []);
                s.append(g);
                Rc::new(Local::new(s))
            })
            .collect()
    }

    /// Moves agent `a` can take in `c`.
    fn enabled(&self, c: &Config, a: usize) -> Vec<Move> {
        let s = &c[a].state;
        let me = s.id();
        let lace = s.lace();
        let mut out = Vec::new();
        let declared = s.declared_friends();
        for x in &self.ids {
            if *x != me && !declared.contains(x) {
                out.push(Move::Befriend(*x));
            }
        }
        if s.balance_in(&me) < MINT_CAP {
            out.push(Move::Mint);
        }
        for (currency, have) in s.holdings() {
            if have == 0 {
                continue;
            }
            for to in self.ids.iter().filter(|x| **x != me) {
                out.push(Move::Issue { currency, to: *to });
            }
        }
        for b in lace.iter() {
            let Some(tx) = b.transaction() else { continue };
            let d = b.digest();
            let foreign = b.creator() != me;
            if foreign
                && tx.currency == me
                && tx.payments.iter().any(|x| x.recipient != b.creator())
                && payment_status(b, lace) == PaymentStatus::Pending
            {
                out.push(Move::Approve(d));
            }
            let approved = b.creator() == tx.currency || approval_of(b, lace).is_some();
            if foreign && tx.paid_to(&me).is_some() && !s.is_consumed(&d) && approved {
                out.push(Move::Accept(d));
            }
        }
        for (x, other) in c.iter().enumerate() {
            if x == a {
                continue;
            }
            let ol = other.state.lace();
            let from = other.state.id();
            if !ol.declared_friend(&from, &me) {
                continue;
            }
            for b in ol.iter() {
                if !lace.contains(&b.digest()) && needs(&me, b, ol) {
                    out.push(Move::Receive {
                        from,
                        block: b.digest(),
                    });
                }
            }
        }
        out
    }

    fn apply(&mut self, c: &Config, a: usize, m: &Move) -> Config {
        let local = &c[a];
        let cache_key = (local.key.clone(), m.clone());
        let next = match self.cache.get(&cache_key) {
            Some(n) => n.clone(),
            None => {
                let n = Rc::new(Local::new(self.step(c, a, m)));
                self.cache.insert(cache_key, n.clone());
                n
            }
        };
        let mut out = c.clone();
        out[a] = next;
        out
    }

    fn step(&self, c: &Config, a: usize, m: &Move) -> AgentState {
        let mut s = c[a].state.clone();
        let me = s.id();
        let block = match m {
            Move::Befriend(x) => befriend(&s, *x).expect("enabled"),
            Move::Mint => make_mint_burn(&s, me, s.balance_in(&me) + 1, Comment::None).expect("enabled"),
            Move::Issue { currency, to } => make_issue(&s, *currency, *to, 1, Comment::None).expect("enabled"),
            Move::Approve(t) => make_approval(&s, t).expect("enabled"),
            Move::Accept(t) => {
                let b = s.lace().get(t).expect("present").clone();
                let pay = PaymentRef::find(&b, &me).expect("pays me");
                let appr = if b.creator() == pay.currency {
                    None
                } else {
                    approval_of(&b, s.lace()).map(|x| *x.hash())
                };
                make_accept(&s, &pay, appr, Comment::None).expect("enabled")
            }
            Move::Receive { from, block } => {
                let sender = c.iter().find(|l| l.state.id() == *from).expect("sender");
                let ol = sender.state.lace();
                let i = ol.index_of(block).expect("sender holds block");
                for j in ol.ancestors_idx(i).ones() {
                    let b = ol.by_index(j);
                    if !s.lace().contains(&b.digest()) {
                        s.insert(b.clone()).expect("closed package");
                    }
                }
                return s;
            }
        };
        s.append(block);
        s
    }
}

type Visited = Vec<(Config, Option<(usize, usize, Move)>)>;

/// Breadth-first enumeration of configurations up to `depth` moves by the
/// agents in `active`, taking only moves `allow` admits. Each configuration
/// comes with the parent link that first reached it. Stops early at the
/// first configuration satisfying `goal`.
fn explore(
    sys: &mut System,
    start: Config,
    active: &[usize],
    depth: usize,
    allow: impl Fn(usize, &Move) -> bool,
    goal: impl Fn(&Config) -> bool,
) -> (Visited, Option<usize>) {
    let mut seen: HashMap<Vec<Key>, usize> = HashMap::new();
    seen.insert(config_key(&start), 0);
    let mut nodes: Visited = vec![(start, None)];
    let mut frontier = VecDeque::from([(0usize, 0usize)]);
    while let Some((idx, d)) = frontier.pop_front() {
        if d == depth {
            continue;
        }
        let c = nodes[idx].0.clone();
        for &a in active {
            for m in sys.enabled(&c, a) {
                if !allow(a, &m) {
                    continue;
                }
                let next = sys.apply(&c, a, &m);
                let key = config_key(&next);
                if seen.contains_key(&key) {
                    continue;
                }
                let hit = goal(&next);
                seen.insert(key, nodes.len());
                nodes.push((next, Some((idx, a, m))));
                if hit {
                    let last = nodes.len() - 1;
                    return (nodes, Some(last));
                }
                frontier.push_back((nodes.len() - 1, d + 1));
            }
        }
    }
    (nodes, None)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GrassrootsReport {
    pub small: Vec<String>,
    pub large: Vec<String>,
    pub depth: usize,
    /// Configurations of the small group reached within `depth` moves.
    pub configurations: usize,
    /// Moves checked to be reproducible inside the larger group.
    pub moves_checked: usize,
    pub subset_failures: Vec<String>,
    /// Moves leading to a state of the small group that the small group
    /// cannot reach alone.
    pub witness: Option<Vec<String>>,
    /// Pairs (configuration, other agent's move) checked to keep every
    /// enabled move of each agent enabled.
    pub asynchrony_checked: usize,
    pub asynchrony_failures: Vec<String>,
}

impl GrassrootsReport {
    pub fn subset_holds(&self) -> bool {
        self.subset_failures.is_empty()
    }

    pub fn holds(&self) -> bool {
        self.subset_holds() && self.witness.is_some() && self.asynchrony_failures.is_empty()
    }
}

fn describe(names: &dyn Fn(&AgentId) -> String, agent: &str, m: &Move) -> String {
    match m {
        Move::Befriend(x) => format!("{agent} befriends {}", names(x)),
        Move::Mint => format!("{agent} mints one {agent}-coin"),
        Move::Issue { currency, to } => {
            format!("{agent} pays {} one {}-coin", names(to), names(currency))
        }
        Move::Approve(t) => format!("{agent} decides on {}", t.short()),
        Move::Accept(t) => format!("{agent} accepts {}", t.short()),
        Move::Receive { from, block } => {
            format!("{agent} receives {} from {}", block.short(), names(from))
        }
    }
}

/// Checks the group `small` against `small ∪ extra` up to `depth` moves.
///
/// Subset: from every configuration the small group reaches alone, each of
/// its moves is also enabled, with the same result, when the extra agents are
/// present but silent. Strictness: with the extra agents active, some member
/// of the small group accepts a payment issued by an extra agent.
pub fn check_grassroots(small: &[&str], extra: &[&str], depth: usize) -> GrassrootsReport {
    let all: Vec<&str> = small.iter().chain(extra).copied().collect();
    let keys: Vec<Keypair> = all.iter().map(|n| Keypair::from_label(n)).collect();
    let ids: Vec<AgentId> = keys.iter().map(Keypair::id).collect();
    let names = |id: &AgentId| {
        ids.iter()
            .position(|x| x == id)
            .map_or_else(|| id.short(), |i| all[i].to_string())
    };
    let k = small.len();
    let mut alone = System::new(ids[..k].to_vec());
    let mut embedded = System::new(ids.clone());
    let start_full = System::initial(&keys);
    let start_small: Config = start_full[..k].to_vec();
    let small_idx: Vec<usize> = (0..k).collect();

    let (reached, _) = explore(&mut alone, start_small, &small_idx, depth, |_, _| true, |_| false);
    let mut moves_checked = 0;
    let mut subset_failures = Vec::new();
    let silent = &start_full[k..];
    for (c, _) in &reached {
        let mut big: Config = c.clone();
        big.extend(silent.iter().cloned());
        for a in 0..k {
            let there: BTreeSet<Move> = embedded.enabled(&big, a).into_iter().collect();
            for m in alone.enabled(c, a) {
                moves_checked += 1;
                if !there.contains(&m) {
                    subset_failures.push(format!("not enabled in the larger group: {}", describe(&names, all[a], &m)));
                    continue;
                }
                let x = alone.apply(c, a, &m);
                let y = embedded.apply(&big, a, &m);
                if config_key(&x)[..] != config_key(&y)[..k] {
                    subset_failures.push(format!("different outcome: {}", describe(&names, all[a], &m)));
                }
            }
        }
    }

    // Strictness: a small-group member accepts a payment by an extra agent.
    let extra_ids: BTreeSet<AgentId> = ids[k..].iter().copied().collect();
    let everyone: Vec<usize> = (0..all.len()).collect();
    let goal = |c: &Config| {
        c[..k].iter().any(|l| {
            let me = l.state.id();
            let lace = l.state.lace();
            lace.blocks_of(&me).any(|b| {
                b.transaction().is_some()
                    && b.pointers().iter().any(|p| {
                        extra_ids.contains(&p.creator)
                            && lace
                                .get(&p.digest)
                                .is_some_and(|x| crate::flashpay::consumes(b, x))
                    })
            })
        })
    };
    // The small group only needs to receive and accept for that; limiting
    // its moves keeps the search small.
    let mut full = System::new(ids.clone());
    let allow = |a: usize, m: &Move| a >= k || matches!(m, Move::Receive { .. } | Move::Accept(_));
    let (nodes, hit) = explore(&mut full, start_full.clone(), &everyone, depth, allow, goal);
    let witness = hit.map(|mut i| {
        let mut path = Vec::new();
        while let Some((parent, a, m)) = nodes[i].1.clone() {
            path.push(describe(&names, all[a], &m));
            i = parent;
        }
        path.reverse();
        path
    });

    // Asynchrony: moves by others never disable an agent's enabled move.
    let mut asynchrony_checked = 0;
    let mut asynchrony_failures = Vec::new();
    for (c, _) in nodes.iter().take(400) {
        for a in 0..all.len() {
            let mine: Vec<Move> = full.enabled(c, a);
            for b in (0..all.len()).filter(|b| *b != a) {
                for m in full.enabled(c, b) {
                    let next = full.apply(c, b, &m);
                    let after: BTreeSet<Move> = full.enabled(&next, a).into_iter().collect();
                    asynchrony_checked += 1;
                    if let Some(lost) = mine.iter().find(|x| !after.contains(x)) {
                        asynchrony_failures.push(format!(
                            "{} disabled by {}",
                            describe(&names, all[a], lost),
                            describe(&names, all[b], &m)
                        ));
                    }
                }
            }
        }
    }

    GrassrootsReport {
        small: small.iter().map(|s| s.to_string()).collect(),
        large: all.iter().map(|s| s.to_string()).collect(),
        depth,
        configurations: reached.len(),
        moves_checked,
        subset_failures,
        witness,
        asynchrony_checked,
        asynchrony_failures,
    }
}
