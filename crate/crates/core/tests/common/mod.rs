//! Oracles shared by the integration tests. Each recomputes its answer from
//! raw pointers with naive graph search, independently of the library's
//! indexed blocklace.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::PathBuf;

use grassroots_flash::blocklace::{AgentId, ApprovalVerdict, Block, BlockRef, Blocklace, Digest, Payload};
use grassroots_flash::flashpay::Violation;
use grassroots_flash::simnet::ScenarioConfig;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

pub fn scenario(name: &str) -> ScenarioConfig {
    let text = std::fs::read_to_string(scenario_path(name)).expect("shipped scenario");
    ScenarioConfig::from_json(&text).expect("shipped scenario parses")
}

pub fn shipped_scenarios() -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .expect("scenario directory")
        .filter_map(|e| {
            let p = e.ok()?.path();
            (p.extension()? == "json").then(|| p.file_stem()?.to_str().map(str::to_owned))?
        })
        .collect();
    names.sort();
    names
}

/// A blocklace as a plain digest map, queried by depth-first search.
pub struct Dag {
    blocks: HashMap<Digest, BlockRef>,
}

impl Dag {
    pub fn new<'a>(blocks: impl IntoIterator<Item = &'a BlockRef>) -> Self {
        Self {
            blocks: blocks.into_iter().map(|b| (b.digest(), b.clone())).collect(),
        }
    }

    pub fn of(lace: &Blocklace) -> Self {
        Self::new(lace.iter())
    }

    pub fn get(&self, d: &Digest) -> Option<&BlockRef> {
        self.blocks.get(d)
    }

    pub fn all(&self) -> impl Iterator<Item = &BlockRef> {
        self.blocks.values()
    }

    pub fn by(&self, agent: &AgentId) -> Vec<&BlockRef> {
        self.blocks.values().filter(|b| b.creator() == *agent).collect()
    }

    /// Reflexive-transitive reachability along pointers.
    pub fn observes(&self, a: &Digest, b: &Digest) -> bool {
        let mut stack = vec![*a];
        let mut seen = HashSet::new();
        while let Some(x) = stack.pop() {
            if x == *b {
                return true;
            }
            if !seen.insert(x) {
                continue;
            }
            if let Some(blk) = self.blocks.get(&x) {
                stack.extend(blk.pointers().iter().map(|p| p.digest));
            }
        }
        false
    }

    pub fn equivocate(&self, a: &Block, b: &Block) -> bool {
        a.creator() == b.creator()
            && a.digest() != b.digest()
            && !self.observes(&a.digest(), &b.digest())
            && !self.observes(&b.digest(), &a.digest())
    }

    /// `x` spends `c`: both transactions in one currency, `x` points at `c`
    /// and `c` pays `x`'s creator.
    pub fn spends(&self, x: &Block, c: &Block) -> bool {
        match (x.transaction(), c.transaction()) {
            (Some(tx), Some(tc)) => {
                tx.currency == tc.currency
                    && x.pointers().iter().any(|p| p.digest == c.digest())
                    && tc.payments.iter().any(|p| p.recipient == x.creator())
            }
            _ => false,
        }
    }

    fn inflow(&self, b: &Block) -> u128 {
        let me = b.creator();
        b.pointers()
            .iter()
            .filter_map(|p| self.blocks.get(&p.digest))
            .filter(|c| self.spends(b, c))
            .flat_map(|c| c.transaction().unwrap().payments.clone())
            .filter(|p| p.recipient == me)
            .map(|p| p.amount as u128)
            .sum()
    }

    fn total(b: &Block) -> u128 {
        b.transaction().map_or(0, |t| t.payments.iter().map(|p| p.amount as u128).sum())
    }

    /// Longest pointer path below each block; strictly increases from a
    /// block to any block observing it.
    pub fn depths(&self) -> HashMap<Digest, usize> {
        let mut depth: HashMap<Digest, usize> = HashMap::new();
        for start in self.blocks.keys() {
            let mut stack = vec![(*start, false)];
            while let Some((d, expanded)) = stack.pop() {
                if depth.contains_key(&d) {
                    continue;
                }
                let ptrs = self.blocks[&d].pointers();
                if expanded {
                    let below = ptrs.iter().map(|p| depth[&p.digest] + 1).max().unwrap_or(0);
                    depth.insert(d, below);
                } else {
                    stack.push((d, true));
                    stack.extend(ptrs.iter().filter(|p| !depth.contains_key(&p.digest)).map(|p| (p.digest, false)));
                }
            }
        }
        depth
    }

    /// `p`'s balance in every currency it touched, replaying `p`'s blocks in
    /// pointer order: issuing subtracts payments to others, accepting adds
    /// the coins taken, and a sovereign's mint or burn adds what it keeps
    /// beyond what it consumes.
    pub fn balances(&self, p: &AgentId) -> BTreeMap<AgentId, i128> {
        let depth = self.depths();
        let mut own = self.by(p);
        own.sort_by_key(|b| depth[&b.digest()]);
        let mut bal: BTreeMap<AgentId, i128> = BTreeMap::new();
        for b in own {
            let Some(tx) = b.transaction() else { continue };
            let r = tx.currency;
            let out: i128 = tx.payments.iter().filter(|x| x.recipient != *p).map(|x| x.amount as i128).sum();
            let foreign: i128 = b
                .pointers()
                .iter()
                .filter_map(|h| self.blocks.get(&h.digest))
                .filter(|c| c.creator() != *p && self.spends(b, c))
                .map(|c| c.transaction().unwrap().paid_to(p).unwrap() as i128)
                .sum();
            let v = bal.entry(r).or_default();
            *v += foreign - out;
            if *p == r && out == 0 && foreign == 0 {
                let kept = tx.paid_to(p).unwrap_or(0) as i128;
                *v += kept - self.inflow(b) as i128;
            }
        }
        bal
    }

    pub fn balance(&self, p: &AgentId, r: &AgentId) -> i128 {
        self.balances(p).get(r).copied().unwrap_or(0)
    }

    /// Pairwise scan for the violations a blocklace proves.
    pub fn violations(&self) -> BTreeSet<Finding> {
        let mut out = BTreeSet::new();
        let blocks: Vec<&BlockRef> = self.blocks.values().collect();
        for a in &blocks {
            for b in &blocks {
                if a.digest() >= b.digest() || !self.equivocate(a, b) {
                    continue;
                }
                let below = |x: &Block, y: &Block| {
                    self.by(&x.creator()).iter().any(|x2| {
                        x2.digest() != x.digest() && self.observes(&x.digest(), &x2.digest()) && self.equivocate(x2, y)
                    })
                };
                if !below(a, b) && !below(b, a) {
                    out.insert(Finding::new("equivocation", a.creator(), [a.digest(), b.digest()]));
                }
            }
        }
        for c in &blocks {
            for x in &blocks {
                for y in &blocks {
                    if x.digest() < y.digest()
                        && x.creator() == y.creator()
                        && self.spends(x, c)
                        && self.spends(y, c)
                    {
                        out.insert(Finding::new("double_consume", x.creator(), [c.digest(), x.digest(), y.digest()]));
                    }
                }
            }
        }
        for b in &blocks {
            let me = b.creator();
            if let Some(tx) = b.transaction() {
                let r = tx.currency;
                let pays_other = tx.payments.iter().any(|p| p.recipient != me);
                if (me != r || pays_other) && self.inflow(b) != Self::total(b) {
                    out.insert(Finding::new("unbalanced", me, [b.digest()]));
                }
                if me != r {
                    for c in b.pointers().iter().filter_map(|h| self.blocks.get(&h.digest)) {
                        if c.creator() == me || c.creator() == r || !self.spends(b, c) {
                            continue;
                        }
                        let approved = b.pointers().iter().filter_map(|h| self.blocks.get(&h.digest)).any(|a| {
                            a.creator() == r
                                && matches!(a.payload(), Payload::Approval(ap)
                                    if ap.verdict == ApprovalVerdict::Approve && ap.target.digest == c.digest())
                                && !self.by(&c.creator()).iter().any(|f| {
                                    self.observes(&a.digest(), &f.digest()) && self.equivocate(f, c)
                                })
                        });
                        if !approved {
                            out.insert(Finding::new("unapproved_accept", me, [b.digest()]));
                        }
                    }
                }
            }
            if let Payload::Approval(ap) = b.payload() {
                let Some(t) = self.blocks.get(&ap.target.digest) else { continue };
                if ap.verdict != ApprovalVerdict::Approve || self.inflow(t) != Self::total(t) {
                    continue;
                }
                for f in self.by(&t.creator()) {
                    if self.observes(&b.digest(), &f.digest()) && self.equivocate(f, t) {
                        out.insert(Finding::new("approved_fork", me, [b.digest(), f.digest()]));
                    }
                }
            }
        }
        out
    }
}

/// A violation as kind, culprit and the set of evidence digests.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Finding {
    pub kind: String,
    pub culprit: AgentId,
    pub evidence: BTreeSet<Digest>,
}

impl Finding {
    pub fn new<const N: usize>(kind: &str, culprit: AgentId, evidence: [Digest; N]) -> Self {
        Self {
            kind: kind.to_owned(),
            culprit,
            evidence: evidence.into_iter().collect(),
        }
    }

    pub fn of(v: &Violation) -> Self {
        Self {
            kind: v.kind().to_owned(),
            culprit: v.culprit(),
            evidence: v.evidence().iter().map(|h| h.digest).collect(),
        }
    }
}
