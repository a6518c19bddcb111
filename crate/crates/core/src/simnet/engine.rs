use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{Action, LinkSpec, Role, ScenarioConfig, Step};
use super::liveness::{check_liveness, LivenessReport};
use super::trace::{EventKind, TraceEvent};
use crate::blocklace::{AgentId, ApprovalVerdict, Block, BlockRef, Blocklace, Comment, Payload};
use crate::dissemination::{
    needs, ApprovePolicy, Intent, Node, NodeConfig, Policy, ReceiveOutcome,
};
use crate::flashpay::{audit, balance, consumes, validate_block, Verdict, Violation};

/// What a run checks besides the scenario's own expectations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// After every insert at a correct agent: each recorded balance equals
    /// the balance recomputed from its blocklace, and the agent's own blocks
    /// form a chain.
    pub check_balances: bool,
    /// At the end of every tick: per currency, coins held plus coins in
    /// flight equal coins minted. `None` checks iff all agents are correct.
    pub check_conservation: Option<bool>,
    /// Report violations seen by correct agents on arrival.
    pub trace_violations: bool,
    /// Ticks between checks for quiescence. 0 runs to the horizon.
    pub quiescence_every: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            check_balances: true,
            check_conservation: None,
            trace_violations: true,
            quiescence_every: 8,
        }
    }
}

/// One verified expectation or invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentReport {
    pub name: String,
    pub role: Role,
    pub id: String,
    pub blocks: usize,
    pub frozen: bool,
    /// Latest self-payment per currency, by currency name.
    pub balances: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ViolationReport {
    pub kind: String,
    pub culprit: String,
    pub evidence: Vec<String>,
}

/// The machine-readable result of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub name: String,
    pub seed: u64,
    pub end_tick: u64,
    pub quiescent: bool,
    pub agents: Vec<AgentReport>,
    pub violations: Vec<ViolationReport>,
    pub liveness: LivenessReport,
    pub invariant_failures: Vec<String>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub struct RunOutcome {
    pub config: ScenarioConfig,
    pub trace: Vec<TraceEvent>,
    /// Union of every agent's blocklace.
    pub global: Blocklace,
    pub nodes: Vec<Option<Node>>,
    pub violations: Vec<Violation>,
    pub summary: Summary,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.summary.pass
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.config
            .agent_index(name)
            .and_then(|i| self.nodes[i].as_ref())
    }

    /// Latest self-payment of agent `name` in `currency`'s coins.
    pub fn balance(&self, name: &str, currency: &str) -> u64 {
        let c = self.config.agent_index(currency).map(|i| self.config.ids()[i]);
        match (self.node(name), c) {
            (Some(n), Some(c)) => n.state().balance_in(&c),
            _ => 0,
        }
    }
}

struct Message {
    from: usize,
    to: usize,
    block: BlockRef,
}

/// A deterministic discrete-event simulation of one scenario.
pub struct Simulation {
    cfg: ScenarioConfig,
    options: RunOptions,
    names: Vec<String>,
    ids: Vec<AgentId>,
    index: BTreeMap<AgentId, usize>,
    roles: Vec<Role>,
    nodes: Vec<Option<Node>>,
    links: Vec<Vec<LinkSpec>>,
    rng: ChaCha8Rng,
    queue: BTreeMap<(u64, u64), Message>,
    seq: u64,
    tick: u64,
    script: Vec<Step>,
    script_pos: usize,
    trace: Vec<TraceEvent>,
    created: Vec<BlockRef>,
    supply: BTreeMap<AgentId, i128>,
    in_flight: BTreeMap<AgentId, i128>,
    failures: Vec<String>,
    /// Blocks (by allocation) some agent already verified. Every message
    /// shares the allocation made at creation, which `created` keeps alive.
    verified: HashSet<*const Block>,
    conservation: bool,
    quiescent: bool,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig, options: RunOptions) -> Result<Self, super::ConfigError> {
        cfg.validate()?;
        let keys = cfg.keys();
        let ids: Vec<AgentId> = keys.iter().map(|k| k.id()).collect();
        let names: Vec<String> = cfg.agents.iter().map(|a| a.name.clone()).collect();
        let roles: Vec<Role> = cfg.agents.iter().map(|a| a.role).collect();
        let node_cfg = NodeConfig {
            resend_after: cfg.resend_after,
            ..NodeConfig::default()
        };
        let mut nodes: Vec<Option<Node>> = keys
            .into_iter()
            .zip(&roles)
            .map(|(k, r)| {
                let policy = match r {
                    Role::Stationary => return None,
                    Role::LazySovereign => Policy {
                        approve: ApprovePolicy::Never,
                        ..Policy::default()
                    },
                    Role::ForkApprover => Policy {
                        approve: ApprovePolicy::Always,
                        ..Policy::default()
                    },
                    _ => Policy::default(),
                };
                Some(Node::new(k, node_cfg, policy))
            })
            .collect();
        for [a, b] in &cfg.friendships {
            let (i, j) = (cfg.agent_index(a).unwrap(), cfg.agent_index(b).unwrap());
            if let Some(n) = nodes[i].as_mut() {
                n.push_intent(Intent::Befriend(ids[j]));
            }
            if let Some(n) = nodes[j].as_mut() {
                n.push_intent(Intent::Befriend(ids[i]));
            }
        }
        let links = names
            .iter()
            .map(|a| names.iter().map(|b| cfg.link(a, b)).collect())
            .collect();
        let mut script = cfg.script.clone();
        script.sort_by_key(|s| s.at);
        let conservation = options
            .check_conservation
            .unwrap_or_else(|| roles.iter().all(|r| r.is_correct()));
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            index: ids.iter().enumerate().map(|(i, id)| (*id, i)).collect(),
            cfg,
            options,
            names,
            ids,
            roles,
            nodes,
            links,
            queue: BTreeMap::new(),
            seq: 0,
            tick: 0,
            script,
            script_pos: 0,
            trace: Vec::new(),
            created: Vec::new(),
            supply: BTreeMap::new(),
            in_flight: BTreeMap::new(),
            failures: Vec::new(),
            verified: HashSet::new(),
            conservation,
            quiescent: false,
        })
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn nodes(&self) -> &[Option<Node>] {
        &self.nodes
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn invariant_failures(&self) -> &[String] {
        &self.failures
    }

    /// Runs until the horizon or until nothing is left to do.
    pub fn run_to_end(&mut self) {
        while self.tick <= self.cfg.horizon {
            self.step();
            let every = self.options.quiescence_every;
            if every > 0 && self.tick.is_multiple_of(every) && self.is_quiescent() {
                self.quiescent = true;
                break;
            }
        }
    }

    /// One tick: deliveries due now, then script steps due now, then one
    /// activation of every agent in rotating order.
    pub fn step(&mut self) {
        let t = self.tick;
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 != t {
                break;
            }
            let msg = entry.remove();
            self.deliver(msg);
        }
        while let Some(s) = self.script.get(self.script_pos).filter(|s| s.at == t).cloned() {
            self.script_pos += 1;
            self.schedule(&s);
        }
        let n = self.nodes.len();
        for k in 0..n {
            self.activate((t as usize + k) % n);
        }
        if self.conservation {
            self.check_conservation();
        }
        self.tick += 1;
    }

    fn id_of(&self, name: &str) -> AgentId {
        self.ids[self.cfg.agent_index(name).expect("validated")]
    }

    fn schedule(&mut self, s: &Step) {
        let id = |n: &str| self.id_of(n);
        let intent = match &s.action {
            Action::Befriend { other } => Intent::Befriend(id(other)),
            Action::Mint { amount } => Intent::Mint { amount: *amount },
            Action::Burn { amount } => Intent::Burn { amount: *amount },
            Action::Issue { currency, to, amount } => Intent::Issue {
                currency: id(currency),
                to: id(to),
                amount: *amount,
            },
            Action::Redeem {
                sovereign,
                amount,
                preferences,
            } => Intent::Redeem {
                sovereign: id(sovereign),
                amount: *amount,
                preferences: preferences.iter().map(|p| id(p)).collect(),
            },
            Action::DoubleSpend { currency, to, amount } => Intent::DoubleSpend {
                currency: id(currency),
                to: [id(&to[0]), id(&to[1])],
                amount: *amount,
            },
            Action::Overspend { currency, to, amount } => Intent::Overspend {
                currency: id(currency),
                to: id(to),
                amount: *amount,
            },
        };
        let i = self.cfg.agent_index(&s.agent).expect("validated");
        if let Some(n) = self.nodes[i].as_mut() {
            n.push_intent(intent);
        }
    }

    fn event(&mut self, agent: usize, kind: EventKind, block: Option<&Block>, detail: String) {
        self.trace.push(TraceEvent {
            tick: self.tick,
            agent: self.names[agent].clone(),
            kind,
            block: block.map(|b| b.digest().to_hex()),
            detail,
        });
    }

    fn name(&self, id: &AgentId) -> String {
        self.index
            .get(id)
            .map_or_else(|| id.short(), |&i| self.names[i].clone())
    }

    /// A short human-readable rendering of a block's payload.
    pub fn describe(&self, b: &Block) -> String {
        match b.payload() {
            Payload::Genesis => "genesis".into(),
            Payload::Friend(q) => format!("friend {}", self.name(q)),
            Payload::Approval(a) => match a.verdict {
                ApprovalVerdict::Approve => format!("approve {}", a.target.digest.short()),
                ApprovalVerdict::Disapprove { evidence } => format!(
                    "disapprove {} evidence {}",
                    a.target.digest.short(),
                    evidence.digest.short()
                ),
            },
            Payload::Transaction(tx) => {
                let pays: Vec<String> = tx
                    .payments
                    .iter()
                    .map(|p| format!("{}:{}", self.name(&p.recipient), p.amount))
                    .collect();
                let comment = match &tx.comment {
                    Comment::None => String::new(),
                    Comment::Redeem(_) => " redeem".into(),
                    Comment::Repay(c) => format!(" repay {}", c.digest.short()),
                    Comment::FreeText(s) => format!(" {s:?}"),
                };
                format!("tx {} [{}]{}", self.name(&tx.currency), pays.join(" "), comment)
            }
        }
    }

    fn deliver(&mut self, msg: Message) {
        let Message { from, to, block } = msg;
        let Some(node) = self.nodes[to].as_mut() else {
            return;
        };
        let ptr = Arc::as_ptr(&block);
        let receipt = if self.verified.contains(&ptr) {
            node.receive_verified(block.clone())
        } else {
            node.receive(block.clone())
        };
        if !matches!(receipt.outcome, ReceiveOutcome::Rejected(_) | ReceiveOutcome::Duplicate) {
            self.verified.insert(ptr);
        }
        let outcome = match &receipt.outcome {
            ReceiveOutcome::Inserted => "inserted".to_string(),
            ReceiveOutcome::Buffered => "buffered".into(),
            ReceiveOutcome::Held => "held".into(),
            ReceiveOutcome::Duplicate => "duplicate".into(),
            ReceiveOutcome::Rejected(e) => format!("rejected: {e}"),
            ReceiveOutcome::Overflow => "overflow".into(),
        };
        let detail = format!("from {} {}", self.names[from], outcome);
        self.event(to, EventKind::Deliver, Some(&block), detail);
        if receipt.outcome == ReceiveOutcome::Buffered {
            self.event(to, EventKind::Buffer, Some(&block), String::new());
        }
        if receipt.added.is_empty() {
            return;
        }
        for b in &receipt.added {
            let d = self.describe(b);
            self.event(to, EventKind::Insert, Some(b), d);
        }
        if self.roles[to].is_correct() && self.options.trace_violations {
            for b in &receipt.added {
                let lace = self.nodes[to].as_ref().unwrap().state().lace();
                if let Ok(Verdict::Incorrect(vs)) = validate_block(b, lace) {
                    for v in vs {
                        let detail = format!("{} by {}", v.kind(), self.name(&v.culprit()));
                        self.event(to, EventKind::Violation, Some(b), detail);
                    }
                }
            }
        }
        self.check_agent(to);
    }

    fn activate(&mut self, i: usize) {
        let gossip = self.tick.is_multiple_of(self.cfg.gossip_period);
        let Some(node) = self.nodes[i].as_mut() else {
            return;
        };
        let act = node.activate(self.tick, gossip);
        for b in &act.created {
            let d = self.describe(b);
            self.event(i, EventKind::Create, Some(b), d);
            self.account(b);
        }
        for (intent, why) in &act.dropped {
            self.event(i, EventKind::Assert, None, format!("intent dropped: {intent:?}: {why}"));
        }
        if !act.created.is_empty() {
            self.check_agent(i);
        }
        for (q, b) in act.sends {
            let Some(&j) = self.index.get(&q) else { continue };
            self.event(i, EventKind::Send, Some(&b), format!("to {}", self.names[j]));
            let link = self.links[i][j];
            if link.drop > 0.0 && self.rng.gen_bool(link.drop) {
                self.event(i, EventKind::Drop, Some(&b), format!("to {}", self.names[j]));
                continue;
            }
            let delay = self.rng.gen_range(link.delay[0]..=link.delay[1]);
            self.seq += 1;
            self.queue.insert(
                (self.tick + delay, self.seq),
                Message {
                    from: i,
                    to: j,
                    block: b,
                },
            );
        }
    }

    /// Global coin accounting for a newly created block.
    fn account(&mut self, b: &BlockRef) {
        self.created.push(b.clone());
        let Some(tx) = b.transaction() else { return };
        let me = b.creator();
        let creator = self.index[&me];
        let lace = self.nodes[creator].as_ref().unwrap().state().lace();
        let mut consumed: i128 = 0;
        for p in b.pointers() {
            let c = lace.get(&p.digest).expect("own lace is closed");
            if consumes(b, c) {
                let z = c.transaction().and_then(|t| t.paid_to(&me)).unwrap_or(0) as i128;
                consumed += z;
                if c.creator() != me {
                    *self.in_flight.entry(tx.currency).or_default() -= z;
                }
            }
        }
        let outgoing: i128 = tx
            .payments
            .iter()
            .filter(|p| p.recipient != me)
            .map(|p| p.amount as i128)
            .sum();
        *self.in_flight.entry(tx.currency).or_default() += outgoing;
        if me == tx.currency {
            *self.supply.entry(me).or_default() += tx.total() as i128 - consumed;
        }
    }

    fn check_conservation(&mut self) {
        let currencies: BTreeSet<AgentId> = self
            .supply
            .keys()
            .chain(self.in_flight.keys())
            .copied()
            .collect();
        for c in currencies {
            let held: i128 = self
                .nodes
                .iter()
                .flatten()
                .map(|n| n.state().balance_in(&c) as i128)
                .sum();
            let flying = self.in_flight.get(&c).copied().unwrap_or(0);
            let supply = self.supply.get(&c).copied().unwrap_or(0);
            if held + flying != supply {
                let msg = format!(
                    "tick {}: {}-coins held {held} + in flight {flying} != minted {supply}",
                    self.tick,
                    self.name(&c)
                );
                self.fail(None, msg);
            }
        }
    }

    fn fail(&mut self, agent: Option<usize>, msg: String) {
        let who = agent.unwrap_or(0);
        self.event(who, EventKind::Assert, None, format!("FAIL {msg}"));
        self.failures.push(msg);
    }

    /// Balance safety and chain shape at a correct agent.
    fn check_agent(&mut self, i: usize) {
        if !self.options.check_balances || !self.roles[i].is_correct() {
            return;
        }
        let node = self.nodes[i].as_ref().unwrap();
        let me = node.id();
        let lace = node.state().lace();
        let mut bad = Vec::new();
        if lace.personal_chain(&me).is_err() {
            bad.push(format!("{} holds its own equivocation", self.names[i]));
        }
        for (c, held) in node.state().holdings() {
            match balance(&me, &c, lace) {
                Ok(b) if b == held as i128 => {}
                Ok(b) => bad.push(format!(
                    "{}: {}-coin self-payment {held} but balance {b}",
                    self.names[i],
                    self.name(&c)
                )),
                Err(_) => bad.push(format!("{}: own chain forks", self.names[i])),
            }
        }
        for m in bad {
            self.fail(Some(i), format!("tick {}: {m}", self.tick));
        }
    }

    /// Nothing left to do: the script is exhausted, no unfrozen agent has a
    /// pending intent, correct agents have no pending reactions, and every
    /// block an agent holds that a declared friend needs is at that friend.
    pub fn is_quiescent(&self) -> bool {
        if self.script_pos < self.script.len() {
            return false;
        }
        let correct = |i: usize| self.roles[i].is_correct();
        for (i, n) in self.nodes.iter().enumerate() {
            let Some(n) = n else { continue };
            if !n.is_frozen() && n.pending_intents() > 0 {
                return false;
            }
            if correct(i) && n.pending_reactions() > 0 {
                return false;
            }
        }
        for n in &self.nodes {
            let Some(p) = n.as_ref() else { continue };
            let lace = p.state().lace();
            for q in p.state().declared_friends() {
                let Some(&j) = self.index.get(&q) else { continue };
                let Some(qn) = self.nodes[j].as_ref() else { continue };
                let ql = qn.state().lace();
                if lace
                    .iter()
                    .any(|b| !ql.contains(&b.digest()) && needs(&q, b, lace))
                {
                    return false;
                }
            }
        }
        true
    }

    /// Ends the run: builds the global view, audits it and checks the
    /// scenario's expectations.
    pub fn finish(self) -> RunOutcome {
        let global = Blocklace::from_blocks(self.created.iter().cloned())
            .expect("creation order is topological");
        let violations = audit(&global);
        let correct: BTreeSet<AgentId> = self
            .ids
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| r.is_correct())
            .map(|(id, _)| *id)
            .collect();
        let names_by_id = self.cfg.names_by_id();
        let liveness = check_liveness(&global, &correct, &names_by_id);
        let name = |id: &AgentId| self.name(id);

        let agents: Vec<AgentReport> = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let node = self.nodes[i].as_ref();
                AgentReport {
                    name: n.clone(),
                    role: self.roles[i],
                    id: self.ids[i].to_string(),
                    blocks: node.map_or(0, |n| n.state().lace().blocks_of(&self.ids[i]).count()),
                    frozen: node.is_some_and(Node::is_frozen),
                    balances: node
                        .map(|n| n.state().holdings().map(|(c, a)| (name(&c), a)).collect())
                        .unwrap_or_default(),
                }
            })
            .collect();
        let vreports: Vec<ViolationReport> = violations
            .iter()
            .map(|v| ViolationReport {
                kind: v.kind().into(),
                culprit: name(&v.culprit()),
                evidence: v.evidence().iter().map(|h| h.digest.to_hex()).collect(),
            })
            .collect();

        let mut checks = Vec::new();
        let exp = &self.cfg.expect;
        for b in &exp.balances {
            let i = self.cfg.agent_index(&b.agent).unwrap();
            let c = self.id_of(&b.currency);
            let got = self.nodes[i]
                .as_ref()
                .map_or(0, |n| n.state().balance_in(&c));
            checks.push(Check {
                name: format!("balance {} {}", b.agent, b.currency),
                pass: got == b.amount,
                detail: format!("expected {}, got {got}", b.amount),
            });
        }
        let mut want: Vec<(String, String)> = exp
            .violations
            .iter()
            .map(|v| (v.kind.clone(), v.culprit.clone()))
            .collect();
        let mut got: Vec<(String, String)> = vreports
            .iter()
            .map(|v| (v.kind.clone(), v.culprit.clone()))
            .collect();
        want.sort();
        got.sort();
        checks.push(Check {
            name: "violations".into(),
            pass: want == got,
            detail: if want == got {
                String::new()
            } else {
                format!("expected {want:?}, got {got:?}")
            },
        });
        if let Some(all) = exp.liveness {
            let failed = liveness.failures().count();
            checks.push(Check {
                name: "liveness".into(),
                pass: (failed == 0) == all,
                detail: format!("{failed} of {} claims unmet", liveness.claims.len()),
            });
        }
        if let Some(n) = exp.unaccepted {
            checks.push(Check {
                name: "unaccepted".into(),
                pass: liveness.unaccepted == n,
                detail: format!("expected {n}, got {}", liveness.unaccepted),
            });
        }
        checks.push(Check {
            name: "invariants".into(),
            pass: self.failures.is_empty(),
            detail: self.failures.first().cloned().unwrap_or_default(),
        });
        let pass = checks.iter().all(|c| c.pass);
        let summary = Summary {
            name: self.cfg.name.clone(),
            seed: self.cfg.seed,
            end_tick: self.tick.saturating_sub(1),
            quiescent: self.quiescent,
            agents,
            violations: vreports,
            liveness,
            invariant_failures: self.failures.clone(),
            checks,
            pass,
        };
        RunOutcome {
            config: self.cfg,
            trace: self.trace,
            global,
            nodes: self.nodes,
            violations,
            summary,
        }
    }
}

/// Runs a scenario with default options.
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutcome, super::ConfigError> {
    run_with(cfg, RunOptions::default())
}

pub fn run_with(cfg: &ScenarioConfig, options: RunOptions) -> Result<RunOutcome, super::ConfigError> {
    let mut sim = Simulation::new(cfg.clone(), options)?;
    sim.run_to_end();
    Ok(sim.finish())
}
