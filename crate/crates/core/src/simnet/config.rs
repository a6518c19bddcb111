use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::blocklace::{AgentId, Keypair};

pub const SCHEMA_VERSION: u32 = 1;

/// An invalid scenario, with the place in the file it concerns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// `line:column` for syntax errors, a field path otherwise.
    pub location: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(location: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        location: location.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Correct,
    /// May pay one coin to two recipients.
    Equivocator,
    /// May issue payments exceeding what they consume.
    UnbalancedPayer,
    /// Never approves payments in its currency.
    LazySovereign,
    /// Approves every payment in its currency, forks included.
    ForkApprover,
    /// Creates no blocks and ignores the network.
    Stationary,
}

impl Role {
    pub fn is_correct(self) -> bool {
        self == Role::Correct
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub name: String,
    #[serde(default = "default_role")]
    pub role: Role,
}

fn default_role() -> Role {
    Role::Correct
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    /// Probability that a transmission is lost, in `[0, 1)`.
    #[serde(default)]
    pub drop: f64,
    /// Inclusive delay bounds in ticks, at least 1.
    #[serde(default = "default_delay")]
    pub delay: [u64; 2],
}

fn default_delay() -> [u64; 2] {
    [1, 1]
}

impl Default for LinkSpec {
    fn default() -> Self {
        Self {
            drop: 0.0,
            delay: default_delay(),
        }
    }
}

/// Overrides the default link between two agents, in both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkOverride {
    pub between: [String; 2],
    #[serde(flatten)]
    pub link: LinkSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Befriend {
        other: String,
    },
    Mint {
        amount: u64,
    },
    Burn {
        amount: u64,
    },
    Issue {
        currency: String,
        to: String,
        amount: u64,
    },
    Redeem {
        sovereign: String,
        amount: u64,
        preferences: Vec<String>,
    },
    DoubleSpend {
        currency: String,
        to: [String; 2],
        amount: u64,
    },
    Overspend {
        currency: String,
        to: String,
        amount: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub at: u64,
    pub agent: String,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceExpectation {
    pub agent: String,
    pub currency: String,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViolationExpectation {
    pub kind: String,
    pub culprit: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default)]
    pub balances: Vec<BalanceExpectation>,
    /// Exact multiset of violations the audit of the global view must find.
    #[serde(default)]
    pub violations: Vec<ViolationExpectation>,
    /// Whether every liveness claim must hold at the end of the run.
    #[serde(default)]
    pub liveness: Option<bool>,
    /// Number of payments among all agents left unaccepted at the end.
    #[serde(default)]
    pub unaccepted: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub horizon: u64,
    #[serde(default = "one")]
    pub gossip_period: u64,
    #[serde(default = "four")]
    pub resend_after: u64,
    pub agents: Vec<AgentSpec>,
    /// Pairs that befriend each other at tick 0.
    #[serde(default)]
    pub friendships: Vec<[String; 2]>,
    #[serde(default)]
    pub default_link: LinkSpec,
    #[serde(default)]
    pub links: Vec<LinkOverride>,
    #[serde(default)]
    pub script: Vec<Step>,
    #[serde(default)]
    pub expect: Expectations,
}

fn one() -> u64 {
    1
}

fn four() -> u64 {
    4
}

impl ScenarioConfig {
    /// Parses and validates a scenario file.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| {
                let at = format!(" at line {} column {}", e.line(), e.column());
                let msg = e.to_string();
                let msg = msg.strip_suffix(&at).unwrap_or(&msg).to_owned();
                err(format!("{}:{}", e.line(), e.column()), msg)
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn agent_index(&self, name: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.name == name)
    }

    /// Agent keys, derived from the names.
    pub fn keys(&self) -> Vec<Keypair> {
        self.agents.iter().map(|a| Keypair::from_label(&a.name)).collect()
    }

    pub fn ids(&self) -> Vec<AgentId> {
        self.keys().iter().map(Keypair::id).collect()
    }

    pub fn names_by_id(&self) -> BTreeMap<AgentId, String> {
        self.ids()
            .into_iter()
            .zip(self.agents.iter().map(|a| a.name.clone()))
            .collect()
    }

    pub fn role_of(&self, name: &str) -> Option<Role> {
        self.agent_index(name).map(|i| self.agents[i].role)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != SCHEMA_VERSION {
            return Err(err(
                "version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.version),
            ));
        }
        if self.gossip_period == 0 {
            return Err(err("gossip_period", "must be at least 1"));
        }
        if self.agents.is_empty() {
            return Err(err("agents", "at least one agent is required"));
        }
        let mut seen = BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            if a.name.is_empty() {
                return Err(err(format!("agents[{i}].name"), "empty name"));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(err(format!("agents[{i}].name"), format!("duplicate agent {:?}", a.name)));
            }
        }
        let known = |loc: String, name: &str| -> Result<Role, ConfigError> {
            self.role_of(name)
                .ok_or_else(|| err(loc, format!("unknown agent {name:?}")))
        };
        for (i, [a, b]) in self.friendships.iter().enumerate() {
            known(format!("friendships[{i}][0]"), a)?;
            known(format!("friendships[{i}][1]"), b)?;
            if a == b {
                return Err(err(format!("friendships[{i}]"), "an agent cannot befriend itself"));
            }
        }
        check_link("default_link", &self.default_link)?;
        for (i, l) in self.links.iter().enumerate() {
            known(format!("links[{i}].between[0]"), &l.between[0])?;
            known(format!("links[{i}].between[1]"), &l.between[1])?;
            check_link(&format!("links[{i}]"), &l.link)?;
        }
        for (i, s) in self.script.iter().enumerate() {
            let at = |f: &str| format!("script[{i}].{f}");
            let role = known(at("agent"), &s.agent)?;
            if s.at > self.horizon {
                return Err(err(at("at"), "step is after the horizon"));
            }
            if role == Role::Stationary {
                return Err(err(at("agent"), "stationary agents take no actions"));
            }
            match &s.action {
                Action::Befriend { other } => {
                    known(at("other"), other)?;
                    if other == &s.agent {
                        return Err(err(at("other"), "an agent cannot befriend itself"));
                    }
                }
                Action::Mint { amount } | Action::Burn { amount } => positive(&at("amount"), *amount)?,
                Action::Issue { currency, to, amount } => {
                    known(at("currency"), currency)?;
                    known(at("to"), to)?;
                    positive(&at("amount"), *amount)?;
                    if to == &s.agent {
                        return Err(err(at("to"), "cannot pay oneself"));
                    }
                }
                Action::Redeem {
                    sovereign,
                    amount,
                    preferences,
                } => {
                    known(at("sovereign"), sovereign)?;
                    positive(&at("amount"), *amount)?;
                    if sovereign == &s.agent {
                        return Err(err(at("sovereign"), "cannot redeem against oneself"));
                    }
                    if preferences.is_empty() {
                        return Err(err(at("preferences"), "at least one currency is required"));
                    }
                    let mut uniq = BTreeSet::new();
                    for (j, p) in preferences.iter().enumerate() {
                        known(at(&format!("preferences[{j}]")), p)?;
                        if !uniq.insert(p) {
                            return Err(err(at(&format!("preferences[{j}]")), "repeated currency"));
                        }
                    }
                }
                Action::DoubleSpend { currency, to, amount } => {
                    if role != Role::Equivocator {
                        return Err(err(at("action"), "only an equivocator may double-spend"));
                    }
                    known(at("currency"), currency)?;
                    known(at("to[0]"), &to[0])?;
                    known(at("to[1]"), &to[1])?;
                    positive(&at("amount"), *amount)?;
                    if to.contains(&s.agent) {
                        return Err(err(at("to"), "cannot pay oneself"));
                    }
                }
                Action::Overspend { currency, to, amount } => {
                    if role != Role::UnbalancedPayer {
                        return Err(err(at("action"), "only an unbalanced payer may overspend"));
                    }
                    known(at("currency"), currency)?;
                    known(at("to"), to)?;
                    positive(&at("amount"), *amount)?;
                    if to == &s.agent {
                        return Err(err(at("to"), "cannot pay oneself"));
                    }
                }
            }
        }
        for (i, b) in self.expect.balances.iter().enumerate() {
            known(format!("expect.balances[{i}].agent"), &b.agent)?;
            known(format!("expect.balances[{i}].currency"), &b.currency)?;
        }
        for (i, v) in self.expect.violations.iter().enumerate() {
            known(format!("expect.violations[{i}].culprit"), &v.culprit)?;
            if !crate::flashpay::Violation::KINDS.contains(&v.kind.as_str()) {
                return Err(err(
                    format!("expect.violations[{i}].kind"),
                    format!("unknown violation kind {:?}", v.kind),
                ));
            }
        }
        Ok(())
    }

    /// The link between two agents.
    pub fn link(&self, a: &str, b: &str) -> LinkSpec {
        self.links
            .iter()
            .rev()
            .find(|l| (l.between[0] == a && l.between[1] == b) || (l.between[0] == b && l.between[1] == a))
            .map_or(self.default_link, |l| l.link)
    }
}

fn positive(loc: &str, amount: u64) -> Result<(), ConfigError> {
    if amount == 0 {
        return Err(err(loc, "amount must be positive"));
    }
    Ok(())
}

fn check_link(loc: &str, l: &LinkSpec) -> Result<(), ConfigError> {
    if !(0.0..1.0).contains(&l.drop) {
        return Err(err(format!("{loc}.drop"), "drop probability must be in [0, 1)"));
    }
    if l.delay[0] == 0 || l.delay[0] > l.delay[1] {
        return Err(err(format!("{loc}.delay"), "delay bounds must satisfy 1 <= min <= max"));
    }
    Ok(())
}
