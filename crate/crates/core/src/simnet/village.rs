//! A village where every two villagers exchange the same number of personal
//! coins, giving each a line of credit in every other villager's currency.

use serde::Serialize;

use super::config::{Action, AgentSpec, Expectations, LinkSpec, Role, ScenarioConfig, Step, SCHEMA_VERSION};
use super::engine::{run_with, RunOptions};

/// Largest village simulated block by block; larger ones use the ledger.
pub const FULL_SIMULATION_LIMIT: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VillageMode {
    /// Agents, blocks and links simulated.
    Simulated,
    /// Balances computed transfer by transfer without blocks.
    Ledger,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VillageReport {
    pub villagers: usize,
    pub coins: u64,
    pub mode: VillageMode,
    /// Foreign coins held by each villager, in villager order.
    pub credit: Vec<u64>,
    /// Foreign coins held by all villagers together.
    pub total: u64,
    /// Whether coins held plus coins in flight matched coins minted at every
    /// tick (or after every transfer, in ledger mode).
    pub conserved: bool,
    pub ticks: u64,
}

impl VillageReport {
    /// Whether every villager holds the same credit.
    pub fn uniform_credit(&self) -> Option<u64> {
        let first = *self.credit.first()?;
        self.credit.iter().all(|c| *c == first).then_some(first)
    }
}

fn villager(i: usize) -> String {
    format!("v{i:03}")
}

/// Every villager befriends every other, mints `coins` per neighbour at tick
/// 0 and pays each neighbour `coins` at tick 1.
pub fn village_scenario(n: usize, coins: u64) -> ScenarioConfig {
    let names: Vec<String> = (0..n).map(villager).collect();
    let mut friendships = Vec::new();
    let mut script = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            friendships.push([names[i].clone(), names[j].clone()]);
        }
        script.push(Step {
            at: 0,
            agent: names[i].clone(),
            action: Action::Mint {
                amount: coins * (n as u64 - 1),
            },
        });
    }
    for i in 0..n {
        for j in (0..n).filter(|j| *j != i) {
            script.push(Step {
                at: 1,
                agent: names[i].clone(),
                action: Action::Issue {
                    currency: names[i].clone(),
                    to: names[j].clone(),
                    amount: coins,
                },
            });
        }
    }
    ScenarioConfig {
        version: SCHEMA_VERSION,
        name: format!("village-{n}"),
        seed: n as u64,
        horizon: 200 + 20 * n as u64,
        gossip_period: 1,
        resend_after: 4,
        agents: names
            .iter()
            .map(|name| AgentSpec {
                name: name.clone(),
                role: Role::Correct,
            })
            .collect(),
        friendships,
        default_link: LinkSpec {
            drop: 0.0,
            delay: [1, 2],
        },
        links: Vec::new(),
        script,
        expect: Expectations {
            liveness: Some(true),
            ..Expectations::default()
        },
    }
}

/// Runs the village, simulated when `n` is at most
/// [`FULL_SIMULATION_LIMIT`] and on the ledger otherwise.
pub fn run_village(n: usize, coins: u64) -> VillageReport {
    assert!(n >= 2, "a village needs two villagers");
    if n <= FULL_SIMULATION_LIMIT {
        simulate(n, coins)
    } else {
        ledger(n, coins)
    }
}

pub fn simulate(n: usize, coins: u64) -> VillageReport {
    let cfg = village_scenario(n, coins);
    let out = run_with(
        &cfg,
        RunOptions {
            check_balances: false,
            check_conservation: Some(true),
            ..RunOptions::default()
        },
    )
    .expect("generated scenario is valid");
    let ids = cfg.ids();
    let credit: Vec<u64> = ids
        .iter()
        .enumerate()
        .map(|(i, me)| {
            let state = out.nodes[i].as_ref().expect("villagers are active").state();
            state
                .holdings()
                .filter(|(c, _)| c != me)
                .map(|(_, a)| a)
                .sum()
        })
        .collect();
    VillageReport {
        villagers: n,
        coins,
        mode: VillageMode::Simulated,
        total: credit.iter().sum(),
        credit,
        conserved: out.summary.invariant_failures.is_empty(),
        ticks: out.summary.end_tick,
    }
}

/// The same exchange as plain arithmetic: `held[v][c]` is villager `v`'s
/// balance in villager `c`'s coins.
pub fn ledger(n: usize, coins: u64) -> VillageReport {
    let mut held = vec![vec![0u64; n]; n];
    let mut minted = vec![0u64; n];
    let mut conserved = true;
    for v in 0..n {
        held[v][v] += coins * (n as u64 - 1);
        minted[v] += coins * (n as u64 - 1);
    }
    for v in 0..n {
        for w in (0..n).filter(|w| *w != v) {
            held[v][v] -= coins;
            held[w][v] += coins;
        }
        let supply: u64 = (0..n).map(|x| held[x][v]).sum();
        conserved &= supply == minted[v];
    }
    let credit: Vec<u64> = (0..n)
        .map(|v| (0..n).filter(|c| *c != v).map(|c| held[v][c]).sum())
        .collect();
    VillageReport {
        villagers: n,
        coins,
        mode: VillageMode::Ledger,
        total: credit.iter().sum(),
        credit,
        conserved,
        ticks: 0,
    }
}
