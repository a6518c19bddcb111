//! Seeded scenario generators for property and liveness sweeps.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Action, AgentSpec, Expectations, LinkSpec, Role, ScenarioConfig, Step, SCHEMA_VERSION};

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("a{i}")).collect()
}

fn skeleton(name: String, seed: u64, horizon: u64, agents: &[String]) -> ScenarioConfig {
    ScenarioConfig {
        version: SCHEMA_VERSION,
        name,
        seed,
        horizon,
        gossip_period: 1,
        resend_after: 4,
        agents: agents
            .iter()
            .map(|n| AgentSpec {
                name: n.clone(),
                role: Role::Correct,
            })
            .collect(),
        friendships: Vec::new(),
        default_link: LinkSpec::default(),
        links: Vec::new(),
        script: Vec::new(),
        expect: Expectations::default(),
    }
}

fn all_pairs(agents: &[String]) -> Vec<[String; 2]> {
    let mut out = Vec::new();
    for i in 0..agents.len() {
        for j in i + 1..agents.len() {
            out.push([agents[i].clone(), agents[j].clone()]);
        }
    }
    out
}

/// Between 2 and `max_agents` correct agents on lossy links, befriending a
/// hub and some random others, performing `steps` random mints, burns,
/// payments and redemptions.
///
/// Every step is feasible once all earlier steps completed: the generator
/// tracks a pessimistic estimate of each agent's holdings. Repayments are
/// never credited. Repayments may preempt an agent's queued steps, so only
/// agents that never spend foreign coins are asked to repay, and from then
/// on their foreign holdings count as spent.
pub fn random_scenario(seed: u64, max_agents: usize, steps: usize) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_agents.max(2));
    let agents = names(n);
    let mut cfg = skeleton(format!("random-{seed}"), rng.gen(), 0, &agents);
    for i in 1..n {
        cfg.friendships.push([agents[0].clone(), agents[i].clone()]);
    }
    for pair in all_pairs(&agents) {
        if rng.gen_bool(0.3) && !cfg.friendships.contains(&pair) {
            cfg.friendships.push(pair);
        }
    }
    cfg.default_link = LinkSpec {
        drop: rng.gen_range(0.0..0.4),
        delay: [1, rng.gen_range(1..=4)],
    };
    let mut planned: Vec<BTreeMap<usize, u64>> = vec![BTreeMap::new(); n];
    let mut owes = vec![false; n];
    let mut spent_foreign = vec![false; n];
    let mut at = 0;
    for _ in 0..steps {
        at += rng.gen_range(0..3);
        let who = rng.gen_range(0..n);
        let other = (who + rng.gen_range(1..n)) % n;
        let held: Vec<(usize, u64)> = planned[who]
            .iter()
            .filter(|(_, a)| **a > 0)
            .map(|(c, a)| (*c, *a))
            .collect();
        let own = planned[who].get(&who).copied().unwrap_or(0);
        let choice = if held.is_empty() { 0 } else { rng.gen_range(0..10) };
        let action = match choice {
            0..=2 => {
                let amount = rng.gen_range(1..=20);
                *planned[who].entry(who).or_default() += amount;
                Action::Mint { amount }
            }
            3 if own > 0 => {
                let amount = rng.gen_range(1..=own);
                *planned[who].get_mut(&who).unwrap() -= amount;
                Action::Burn { amount }
            }
            8 | 9 if held.iter().any(|(c, _)| *c != who && !spent_foreign[*c]) => {
                let foreign: Vec<(usize, u64)> =
                    held.iter().copied().filter(|(c, _)| *c != who && !spent_foreign[*c]).collect();
                let (sov, have) = foreign[rng.gen_range(0..foreign.len())];
                let amount = rng.gen_range(1..=have);
                *planned[who].get_mut(&sov).unwrap() -= amount;
                planned[sov].retain(|c, _| *c == sov);
                owes[sov] = true;
                spent_foreign[who] = true;
                let mut prefs = agents.clone();
                prefs.shuffle(&mut rng);
                prefs.truncate(rng.gen_range(1..=n));
                Action::Redeem {
                    sovereign: agents[sov].clone(),
                    amount,
                    preferences: prefs,
                }
            }
            _ => {
                let (currency, have) = held[rng.gen_range(0..held.len())];
                let to = if currency != who && rng.gen_bool(0.2) { currency } else { other };
                let to = if to == who { other } else { to };
                let amount = rng.gen_range(1..=have.min(6));
                *planned[who].get_mut(&currency).unwrap() -= amount;
                spent_foreign[who] |= currency != who;
                if to != currency && !owes[to] {
                    *planned[to].entry(currency).or_default() += amount;
                }
                Action::Issue {
                    currency: agents[currency].clone(),
                    to: agents[to].clone(),
                    amount,
                }
            }
        };
        cfg.script.push(Step {
            at,
            agent: agents[who].clone(),
            action,
        });
    }
    cfg.horizon = liveness_horizon(&cfg);
    cfg
}

/// `n` mutual friends, each minting `mint` coins at tick 0, then `payments`
/// random payments. Each payment is feasible once all earlier ones
/// completed: a payer only spends coins it will hold by then.
pub fn clique_payments(seed: u64, n: usize, payments: usize, drop: f64, mint: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents = names(n);
    let mut cfg = skeleton(format!("clique-{n}-{seed}"), seed, 0, &agents);
    cfg.friendships = all_pairs(&agents);
    cfg.default_link = LinkSpec { drop, delay: [1, 3] };
    let mut planned: Vec<BTreeMap<usize, u64>> = (0..n).map(|i| BTreeMap::from([(i, mint)])).collect();
    for agent in &agents {
        cfg.script.push(Step {
            at: 0,
            agent: agent.clone(),
            action: Action::Mint { amount: mint },
        });
    }
    for k in 0..payments {
        let payers: Vec<usize> = (0..n).filter(|i| planned[*i].values().any(|a| *a > 0)).collect();
        let who = payers[rng.gen_range(0..payers.len())];
        let to = (who + rng.gen_range(1..n)) % n;
        let held: Vec<(usize, u64)> = planned[who].iter().filter(|(_, a)| **a > 0).map(|(c, a)| (*c, *a)).collect();
        let (currency, have) = held[rng.gen_range(0..held.len())];
        let amount = rng.gen_range(1..=have.min(5));
        *planned[who].get_mut(&currency).unwrap() -= amount;
        *planned[to].entry(currency).or_default() += amount;
        cfg.script.push(Step {
            at: 1 + k as u64,
            agent: agents[who].clone(),
            action: Action::Issue {
                currency: agents[currency].clone(),
                to: agents[to].clone(),
                amount,
            },
        });
    }
    cfg.horizon = liveness_horizon(&cfg);
    cfg.expect.liveness = Some(true);
    cfg
}

/// Ten times a generous delivery bound: the script span plus, per payment
/// round trip, the expected number of attempts at the link's drop rate
/// times the resend interval plus the maximum delay.
pub fn liveness_horizon(cfg: &ScenarioConfig) -> u64 {
    let span = cfg.script.iter().map(|s| s.at).max().unwrap_or(0);
    let worst = cfg
        .links
        .iter()
        .map(|l| l.link)
        .chain([cfg.default_link])
        .fold(LinkSpec::default(), |a, b| LinkSpec {
            drop: a.drop.max(b.drop),
            delay: [1, a.delay[1].max(b.delay[1])],
        });
    let attempts = (1.0 / (1.0 - worst.drop)).ceil() as u64;
    let hop = attempts * (cfg.resend_after + worst.delay[1]);
    // Payment, verdict, accept; each may take two hops.
    let bound = span + 6 * hop + cfg.gossip_period;
    10 * bound
}
