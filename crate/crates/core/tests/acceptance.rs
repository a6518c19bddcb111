//! Acceptance criteria, one line each. Runs as a plain binary so the lines
//! always print; exits non-zero when any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use common::{scenario, shipped_scenarios, Dag, Finding};
use grassroots_flash::blocklace::{write_dump, AgentId, ApprovalVerdict, BlockRef, Payload};
use grassroots_flash::cli::{main_with, EXIT_FAIL};
use grassroots_flash::flashpay::last_self_payment;
use grassroots_flash::simnet::grassroots::check_grassroots;
use grassroots_flash::simnet::random::{clique_payments, liveness_horizon, random_scenario};
use grassroots_flash::simnet::village::{simulate, village_scenario};
use grassroots_flash::simnet::{run, trace_to_string, RunOptions, RunOutcome, ScenarioConfig, Simulation};

const BALANCE_RUNS: u64 = 500;
const BALANCE_MAX_AGENTS: usize = 8;
const BALANCE_STEPS: usize = 45;
const BALANCE_MAX_BLOCKS: usize = 200;
const BALANCE_BUDGET: Duration = Duration::from_secs(30);

const CLIQUE_SEEDS: u64 = 100;
const CLIQUE_AGENTS: usize = 6;
const CLIQUE_PAYMENTS: usize = 50;
const CLIQUE_DROP: f64 = 0.3;
const CLIQUE_MINT: u64 = 20;
const CLIQUE_BUDGET: Duration = Duration::from_secs(60);

const STAR_SEEDS: u64 = 100;
const STAR_DROP: f64 = 0.5;

const ADVERSARY_SEEDS: u64 = 40;
const AUDIT_MAX_BLOCKS: usize = 100;

const GRASSROOTS_DEPTH: usize = 6;
const GRASSROOTS_BUDGET: Duration = Duration::from_secs(120);

const VILLAGERS: u64 = 11;
const VILLAGE_COINS: u64 = 100;

const DETERMINISM_RANDOM_SEEDS: u64 = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(failures: &[String], ok: String) -> Outcome {
    match failures.first() {
        None => Outcome { pass: true, detail: ok },
        Some(first) => Outcome {
            pass: false,
            detail: format!("{} failure(s), first: {first}", failures.len()),
        },
    }
}

fn ids(cfg: &ScenarioConfig) -> Vec<AgentId> {
    cfg.ids()
}

/// Every correct agent's last self-payment in each currency equals the
/// balance replayed from its blocks, after every tick of 500 random runs.
/// The simulator separately checks the same after every insert.
fn balance_safety() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut checks = 0usize;
    let mut max_blocks = 0;
    for seed in 0..BALANCE_RUNS {
        let cfg = random_scenario(seed, BALANCE_MAX_AGENTS, BALANCE_STEPS);
        let agents = ids(&cfg);
        let mut sim = Simulation::new(cfg.clone(), RunOptions::default()).unwrap();
        let mut seen = vec![0usize; agents.len()];
        loop {
            sim.step();
            for (i, node) in sim.nodes().iter().enumerate() {
                let Some(node) = node else { continue };
                let lace = node.state().lace();
                if lace.len() == seen[i] {
                    continue;
                }
                seen[i] = lace.len();
                let oracle = Dag::of(lace).balances(&agents[i]);
                for r in &agents {
                    checks += 1;
                    let last = last_self_payment(&agents[i], r, lace).unwrap_or(0) as i128;
                    let want = oracle.get(r).copied().unwrap_or(0);
                    if last != want {
                        failures.push(format!("seed {seed} tick {} agent {i}: {last} != {want}", sim.tick()));
                    }
                }
            }
            if sim.tick() > cfg.horizon || (sim.tick().is_multiple_of(8) && sim.is_quiescent()) {
                break;
            }
        }
        failures.extend(sim.invariant_failures().iter().map(|f| format!("seed {seed}: {f}")));
        let out = sim.finish();
        max_blocks = max_blocks.max(out.global.len());
        if out.global.len() > BALANCE_MAX_BLOCKS {
            failures.push(format!("seed {seed}: {} blocks", out.global.len()));
        }
    }
    let took = start.elapsed();
    if took > BALANCE_BUDGET {
        failures.push(format!("took {took:.1?}, budget {BALANCE_BUDGET:?}"));
    }
    outcome(
        &failures,
        format!("{BALANCE_RUNS} runs, {checks} comparisons, at most {max_blocks} blocks, {took:.1?}"),
    )
}

fn all_to_all_liveness() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut claims = 0;
    for seed in 0..CLIQUE_SEEDS {
        let cfg = clique_payments(seed, CLIQUE_AGENTS, CLIQUE_PAYMENTS, CLIQUE_DROP, CLIQUE_MINT);
        let out = run(&cfg).unwrap();
        let live = &out.summary.liveness;
        claims += live.claims.len();
        if live.claims.len() != CLIQUE_PAYMENTS || !live.holds() || live.excluded != 0 {
            failures.push(format!(
                "seed {seed}: {} claims, {} unmet",
                live.claims.len(),
                live.failures().count()
            ));
        }
        if !out.passed() {
            failures.push(format!("seed {seed}: run failed its checks"));
        }
    }
    let took = start.elapsed();
    if took > CLIQUE_BUDGET {
        failures.push(format!("took {took:.1?}, budget {CLIQUE_BUDGET:?}"));
    }
    outcome(&failures, format!("{claims} payments accepted over {CLIQUE_SEEDS} seeds, {took:.1?}"))
}

fn diameter_two_liveness() -> Outcome {
    let mut failures = Vec::new();
    let variants = ["fig3_star", "fig3_star_p_hub", "fig3_star_q_hub", "fig3_star_r_hub"];
    for name in variants {
        let base = scenario(name);
        for seed in 0..STAR_SEEDS {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.default_link.drop = STAR_DROP;
            cfg.horizon = liveness_horizon(&cfg);
            let out = run(&cfg).unwrap();
            let live = &out.summary.liveness;
            if out.balance("q", "r") != 1 || live.claims.len() != 2 || !live.holds() || !out.passed() {
                failures.push(format!("{name} seed {seed}: q holds {}", out.balance("q", "r")));
            }
        }
    }
    outcome(&failures, format!("{} variants x {STAR_SEEDS} seeds at drop {STAR_DROP}", variants.len()))
}

fn example_transactions() -> Outcome {
    let mut failures = Vec::new();
    let panels: [(&str, &[(&str, &str, u64)]); 3] = [
        ("fig2a_payment", &[("red", "black", 6), ("green", "black", 2)]),
        ("fig2c_redemption", &[("black", "black", 4), ("black", "green", 6)]),
        ("fig2d_mint", &[("black", "black", 4)]),
    ];
    for (name, want) in panels {
        let out = run(&scenario(name)).unwrap();
        let dag = Dag::of(&out.global);
        let cfg = &out.config;
        for (agent, cur, amount) in want {
            let id = |n: &str| cfg.ids()[cfg.agent_index(n).unwrap()];
            let node = out.balance(agent, cur);
            let oracle = dag.balance(&id(agent), &id(cur));
            if node != *amount || oracle != *amount as i128 {
                failures.push(format!("{name}: {agent} holds {node} {cur} (oracle {oracle}), want {amount}"));
            }
        }
    }
    outcome(&failures, "A red 6 black; C black 4 black, 6 green; D black 4 black".into())
}

fn verify_dump(global: &[BlockRef]) -> (i32, String) {
    let dir = tempfile::TempDir::new().unwrap();
    let path = dir.path().join("global.lace");
    write_dump(std::fs::File::create(&path).unwrap(), global.iter().map(|b| &**b)).unwrap();
    let mut out = Vec::new();
    let code = main_with(["gflash", "verify", path.to_str().unwrap()], &mut out, &mut Vec::new());
    (code, String::from_utf8(out).unwrap())
}

fn equivocation_seed(seed: u64) -> Result<(), String> {
    let mut cfg = scenario("fig2b_equivocation");
    cfg.seed = seed;
    cfg.expect = Default::default();
    let out = run(&cfg).unwrap();
    let again = run(&cfg).unwrap();
    if trace_to_string(&out.trace) != trace_to_string(&again.trace) {
        return Err("not deterministic".into());
    }
    let ids = ids(&cfg);
    let id = |n: &str| ids[cfg.agent_index(n).unwrap()];
    let (black, green) = (id("black"), id("green"));
    let dag = Dag::of(&out.global);
    let forks: Vec<&BlockRef> = dag
        .by(&green)
        .into_iter()
        .filter(|b| b.transaction().is_some_and(|t| t.payments.iter().any(|p| p.recipient != green)))
        .collect();
    if forks.len() != 2 || !dag.equivocate(forks[0], forks[1]) {
        return Err(format!("{} payments by green", forks.len()));
    }
    let verdicts: Vec<(&BlockRef, ApprovalVerdict, usize)> = dag
        .by(&black)
        .into_iter()
        .filter_map(|b| match b.payload() {
            Payload::Approval(a) => forks.iter().position(|f| f.digest() == a.target.digest).map(|i| (b, a.verdict, i)),
            _ => None,
        })
        .collect();
    let approved: Vec<usize> = verdicts.iter().filter(|v| v.1 == ApprovalVerdict::Approve).map(|v| v.2).collect();
    let rejected: Vec<_> = verdicts.iter().filter(|v| v.1 != ApprovalVerdict::Approve).collect();
    if approved.len() != 1 || rejected.len() != 1 || rejected[0].2 == approved[0] {
        return Err(format!("{} approvals, {} disapprovals", approved.len(), rejected.len()));
    }
    let (dis, verdict, bad) = rejected[0];
    let ApprovalVerdict::Disapprove { evidence } = verdict else { unreachable!() };
    let ev = dag.get(&evidence.digest).ok_or("evidence missing")?;
    if !dis.pointers().iter().any(|p| p.digest == evidence.digest) || !dag.equivocate(ev, forks[*bad]) {
        return Err("disapproval evidence does not prove the fork".into());
    }
    for (spec, agent) in cfg.agents.iter().zip(&ids) {
        if spec.role.is_correct() && dag.by(agent).iter().any(|b| dag.spends(b, forks[*bad])) {
            return Err(format!("{} accepted the disapproved fork", spec.name));
        }
    }
    let blocks: Vec<BlockRef> = out.global.iter().cloned().collect();
    let (code, text) = verify_dump(&blocks);
    let equivocations: Vec<&str> = text.lines().filter(|l| l.starts_with("equivocation ")).collect();
    let names_green = equivocations.len() == 1 && equivocations[0].contains(&format!("culprit {green}"));
    if code != EXIT_FAIL || !names_green {
        return Err(format!("verify exit {code}: {text}"));
    }
    Ok(())
}

fn adversary_exclusion() -> Outcome {
    let failures: Vec<String> = (0..ADVERSARY_SEEDS)
        .chain([scenario("fig2b_equivocation").seed])
        .filter_map(|s| equivocation_seed(s).err().map(|e| format!("seed {s}: {e}")))
        .collect();
    outcome(&failures, format!("{} seeds, each checked twice", ADVERSARY_SEEDS + 1))
}

fn smoking_gun_completeness() -> Outcome {
    let mut failures = Vec::new();
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    let mut instances = 0;
    for name in ["fig2b_equivocation", "unbalanced_payer", "fork_approver"] {
        let base = scenario(name);
        let adversaries: BTreeSet<AgentId> = base
            .agents
            .iter()
            .zip(base.ids())
            .filter(|(a, _)| !a.role.is_correct())
            .map(|(_, id)| id)
            .collect();
        for seed in (0..ADVERSARY_SEEDS).chain([base.seed]) {
            let mut cfg = base.clone();
            cfg.seed = seed;
            let out = run(&cfg).unwrap();
            if out.global.len() > AUDIT_MAX_BLOCKS {
                failures.push(format!("{name} seed {seed}: {} blocks", out.global.len()));
                continue;
            }
            instances += 1;
            let audit: BTreeSet<Finding> = out.violations.iter().map(Finding::of).collect();
            let oracle = Dag::of(&out.global).violations();
            if audit != oracle {
                failures.push(format!("{name} seed {seed}: audit {audit:?} oracle {oracle:?}"));
            }
            if oracle.is_empty() || oracle.iter().any(|f| !adversaries.contains(&f.culprit)) {
                failures.push(format!("{name} seed {seed}: evidence {oracle:?}"));
            }
            for f in &oracle {
                *kinds.entry(f.kind.clone()).or_default() += 1;
            }
        }
    }
    outcome(&failures, format!("{instances} instances, audit = oracle; {kinds:?}"))
}

fn grassroots() -> Outcome {
    let start = Instant::now();
    let report = check_grassroots(&["p", "q"], &["s"], GRASSROOTS_DEPTH);
    let took = start.elapsed();
    let mut failures: Vec<String> = report.subset_failures.clone();
    failures.extend(report.asynchrony_failures.iter().cloned());
    if report.witness.is_none() {
        failures.push("no strictness witness".into());
    }
    if took > GRASSROOTS_BUDGET {
        failures.push(format!("took {took:.1?}, budget {GRASSROOTS_BUDGET:?}"));
    }
    outcome(
        &failures,
        format!(
            "{} configurations, {} moves, witness: {}, {took:.1?}",
            report.configurations,
            report.moves_checked,
            report.witness.unwrap_or_default().join("; ")
        ),
    )
}

fn village() -> Outcome {
    let n = VILLAGERS;
    let coins = VILLAGE_COINS;
    let mut failures = Vec::new();
    let report = simulate(n as usize, coins);
    let want_credit = n * (n - 1) * coins / n;
    let want_total = n * (n - 1) * coins;
    if report.credit.iter().any(|c| *c != want_credit) || report.total != want_total {
        failures.push(format!("credit {:?} total {}", report.credit, report.total));
    }
    if !report.conserved {
        failures.push("conservation failed at some tick".into());
    }
    let cfg = village_scenario(n as usize, coins);
    let out: RunOutcome = run(&cfg).unwrap();
    let dag = Dag::of(&out.global);
    let ids = ids(&cfg);
    for v in &ids {
        for c in ids.iter().filter(|c| *c != v) {
            if dag.balance(v, c) != coins as i128 {
                failures.push(format!("{v} holds {} of {c}", dag.balance(v, c)));
            }
        }
    }
    outcome(&failures, format!("credit {want_credit} each, total {want_total}, conserved every tick"))
}

fn determinism() -> Outcome {
    let mut failures = Vec::new();
    let mut configs: Vec<ScenarioConfig> = shipped_scenarios().iter().map(|n| scenario(n)).collect();
    configs.extend((0..DETERMINISM_RANDOM_SEEDS).map(|s| random_scenario(s, 6, 30)));
    for cfg in &configs {
        let a = trace_to_string(&run(cfg).unwrap().trace);
        let b = trace_to_string(&run(cfg).unwrap().trace);
        if a != b {
            failures.push(cfg.name.clone());
        }
    }
    outcome(&failures, format!("{} scenarios, byte-identical traces", configs.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("balance safety", balance_safety),
        ("all-to-all liveness", all_to_all_liveness),
        ("diameter-2 liveness", diameter_two_liveness),
        ("example transactions", example_transactions),
        ("adversary exclusion", adversary_exclusion),
        ("smoking-gun completeness", smoking_gun_completeness),
        ("grassroots", grassroots),
        ("village", village),
        ("determinism", determinism),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != k + 1) {
            continue;
        }
        let o = check();
        let mark = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} {name}: {mark} ({})", k + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
