// Runs a scenario file through the simulator and prints the end of its trace
// and the summary. Defaults to the shipped star scenario.
//
//     cargo run --example scenario -- scenarios/fig2b_equivocation.json

use std::path::PathBuf;

use grassroots_flash::simnet::{run, ScenarioConfig};

fn main() {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/fig3_star.json"));
    let text = std::fs::read_to_string(&path).expect("readable scenario");
    let cfg = ScenarioConfig::from_json(&text).unwrap_or_else(|e| panic!("{}:{e}", path.display()));
    let out = run(&cfg).expect("valid scenario");

    let creates: Vec<_> = out.trace.iter().filter(|e| e.detail.starts_with("tx") && e.kind == grassroots_flash::simnet::EventKind::Create).collect();
    for e in creates.iter().rev().take(4).rev() {
        println!("tick {:>3} {:<6} {}", e.tick, e.agent, e.detail);
    }
    let s = &out.summary;
    println!("{}: {} events, settled at tick {}", s.name, out.trace.len(), s.end_tick);
    for a in &s.agents {
        println!("  {:<6} {:?}", a.name, a.balances);
    }
    for v in &s.violations {
        println!("  violation {} by {}", v.kind, v.culprit);
    }
    println!("  liveness: {} claims, {} unmet", s.liveness.claims.len(), s.liveness.failures().count());
    assert!(out.passed(), "{:?}", s.checks);
}
