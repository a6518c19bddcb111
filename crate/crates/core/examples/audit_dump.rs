// Runs the equivocation scenario, writes the combined blocklace to a dump,
// reads it back and audits it as a third party would.

use std::io::Cursor;

use grassroots_flash::blocklace::{read_dump, shared, verify_block, write_dump, Blocklace};
use grassroots_flash::flashpay::audit;
use grassroots_flash::simnet::{run, ScenarioConfig};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/fig2b_equivocation.json");
    let cfg = ScenarioConfig::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    let out = run(&cfg).unwrap();

    let mut bytes = Vec::new();
    write_dump(&mut bytes, out.global.iter().map(|b| &**b)).unwrap();
    println!("dump: {} blocks, {} bytes", out.global.len(), bytes.len());

    let blocks = read_dump(Cursor::new(&bytes)).unwrap();
    for b in &blocks {
        verify_block(b).expect("every signature checks");
    }
    let lace = Blocklace::from_blocks(blocks.into_iter().map(shared)).unwrap();
    let names = cfg.names_by_id();
    let violations = audit(&lace);
    for v in &violations {
        let evidence: Vec<String> = v.evidence().iter().map(|h| h.digest.short()).collect();
        println!("{} by {}: {}", v.kind(), names[&v.culprit()], evidence.join(" "));
    }
    assert!(violations.iter().all(|v| names[&v.culprit()] == "green"));

    let cut = &bytes[..bytes.len() / 2];
    println!("truncated dump: {}", read_dump(Cursor::new(cut)).unwrap_err());
}
