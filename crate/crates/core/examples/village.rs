// Every two villagers exchange 100 personal coins. Eleven villagers are
// simulated block by block; a village of 501 is counted on the ledger.

use grassroots_flash::simnet::village::{run_village, FULL_SIMULATION_LIMIT};

fn main() {
    for n in [11, 501] {
        let report = run_village(n, 100);
        let credit = report.uniform_credit().expect("every villager holds the same credit");
        println!(
            "{n} villagers ({:?}{}): credit {credit} each, {} coins in circulation, conserved: {}",
            report.mode,
            if n <= FULL_SIMULATION_LIMIT { format!(", {} ticks", report.ticks) } else { String::new() },
            report.total,
            report.conserved
        );
        assert_eq!(credit, 100 * (n as u64 - 1));
        assert_eq!(report.total, 100 * n as u64 * (n as u64 - 1));
        assert!(report.conserved);
    }
}
