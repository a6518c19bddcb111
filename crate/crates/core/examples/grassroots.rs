// Bounded check that two agents on their own can do nothing they could not
// also do next to an idle third agent, while the third agent opens up new
// behaviour for them.

use grassroots_flash::simnet::grassroots::check_grassroots;

fn main() {
    let report = check_grassroots(&["p", "q"], &["s"], 6);
    println!(
        "{} configurations of {{p, q}} explored to depth {}, {} moves replayed next to s",
        report.configurations, report.depth, report.moves_checked
    );
    println!("moves missing with s present: {}", report.subset_failures.len());
    println!(
        "moves disabled by other agents: {} of {} checked",
        report.asynchrony_failures.len(),
        report.asynchrony_checked
    );
    match &report.witness {
        Some(steps) => println!("only possible with s: {}", steps.join("; ")),
        None => println!("no behaviour found that needs s"),
    }
    assert!(report.holds());
    assert!(report.witness.is_some());
}
