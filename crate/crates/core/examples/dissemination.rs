// Four nodes in a star: p, q and r befriend only the hub. r pays p, p pays
// q, and every block reaches the agents that need it through the hub by
// cordial dissemination alone.

use grassroots_flash::blocklace::Keypair;
use grassroots_flash::dissemination::{Intent, Node, NodeConfig, Policy};

/// Activates every node and delivers every gossiped block, round after
/// round, until a round delivers nothing new.
fn settle(nodes: &mut [Node], now: &mut u64) -> usize {
    let mut messages = 0;
    loop {
        *now += 10;
        let mut sends = Vec::new();
        for n in nodes.iter_mut() {
            sends.extend(n.activate(*now, true).sends);
        }
        messages += sends.len();
        let mut changed = false;
        for (to, block) in sends {
            let target = nodes.iter_mut().find(|n| n.id() == to).expect("known agent");
            changed |= !target.receive(block).added.is_empty();
        }
        if !changed && nodes.iter().all(|n| n.pending_intents() == 0 && n.pending_reactions() == 0) {
            return messages;
        }
    }
}

fn main() {
    let names = ["p", "q", "r", "hub"];
    let mut nodes: Vec<Node> = names
        .iter()
        .map(|n| Node::new(Keypair::from_label(n), NodeConfig::default(), Policy::default()))
        .collect();
    let ids: Vec<_> = nodes.iter().map(|n| n.id()).collect();
    let (p, q, r, hub) = (0, 1, 2, 3);
    for leaf in [p, q, r] {
        nodes[leaf].push_intent(Intent::Befriend(ids[hub]));
        nodes[hub].push_intent(Intent::Befriend(ids[leaf]));
    }
    let mut now = 0;
    println!("friendships: {} messages", settle(&mut nodes, &mut now));

    nodes[r].push_intent(Intent::Mint { amount: 10 });
    nodes[r].push_intent(Intent::Issue { currency: ids[r], to: ids[p], amount: 3 });
    println!("r pays p: {} messages", settle(&mut nodes, &mut now));
    nodes[p].push_intent(Intent::Issue { currency: ids[r], to: ids[q], amount: 1 });
    println!("p pays q: {} messages", settle(&mut nodes, &mut now));

    for (name, n) in names.iter().zip(&nodes) {
        println!("{name:>3}: {:>2} blocks, {} r-coins", n.state().lace().len(), n.state().balance_in(&ids[r]));
    }
    assert_eq!(nodes[q].state().balance_in(&ids[r]), 1);
    assert_eq!(nodes[p].state().balance_in(&ids[r]), 2);
}
