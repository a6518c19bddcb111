// A trader spends the same coin twice. The sovereign approves the fork it
// sees first, disapproves the other with the first as evidence, and an audit
// of the blocklace names the culprit.

use grassroots_flash::blocklace::{create_block, ApprovalVerdict, Comment, Keypair, Payload};
use grassroots_flash::flashpay::{audit, make_accept, make_approval, make_issue, make_mint_burn, AgentState, PaymentRef};

fn agent(label: &str) -> AgentState {
    let mut s = AgentState::new(Keypair::from_label(label));
    let genesis = create_block(s.keys(), Payload::Genesis, []);
    s.append(genesis);
    s
}

fn sync(to: &mut AgentState, from: &AgentState) {
    for b in from.lace().iter() {
        to.insert(b.clone()).expect("closed lace");
    }
}

fn main() {
    let (mut black, mut green, red, blue) = (agent("black"), agent("green"), agent("red"), agent("blue"));
    let coin = black.id();
    let b = make_mint_burn(&black, coin, 5, Comment::None).unwrap();
    black.append(b);
    let b = make_issue(&black, coin, green.id(), 3, Comment::None).unwrap();
    let funding = black.append(b);
    sync(&mut green, &black);
    let incoming = PaymentRef::find(&funding, &green.id()).unwrap();
    let b = make_accept(&green, &incoming, None, Comment::None).unwrap();
    green.append(b);

    // Both forks are built from the same state, so each consumes the same
    // self-payment.
    let mut fork_red = green.clone();
    let to_red = make_issue(&green, coin, red.id(), 1, Comment::None).unwrap();
    let to_red = fork_red.append(to_red);
    let mut fork_blue = green.clone();
    let to_blue = make_issue(&green, coin, blue.id(), 1, Comment::None).unwrap();
    let to_blue = fork_blue.append(to_blue);

    for (fork, target) in [(&fork_red, &to_red), (&fork_blue, &to_blue)] {
        sync(&mut black, fork);
        let target = &target.digest();
        let b = make_approval(&black, target).unwrap();
        let verdict = b.payload().approval().unwrap().verdict;
        black.append(b);
        match verdict {
            ApprovalVerdict::Approve => println!("black approves {}", target.short()),
            ApprovalVerdict::Disapprove { evidence } => {
                println!("black disapproves {}, evidence {}", target.short(), evidence.digest.short())
            }
        }
    }

    let violations = audit(black.lace());
    for v in &violations {
        println!("{v}");
    }
    assert!(violations.iter().any(|v| v.kind() == "equivocation" && v.culprit() == green.id()));
    assert!(violations.iter().all(|v| v.culprit() == green.id()));
}
