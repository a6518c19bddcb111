// A sovereign mints coins and pays two traders; one trader pays the other,
// the sovereign approves, and the payee accepts.

use grassroots_flash::blocklace::{create_block, BlockRef, Comment, Keypair, Payload};
use grassroots_flash::flashpay::{
    audit, balance, make_accept, make_approval, make_issue, make_mint_burn, AgentState, PaymentRef,
};

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

fn accept(s: &mut AgentState, pay: &BlockRef, approval: Option<&BlockRef>) {
    let incoming = PaymentRef::find(pay, &s.id()).expect("pays me");
    let b = make_accept(s, &incoming, approval.map(|a| *a.hash()), Comment::None).expect("acceptable");
    s.append(b);
}

fn main() {
    let (mut black, mut green, mut red) = (agent("black"), agent("green"), agent("red"));
    let coin = black.id();

    let b = make_mint_burn(&black, coin, 11, Comment::None).unwrap();
    black.append(b);
    for (who, amount) in [(green.id(), 3), (red.id(), 5)] {
        let b = make_issue(&black, coin, who, amount, Comment::None).unwrap();
        black.append(b);
    }
    sync(&mut green, &black);
    sync(&mut red, &black);
    for s in [&mut green, &mut red] {
        let lace = s.lace().clone();
        let pay = lace.blocks_of(&coin).find(|b| PaymentRef::find(b, &s.id()).is_some()).unwrap().clone();
        accept(s, &pay, None);
    }
    println!("green {} black, red {} black", green.balance_in(&coin), red.balance_in(&coin));

    let b = make_issue(&green, coin, red.id(), 1, Comment::FreeText("lunch".into())).unwrap();
    let pay = green.append(b);
    println!("green pays red 1 black coin and keeps {}", green.balance_in(&coin));

    sync(&mut black, &green);
    let b = make_approval(&black, &pay.digest()).unwrap();
    let approval = black.append(b);
    sync(&mut red, &black);
    sync(&mut red, &green);
    accept(&mut red, &pay, Some(&approval));
    println!("red accepts; red holds {} black", red.balance_in(&coin));

    let before = black.balance_in(&coin);
    let b = make_mint_burn(&black, coin, before + 1, Comment::None).unwrap();
    black.append(b);
    println!("black mints one coin: {before} -> {} black", black.balance_in(&coin));

    assert_eq!(red.balance_in(&coin), 6);
    assert_eq!(balance(&green.id(), &coin, red.lace()), Ok(2));
    assert_eq!(black.balance_in(&coin), 4);
    assert!(audit(red.lace()).is_empty());
}
