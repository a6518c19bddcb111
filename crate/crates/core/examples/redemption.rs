// A trader redeems a sovereign's coin and asks to be repaid in its own
// currency; the sovereign accepts the claim and repays.

use grassroots_flash::blocklace::{create_block, Comment, Keypair, Payload};
use grassroots_flash::flashpay::{
    make_accept, make_issue, make_mint_burn, make_redemption_claim, repay, AgentState, PaymentRef,
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

fn take(s: &mut AgentState, pay: &grassroots_flash::blocklace::BlockRef) {
    let incoming = PaymentRef::find(pay, &s.id()).unwrap();
    let b = make_accept(s, &incoming, None, Comment::None).unwrap();
    s.append(b);
}

fn main() {
    let (mut black, mut green) = (agent("black"), agent("green"));
    let (k, g) = (black.id(), green.id());

    let b = make_mint_burn(&green, g, 7, Comment::None).unwrap();
    green.append(b);
    let b = make_issue(&green, g, k, 7, Comment::None).unwrap();
    let greens = green.append(b);
    let b = make_mint_burn(&black, k, 4, Comment::None).unwrap();
    black.append(b);
    let b = make_issue(&black, k, g, 1, Comment::None).unwrap();
    let blacks = black.append(b);
    sync(&mut black, &green);
    sync(&mut green, &black);
    take(&mut black, &greens);
    take(&mut green, &blacks);
    println!("black holds {} black and {} green", black.balance_in(&k), black.balance_in(&g));

    let b = make_redemption_claim(&green, k, 1, vec![g]).unwrap();
    let claim = green.append(b);
    sync(&mut black, &green);
    take(&mut black, &claim);
    let repayment = repay(&mut black, &claim.digest()).unwrap();
    println!("black repays with {} block(s)", repayment.len());
    println!("black holds {} black and {} green", black.balance_in(&k), black.balance_in(&g));

    sync(&mut green, &black);
    let back = repayment.last().unwrap();
    take(&mut green, back);
    println!("green holds {} green", green.balance_in(&g));

    assert_eq!((black.balance_in(&k), black.balance_in(&g)), (4, 6));
    assert_eq!(green.balance_in(&g), 1);
}
