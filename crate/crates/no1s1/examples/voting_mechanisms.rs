//! The same stakeholders and the same opinion split, tallied under all four
//! mechanisms. A capital whale wants a price rise; three smaller users
//! disagree. Direct (power-weighted) voting passes it; quadratic voting,
//! where extra votes cost quadratically, does not.
//!
//! ```bash
//! cargo run --example voting_mechanisms
//! ```

use std::collections::BTreeMap;

use no1s1::governance::{
    resolve_delegation, tally_direct, tally_quadratic, tally_representative, voting_power,
    Ballot, Choice, GovernanceMix, Mechanism, Stakeholder,
};
use no1s1::ledger::AccountId;
use no1s1::rat::Rat;

fn holder(id: &str, capital: Rat) -> Stakeholder {
    Stakeholder {
        account: AccountId::new(id),
        capital_share: capital,
        usage_share: Rat::zero(),
        labour_share: Rat::zero(),
        vote_credits: 9,
        delegate: None,
    }
}

fn main() {
    let stakeholders = vec![
        holder("whale", Rat::new(7, 10)),
        holder("user-1", Rat::new(1, 10)),
        holder("user-2", Rat::new(1, 10)),
        holder("user-3", Rat::new(1, 10)),
    ];
    let mix = GovernanceMix {
        capital: Rat::one(),
        usage: Rat::zero(),
        labour: Rat::zero(),
    };
    let quorum = Rat::new(1, 2);

    let powers: BTreeMap<AccountId, Rat> = stakeholders
        .iter()
        .map(|s| (s.account.clone(), voting_power(s, &mix).unwrap()))
        .collect();
    let credits: BTreeMap<AccountId, u64> = stakeholders
        .iter()
        .map(|s| (s.account.clone(), s.vote_credits))
        .collect();

    println!("proposal: raise price_per_minute");
    println!("powers: {:?}\n", powers.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>());

    // The whale buys 3 votes (cost 9 credits); each user buys 2 (cost 4).
    let ballots = vec![
        Ballot { voter: AccountId::new("whale"), proposal: 0, choice: Choice::Yes, votes_bought: 3 },
        Ballot { voter: AccountId::new("user-1"), proposal: 0, choice: Choice::No, votes_bought: 2 },
        Ballot { voter: AccountId::new("user-2"), proposal: 0, choice: Choice::No, votes_bought: 2 },
        Ballot { voter: AccountId::new("user-3"), proposal: 0, choice: Choice::No, votes_bought: 2 },
    ];

    let direct = tally_direct(0, Mechanism::Direct, &powers, &ballots, quorum, false);
    println!(
        "direct:         yes {} vs no {} -> {}",
        direct.yes_power,
        direct.no_power,
        verdict(direct.passed)
    );

    // Liquid democracy: both users delegate to user-1, who votes No.
    let mut liquid_holders = stakeholders.clone();
    liquid_holders[2].delegate = Some(AccountId::new("user-1"));
    liquid_holders[3].delegate = Some(AccountId::new("user-1"));
    let effective = resolve_delegation(&liquid_holders, &mix).unwrap();
    let liquid_ballots: Vec<Ballot> = ballots
        .iter()
        .filter(|b| effective[&b.voter] > Rat::zero())
        .cloned()
        .collect();
    let liquid = tally_direct(0, Mechanism::Liquid, &effective, &liquid_ballots, quorum, false);
    println!(
        "liquid:         yes {} vs no {} -> {} (user-1 carries delegated power {})",
        liquid.yes_power,
        liquid.no_power,
        verdict(liquid.passed),
        effective[&AccountId::new("user-1")]
    );

    // Representative democracy: two elected seats, one vote each.
    let seats = [AccountId::new("user-1"), AccountId::new("whale")];
    let representative = tally_representative(0, &seats, &ballots, quorum, false);
    println!(
        "representative: yes {} vs no {} -> {} (seats: whale, user-1)",
        representative.yes_power,
        representative.no_power,
        verdict(representative.passed)
    );

    let quadratic = tally_quadratic(0, &powers, &credits, &ballots, quorum, false).unwrap();
    println!(
        "quadratic:      yes {} vs no {} votes -> {} (3 whale votes cost all 9 credits)",
        quadratic.yes_power,
        quadratic.no_power,
        verdict(quadratic.passed)
    );

    println!(
        "\nsame ballots, opposite outcomes: direct {} / quadratic {}",
        verdict(direct.passed),
        verdict(quadratic.passed)
    );
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASSED"
    } else {
        "FAILED"
    }
}
