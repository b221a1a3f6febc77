//! Liquid-democracy power flow: chains forward to the terminal voter,
//! delegation cycles void their edges, and total power is conserved
//! through every rearrangement.
//!
//! ```bash
//! cargo run --example delegation
//! ```

use no1s1::governance::{resolve_delegation, GovernanceMix, Stakeholder};
use no1s1::ledger::AccountId;
use no1s1::rat::Rat;

fn holders(edges: &[(&str, Option<&str>)]) -> Vec<Stakeholder> {
    let share = Rat::new(1, edges.len() as i128);
    edges
        .iter()
        .map(|(id, delegate)| Stakeholder {
            account: AccountId::new(*id),
            capital_share: share,
            usage_share: Rat::zero(),
            labour_share: Rat::zero(),
            vote_credits: 9,
            delegate: delegate.map(AccountId::new),
        })
        .collect()
}

fn show(title: &str, edges: &[(&str, Option<&str>)]) {
    let mix = GovernanceMix {
        capital: Rat::one(),
        usage: Rat::zero(),
        labour: Rat::zero(),
    };
    let stakeholders = holders(edges);
    let effective = resolve_delegation(&stakeholders, &mix).unwrap();
    println!("{title}");
    for (id, delegate) in edges {
        let arrow = delegate.map_or("votes directly".to_string(), |d| format!("delegates to {d}"));
        println!("  {id:<8} {arrow:<18} effective power {}", effective[&AccountId::new(*id)]);
    }
    let total: Rat = effective.values().copied().sum();
    println!("  total power conserved: {total}\n");
}

fn main() {
    show(
        "single hop: everyone trusts dana",
        &[
            ("alice", Some("dana")),
            ("bob", Some("dana")),
            ("carol", None),
            ("dana", None),
        ],
    );

    show(
        "chain: alice -> bob -> carol",
        &[
            ("alice", Some("bob")),
            ("bob", Some("carol")),
            ("carol", None),
            ("dana", None),
        ],
    );

    show(
        "cycle: bob and carol point at each other (their edges are void)",
        &[
            ("alice", Some("bob")),
            ("bob", Some("carol")),
            ("carol", Some("bob")),
            ("dana", None),
        ],
    );
}
