//! Property suite: module invariants under randomized inputs, checked
//! against independent oracles where the contract calls for one.

mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use no1s1::contracts::GrantState;
use no1s1::device::{detect_presence, qr_token, step_energy, uds_distance, BatteryState, EnvSample};
use no1s1::governance::{
    elect_representatives, resolve_delegation, tally_direct, tally_quadratic, tally_representative,
    ApprovalBallot, Ballot, Choice, GovernanceMix, Mechanism,
};
use no1s1::ledger::{AccountId, GrantId, Ledger, Transaction, TxKind};
use no1s1::loops::PipelineEvent;
use no1s1::rat::Rat;
use no1s1::sim::{genesis_world, parse_scenario, run};

use common::{account, capital_stakeholders, oracle_resolve_delegation};

fn rat_strategy() -> impl Strategy<Value = Rat> {
    (-1_000_000i128..1_000_000, 1i128..1_000_000).prop_map(|(n, d)| Rat::new(n, d))
}

proptest! {
    #[test]
    fn rat_display_parse_roundtrip(r in rat_strategy()) {
        let shown = r.to_string();
        let parsed: Rat = shown.parse().unwrap();
        prop_assert_eq!(parsed, r);
    }

    #[test]
    fn soc_stays_in_unit_interval(
        initial in 0.0f64..=1.0,
        trace in prop::collection::vec((0.0f64..2000.0, 0.0f64..500.0, 1u64..7200), 1..60),
    ) {
        let mut battery = BatteryState { soc: initial, capacity_wh: 800.0, last_update: 0 };
        for (solar, load, dt) in trace {
            battery = step_energy(&battery, &EnvSample::new(solar, load), dt, 0.95);
            prop_assert!((0.0..=1.0).contains(&battery.soc), "soc {}", battery.soc);
        }
    }

    #[test]
    fn step_energy_additive_in_time(
        soc in 0.3f64..0.7,
        solar in 0.0f64..100.0,
        load in 0.0f64..100.0,
        dt in 1u64..1800,
    ) {
        // Net swing is bounded well inside the clamp for these ranges.
        let battery = BatteryState { soc, capacity_wh: 5000.0, last_update: 0 };
        let env = EnvSample::new(solar, load);
        let two_small = step_energy(&step_energy(&battery, &env, dt, 0.9), &env, dt, 0.9);
        let one_big = step_energy(&battery, &env, 2 * dt, 0.9);
        prop_assert!((two_small.soc - one_big.soc).abs() < 1e-9);
        prop_assert_eq!(two_small.last_update, one_big.last_update);
    }

    #[test]
    fn uds_distance_is_linear_and_non_negative(a in 0.0f64..0.05, b in 0.0f64..0.05) {
        let da = uds_distance(a).unwrap();
        let db = uds_distance(b).unwrap();
        let dsum = uds_distance(a + b).unwrap();
        prop_assert!(da >= 0.0 && db >= 0.0);
        prop_assert!((dsum - (da + db)).abs() < 1e-9);
    }

    #[test]
    fn presence_matches_naive_scan(
        window in prop::collection::vec(0.0f64..3.0, 3..20),
        k in 1usize..5,
        threshold in 0.5f64..2.0,
    ) {
        prop_assume!(window.len() >= k);
        let expected = window[window.len() - k..].iter().all(|&d| d < threshold);
        prop_assert_eq!(detect_presence(&window, k, threshold).unwrap(), expected);
    }

    #[test]
    fn qr_tokens_are_injective_on_distinct_inputs(
        users in prop::collection::btree_set("[a-z]{1,8}", 2..10),
    ) {
        let wallet = AccountId::new("0xW");
        let tokens: Vec<_> = users
            .iter()
            .map(|u| qr_token(u, "zurich", &wallet).unwrap())
            .collect();
        for i in 0..tokens.len() {
            for j in (i + 1)..tokens.len() {
                prop_assert_ne!(&tokens[i], &tokens[j]);
            }
        }
    }

    #[test]
    fn delegation_conserves_power_and_matches_oracle(
        n in 2usize..=8,
        edges in prop::collection::vec(prop::option::of(0usize..8), 8),
    ) {
        let delegates: Vec<Option<usize>> = (0..n)
            .map(|i| edges[i].map(|d| d % n).filter(|d| *d != i))
            .collect();
        let stakeholders = capital_stakeholders(n, &delegates);
        let mix = GovernanceMix {
            capital: Rat::one(),
            usage: Rat::zero(),
            labour: Rat::zero(),
        };
        let resolved = resolve_delegation(&stakeholders, &mix).unwrap();

        let accounts: Vec<AccountId> = (0..n).map(account).collect();
        let total: i128 = (n as i128) * (n as i128 + 1) / 2;
        let powers: Vec<Rat> = (0..n).map(|i| Rat::new(i as i128 + 1, total)).collect();
        let expected = oracle_resolve_delegation(&accounts, &powers, &delegates);
        prop_assert_eq!(&resolved, &expected);

        let sum: Rat = resolved.values().copied().sum();
        prop_assert_eq!(sum, Rat::one());
    }

    #[test]
    fn direct_tally_is_anonymous_and_scale_invariant(
        powers_raw in prop::collection::vec(1i128..100, 2..7),
        choices in prop::collection::vec(0u8..3, 2..7),
        scale_n in 1i128..50,
        scale_d in 1i128..50,
        rotation in 0usize..6,
    ) {
        let n = powers_raw.len().min(choices.len());
        let total: i128 = powers_raw[..n].iter().sum();
        let voters: Vec<AccountId> = (0..n).map(account).collect();
        let powers: BTreeMap<AccountId, Rat> = (0..n)
            .map(|i| (voters[i].clone(), Rat::new(powers_raw[i], total)))
            .collect();
        let ballots: Vec<Ballot> = (0..n)
            .map(|i| Ballot {
                voter: voters[i].clone(),
                proposal: 0,
                choice: match choices[i] {
                    0 => Choice::Yes,
                    1 => Choice::No,
                    _ => Choice::Abstain,
                },
                votes_bought: 0,
            })
            .collect();
        let quorum = Rat::new(1, 2);
        let baseline = tally_direct(0, Mechanism::Direct, &powers, &ballots, quorum, false);

        // Anonymity: rotate voter identities together with their powers.
        let rot = rotation % n;
        let renamed: BTreeMap<AccountId, Rat> = (0..n)
            .map(|i| (voters[(i + rot) % n].clone(), powers[&voters[i]]))
            .collect();
        let renamed_ballots: Vec<Ballot> = ballots
            .iter()
            .enumerate()
            .map(|(i, b)| Ballot {
                voter: voters[(i + rot) % n].clone(),
                ..b.clone()
            })
            .collect();
        let permuted =
            tally_direct(0, Mechanism::Direct, &renamed, &renamed_ballots, quorum, false);
        prop_assert_eq!(baseline.passed, permuted.passed);

        // Scale invariance: multiply every power by a positive constant.
        let c = Rat::new(scale_n, scale_d);
        let scaled: BTreeMap<AccountId, Rat> =
            powers.iter().map(|(k, v)| (k.clone(), *v * c)).collect();
        let scaled_result = tally_direct(0, Mechanism::Direct, &scaled, &ballots, quorum, false);
        prop_assert_eq!(baseline.passed, scaled_result.passed);
    }

    #[test]
    fn quadratic_budget_soundness(
        votes in prop::collection::vec(0u64..6, 1..6),
        credits in 0u64..30,
    ) {
        let n = votes.len();
        let voters: Vec<AccountId> = (0..n).map(account).collect();
        let powers: BTreeMap<AccountId, Rat> = voters
            .iter()
            .map(|v| (v.clone(), Rat::new(1, n as i128)))
            .collect();
        let budgets: BTreeMap<AccountId, u64> =
            voters.iter().map(|v| (v.clone(), credits)).collect();
        let ballots: Vec<Ballot> = (0..n)
            .map(|i| Ballot {
                voter: voters[i].clone(),
                proposal: 0,
                choice: if i % 2 == 0 { Choice::Yes } else { Choice::No },
                votes_bought: votes[i],
            })
            .collect();
        let over_budget = votes.iter().any(|v| v * v > credits);
        let result = tally_quadratic(0, &powers, &budgets, &ballots, Rat::zero(), false);
        prop_assert_eq!(result.is_err(), over_budget);
    }

    #[test]
    fn unanimous_yes_passes_under_every_mechanism(
        n in 1usize..=6,
        quorum_raw in 0i128..=100,
    ) {
        let quorum = Rat::new(quorum_raw, 100);
        let delegates = vec![None; n];
        let stakeholders = capital_stakeholders(n, &delegates);
        let mix = GovernanceMix {
            capital: Rat::one(),
            usage: Rat::zero(),
            labour: Rat::zero(),
        };
        let voters: Vec<AccountId> = (0..n).map(account).collect();
        let powers: BTreeMap<AccountId, Rat> = stakeholders
            .iter()
            .map(|s| (s.account.clone(), s.capital_share))
            .collect();
        let ballots: Vec<Ballot> = voters
            .iter()
            .map(|v| Ballot {
                voter: v.clone(),
                proposal: 0,
                choice: Choice::Yes,
                votes_bought: 1,
            })
            .collect();

        let direct = tally_direct(0, Mechanism::Direct, &powers, &ballots, quorum, false);
        prop_assert!(direct.passed);

        let liquid_powers = resolve_delegation(&stakeholders, &mix).unwrap();
        let liquid =
            tally_direct(0, Mechanism::Liquid, &liquid_powers, &ballots, quorum, false);
        prop_assert!(liquid.passed);

        let representative = tally_representative(0, &voters, &ballots, quorum, false);
        prop_assert!(representative.passed);

        let credits: BTreeMap<AccountId, u64> =
            voters.iter().map(|v| (v.clone(), 9)).collect();
        let quadratic = tally_quadratic(0, &powers, &credits, &ballots, quorum, false).unwrap();
        prop_assert!(quadratic.passed);
    }

    #[test]
    fn rejected_transfers_leave_the_ledger_bit_identical(
        amounts in prop::collection::vec(-50i64..200, 1..30),
    ) {
        let mut ledger = Ledger::new(AccountId::new("house"));
        ledger.open_account(AccountId::new("house"), Rat::zero()).unwrap();
        ledger.open_account(AccountId::new("a"), Rat::from_int(100)).unwrap();
        ledger.open_account(AccountId::new("b"), Rat::from_int(100)).unwrap();
        let mut house = no1s1::House::new(
            AccountId::new("house"),
            no1s1::ParamRegistry::default(),
            1800,
            0.9,
        );
        let supply = ledger.genesis_supply();
        for (i, amount) in amounts.iter().enumerate() {
            let (from, to) = if i % 2 == 0 { ("a", "b") } else { ("b", "a") };
            let tx = Transaction {
                seq: ledger.log.len() as u64,
                timestamp: i as u64,
                kind: TxKind::Transfer {
                    from: AccountId::new(from),
                    to: AccountId::new(to),
                    amount: Rat::from_int(*amount),
                },
                signer: AccountId::new(from),
            };
            let before = ledger.clone();
            let receipt = ledger.submit(&mut house, tx);
            if receipt.is_accepted() {
                prop_assert_eq!(ledger.log.len(), before.log.len() + 1);
            } else {
                prop_assert_eq!(&ledger, &before);
            }
            prop_assert_eq!(ledger.funds.total(), supply);
        }
    }

    #[test]
    fn approval_election_is_deterministic_under_ballot_order(
        approvals_raw in prop::collection::vec((0usize..5, prop::collection::vec(0usize..5, 1..4)), 1..8),
        k in 1usize..4,
    ) {
        let stakeholders = capital_stakeholders(5, &[None, None, None, None, None]);
        let mix = GovernanceMix {
            capital: Rat::one(),
            usage: Rat::zero(),
            labour: Rat::zero(),
        };
        let mut seen = std::collections::BTreeSet::new();
        let approvals: Vec<ApprovalBallot> = approvals_raw
            .iter()
            .filter(|(voter, _)| seen.insert(*voter))
            .map(|(voter, targets)| ApprovalBallot {
                voter: account(*voter),
                approves: targets.iter().map(|t| account(*t)).collect(),
            })
            .collect();
        prop_assume!(!approvals.is_empty());
        let forward = elect_representatives(&stakeholders, &mix, &approvals, k).unwrap();
        let mut reversed = approvals.clone();
        reversed.reverse();
        let backward = elect_representatives(&stakeholders, &mix, &reversed, k).unwrap();
        prop_assert_eq!(forward, backward);
    }
}

/// Loop-order safety: for every grant, the pipeline stream orders
/// reserve < unlock < check-in < settlement; and recomputing window metrics
/// from a replayed log reproduces the live values exactly.
#[test]
fn trace_order_and_metrics_purity_over_seeds() {
    for seed in [3u64, 17, 99, 123, 2024] {
        let scenario = parse_scenario(&format!(
            r#"{{
                "seed": {seed},
                "duration_s": 43200,
                "arrivals": {{"mean_interarrival_s": 1500}},
                "behaviour": {{"no_show_probability": 0.2, "qr_corruption_probability": 0.2}}
            }}"#
        ))
        .unwrap();
        let artifacts = run(scenario.clone()).unwrap();

        #[derive(Default)]
        struct Stages {
            reserved: Option<usize>,
            unlocked: Option<usize>,
            checked_in: Option<usize>,
            settled: Option<usize>,
        }
        let mut stages: BTreeMap<GrantId, Stages> = BTreeMap::new();
        for (pos, event) in artifacts.events.iter().enumerate() {
            match event {
                PipelineEvent::Reserved { grant, .. } => {
                    stages.entry(*grant).or_default().reserved = Some(pos);
                }
                PipelineEvent::Unlocked { grant, .. } => {
                    let s = stages.entry(*grant).or_default();
                    if s.unlocked.is_none() {
                        s.unlocked = Some(pos);
                    }
                }
                PipelineEvent::CheckedIn { grant, .. } => {
                    stages.entry(*grant).or_default().checked_in = Some(pos);
                }
                PipelineEvent::Settled { grant, .. } => {
                    stages.entry(*grant).or_default().settled = Some(pos);
                }
                _ => {}
            }
        }
        for (grant, s) in &stages {
            let reserved = s.reserved.unwrap_or_else(|| panic!("{grant} never reserved"));
            if let Some(unlocked) = s.unlocked {
                assert!(reserved < unlocked, "seed {seed} {grant}: unlock before reserve");
            }
            if let Some(checked_in) = s.checked_in {
                let unlocked = s.unlocked.expect("check-in requires unlock");
                assert!(unlocked < checked_in, "seed {seed} {grant}: check-in before unlock");
            }
            if let Some(settled) = s.settled {
                assert!(reserved < settled, "seed {seed} {grant}: settle before reserve");
                if let Some(checked_in) = s.checked_in {
                    assert!(checked_in < settled, "seed {seed} {grant}: settle before check-in");
                }
            }
        }

        // Settlement conservation across the whole settlement table.
        for record in &artifacts.report.settlements {
            if let (Some(fee), Some(refund)) = (record.fee, record.refund) {
                assert_eq!(fee + refund, record.deposit, "seed {seed}: settlement split");
            }
        }

        // Metrics purity: replay the log, recompute each stored window.
        let (mut ledger, mut house) = genesis_world(&scenario).unwrap();
        for tx in &artifacts.log {
            assert!(ledger.submit(&mut house, tx.clone()).is_accepted());
        }
        for stored in &artifacts.report.windows {
            let recomputed = no1s1::loops::collect_macro_metrics(
                &ledger.log,
                &house,
                (stored.window_start, stored.window_end),
                stored.denials.clone(),
            )
            .unwrap();
            assert_eq!(&recomputed, stored, "seed {seed}: window metrics drifted");

            // Revenue oracle: brute-force scan of settlement events.
            let scanned: Rat = artifacts
                .events
                .iter()
                .filter_map(|e| match e {
                    PipelineEvent::Settled { t, fee, .. }
                        if *t >= stored.window_start && *t < stored.window_end =>
                    {
                        Some(*fee)
                    }
                    _ => None,
                })
                .sum();
            assert_eq!(scanned, stored.revenue, "seed {seed}: revenue scan differs");
        }

        // Grants that finished a stay are settled exactly once.
        let settled_events = artifacts
            .events
            .iter()
            .filter(|e| matches!(e, PipelineEvent::Settled { .. }))
            .count();
        let settled_grants = house
            .grants()
            .values()
            .filter(|g| matches!(g.state, GrantState::Settled | GrantState::Expired))
            .count();
        assert_eq!(settled_events, settled_grants, "seed {seed}: duplicate settlements");
    }
}
