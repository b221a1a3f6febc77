//! Loop B end to end: payment, QR check, unlock, presence detection,
//! check-in, and settlement, with the ledger recording every step. Also
//! shows the two standard denials: a foreign token and a second renter
//! while the cabin is taken.
//!
//! ```bash
//! cargo run --example entry_pipeline
//! ```

use no1s1::contracts::QrInputs;
use no1s1::device::qr_token;
use no1s1::ledger::AccountId;
use no1s1::loops::{LoopEvent, LoopOutcome, Pipeline};
use no1s1::rat::Rat;
use no1s1::sim::{genesis_world, Scenario};

fn main() {
    let mut scenario = Scenario::minimal(7, 86_400);
    scenario
        .genesis
        .insert(AccountId::new("alice"), Rat::from_int(5));
    scenario
        .genesis
        .insert(AccountId::new("bob"), Rat::from_int(5));
    let scenario = scenario.resolve().expect("valid scenario");

    let (mut ledger, mut house) = genesis_world(&scenario).unwrap();
    let mut pipeline = Pipeline::new(scenario.device.presence_samples);
    let alice = AccountId::new("alice");

    pipeline
        .run_loop_a(&mut ledger, &mut house, 0.85, 0)
        .unwrap();
    println!("t=0      menu at soc 0.85: {:?}", pipeline.menu);

    let deposit = house.registry().deposit_default;
    let outcome = pipeline
        .run_loop_b(
            &mut ledger,
            &mut house,
            60,
            LoopEvent::PaymentSubmitted {
                renter: alice.clone(),
                minutes: 120,
                deposit,
                qr: QrInputs {
                    username: "alice".into(),
                    location: "zurich".into(),
                    wallet: alice.clone(),
                },
            },
        )
        .unwrap();
    let LoopOutcome::Reserved { grant, token } = outcome else {
        panic!("reservation failed: {outcome:?}");
    };
    println!("t=60     {grant} issued, 1.0 in escrow, alice balance {}", ledger.funds.balance(&alice));

    // A stranger's QR bounces off the camera check.
    let stranger = qr_token("mallory", "nowhere", &AccountId::new("0x0")).unwrap();
    pipeline
        .run_loop_b(&mut ledger, &mut house, 90, LoopEvent::QrShown { token: stranger })
        .unwrap();
    println!("t=90     foreign token denied ({:?})", pipeline.denials);

    // Bob pays while the house is reserved: rejected, no funds move.
    let bob = AccountId::new("bob");
    pipeline
        .run_loop_b(
            &mut ledger,
            &mut house,
            100,
            LoopEvent::PaymentSubmitted {
                renter: bob.clone(),
                minutes: 120,
                deposit: Rat::one(),
                qr: QrInputs {
                    username: "bob".into(),
                    location: "zurich".into(),
                    wallet: bob.clone(),
                },
            },
        )
        .unwrap();
    println!("t=100    second renter denied, bob still holds {}", ledger.funds.balance(&bob));

    // The real renter arrives.
    pipeline
        .run_loop_b(&mut ledger, &mut house, 120, LoopEvent::QrShown { token })
        .unwrap();
    println!("t=120    lock: {}", pipeline.lock.status);

    for t in [122, 124, 126] {
        let outcome = pipeline
            .run_loop_b(&mut ledger, &mut house, t, LoopEvent::DistanceSample { meters: 0.5 })
            .unwrap();
        if let LoopOutcome::CheckedIn { grant, .. } = outcome {
            println!("t={t}    presence confirmed, {grant} checked in, house occupied");
        }
    }
    pipeline
        .run_loop_b(&mut ledger, &mut house, 140, LoopEvent::DoorClosed)
        .unwrap();
    println!("t=140    door closed, lock: {}", pipeline.lock.status);

    // Stay over: 120 minutes from check-in at t=126.
    let end = 126 + 120 * 60;
    let outcome = pipeline
        .run_loop_b(&mut ledger, &mut house, end, LoopEvent::StayExpired { grant })
        .unwrap();
    let LoopOutcome::Settled { fee, refund, .. } = outcome else {
        panic!("settlement failed: {outcome:?}");
    };
    println!("t={end}   settled: fee {fee} to the house, refund {refund} to alice");
    println!(
        "\nbalances: alice {}, house {}, total {}",
        ledger.funds.balance(&alice),
        ledger.funds.balance(house.account()),
        ledger.funds.total()
    );
    println!("conservation holds: {}", ledger.conserves_supply());
    println!("ledger log ({} transactions):", ledger.log.len());
    for tx in &ledger.log {
        println!("  {}", tx.canonical_line());
    }
}
