//! The full second-order loop on a live simulation: quiet demand pulls the
//! occupancy metric down, the meso policy proposes a price cut, stakeholders
//! vote, and the enacted change lands on the ledger as a parameter update
//! with its proof attached.
//!
//! ```bash
//! cargo run --example governance_loop
//! ```

use no1s1::ledger::TxKind;
use no1s1::sim::{parse_scenario, run};

fn main() {
    let scenario = parse_scenario(
        r#"{
            "seed": 11,
            "duration_s": 43200,
            "genesis": {"renter-1": 20},
            "arrivals": {"mean_interarrival_s": 28800},
            "stakeholders": [
                {"account": "builder",   "capital_share": "0.5", "usage_share": "0.2", "labour_share": "0.3"},
                {"account": "resident",  "capital_share": "0.3", "usage_share": "0.6", "labour_share": "0.2"},
                {"account": "caretaker", "capital_share": "0.2", "usage_share": "0.2", "labour_share": "0.5"}
            ],
            "behaviour": {"approval_probability": 0.9, "abstain_probability": 0.05},
            "timing": {"governance_epoch_s": 10800, "vote_window_s": 900},
            "phases": [{"start_s": 0, "mechanism": "direct", "policies_enabled": true}],
            "policies": [{
                "id": "occupancy-price",
                "metric": "occupancy_rate",
                "below": 0.3,
                "parameter": "price_per_minute",
                "scale": "0.9",
                "cooldown_s": 10800
            }]
        }"#,
    )
    .expect("scenario is valid");

    let artifacts = run(scenario).expect("run completes");

    println!("window metrics driving the meso layer:");
    for w in &artifacts.report.windows {
        println!(
            "  [{:>6}..{:>6})  occupancy {:.3}  revenue {}  mean soc {:.3}",
            w.window_start, w.window_end, w.occupancy_rate, w.revenue, w.mean_soc
        );
    }

    println!("\nproposal lifecycle:");
    for g in &artifacts.report.governance {
        println!(
            "  #{} {} -> {} via {} | yes {} no {} participation {}/{} | {}{}",
            g.proposal,
            g.parameter,
            g.new_value,
            g.mechanism,
            g.yes,
            g.no,
            g.participation,
            g.total,
            g.status,
            g.enacted_at.map(|t| format!(" at t={t}")).unwrap_or_default()
        );
    }

    println!("\nparameter updates on the ledger (with their proofs):");
    for tx in &artifacts.log {
        if let TxKind::ParamUpdate(update) = &tx.kind {
            println!(
                "  t={:<6} {} := {}  [proposal {} {} yes {} no {} passed {}]",
                tx.timestamp,
                update.name,
                update.value.canonical(),
                update.proof.proposal,
                update.proof.mechanism,
                update.proof.yes_power,
                update.proof.no_power,
                update.proof.passed
            );
        }
    }

    println!("\nthe policy only ever proposes; every change above cleared a vote");
    println!("state root: {}", artifacts.report.state_root);
}
