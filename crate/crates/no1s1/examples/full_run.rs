//! Load a scenario file, execute a full day, and write the report directory
//! (report.json, events.jsonl, ledger.csv, metrics.csv, trace.csv) exactly
//! as the `no1s1 run` command does.
//!
//! ```bash
//! cargo run --example full_run
//! ```

use std::path::Path;

use no1s1::sim::{load_scenario, run, write_run_dir};

fn main() {
    let scenario_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/default.json");
    let scenario = load_scenario(&scenario_path).expect("scenario loads");
    println!(
        "running {} for {} sim-seconds with seed {}",
        scenario_path.display(),
        scenario.duration_s,
        scenario.seed
    );

    let artifacts = run(scenario).expect("run completes");
    let report = &artifacts.report;

    println!("\nstate root: {}", report.state_root);
    println!("event counts:");
    for (name, count) in &report.event_counts {
        println!("  {name:<14} {count}");
    }

    println!("\nsettlement table:");
    println!(
        "  {:<5} {:<10} {:>7} {:>9} {:>8} {:>8}  state",
        "grant", "renter", "minutes", "deposit", "fee", "refund"
    );
    for s in &report.settlements {
        println!(
            "  {:<5} {:<10} {:>7} {:>9} {:>8} {:>8}  {}",
            s.grant,
            s.renter.to_string(),
            s.minutes_purchased,
            s.deposit.to_string(),
            s.fee.map(|f| f.to_string()).unwrap_or_else(|| "-".into()),
            s.refund.map(|r| r.to_string()).unwrap_or_else(|| "-".into()),
            s.state
        );
    }

    let out = std::env::temp_dir().join("no1s1-example-run");
    write_run_dir(&out, &artifacts).expect("report written");
    println!("\nreport files written to {}", out.display());
    println!("inspect them with: no1s1 report {}", out.display());
}
