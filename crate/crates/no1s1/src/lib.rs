//! Deterministic discrete-event simulator of a self-owning cabin.
//!
//! A single-node ledger is the source of truth for the cabin's funds and
//! state. Two first-order loops govern it: energy broadcasts drive the
//! rental-duration menu, and the entry pipeline walks payment, QR check,
//! unlock, presence, and settlement. A second-order governance layer lets
//! stakeholders steer contract parameters through direct, representative,
//! liquid, or quadratic voting.
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run --example energy_menu        # loop A: solar day -> duration menu
//! cargo run --example entry_pipeline     # loop B: one full rental
//! cargo run --example voting_mechanisms  # four mechanisms, same ballots
//! cargo run --example delegation         # liquid-democracy power flow
//! cargo run --example governance_loop    # metrics -> proposal -> enactment
//! cargo run --example full_run           # scenario run with report files
//! cargo run --example replay_audit       # determinism and tamper detection
//! ```
//!
//! The `no1s1` binary wraps the same library for scripted use:
//! `no1s1 run --scenario s.json --seed 42 --out out/`.

pub mod cli;
pub mod contracts;
pub mod device;
mod digest;
pub mod governance;
pub mod ledger;
pub mod loops;
pub mod rat;
pub mod sim;

/// Simulation time in whole seconds from genesis.
pub type SimTime = u64;

pub use contracts::{House, ParamRegistry};
pub use ledger::{AccountId, Ledger, Transaction};
pub use rat::Rat;
pub use sim::{load_scenario, run, RunReport, Scenario};
