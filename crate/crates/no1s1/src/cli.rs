//! Command-line entry points: validate scenarios, execute runs, replay logs,
//! and render summary tables. The `no1s1` binary is a thin wrapper over
//! these functions.
//!
//! Exit codes: 0 success, 2 validation error or missing file, 3 internal
//! invariant violation, 4 replay mismatch.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::sim::report::{load_report, replay_run, write_run_dir, ReportError};
use crate::sim::{load_scenario, run, EngineError, RunReport, Scenario, ScenarioError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

/// Inclusive seed range, written `A..B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

impl FromStr for SeedRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("expected A..B, got {s:?}"))?;
        let start: u64 = a.trim().parse().map_err(|_| format!("bad seed {a:?}"))?;
        let end: u64 = b.trim().parse().map_err(|_| format!("bad seed {b:?}"))?;
        if start > end {
            return Err(format!("empty seed range {s:?}"));
        }
        Ok(SeedRange { start, end })
    }
}

#[derive(Debug, Parser)]
#[command(name = "no1s1", version, about = "Self-owning cabin simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Override the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run an inclusive seed range A..B, one subdirectory per seed.
    #[arg(long, conflicts_with = "seed")]
    pub seeds: Option<SeedRange>,
    /// Output directory for report files.
    #[arg(long, env = "NO1S1_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Suppress non-essential output.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a scenario and write report files.
    Run(RunArgs),
    /// Parse and validate a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Re-apply ledger.csv from a run directory and verify the state root.
    Replay {
        /// Run directory containing report.json and ledger.csv.
        run_dir: PathBuf,
    },
    /// Print summary tables for a run directory and write summary.md.
    Report {
        /// Run directory containing report.json and metrics.csv.
        run_dir: PathBuf,
    },
}

/// Parse process arguments and dispatch; returns the exit code.
pub fn run_main() -> i32 {
    dispatch(Cli::parse())
}

pub fn dispatch(cli: Cli) -> i32 {
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Replay { run_dir } => cmd_replay(&run_dir),
        Command::Report { run_dir } => cmd_report(&run_dir),
    }
}

fn engine_exit(e: &EngineError) -> i32 {
    match e {
        EngineError::Scenario(_) => EXIT_VALIDATION,
        _ => EXIT_INVARIANT,
    }
}

fn headline(report: &RunReport) -> String {
    let occupancy = if report.windows.is_empty() {
        0.0
    } else {
        report.windows.iter().map(|w| w.occupancy_rate).sum::<f64>()
            / report.windows.len() as f64
    };
    let revenue: crate::rat::Rat = report.windows.iter().map(|w| w.revenue).sum();
    format!(
        "occupancy {:.3}  revenue {}  final soc {:.3}  house balance {}",
        occupancy, revenue, report.final_soc, report.house_balance
    )
}

/// Execute one seed into `dir`. Returns the report on success.
fn run_one(scenario: Scenario, dir: &Path) -> Result<RunReport, (i32, String)> {
    let artifacts = run(scenario).map_err(|e| (engine_exit(&e), e.to_string()))?;
    write_run_dir(dir, &artifacts)
        .map_err(|e| (EXIT_VALIDATION, e.to_string()))?;
    Ok(artifacts.report)
}

pub fn cmd_run(args: &RunArgs) -> i32 {
    let scenario = match load_scenario(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };

    match args.seeds {
        None => {
            let mut scenario = scenario;
            if let Some(seed) = args.seed {
                scenario.seed = seed;
            }
            match run_one(scenario, &args.out) {
                Ok(report) => {
                    println!("state_root {}", report.state_root);
                    if !args.quiet {
                        println!("{}", headline(&report));
                        println!("report written to {}", args.out.display());
                    }
                    EXIT_OK
                }
                Err((code, msg)) => {
                    eprintln!("error: {msg}");
                    code
                }
            }
        }
        Some(range) => {
            let seeds: Vec<u64> = (range.start..=range.end).collect();
            let workers = std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
                .min(seeds.len().max(1));
            let mut results: Vec<Option<Result<RunReport, (i32, String)>>> =
                (0..seeds.len()).map(|_| None).collect();
            std::thread::scope(|scope| {
                for (chunk_index, chunk) in results.chunks_mut(seeds.len().div_ceil(workers)).enumerate()
                {
                    let chunk_seeds = &seeds;
                    let scenario = &scenario;
                    let out = &args.out;
                    let base = chunk_index * seeds.len().div_ceil(workers);
                    scope.spawn(move || {
                        for (offset, slot) in chunk.iter_mut().enumerate() {
                            let seed = chunk_seeds[base + offset];
                            let mut s = scenario.clone();
                            s.seed = seed;
                            let dir = out.join(format!("seed-{seed}"));
                            *slot = Some(run_one(s, &dir));
                        }
                    });
                }
            });
            let mut worst = EXIT_OK;
            for (seed, result) in seeds.iter().zip(results) {
                match result.expect("all slots filled") {
                    Ok(report) => {
                        if args.quiet {
                            println!("seed {seed} state_root {}", report.state_root);
                        } else {
                            println!(
                                "seed {seed} state_root {}  {}",
                                report.state_root,
                                headline(&report)
                            );
                        }
                    }
                    Err((code, msg)) => {
                        eprintln!("seed {seed} error: {msg}");
                        worst = worst.max(code);
                    }
                }
            }
            worst
        }
    }
}

pub fn cmd_validate(scenario: &Path) -> i32 {
    match load_scenario(scenario) {
        Ok(s) => {
            println!(
                "valid: seed {}, duration {} s, {} genesis accounts, {} stakeholders",
                s.seed,
                s.duration_s,
                s.genesis.len(),
                s.stakeholders.len()
            );
            EXIT_OK
        }
        Err(e @ ScenarioError::Parse(_)) | Err(e @ ScenarioError::Validation(_)) => {
            eprintln!("error: {e}");
            EXIT_VALIDATION
        }
    }
}

pub fn cmd_replay(run_dir: &Path) -> i32 {
    match replay_run(run_dir) {
        Ok(outcome) => {
            if outcome.is_clean() {
                println!("replay ok: state_root {}", outcome.computed_root);
                EXIT_OK
            } else {
                eprintln!(
                    "replay mismatch: {}",
                    outcome.mismatch.as_deref().unwrap_or("unknown divergence")
                );
                EXIT_MISMATCH
            }
        }
        Err(e @ ReportError::MissingFile(_)) => {
            eprintln!("error: {e}");
            EXIT_VALIDATION
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_MISMATCH
        }
    }
}

pub fn cmd_report(run_dir: &Path) -> i32 {
    let report = match load_report(run_dir) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    if !run_dir.join("metrics.csv").exists() {
        eprintln!(
            "error: missing file: {}",
            run_dir.join("metrics.csv").display()
        );
        return EXIT_VALIDATION;
    }

    let rendered = render_report(&report);
    print!("{rendered}");

    let summary_path = run_dir.join("summary.md");
    if let Err(e) = std::fs::write(&summary_path, summary_markdown(&report)) {
        eprintln!("error: {}: {e}", summary_path.display());
        return EXIT_VALIDATION;
    }
    println!("summary written to {}", summary_path.display());
    EXIT_OK
}

fn render_report(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "state_root {}", report.state_root);
    let _ = writeln!(out, "{}", headline(report));
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:>12} {:>12} {:>10} {:>12} {:>9} {:>8}",
        "window_start", "window_end", "occupancy", "revenue", "mean_soc", "denials"
    );
    for w in &report.windows {
        let denials: u64 = w.denials.values().sum();
        let _ = writeln!(
            out,
            "{:>12} {:>12} {:>10.3} {:>12} {:>9.3} {:>8}",
            w.window_start,
            w.window_end,
            w.occupancy_rate,
            w.revenue.to_string(),
            w.mean_soc,
            denials
        );
    }
    let _ = writeln!(out);
    if report.governance.is_empty() {
        let _ = writeln!(out, "governance: no proposals");
    } else {
        let _ = writeln!(
            out,
            "{:>4} {:<26} {:>10} {:<14} {:>8} {:>8} {:<8}",
            "id", "parameter", "value", "mechanism", "yes", "no", "status"
        );
        for g in &report.governance {
            let _ = writeln!(
                out,
                "{:>4} {:<26} {:>10} {:<14} {:>8} {:>8} {:<8}",
                g.proposal,
                g.parameter,
                g.new_value,
                g.mechanism,
                g.yes.to_string(),
                g.no.to_string(),
                g.status
            );
        }
    }
    let _ = writeln!(out);
    let settled = report
        .settlements
        .iter()
        .filter(|s| s.settled_at.is_some())
        .count();
    let _ = writeln!(
        out,
        "grants: {} issued, {} settled, sustainability reserve {}",
        report.settlements.len(),
        settled,
        report.sustainability_reserve
    );
    let denials = crate::sim::report::denial_totals(&report.windows);
    if !denials.is_empty() {
        let rendered: Vec<String> = denials
            .iter()
            .map(|(reason, count)| format!("{reason} {count}"))
            .collect();
        let _ = writeln!(out, "denials by reason: {}", rendered.join(", "));
    }
    out
}

fn summary_markdown(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Run summary\n");
    let _ = writeln!(out, "- state root: `{}`", report.state_root);
    let _ = writeln!(out, "- seed: {}", report.scenario.seed);
    let _ = writeln!(out, "- duration: {} s", report.scenario.duration_s);
    let _ = writeln!(out, "- {}", headline(report));
    let _ = writeln!(out, "\n## Windows\n");
    let _ = writeln!(
        out,
        "| start | end | occupancy | revenue | mean soc | denials |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for w in &report.windows {
        let denials: u64 = w.denials.values().sum();
        let _ = writeln!(
            out,
            "| {} | {} | {:.3} | {} | {:.3} | {} |",
            w.window_start, w.window_end, w.occupancy_rate, w.revenue, w.mean_soc, denials
        );
    }
    let _ = writeln!(out, "\n## Governance\n");
    if report.governance.is_empty() {
        let _ = writeln!(out, "No proposals.");
    } else {
        let _ = writeln!(
            out,
            "| id | parameter | value | mechanism | yes | no | participation | status |"
        );
        let _ = writeln!(out, "|---|---|---|---|---|---|---|---|");
        for g in &report.governance {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                g.proposal,
                g.parameter,
                g.new_value,
                g.mechanism,
                g.yes,
                g.no,
                g.participation,
                g.status
            );
        }
    }
    let _ = writeln!(out, "\n## Event counts\n");
    for (name, count) in &report.event_counts {
        let _ = writeln!(out, "- {name}: {count}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_range_parses() {
        assert_eq!(
            "3..7".parse::<SeedRange>().unwrap(),
            SeedRange { start: 3, end: 7 }
        );
        assert!("7..3".parse::<SeedRange>().is_err());
        assert!("x..3".parse::<SeedRange>().is_err());
        assert!("17".parse::<SeedRange>().is_err());
    }

    #[test]
    fn cli_parses_run_command() {
        let cli = Cli::try_parse_from([
            "no1s1", "run", "--scenario", "s.json", "--seed", "9", "--out", "r",
        ])
        .unwrap();
        match cli.command {
            Command::Run(args) => {
                assert_eq!(args.seed, Some(9));
                assert_eq!(args.out, PathBuf::from("r"));
                assert!(!args.quiet);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn seed_and_seeds_conflict() {
        let err = Cli::try_parse_from([
            "no1s1", "run", "--scenario", "s.json", "--seed", "9", "--seeds", "1..3",
        ])
        .unwrap_err();
        assert_eq!(err.kind(), clap::error::ErrorKind::ArgumentConflict);
    }

    #[test]
    fn out_dir_defaults_from_environment() {
        std::env::set_var("NO1S1_OUT", "/tmp/no1s1-env-out");
        let cli = Cli::try_parse_from(["no1s1", "run", "--scenario", "s.json"]).unwrap();
        std::env::remove_var("NO1S1_OUT");
        match cli.command {
            Command::Run(args) => assert_eq!(args.out, PathBuf::from("/tmp/no1s1-env-out")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
