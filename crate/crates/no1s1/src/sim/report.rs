//! Run-report files and log replay.
//!
//! A run directory holds `report.json` (summary + resolved scenario),
//! `events.jsonl` (pipeline event stream), `ledger.csv` (the transaction log
//! in canonical field order), `metrics.csv`, and `trace.csv`. Replay rebuilds
//! the world from the report's genesis, re-applies `ledger.csv`, and compares
//! state root and metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::ledger::Transaction;
use crate::loops::{collect_macro_metrics, MacroMetrics, PipelineEvent};
use crate::sim::engine::{genesis_world, RunArtifacts};
use crate::sim::RunReport;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("malformed {path}: {detail}")]
    Malformed { path: String, detail: String },
}

fn io_err(path: &Path, source: std::io::Error) -> ReportError {
    ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write all report files for a finished run.
pub fn write_run_dir(dir: &Path, artifacts: &RunArtifacts) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let report_path = dir.join("report.json");
    let mut report_json =
        serde_json::to_string_pretty(&artifacts.report).expect("report serializes");
    report_json.push('\n');
    fs::write(&report_path, report_json).map_err(|e| io_err(&report_path, e))?;

    let events_path = dir.join("events.jsonl");
    let mut events = String::new();
    for event in &artifacts.events {
        writeln!(
            events,
            "{}",
            serde_json::to_string(event).expect("event serializes")
        )
        .expect("string write");
    }
    fs::write(&events_path, events).map_err(|e| io_err(&events_path, e))?;

    let ledger_path = dir.join("ledger.csv");
    let mut ledger_csv = String::from("seq,timestamp,kind,signer,payload\n");
    for tx in &artifacts.log {
        writeln!(
            ledger_csv,
            "{},{},{},{},{}",
            tx.seq,
            tx.timestamp,
            tx.kind.kind_name(),
            tx.signer,
            tx.kind.canonical_payload()
        )
        .expect("string write");
    }
    fs::write(&ledger_path, ledger_csv).map_err(|e| io_err(&ledger_path, e))?;

    let metrics_path = dir.join("metrics.csv");
    fs::write(&metrics_path, metrics_csv(&artifacts.report.windows))
        .map_err(|e| io_err(&metrics_path, e))?;

    let trace_path = dir.join("trace.csv");
    let mut trace_csv = String::from("t,soc,distance_m,lock_state\n");
    for row in &artifacts.trace {
        writeln!(
            trace_csv,
            "{},{},{},{}",
            row.t,
            row.soc,
            row.distance_m.map(|d| d.to_string()).unwrap_or_default(),
            row.lock_state
        )
        .expect("string write");
    }
    fs::write(&trace_path, trace_csv).map_err(|e| io_err(&trace_path, e))?;
    Ok(())
}

pub fn metrics_csv(windows: &[MacroMetrics]) -> String {
    let mut out = String::from("window_start,window_end,occupancy_rate,revenue,mean_soc,denials\n");
    for w in windows {
        let denials: u64 = w.denials.values().sum();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            w.window_start, w.window_end, w.occupancy_rate, w.revenue, w.mean_soc, denials
        )
        .expect("string write");
    }
    out
}

/// Load `report.json` from a run directory.
pub fn load_report(dir: &Path) -> Result<RunReport, ReportError> {
    let path = dir.join("report.json");
    if !path.exists() {
        return Err(ReportError::MissingFile(path.display().to_string()));
    }
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| ReportError::Malformed {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Load and parse `ledger.csv` back into transactions.
pub fn load_ledger_csv(dir: &Path) -> Result<Vec<Transaction>, ReportError> {
    let path = dir.join("ledger.csv");
    if !path.exists() {
        return Err(ReportError::MissingFile(path.display().to_string()));
    }
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let malformed = |detail: String| ReportError::Malformed {
        path: path.display().to_string(),
        detail,
    };
    let mut txs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line != "seq,timestamp,kind,signer,payload" {
                return Err(malformed("unexpected header".into()));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(5, ',').collect();
        if fields.len() != 5 {
            return Err(malformed(format!("line {}: expected 5 fields", lineno + 1)));
        }
        let canonical = format!(
            "{}|{}|{}|{}|{}",
            fields[0], fields[1], fields[2], fields[3], fields[4]
        );
        let tx = Transaction::from_canonical_line(&canonical)
            .map_err(|e| malformed(format!("line {}: {e}", lineno + 1)))?;
        txs.push(tx);
    }
    Ok(txs)
}

/// Load `events.jsonl` from a run directory.
pub fn load_events(dir: &Path) -> Result<Vec<PipelineEvent>, ReportError> {
    let path = dir.join("events.jsonl");
    if !path.exists() {
        return Err(ReportError::MissingFile(path.display().to_string()));
    }
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|line| {
            serde_json::from_str(line).map_err(|e| ReportError::Malformed {
                path: path.display().to_string(),
                detail: e.to_string(),
            })
        })
        .collect()
}

/// Result of replaying a run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub expected_root: String,
    pub computed_root: String,
    pub metrics_match: bool,
    /// First divergence found, if any.
    pub mismatch: Option<String>,
}

impl ReplayOutcome {
    pub fn is_clean(&self) -> bool {
        self.mismatch.is_none()
    }
}

/// Rebuild the world from the report's genesis, re-apply the logged
/// transactions, and compare the state root and window metrics.
pub fn replay_run(dir: &Path) -> Result<ReplayOutcome, ReportError> {
    let report = load_report(dir)?;
    let txs = load_ledger_csv(dir)?;

    let (mut ledger, mut house) =
        genesis_world(&report.scenario).map_err(|e| ReportError::Malformed {
            path: dir.join("report.json").display().to_string(),
            detail: format!("scenario does not rebuild: {e}"),
        })?;

    let mut mismatch = None;
    for tx in txs {
        let seq = tx.seq;
        let receipt = ledger.submit(&mut house, tx);
        if let Some(reason) = receipt.reject_reason() {
            mismatch = Some(format!("transaction {seq} rejected on replay: {reason}"));
            break;
        }
    }

    let computed_root = ledger.state_root();
    if mismatch.is_none() && computed_root != report.state_root {
        mismatch = Some(format!(
            "state root mismatch: stored {}, replayed {}",
            report.state_root, computed_root
        ));
    }

    // Re-derive window metrics over the stored boundaries. Denial tallies
    // come from the event stream, which the transaction log cannot encode.
    let mut metrics_match = true;
    if mismatch.is_none() {
        for stored in &report.windows {
            let recomputed = collect_macro_metrics(
                &ledger.log,
                &house,
                (stored.window_start, stored.window_end),
                stored.denials.clone(),
            )
            .map_err(|e| ReportError::Malformed {
                path: dir.join("report.json").display().to_string(),
                detail: format!("stored window is invalid: {e}"),
            })?;
            if recomputed != *stored {
                metrics_match = false;
                mismatch = Some(format!(
                    "metrics mismatch in window [{}, {})",
                    stored.window_start, stored.window_end
                ));
                break;
            }
        }
    }

    Ok(ReplayOutcome {
        expected_root: report.state_root,
        computed_root,
        metrics_match,
        mismatch,
    })
}

/// Summed denial counts per reason across windows.
pub fn denial_totals(windows: &[MacroMetrics]) -> BTreeMap<String, u64> {
    let mut totals = BTreeMap::new();
    for w in windows {
        for (reason, count) in &w.denials {
            *totals.entry(reason.clone()).or_insert(0) += count;
        }
    }
    totals
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{parse_scenario, run};

    fn tmp_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "no1s1-report-test-{tag}-{}",
            std::process::id()
        ));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    fn artifacts(seed: u64) -> RunArtifacts {
        let scenario = parse_scenario(&format!(
            r#"{{"seed": {seed}, "duration_s": 21600, "arrivals": {{"mean_interarrival_s": 1200}}}}"#
        ))
        .unwrap();
        run(scenario).unwrap()
    }

    #[test]
    fn run_dir_roundtrips() {
        let dir = tmp_dir("roundtrip");
        let artifacts = artifacts(42);
        write_run_dir(&dir, &artifacts).unwrap();

        let report = load_report(&dir).unwrap();
        assert_eq!(report, artifacts.report);
        let txs = load_ledger_csv(&dir).unwrap();
        assert_eq!(txs, artifacts.log);
        let events = load_events(&dir).unwrap();
        assert_eq!(events, artifacts.events);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn replay_confirms_untouched_run() {
        let dir = tmp_dir("replay-ok");
        write_run_dir(&dir, &artifacts(7)).unwrap();
        let outcome = replay_run(&dir).unwrap();
        assert!(outcome.is_clean(), "{:?}", outcome.mismatch);
        assert_eq!(outcome.expected_root, outcome.computed_root);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn replay_detects_deleted_log_line() {
        let dir = tmp_dir("replay-tamper");
        write_run_dir(&dir, &artifacts(9)).unwrap();
        let path = dir.join("ledger.csv");
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.remove(lines.len() / 2);
        fs::write(&path, lines.join("\n")).unwrap();

        let outcome = replay_run(&dir).unwrap();
        assert!(!outcome.is_clean());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn replay_of_empty_log_is_clean() {
        let dir = tmp_dir("replay-empty");
        let scenario = parse_scenario(r#"{"seed": 1, "duration_s": 0}"#).unwrap();
        let mut artifacts = run(scenario).unwrap();
        // Strip the lone genesis broadcast to get a genuinely empty log.
        artifacts.log.clear();
        artifacts.report.state_root =
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855".into();
        write_run_dir(&dir, &artifacts).unwrap();
        let outcome = replay_run(&dir).unwrap();
        assert!(outcome.is_clean(), "{:?}", outcome.mismatch);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn missing_report_is_a_named_error() {
        let dir = tmp_dir("missing");
        fs::create_dir_all(&dir).unwrap();
        let err = load_report(&dir).unwrap_err();
        assert!(matches!(err, ReportError::MissingFile(_)));
        fs::remove_dir_all(&dir).unwrap();
    }
}
