//! Deterministic discrete-event simulation: scenario schema, seeded agents,
//! the solar environment, and run orchestration.

mod engine;
pub mod report;
pub mod rng;

pub use engine::{genesis_world, run, EngineError, RunArtifacts, TraceRow};
pub use report::{load_report, replay_run, write_run_dir, ReplayOutcome};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contracts::{ContractError, DurationTable, ParamRegistry, ParamValue};
use crate::device::DeviceConfig;
use crate::governance::{GovernanceMix, Mechanism, Stakeholder};
use crate::ledger::AccountId;
use crate::loops::{MacroMetrics, MesoPolicy};
use crate::rat::Rat;
use crate::SimTime;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
}

/// Sinusoidal day cycle: daylight for the first half of `day_length_s`,
/// night for the second half.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolarProfile {
    pub peak_w: f64,
    pub day_length_s: u64,
}

impl Default for SolarProfile {
    fn default() -> Self {
        SolarProfile {
            peak_w: 400.0,
            day_length_s: 86_400,
        }
    }
}

/// Panel output at time `t`: `max(0, peak * sin(2*pi*(t mod D)/D))`, so the
/// integral over one full day is `peak * D / pi`.
pub fn solar_power(t: SimTime, profile: &SolarProfile) -> f64 {
    let day = profile.day_length_s as f64;
    let phase = (t % profile.day_length_s) as f64 / day;
    (profile.peak_w * (2.0 * std::f64::consts::PI * phase).sin()).max(0.0)
}

/// Renter arrival process: exponential inter-arrival times over a renter pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Arrivals {
    pub mean_interarrival_s: f64,
    /// Defaults to every genesis account except the house.
    pub renters: Option<Vec<AccountId>>,
}

impl Default for Arrivals {
    fn default() -> Self {
        Arrivals {
            mean_interarrival_s: 7200.0,
            renters: None,
        }
    }
}

/// Agent behaviour knobs, all probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Behaviour {
    pub no_show_probability: f64,
    pub qr_corruption_probability: f64,
    pub approval_probability: f64,
    pub abstain_probability: f64,
    /// Relative preference over menu positions; uniform when absent.
    pub duration_weights: Option<Vec<f64>>,
}

impl Default for Behaviour {
    fn default() -> Self {
        Behaviour {
            no_show_probability: 0.05,
            qr_corruption_probability: 0.02,
            approval_probability: 0.7,
            abstain_probability: 0.1,
            duration_weights: None,
        }
    }
}

/// Cadences and windows of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Timing {
    pub broadcast_interval_s: u64,
    pub governance_epoch_s: u64,
    pub vote_window_s: u64,
    /// Issued grants expire if not entered within this span.
    pub grant_expiry_s: u64,
    /// Seats elected under the representative mechanism.
    pub representatives: usize,
}

impl Default for Timing {
    fn default() -> Self {
        Timing {
            broadcast_interval_s: 60,
            governance_epoch_s: 86_400,
            vote_window_s: 3600,
            grant_expiry_s: 1800,
            representatives: 3,
        }
    }
}

/// Lifecycle phase: governance mix, mechanism, and policy gating from
/// `start_s` until the next phase begins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    #[serde(default)]
    pub start_s: SimTime,
    #[serde(default = "default_mechanism")]
    pub mechanism: Mechanism,
    #[serde(default = "GovernanceMix::equal_thirds")]
    pub mix: GovernanceMix,
    #[serde(default)]
    pub policies_enabled: bool,
}

fn default_mechanism() -> Mechanism {
    Mechanism::Direct
}

impl Default for Phase {
    fn default() -> Self {
        Phase {
            start_s: 0,
            mechanism: Mechanism::Direct,
            mix: GovernanceMix::equal_thirds(),
            policies_enabled: false,
        }
    }
}

/// Partial registry overrides applied on top of the genesis defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistryOverrides {
    pub deposit_default: Option<Rat>,
    pub price_per_minute: Option<Rat>,
    pub duration_table: Option<DurationTable>,
    pub soc_death: Option<Rat>,
    pub relock_timeout: Option<u64>,
    pub presence_threshold_m: Option<f64>,
    pub quorum_fraction: Option<Rat>,
    pub sustainability_reserve_fraction: Option<Rat>,
}

impl RegistryOverrides {
    pub fn apply(&self, registry: &mut ParamRegistry) -> Result<(), ContractError> {
        let mut set = |name: &str, value: Option<ParamValue>| -> Result<(), ContractError> {
            match value {
                Some(v) => registry.set(name, v),
                None => Ok(()),
            }
        };
        set("deposit_default", self.deposit_default.map(ParamValue::Amount))?;
        set("price_per_minute", self.price_per_minute.map(ParamValue::Amount))?;
        set(
            "duration_table",
            self.duration_table.clone().map(ParamValue::Table),
        )?;
        set("soc_death", self.soc_death.map(ParamValue::Fraction))?;
        set("relock_timeout", self.relock_timeout.map(ParamValue::Seconds))?;
        set(
            "presence_threshold_m",
            self.presence_threshold_m.map(ParamValue::Meters),
        )?;
        set("quorum_fraction", self.quorum_fraction.map(ParamValue::Fraction))?;
        set(
            "sustainability_reserve_fraction",
            self.sustainability_reserve_fraction.map(ParamValue::Fraction),
        )?;
        Ok(())
    }
}

fn default_house_account() -> AccountId {
    AccountId::new("house")
}

fn default_genesis() -> BTreeMap<AccountId, Rat> {
    let mut genesis = BTreeMap::new();
    genesis.insert(AccountId::new("house"), Rat::zero());
    for renter in ["renter-1", "renter-2", "renter-3"] {
        genesis.insert(AccountId::new(renter), Rat::from_int(20));
    }
    genesis
}

fn default_phases() -> Vec<Phase> {
    vec![Phase::default()]
}

fn default_policies() -> Vec<MesoPolicy> {
    vec![MesoPolicy::default_occupancy_pricing()]
}

/// A fully-specified run: genesis, environment, agents, phases, policies.
/// `seed` and `duration_s` are required; everything else defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub duration_s: SimTime,
    #[serde(default = "default_house_account")]
    pub house_account: AccountId,
    #[serde(default = "default_genesis")]
    pub genesis: BTreeMap<AccountId, Rat>,
    #[serde(default)]
    pub stakeholders: Vec<Stakeholder>,
    #[serde(default)]
    pub veto_holders: Vec<AccountId>,
    #[serde(default)]
    pub registry: RegistryOverrides,
    #[serde(default)]
    pub device: DeviceConfig,
    #[serde(default)]
    pub solar: SolarProfile,
    #[serde(default)]
    pub arrivals: Arrivals,
    #[serde(default)]
    pub behaviour: Behaviour,
    #[serde(default)]
    pub timing: Timing,
    #[serde(default = "default_phases")]
    pub phases: Vec<Phase>,
    /// Shipped policy set; inert unless a phase sets `policies_enabled`.
    #[serde(default = "default_policies")]
    pub policies: Vec<MesoPolicy>,
}

impl Scenario {
    /// Minimal scenario with every default applied.
    pub fn minimal(seed: u64, duration_s: SimTime) -> Self {
        let scenario: Scenario = serde_json::from_value(serde_json::json!({
            "seed": seed,
            "duration_s": duration_s,
        }))
        .expect("minimal scenario parses");
        scenario
    }

    /// The registry after genesis overrides.
    pub fn genesis_registry(&self) -> Result<ParamRegistry, ScenarioError> {
        let mut registry = ParamRegistry::default();
        self.registry
            .apply(&mut registry)
            .map_err(|e| ScenarioError::Validation(format!("registry override: {e}")))?;
        Ok(registry)
    }

    /// Renter pool: explicit list, or every genesis account except the house.
    pub fn renter_pool(&self) -> Vec<AccountId> {
        match &self.arrivals.renters {
            Some(list) => list.clone(),
            None => self
                .genesis
                .keys()
                .filter(|id| **id != self.house_account)
                .cloned()
                .collect(),
        }
    }

    /// The phase active at time `t`.
    pub fn phase_at(&self, t: SimTime) -> &Phase {
        self.phases
            .iter()
            .rev()
            .find(|p| p.start_s <= t)
            .unwrap_or(&self.phases[0])
    }

    /// Normalize (house account present in genesis) and check every invariant.
    pub fn resolve(mut self) -> Result<Scenario, ScenarioError> {
        self.genesis
            .entry(self.house_account.clone())
            .or_insert_with(Rat::zero);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Validation(msg));

        for (id, amount) in &self.genesis {
            if id.as_str().is_empty() || id.as_str().contains(['|', ',', '\n', '\r']) {
                return fail(format!("genesis: account id {id:?} is empty or contains separators"));
            }
            if amount.is_negative() {
                return fail(format!("genesis: negative balance for {id}"));
            }
        }

        self.genesis_registry()?;

        let d = &self.device;
        if d.capacity_wh.is_nan() || d.capacity_wh <= 0.0 {
            return fail("device: capacity_wh must be positive".into());
        }
        if !(0.0..=1.0).contains(&d.mppt_efficiency) {
            return fail("device: mppt_efficiency must lie in [0, 1]".into());
        }
        if d.idle_load_w < 0.0 || d.occupied_load_w < 0.0 {
            return fail("device: loads must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&d.initial_soc) {
            return fail("device: initial_soc must lie in [0, 1]".into());
        }
        if d.presence_samples == 0 {
            return fail("device: presence_samples must be at least 1".into());
        }

        if self.solar.peak_w < 0.0 || !self.solar.peak_w.is_finite() {
            return fail("solar: peak_w must be a non-negative finite power".into());
        }
        if self.solar.day_length_s == 0 {
            return fail("solar: day_length_s must be positive".into());
        }

        let mean = self.arrivals.mean_interarrival_s;
        if mean.is_nan() || mean <= 0.0 {
            return fail("arrivals: mean_interarrival_s must be positive".into());
        }
        if let Some(renters) = &self.arrivals.renters {
            for renter in renters {
                if !self.genesis.contains_key(renter) {
                    return fail(format!("arrivals: renter {renter} not in genesis"));
                }
                if *renter == self.house_account {
                    return fail("arrivals: the house cannot rent itself".into());
                }
            }
        }

        let b = &self.behaviour;
        for (name, p) in [
            ("no_show_probability", b.no_show_probability),
            ("qr_corruption_probability", b.qr_corruption_probability),
            ("approval_probability", b.approval_probability),
            ("abstain_probability", b.abstain_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("behaviour: {name} must lie in [0, 1]"));
            }
        }
        if b.approval_probability + b.abstain_probability > 1.0 {
            return fail("behaviour: approval + abstain probabilities exceed 1".into());
        }
        if let Some(w) = &b.duration_weights {
            if w.iter().any(|x| *x < 0.0 || !x.is_finite()) {
                return fail("behaviour: duration_weights must be non-negative".into());
            }
        }

        let t = &self.timing;
        if t.broadcast_interval_s == 0 {
            return fail("timing: broadcast_interval_s must be positive".into());
        }
        if t.governance_epoch_s == 0 {
            return fail("timing: governance_epoch_s must be positive".into());
        }
        if t.vote_window_s == 0 || t.vote_window_s > t.governance_epoch_s {
            return fail("timing: vote_window_s must be positive and at most one epoch".into());
        }
        if t.grant_expiry_s == 0 {
            return fail("timing: grant_expiry_s must be positive".into());
        }
        if t.representatives == 0 {
            return fail("timing: representatives must be at least 1".into());
        }

        if self.phases.is_empty() {
            return fail("phases: at least one phase required".into());
        }
        if self.phases[0].start_s != 0 {
            return fail("phases: first phase must start at 0".into());
        }
        for pair in self.phases.windows(2) {
            if pair[0].start_s >= pair[1].start_s {
                return fail("phases: starts must be strictly increasing (non-overlapping)".into());
            }
        }
        for (i, phase) in self.phases.iter().enumerate() {
            if phase.mix.validate().is_err() {
                return fail(format!("phases[{i}]: governance mix must sum to 1"));
            }
        }

        let mut seen = BTreeSet::new();
        for s in &self.stakeholders {
            if !seen.insert(&s.account) {
                return fail(format!("stakeholders: duplicate account {}", s.account));
            }
            for (name, share) in [
                ("capital_share", s.capital_share),
                ("usage_share", s.usage_share),
                ("labour_share", s.labour_share),
            ] {
                if share.is_negative() || share > Rat::one() {
                    return fail(format!(
                        "stakeholders: {} {name} must lie in [0, 1]",
                        s.account
                    ));
                }
            }
            if let Some(delegate) = &s.delegate {
                if !self.stakeholders.iter().any(|x| x.account == *delegate) {
                    return fail(format!(
                        "stakeholders: {} delegates to unregistered {delegate}",
                        s.account
                    ));
                }
            }
        }
        if !self.stakeholders.is_empty() {
            for (name, total) in [
                (
                    "capital_share",
                    self.stakeholders.iter().map(|s| s.capital_share).sum::<Rat>(),
                ),
                (
                    "usage_share",
                    self.stakeholders.iter().map(|s| s.usage_share).sum::<Rat>(),
                ),
                (
                    "labour_share",
                    self.stakeholders.iter().map(|s| s.labour_share).sum::<Rat>(),
                ),
            ] {
                if total != Rat::one() && !total.is_zero() {
                    return fail(format!(
                        "stakeholders: {name} must sum to 1 (or all zero), got {total}"
                    ));
                }
            }
        }

        let mut policy_ids = BTreeSet::new();
        for policy in &self.policies {
            policy.validate().map_err(ScenarioError::Validation)?;
            if !policy_ids.insert(&policy.id) {
                return fail(format!("policies: duplicate id {:?}", policy.id));
            }
        }
        Ok(())
    }
}

/// Load, parse (strict: unknown keys rejected), and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.as_ref().display())))?;
    parse_scenario(&text)
}

/// Parse and validate scenario JSON.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario =
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    scenario.resolve()
}

/// A metrics row is reused by report writers; re-exported for convenience.
pub type WindowMetrics = MacroMetrics;

/// The serialized summary of a run, reproducible byte-for-byte from
/// (scenario, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub state_root: String,
    pub windows: Vec<MacroMetrics>,
    pub event_counts: BTreeMap<String, u64>,
    pub settlements: Vec<SettlementRecord>,
    pub governance: Vec<GovernanceRecord>,
    pub final_soc: f64,
    pub house_balance: Rat,
    pub sustainability_reserve: Rat,
}

/// One grant's lifecycle summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementRecord {
    pub grant: String,
    pub renter: AccountId,
    pub minutes_purchased: u64,
    pub deposit: Rat,
    pub issued_at: SimTime,
    pub entered_at: Option<SimTime>,
    pub settled_at: Option<SimTime>,
    pub fee: Option<Rat>,
    pub refund: Option<Rat>,
    pub state: String,
}

/// One proposal's lifecycle summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernanceRecord {
    pub proposal: u64,
    pub parameter: String,
    pub new_value: String,
    pub proposer: String,
    pub mechanism: String,
    pub opened_at: SimTime,
    pub closes_at: SimTime,
    pub yes: Rat,
    pub no: Rat,
    pub participation: Rat,
    pub total: Rat,
    pub status: String,
    pub enacted_at: Option<SimTime>,
}
