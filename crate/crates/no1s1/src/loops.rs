//! First-order feedback loops and the macro/meso observation layer.
//!
//! Loop A broadcasts the battery level to the ledger and refreshes the
//! duration menu. Loop B drives the entry pipeline: payment, QR check,
//! unlock, presence, check-in, and settlement. The meso layer turns window
//! metrics into governance proposals; it never touches parameters directly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::contracts::{
    CallEffect, ContractCall, House, ParamValue, QrInputs, SettlementOutcome,
};
use crate::device::{
    detect_presence, lock_transition, LockCommand, LockState, LockStatus, TokenDigest,
};
use crate::ledger::{AccountId, GrantId, Ledger, Receipt, RejectReason, Transaction, TxKind};
use crate::rat::Rat;
use crate::SimTime;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LoopError {
    #[error("energy broadcast rejected: {0}")]
    BroadcastRejected(RejectReason),
    #[error("pipeline stage {stage} rejected unexpectedly: {reason}")]
    UnexpectedRejection { stage: &'static str, reason: RejectReason },
    #[error("metrics window is empty")]
    EmptyWindow,
}

/// Inputs handled by loop B. The simulation agents produce these; noise such
/// as QR corruption is applied before the event reaches the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum LoopEvent {
    PaymentSubmitted {
        renter: AccountId,
        minutes: u64,
        deposit: Rat,
        qr: QrInputs,
    },
    QrShown {
        token: TokenDigest,
    },
    DistanceSample {
        meters: f64,
    },
    DoorClosed,
    /// The purchased stay is over; settle an entered grant.
    StayExpired {
        grant: GrantId,
    },
    /// Expiry sweep for grants never entered; settles as a no-show.
    SweepExpired {
        grant: GrantId,
    },
}

/// What loop B did with an event, so the caller can schedule follow-ups.
#[derive(Debug, Clone, PartialEq)]
pub enum LoopOutcome {
    Reserved {
        grant: GrantId,
        token: TokenDigest,
    },
    Denied,
    Unlocked {
        grant: GrantId,
    },
    CheckedIn {
        grant: GrantId,
        minutes_purchased: u64,
    },
    Settled {
        grant: GrantId,
        fee: Rat,
        refund: Rat,
        outcome: SettlementOutcome,
    },
    Nothing,
}

/// One line of the run's JSONL event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum PipelineEvent {
    Menu {
        t: SimTime,
        soc: f64,
        minutes: Vec<u64>,
    },
    Arrival {
        t: SimTime,
        renter: AccountId,
    },
    Reserved {
        t: SimTime,
        renter: AccountId,
        grant: GrantId,
        minutes: u64,
        deposit: Rat,
    },
    Denied {
        t: SimTime,
        stage: String,
        reason: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        renter: Option<AccountId>,
    },
    Unlocked {
        t: SimTime,
        grant: GrantId,
    },
    CheckedIn {
        t: SimTime,
        grant: GrantId,
    },
    DoorClosed {
        t: SimTime,
    },
    Relocked {
        t: SimTime,
    },
    Settled {
        t: SimTime,
        grant: GrantId,
        renter: AccountId,
        fee: Rat,
        refund: Rat,
        outcome: String,
    },
    ProposalOpened {
        t: SimTime,
        proposal: u64,
        parameter: String,
        value: String,
        proposer: String,
        mechanism: String,
        closes_at: SimTime,
    },
    BallotCast {
        t: SimTime,
        proposal: u64,
        voter: AccountId,
        choice: String,
        votes_bought: u64,
    },
    Tallied {
        t: SimTime,
        proposal: u64,
        yes: Rat,
        no: Rat,
        participation: Rat,
        total: Rat,
        passed: bool,
    },
    Enacted {
        t: SimTime,
        proposal: u64,
        parameter: String,
        value: String,
    },
}

/// Stable short key for denial tallies.
pub fn reject_reason_key(reason: &RejectReason) -> String {
    use crate::contracts::ContractError as C;
    use crate::ledger::LedgerError as L;
    match reason {
        RejectReason::Ledger(e) => match e {
            L::InsufficientFunds { .. } => "insufficient_funds".into(),
            L::UnauthorizedSigner(_) => "unauthorized_signer".into(),
            L::BadSequence { .. } => "bad_sequence".into(),
            other => format!("ledger:{other:?}")
                .split(['{', '('])
                .next()
                .unwrap_or("ledger")
                .trim()
                .to_lowercase(),
        },
        RejectReason::Contract(e) => match e {
            C::Occupied => "occupied".into(),
            C::DeadHouse => "dead_house".into(),
            C::InvalidDuration(_) => "invalid_duration".into(),
            C::InsufficientDeposit { .. } => "insufficient_deposit".into(),
            C::EmptyIdentityField(_) => "empty_identity_field".into(),
            C::SeparatorInField(_) => "separator_in_field".into(),
            C::NoPresenceConfirmed => "no_presence".into(),
            other => format!("contract:{other:?}")
                .split(['{', '('])
                .next()
                .unwrap_or("contract")
                .trim()
                .to_lowercase(),
        },
    }
}

/// Mutable wiring state of both loops: the cached menu, lock, presence
/// window, denial tallies, and the event stream.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub menu: Vec<u64>,
    pub lock: LockState,
    window: Vec<f64>,
    /// Grant admitted by the last unlock, awaiting presence confirmation.
    pending_entry: Option<GrantId>,
    presence_samples: usize,
    pub denials: BTreeMap<String, u64>,
    pub events: Vec<PipelineEvent>,
}

impl Pipeline {
    pub fn new(presence_samples: usize) -> Self {
        Pipeline {
            menu: Vec::new(),
            lock: LockState::locked(),
            window: Vec::new(),
            pending_entry: None,
            presence_samples,
            denials: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn record(&mut self, event: PipelineEvent) {
        self.events.push(event);
    }

    pub fn deny(&mut self, t: SimTime, stage: &str, reason: String, renter: Option<AccountId>) {
        *self.denials.entry(reason.clone()).or_insert(0) += 1;
        self.record(PipelineEvent::Denied {
            t,
            stage: stage.into(),
            reason,
            renter,
        });
    }

    fn submit(
        &mut self,
        ledger: &mut Ledger,
        house: &mut House,
        t: SimTime,
        signer: AccountId,
        kind: TxKind,
    ) -> Receipt {
        let tx = Transaction {
            seq: ledger.log.len() as u64,
            timestamp: t,
            kind,
            signer,
        };
        ledger.submit(house, tx)
    }

    /// Loop A tick: broadcast the battery level and refresh the menu shown
    /// to arriving renters.
    pub fn run_loop_a(
        &mut self,
        ledger: &mut Ledger,
        house: &mut House,
        soc: f64,
        t: SimTime,
    ) -> Result<(), LoopError> {
        let device = ledger.device_account().clone();
        let receipt = self.submit(ledger, house, t, device, TxKind::EnergyBroadcast { soc });
        if let Receipt::Rejected { reason } = receipt {
            return Err(LoopError::BroadcastRejected(reason));
        }
        self.refresh_menu(house, t);
        Ok(())
    }

    /// Recompute the duration menu from contract state, logging changes.
    pub fn refresh_menu(&mut self, house: &House, t: SimTime) {
        let menu = house.quote_durations();
        if menu != self.menu {
            self.menu = menu.clone();
            self.record(PipelineEvent::Menu {
                t,
                soc: house.energy().soc,
                minutes: menu,
            });
        }
    }

    /// Loop B: one entry-pipeline step. Stage errors become denial events,
    /// never panics; rejections of steps that must succeed abort the run.
    pub fn run_loop_b(
        &mut self,
        ledger: &mut Ledger,
        house: &mut House,
        t: SimTime,
        event: LoopEvent,
    ) -> Result<LoopOutcome, LoopError> {
        match event {
            LoopEvent::PaymentSubmitted {
                renter,
                minutes,
                deposit,
                qr,
            } => {
                let receipt = self.submit(
                    ledger,
                    house,
                    t,
                    renter.clone(),
                    TxKind::ContractCall(ContractCall::Reserve {
                        renter: renter.clone(),
                        minutes,
                        deposit,
                        qr,
                    }),
                );
                match receipt {
                    Receipt::Accepted {
                        effect: CallEffect::Reserved { grant, token },
                        ..
                    } => {
                        self.record(PipelineEvent::Reserved {
                            t,
                            renter,
                            grant,
                            minutes,
                            deposit,
                        });
                        self.refresh_menu(house, t);
                        Ok(LoopOutcome::Reserved { grant, token })
                    }
                    Receipt::Rejected { reason } => {
                        self.deny(t, "reserve", reject_reason_key(&reason), Some(renter));
                        Ok(LoopOutcome::Denied)
                    }
                    Receipt::Accepted { .. } => unreachable!("reserve yields Reserved effect"),
                }
            }
            LoopEvent::QrShown { token } => {
                let decision = house.verify_entry(&token, t);
                match decision {
                    crate::contracts::EntryDecision::Unlock => {
                        let grant = house
                            .occupancy()
                            .active_grant
                            .expect("unlock implies an active grant");
                        self.lock = lock_transition(
                            &self.lock,
                            LockCommand::Unlock(decision, t),
                            house.registry().relock_timeout,
                        )
                        .expect("positive decisions always transition");
                        self.pending_entry = Some(grant);
                        self.window.clear();
                        self.record(PipelineEvent::Unlocked { t, grant });
                        Ok(LoopOutcome::Unlocked { grant })
                    }
                    crate::contracts::EntryDecision::Deny(reason) => {
                        self.deny(t, "entry", reason.to_string(), None);
                        Ok(LoopOutcome::Denied)
                    }
                }
            }
            LoopEvent::DistanceSample { meters } => {
                self.window.push(meters);
                let armed = self.lock.status == LockStatus::Unlocked;
                let Some(grant) = self.pending_entry.filter(|_| armed) else {
                    return Ok(LoopOutcome::Nothing);
                };
                if self.window.len() < self.presence_samples {
                    return Ok(LoopOutcome::Nothing);
                }
                let present = detect_presence(
                    &self.window,
                    self.presence_samples,
                    house.registry().presence_threshold_m,
                )
                .expect("window length checked");
                if !present {
                    return Ok(LoopOutcome::Nothing);
                }
                let house_account = house.account().clone();
                let receipt = self.submit(
                    ledger,
                    house,
                    t,
                    house_account,
                    TxKind::ContractCall(ContractCall::CheckIn {
                        grant,
                        presence_confirmed: true,
                    }),
                );
                match receipt {
                    Receipt::Accepted { .. } => {
                        self.pending_entry = None;
                        let minutes_purchased = house.grants()[&grant].minutes_purchased;
                        self.record(PipelineEvent::CheckedIn { t, grant });
                        Ok(LoopOutcome::CheckedIn {
                            grant,
                            minutes_purchased,
                        })
                    }
                    Receipt::Rejected { reason } => Err(LoopError::UnexpectedRejection {
                        stage: "check_in",
                        reason,
                    }),
                }
            }
            LoopEvent::DoorClosed => {
                let next = lock_transition(
                    &self.lock,
                    LockCommand::DoorClosed,
                    house.registry().relock_timeout,
                )
                .expect("door close never errors");
                if next != self.lock {
                    self.lock = next;
                    self.record(PipelineEvent::DoorClosed { t });
                }
                Ok(LoopOutcome::Nothing)
            }
            LoopEvent::StayExpired { grant } => {
                if house
                    .grants()
                    .get(&grant)
                    .is_none_or(|g| g.state != crate::contracts::GrantState::Entered)
                {
                    return Ok(LoopOutcome::Nothing);
                }
                self.checkout(ledger, house, t, grant)
            }
            LoopEvent::SweepExpired { grant } => {
                let expired_unentered = house.grants().get(&grant).is_some_and(|g| {
                    g.state == crate::contracts::GrantState::Issued
                        && t >= g.issued_at + house.grant_expiry_s()
                });
                if !expired_unentered {
                    return Ok(LoopOutcome::Nothing);
                }
                if self.pending_entry == Some(grant) {
                    self.pending_entry = None;
                }
                self.checkout(ledger, house, t, grant)
            }
        }
    }

    fn checkout(
        &mut self,
        ledger: &mut Ledger,
        house: &mut House,
        t: SimTime,
        grant: GrantId,
    ) -> Result<LoopOutcome, LoopError> {
        let house_account = house.account().clone();
        let receipt = self.submit(
            ledger,
            house,
            t,
            house_account,
            TxKind::ContractCall(ContractCall::CheckOut { grant }),
        );
        match receipt {
            Receipt::Accepted {
                effect:
                    CallEffect::Settled {
                        grant,
                        renter,
                        fee,
                        refund,
                        outcome,
                    },
                ..
            } => {
                self.record(PipelineEvent::Settled {
                    t,
                    grant,
                    renter,
                    fee,
                    refund,
                    outcome: outcome.to_string(),
                });
                self.refresh_menu(house, t);
                Ok(LoopOutcome::Settled {
                    grant,
                    fee,
                    refund,
                    outcome,
                })
            }
            Receipt::Rejected { reason } => Err(LoopError::UnexpectedRejection {
                stage: "check_out",
                reason,
            }),
            Receipt::Accepted { .. } => unreachable!("check_out yields Settled effect"),
        }
    }

    /// Evaluate the auto-relock timeout.
    pub fn tick_lock(&mut self, t: SimTime, relock_timeout: SimTime) {
        let next = lock_transition(&self.lock, LockCommand::Tick(t), relock_timeout)
            .expect("tick never errors");
        if next != self.lock {
            self.lock = next;
            self.record(PipelineEvent::Relocked { t });
        }
    }
}

/// Aggregated observations over one window: what the macro layer sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub window_start: SimTime,
    pub window_end: SimTime,
    pub occupancy_rate: f64,
    pub revenue: Rat,
    pub mean_soc: f64,
    pub denials: BTreeMap<String, u64>,
}

/// Compute window metrics from the transaction log and the contract state it
/// reproduces. Denials come from the pipeline event stream.
pub fn collect_macro_metrics(
    log: &[Transaction],
    house: &House,
    window: (SimTime, SimTime),
    denials: BTreeMap<String, u64>,
) -> Result<MacroMetrics, LoopError> {
    let (start, end) = window;
    if end <= start {
        return Err(LoopError::EmptyWindow);
    }
    let mut occupied_s: u64 = 0;
    let mut revenue = Rat::zero();
    for grant in house.grants().values() {
        if let Some(entered) = grant.entered_at {
            let until = grant.settled_at.unwrap_or(end);
            let lo = entered.max(start);
            let hi = until.min(end);
            occupied_s += hi.saturating_sub(lo);
        }
        if let (Some(fee), Some(settled_at)) = (grant.fee, grant.settled_at) {
            if settled_at >= start && settled_at < end {
                revenue += fee;
            }
        }
    }
    let mut soc_sum = 0.0;
    let mut soc_n = 0usize;
    for tx in log {
        if let TxKind::EnergyBroadcast { soc } = tx.kind {
            if tx.timestamp >= start && tx.timestamp < end {
                soc_sum += soc;
                soc_n += 1;
            }
        }
    }
    let mean_soc = if soc_n > 0 {
        soc_sum / soc_n as f64
    } else {
        house.energy().soc
    };
    Ok(MacroMetrics {
        window_start: start,
        window_end: end,
        occupancy_rate: occupied_s as f64 / (end - start) as f64,
        revenue,
        mean_soc,
        denials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKey {
    OccupancyRate,
    Revenue,
    MeanSoc,
}

/// A meso-layer rule: when the trigger fires (outside its cooldown) it emits
/// a proposal; enactment still requires a vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MesoPolicy {
    pub id: String,
    pub metric: MetricKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub below: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub above: Option<f64>,
    pub parameter: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Rat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<String>,
    pub cooldown_s: u64,
}

impl MesoPolicy {
    /// The default shipped rule: soften prices when occupancy is low.
    pub fn default_occupancy_pricing() -> Self {
        MesoPolicy {
            id: "occupancy-price".into(),
            metric: MetricKey::OccupancyRate,
            below: Some(0.3),
            above: None,
            parameter: "price_per_minute".into(),
            scale: Some(Rat::new(9, 10)),
            set: None,
            cooldown_s: 86_400,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.cooldown_s == 0 {
            return Err(format!("policy {:?}: cooldown must be positive", self.id));
        }
        if self.below.is_some() == self.above.is_some() {
            return Err(format!(
                "policy {:?}: exactly one of below/above required",
                self.id
            ));
        }
        if self.scale.is_some() == self.set.is_some() {
            return Err(format!(
                "policy {:?}: exactly one of scale/set required",
                self.id
            ));
        }
        if !crate::contracts::PARAM_NAMES.contains(&self.parameter.as_str()) {
            return Err(format!(
                "policy {:?}: unknown parameter {:?}",
                self.id, self.parameter
            ));
        }
        if let Some(s) = &self.set {
            ParamValue::parse_for(&self.parameter, s)
                .map_err(|e| format!("policy {:?}: bad set value: {e}", self.id))?;
        }
        if self.scale.is_some() && self.parameter == "duration_table" {
            return Err(format!(
                "policy {:?}: duration_table cannot be scaled",
                self.id
            ));
        }
        Ok(())
    }

    pub fn triggered(&self, metrics: &MacroMetrics) -> bool {
        let value = match self.metric {
            MetricKey::OccupancyRate => metrics.occupancy_rate,
            MetricKey::Revenue => metrics.revenue.to_f64(),
            MetricKey::MeanSoc => metrics.mean_soc,
        };
        match (self.below, self.above) {
            (Some(limit), None) => value < limit,
            (None, Some(limit)) => value > limit,
            _ => false,
        }
    }
}

/// A proposal suggestion produced by a policy rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalDraft {
    pub policy_id: String,
    pub parameter: String,
    pub new_value: ParamValue,
}

/// Evaluate all policies against the window metrics; fired rules emit drafts
/// and stamp their cooldown. Scaled values are quantized to 6 decimal places
/// to keep registry values bounded.
pub fn meso_policy_tick(
    t: SimTime,
    metrics: &MacroMetrics,
    policies: &[MesoPolicy],
    last_fired: &mut BTreeMap<String, SimTime>,
    registry: &crate::contracts::ParamRegistry,
) -> Vec<ProposalDraft> {
    let mut drafts = Vec::new();
    for policy in policies {
        if !policy.triggered(metrics) {
            continue;
        }
        if let Some(&fired) = last_fired.get(&policy.id) {
            if t.saturating_sub(fired) < policy.cooldown_s {
                continue;
            }
        }
        let new_value = if let Some(factor) = policy.scale {
            match registry.get(&policy.parameter) {
                Ok(ParamValue::Amount(v)) => ParamValue::Amount((v * factor).round_dp(6)),
                Ok(ParamValue::Fraction(v)) => {
                    let scaled = (v * factor).round_dp(6);
                    ParamValue::Fraction(scaled.min(Rat::one()))
                }
                Ok(ParamValue::Seconds(s)) => {
                    let scaled = (Rat::from_int(s as i64) * factor).round_dp(0);
                    ParamValue::Seconds(scaled.numer().max(0) as u64)
                }
                Ok(ParamValue::Meters(m)) => ParamValue::Meters(m * factor.to_f64()),
                _ => continue,
            }
        } else if let Some(s) = &policy.set {
            match ParamValue::parse_for(&policy.parameter, s) {
                Ok(v) => v,
                Err(_) => continue,
            }
        } else {
            continue;
        };
        last_fired.insert(policy.id.clone(), t);
        drafts.push(ProposalDraft {
            policy_id: policy.id.clone(),
            parameter: policy.parameter.clone(),
            new_value,
        });
    }
    drafts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::ParamRegistry;

    fn world() -> (Ledger, House, Pipeline) {
        let mut ledger = Ledger::new(AccountId::new("house"));
        ledger.open_account(AccountId::new("house"), Rat::zero()).unwrap();
        ledger
            .open_account(AccountId::new("alice"), Rat::from_int(3))
            .unwrap();
        ledger
            .open_account(AccountId::new("bob"), Rat::from_int(3))
            .unwrap();
        let house = House::new(
            AccountId::new("house"),
            ParamRegistry::default(),
            1800,
            0.85,
        );
        (ledger, house, Pipeline::new(3))
    }

    fn qr(name: &str) -> QrInputs {
        QrInputs {
            username: name.into(),
            location: "zurich".into(),
            wallet: AccountId::new("0xW"),
        }
    }

    fn payment(renter: &str, minutes: u64) -> LoopEvent {
        LoopEvent::PaymentSubmitted {
            renter: AccountId::new(renter),
            minutes,
            deposit: Rat::one(),
            qr: qr(renter),
        }
    }

    #[test]
    fn loop_a_crossing_band_changes_menu() {
        let (mut ledger, mut house, mut pipeline) = world();
        pipeline.run_loop_a(&mut ledger, &mut house, 0.78, 0).unwrap();
        assert_eq!(pipeline.menu, vec![30, 60, 120]);
        pipeline.run_loop_a(&mut ledger, &mut house, 0.81, 60).unwrap();
        assert_eq!(pipeline.menu, vec![30, 60, 120, 240]);
        pipeline.run_loop_a(&mut ledger, &mut house, 0.05, 120).unwrap();
        assert!(pipeline.menu.is_empty());
    }

    #[test]
    fn loop_a_equal_soc_means_equal_menu_and_one_menu_event() {
        let (mut ledger, mut house, mut pipeline) = world();
        pipeline.run_loop_a(&mut ledger, &mut house, 0.6, 0).unwrap();
        let menu_events_before = pipeline
            .events
            .iter()
            .filter(|e| matches!(e, PipelineEvent::Menu { .. }))
            .count();
        pipeline.run_loop_a(&mut ledger, &mut house, 0.6, 60).unwrap();
        let menu_events_after = pipeline
            .events
            .iter()
            .filter(|e| matches!(e, PipelineEvent::Menu { .. }))
            .count();
        assert_eq!(menu_events_before, menu_events_after);
        assert_eq!(pipeline.menu, vec![30, 60, 120]);
    }

    fn full_happy_path(
        ledger: &mut Ledger,
        house: &mut House,
        pipeline: &mut Pipeline,
    ) -> (GrantId, Rat, Rat) {
        pipeline.run_loop_a(ledger, house, 0.85, 0).unwrap();
        let outcome = pipeline
            .run_loop_b(ledger, house, 10, payment("alice", 120))
            .unwrap();
        let LoopOutcome::Reserved { grant, token } = outcome else {
            panic!("expected reservation, got {outcome:?}");
        };
        let outcome = pipeline
            .run_loop_b(ledger, house, 40, LoopEvent::QrShown { token })
            .unwrap();
        assert!(matches!(outcome, LoopOutcome::Unlocked { .. }));
        for (i, t) in [42u64, 44, 46].iter().enumerate() {
            let outcome = pipeline
                .run_loop_b(ledger, house, *t, LoopEvent::DistanceSample { meters: 0.5 })
                .unwrap();
            if i < 2 {
                assert_eq!(outcome, LoopOutcome::Nothing);
            } else {
                assert!(matches!(outcome, LoopOutcome::CheckedIn { .. }));
            }
        }
        pipeline
            .run_loop_b(ledger, house, 50, LoopEvent::DoorClosed)
            .unwrap();
        let outcome = pipeline
            .run_loop_b(ledger, house, 46 + 120 * 60, LoopEvent::StayExpired { grant })
            .unwrap();
        let LoopOutcome::Settled { fee, refund, .. } = outcome else {
            panic!("expected settlement, got {outcome:?}");
        };
        (grant, fee, refund)
    }

    #[test]
    fn happy_path_settles_and_conserves() {
        let (mut ledger, mut house, mut pipeline) = world();
        let (_, fee, refund) = full_happy_path(&mut ledger, &mut house, &mut pipeline);
        assert_eq!(fee + refund, Rat::one());
        // 120 minutes at 0.005/min
        assert_eq!(fee, Rat::new(6, 10));
        assert!(ledger.conserves_supply());
        assert_eq!(house.occupancy().status, crate::contracts::OccupancyStatus::Vacant);
    }

    #[test]
    fn foreign_token_denied_and_lock_stays_locked() {
        let (mut ledger, mut house, mut pipeline) = world();
        pipeline.run_loop_a(&mut ledger, &mut house, 0.85, 0).unwrap();
        pipeline
            .run_loop_b(&mut ledger, &mut house, 10, payment("alice", 120))
            .unwrap();
        let wrong = crate::device::qr_token("mallory", "nowhere", &AccountId::new("0xW")).unwrap();
        let outcome = pipeline
            .run_loop_b(&mut ledger, &mut house, 20, LoopEvent::QrShown { token: wrong })
            .unwrap();
        assert_eq!(outcome, LoopOutcome::Denied);
        assert_eq!(pipeline.lock.status, LockStatus::Locked);
        assert_eq!(pipeline.denials.get("unknown_token"), Some(&1));
    }

    #[test]
    fn second_renter_rejected_while_reserved() {
        let (mut ledger, mut house, mut pipeline) = world();
        pipeline.run_loop_a(&mut ledger, &mut house, 0.85, 0).unwrap();
        pipeline
            .run_loop_b(&mut ledger, &mut house, 10, payment("alice", 120))
            .unwrap();
        let outcome = pipeline
            .run_loop_b(&mut ledger, &mut house, 20, payment("bob", 120))
            .unwrap();
        assert_eq!(outcome, LoopOutcome::Denied);
        assert_eq!(pipeline.denials.get("occupied"), Some(&1));
        assert!(ledger.conserves_supply());
    }

    #[test]
    fn samples_without_unlock_do_not_check_in() {
        let (mut ledger, mut house, mut pipeline) = world();
        pipeline.run_loop_a(&mut ledger, &mut house, 0.85, 0).unwrap();
        pipeline
            .run_loop_b(&mut ledger, &mut house, 10, payment("alice", 120))
            .unwrap();
        for t in [12, 14, 16] {
            let outcome = pipeline
                .run_loop_b(&mut ledger, &mut house, t, LoopEvent::DistanceSample { meters: 0.4 })
                .unwrap();
            assert_eq!(outcome, LoopOutcome::Nothing);
        }
        assert_eq!(
            house.occupancy().status,
            crate::contracts::OccupancyStatus::Reserved
        );
    }

    #[test]
    fn no_show_sweep_settles_with_full_refund() {
        let (mut ledger, mut house, mut pipeline) = world();
        pipeline.run_loop_a(&mut ledger, &mut house, 0.85, 0).unwrap();
        let LoopOutcome::Reserved { grant, .. } = pipeline
            .run_loop_b(&mut ledger, &mut house, 10, payment("alice", 120))
            .unwrap()
        else {
            panic!("expected reservation");
        };
        // Sweep before expiry does nothing.
        let outcome = pipeline
            .run_loop_b(&mut ledger, &mut house, 600, LoopEvent::SweepExpired { grant })
            .unwrap();
        assert_eq!(outcome, LoopOutcome::Nothing);
        let outcome = pipeline
            .run_loop_b(&mut ledger, &mut house, 10 + 1800, LoopEvent::SweepExpired { grant })
            .unwrap();
        let LoopOutcome::Settled { fee, refund, outcome, .. } = outcome else {
            panic!("expected settlement");
        };
        assert_eq!(fee, Rat::zero());
        assert_eq!(refund, Rat::one());
        assert_eq!(outcome, SettlementOutcome::NoShow);
    }

    #[test]
    fn relock_tick_closes_the_door() {
        let (mut ledger, mut house, mut pipeline) = world();
        pipeline.run_loop_a(&mut ledger, &mut house, 0.85, 0).unwrap();
        let LoopOutcome::Reserved { token, .. } = pipeline
            .run_loop_b(&mut ledger, &mut house, 10, payment("alice", 120))
            .unwrap()
        else {
            panic!("expected reservation");
        };
        pipeline
            .run_loop_b(&mut ledger, &mut house, 20, LoopEvent::QrShown { token })
            .unwrap();
        assert_eq!(pipeline.lock.status, LockStatus::Unlocked);
        pipeline.tick_lock(45, house.registry().relock_timeout);
        assert_eq!(pipeline.lock.status, LockStatus::Unlocked);
        pipeline.tick_lock(50, house.registry().relock_timeout);
        assert_eq!(pipeline.lock.status, LockStatus::Locked);
    }

    #[test]
    fn metrics_single_stay_in_double_window() {
        let (mut ledger, mut house, mut pipeline) = world();
        pipeline.run_loop_a(&mut ledger, &mut house, 0.85, 0).unwrap();
        let LoopOutcome::Reserved { grant, token } = pipeline
            .run_loop_b(&mut ledger, &mut house, 0, payment("alice", 60))
            .unwrap()
        else {
            panic!("expected reservation");
        };
        pipeline
            .run_loop_b(&mut ledger, &mut house, 0, LoopEvent::QrShown { token })
            .unwrap();
        for t in [0, 0, 0] {
            pipeline
                .run_loop_b(&mut ledger, &mut house, t, LoopEvent::DistanceSample { meters: 0.5 })
                .unwrap();
        }
        pipeline
            .run_loop_b(&mut ledger, &mut house, 3600, LoopEvent::StayExpired { grant })
            .unwrap();
        let metrics =
            collect_macro_metrics(&ledger.log, &house, (0, 7200), BTreeMap::new()).unwrap();
        assert!((metrics.occupancy_rate - 0.5).abs() < 1e-12);
        assert_eq!(metrics.revenue, Rat::new(3, 10));
    }

    #[test]
    fn metrics_empty_window_rejected_and_empty_run_is_zero() {
        let (ledger, house, _) = world();
        assert_eq!(
            collect_macro_metrics(&ledger.log, &house, (100, 100), BTreeMap::new()),
            Err(LoopError::EmptyWindow)
        );
        let m = collect_macro_metrics(&ledger.log, &house, (0, 3600), BTreeMap::new()).unwrap();
        assert_eq!(m.occupancy_rate, 0.0);
        assert_eq!(m.revenue, Rat::zero());
    }

    fn low_occupancy_metrics() -> MacroMetrics {
        MacroMetrics {
            window_start: 0,
            window_end: 86_400,
            occupancy_rate: 0.1,
            revenue: Rat::zero(),
            mean_soc: 0.7,
            denials: BTreeMap::new(),
        }
    }

    #[test]
    fn meso_policy_fires_below_threshold() {
        let registry = ParamRegistry::default();
        let policies = vec![MesoPolicy::default_occupancy_pricing()];
        let mut fired = BTreeMap::new();
        let drafts = meso_policy_tick(86_400, &low_occupancy_metrics(), &policies, &mut fired, &registry);
        assert_eq!(drafts.len(), 1);
        assert_eq!(drafts[0].parameter, "price_per_minute");
        // 0.005 * 0.9 = 0.0045
        assert_eq!(drafts[0].new_value, ParamValue::Amount(Rat::new(45, 10_000)));
    }

    #[test]
    fn meso_policy_quiet_above_threshold() {
        let registry = ParamRegistry::default();
        let policies = vec![MesoPolicy::default_occupancy_pricing()];
        let mut fired = BTreeMap::new();
        let mut metrics = low_occupancy_metrics();
        metrics.occupancy_rate = 0.9;
        let drafts = meso_policy_tick(86_400, &metrics, &policies, &mut fired, &registry);
        assert!(drafts.is_empty());
    }

    #[test]
    fn meso_policy_respects_cooldown() {
        let registry = ParamRegistry::default();
        let policies = vec![MesoPolicy::default_occupancy_pricing()];
        let mut fired = BTreeMap::new();
        let metrics = low_occupancy_metrics();
        assert_eq!(
            meso_policy_tick(86_400, &metrics, &policies, &mut fired, &registry).len(),
            1
        );
        assert!(
            meso_policy_tick(100_000, &metrics, &policies, &mut fired, &registry).is_empty()
        );
        assert_eq!(
            meso_policy_tick(2 * 86_400, &metrics, &policies, &mut fired, &registry).len(),
            1
        );
    }
}
