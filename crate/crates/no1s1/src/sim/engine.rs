//! Event-queue engine: advances the clock, drives both loops with synthetic
//! agents, runs governance epochs, and checks global invariants after every
//! transaction.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::contracts::{GrantState, House, OccupancyStatus, QrInputs};
use crate::device::{step_energy, BatteryState, EnvSample, TokenDigest};
use crate::governance::{
    elect_representatives, max_affordable_votes, ApprovalBallot, Ballot, Choice, Governance,
    GovernanceError, GovernanceMix, Mechanism, ProposalStatus,
};
use crate::ledger::{AccountId, GrantId, Ledger, Receipt, Transaction, TxKind};
use crate::loops::{
    collect_macro_metrics, meso_policy_tick, LoopError, LoopEvent, LoopOutcome, MacroMetrics,
    Pipeline, PipelineEvent,
};
use crate::rat::Rat;
use crate::sim::rng::SimRng;
use crate::sim::{
    solar_power, GovernanceRecord, RunReport, Scenario, ScenarioError, SettlementRecord,
};
use crate::SimTime;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error("governance failure: {0}")]
    Governance(#[from] GovernanceError),
    #[error("invariant violated at t={t}: {detail}")]
    InvariantViolation { t: SimTime, detail: String },
}

/// One row of the sensor trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: SimTime,
    pub soc: f64,
    pub distance_m: Option<f64>,
    pub lock_state: String,
}

/// Everything a run produces: the summary report plus the raw streams the
/// report files are written from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub log: Vec<Transaction>,
    pub events: Vec<PipelineEvent>,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
enum EventKind {
    EnergyTick,
    Arrival,
    QrShow {
        grant: GrantId,
        token: TokenDigest,
        corrupted: bool,
    },
    DistanceSample,
    DoorClose,
    RelockCheck,
    StayEnd { grant: GrantId },
    ExpirySweep { grant: GrantId },
    GovernanceEpoch,
    BallotDue { proposal: u64, voter: AccountId },
    TallyDue { proposal: u64 },
}

#[derive(Debug, Clone, PartialEq)]
struct Event {
    at: SimTime,
    seq: u64,
    kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct ProposalContext {
    mix: GovernanceMix,
    mechanism: Mechanism,
    representatives: Vec<AccountId>,
}

/// Build the genesis ledger and house for a scenario. Shared by live runs
/// and log replay so both worlds start bit-identical.
pub fn genesis_world(scenario: &Scenario) -> Result<(Ledger, House), ScenarioError> {
    let registry = scenario.genesis_registry()?;
    let mut ledger = Ledger::new(scenario.house_account.clone());
    for (account, amount) in &scenario.genesis {
        ledger
            .open_account(account.clone(), *amount)
            .map_err(|e| ScenarioError::Validation(format!("genesis: {e}")))?;
    }
    let house = House::new(
        scenario.house_account.clone(),
        registry,
        scenario.timing.grant_expiry_s,
        scenario.device.initial_soc,
    );
    Ok((ledger, house))
}

struct Engine {
    scenario: Scenario,
    rng: SimRng,
    clock: SimTime,
    queue: BinaryHeap<Reverse<Event>>,
    next_event_seq: u64,
    ledger: Ledger,
    house: House,
    battery: BatteryState,
    pipeline: Pipeline,
    governance: Governance,
    renters: Vec<AccountId>,
    policy_cooldowns: BTreeMap<String, SimTime>,
    proposal_ctx: BTreeMap<u64, ProposalContext>,
    governance_records: BTreeMap<u64, GovernanceRecord>,
    windows: Vec<MacroMetrics>,
    window_start: SimTime,
    denial_snapshot: BTreeMap<String, u64>,
    trace: Vec<TraceRow>,
    arrivals_seen: u64,
}

impl Engine {
    fn new(scenario: Scenario) -> Result<Self, EngineError> {
        let (ledger, house) = genesis_world(&scenario)?;
        let battery = BatteryState::new(&scenario.device);
        let mut pipeline = Pipeline::new(scenario.device.presence_samples);
        pipeline.refresh_menu(&house, 0);
        let governance = Governance::new(
            scenario.stakeholders.clone(),
            scenario.veto_holders.iter().cloned().collect::<BTreeSet<_>>(),
        );
        let rng = SimRng::new(scenario.seed);
        let renters = scenario.renter_pool();
        Ok(Engine {
            rng,
            clock: 0,
            queue: BinaryHeap::new(),
            next_event_seq: 0,
            ledger,
            house,
            battery,
            pipeline,
            governance,
            renters,
            policy_cooldowns: BTreeMap::new(),
            proposal_ctx: BTreeMap::new(),
            governance_records: BTreeMap::new(),
            windows: Vec::new(),
            window_start: 0,
            denial_snapshot: BTreeMap::new(),
            trace: Vec::new(),
            arrivals_seen: 0,
            scenario,
        })
    }

    fn schedule(&mut self, at: SimTime, kind: EventKind) {
        if at > self.scenario.duration_s {
            return;
        }
        let seq = self.next_event_seq;
        self.next_event_seq += 1;
        self.queue.push(Reverse(Event { at, seq, kind }));
    }

    fn run(mut self) -> Result<RunArtifacts, EngineError> {
        self.schedule(0, EventKind::EnergyTick);
        if !self.renters.is_empty() && self.scenario.duration_s > 0 {
            let first = self.next_arrival_gap();
            self.schedule(first, EventKind::Arrival);
        }
        if self.scenario.timing.governance_epoch_s <= self.scenario.duration_s {
            self.schedule(
                self.scenario.timing.governance_epoch_s,
                EventKind::GovernanceEpoch,
            );
        }

        while let Some(Reverse(event)) = self.queue.pop() {
            debug_assert!(event.at >= self.clock, "event causality");
            self.clock = event.at;
            self.handle(event)?;
            self.check_invariants()?;
        }

        // Close the final partial window.
        if self.scenario.duration_s > self.window_start {
            let metrics = self.window_metrics(self.scenario.duration_s)?;
            self.windows.push(metrics);
        }
        Ok(self.into_artifacts())
    }

    fn next_arrival_gap(&mut self) -> SimTime {
        let gap = self
            .rng
            .next_exponential(self.scenario.arrivals.mean_interarrival_s);
        (gap.round() as u64).max(1)
    }

    fn handle(&mut self, event: Event) -> Result<(), EngineError> {
        let t = event.at;
        match event.kind {
            EventKind::EnergyTick => self.on_energy_tick(t)?,
            EventKind::Arrival => self.on_arrival(t)?,
            EventKind::QrShow {
                grant,
                token,
                corrupted,
            } => self.on_qr_show(t, grant, token, corrupted)?,
            EventKind::DistanceSample => self.on_distance_sample(t)?,
            EventKind::DoorClose => {
                self.pipeline
                    .run_loop_b(&mut self.ledger, &mut self.house, t, LoopEvent::DoorClosed)?;
            }
            EventKind::RelockCheck => {
                self.pipeline
                    .tick_lock(t, self.house.registry().relock_timeout);
            }
            EventKind::StayEnd { grant } => {
                self.pipeline.run_loop_b(
                    &mut self.ledger,
                    &mut self.house,
                    t,
                    LoopEvent::StayExpired { grant },
                )?;
            }
            EventKind::ExpirySweep { grant } => {
                self.pipeline.run_loop_b(
                    &mut self.ledger,
                    &mut self.house,
                    t,
                    LoopEvent::SweepExpired { grant },
                )?;
            }
            EventKind::GovernanceEpoch => self.on_governance_epoch(t)?,
            EventKind::BallotDue { proposal, voter } => self.on_ballot_due(t, proposal, voter),
            EventKind::TallyDue { proposal } => self.on_tally_due(t, proposal)?,
        }
        Ok(())
    }

    fn on_energy_tick(&mut self, t: SimTime) -> Result<(), EngineError> {
        let load = if self.house.occupancy().status == OccupancyStatus::Occupied {
            self.scenario.device.occupied_load_w
        } else {
            self.scenario.device.idle_load_w
        };
        let env = EnvSample::new(
            solar_power(self.battery.last_update, &self.scenario.solar),
            load,
        );
        let dt = t - self.battery.last_update;
        self.battery = step_energy(&self.battery, &env, dt, self.scenario.device.mppt_efficiency);
        self.pipeline
            .run_loop_a(&mut self.ledger, &mut self.house, self.battery.soc, t)?;
        self.trace.push(TraceRow {
            t,
            soc: self.battery.soc,
            distance_m: None,
            lock_state: self.pipeline.lock.status.to_string(),
        });
        self.schedule(
            t + self.scenario.timing.broadcast_interval_s,
            EventKind::EnergyTick,
        );
        Ok(())
    }

    fn on_arrival(&mut self, t: SimTime) -> Result<(), EngineError> {
        self.arrivals_seen += 1;
        let renter = self.renters[self.rng.next_below(self.renters.len() as u64) as usize].clone();
        self.pipeline.record(PipelineEvent::Arrival {
            t,
            renter: renter.clone(),
        });

        let menu = self.pipeline.menu.clone();
        if menu.is_empty() {
            let reason = if !self.house.energy().alive {
                "dead_house"
            } else if self.house.occupancy().status != OccupancyStatus::Vacant {
                "occupied"
            } else {
                "no_menu"
            };
            self.pipeline
                .deny(t, "reserve", reason.into(), Some(renter));
        } else {
            let choice = self.rng.pick_weighted(
                menu.len(),
                self.scenario.behaviour.duration_weights.as_deref(),
            );
            let minutes = menu[choice];
            let deposit = self.house.registry().deposit_default;
            let qr = QrInputs {
                username: renter.as_str().to_owned(),
                location: "cabin-door".into(),
                wallet: renter.clone(),
            };
            let outcome = self.pipeline.run_loop_b(
                &mut self.ledger,
                &mut self.house,
                t,
                LoopEvent::PaymentSubmitted {
                    renter: renter.clone(),
                    minutes,
                    deposit,
                    qr,
                },
            )?;
            if let LoopOutcome::Reserved { grant, token } = outcome {
                let expiry = self.house.grant_expiry_s();
                self.schedule(t + expiry, EventKind::ExpirySweep { grant });
                if !self.rng.next_bool(self.scenario.behaviour.no_show_probability) {
                    let delay = 20 + self.rng.next_below(40);
                    let corrupted = self
                        .rng
                        .next_bool(self.scenario.behaviour.qr_corruption_probability);
                    let shown = if corrupted { corrupt_token(&token) } else { token };
                    self.schedule(
                        t + delay,
                        EventKind::QrShow {
                            grant,
                            token: shown,
                            corrupted,
                        },
                    );
                }
            }
        }

        let gap = self.next_arrival_gap();
        self.schedule(t + gap, EventKind::Arrival);
        Ok(())
    }

    fn on_qr_show(
        &mut self,
        t: SimTime,
        grant: GrantId,
        token: TokenDigest,
        corrupted: bool,
    ) -> Result<(), EngineError> {
        if self
            .house
            .grants()
            .get(&grant)
            .is_none_or(|g| g.state != GrantState::Issued)
        {
            return Ok(());
        }
        let outcome = self.pipeline.run_loop_b(
            &mut self.ledger,
            &mut self.house,
            t,
            LoopEvent::QrShown { token },
        )?;
        match outcome {
            LoopOutcome::Unlocked { .. } => {
                for i in 0..self.scenario.device.presence_samples as u64 {
                    self.schedule(t + 2 * (i + 1), EventKind::DistanceSample);
                }
                self.schedule(
                    t + self.house.registry().relock_timeout,
                    EventKind::RelockCheck,
                );
            }
            LoopOutcome::Denied if corrupted => {
                // The camera re-scans a clean QR once.
                let true_token = self.house.grants()[&grant].token.clone();
                self.schedule(
                    t + 15,
                    EventKind::QrShow {
                        grant,
                        token: true_token,
                        corrupted: false,
                    },
                );
            }
            _ => {}
        }
        Ok(())
    }

    fn on_distance_sample(&mut self, t: SimTime) -> Result<(), EngineError> {
        let meters = 0.3 + self.rng.next_f64() * 0.4;
        let outcome = self.pipeline.run_loop_b(
            &mut self.ledger,
            &mut self.house,
            t,
            LoopEvent::DistanceSample { meters },
        )?;
        self.trace.push(TraceRow {
            t,
            soc: self.battery.soc,
            distance_m: Some(meters),
            lock_state: self.pipeline.lock.status.to_string(),
        });
        if let LoopOutcome::CheckedIn {
            grant,
            minutes_purchased,
        } = outcome
        {
            self.schedule(t + 8, EventKind::DoorClose);
            self.schedule(t + minutes_purchased * 60, EventKind::StayEnd { grant });
        }
        Ok(())
    }

    fn window_metrics(&self, end: SimTime) -> Result<MacroMetrics, EngineError> {
        let mut denials = BTreeMap::new();
        for (reason, count) in &self.pipeline.denials {
            let prior = self.denial_snapshot.get(reason).copied().unwrap_or(0);
            if *count > prior {
                denials.insert(reason.clone(), count - prior);
            }
        }
        Ok(collect_macro_metrics(
            &self.ledger.log,
            &self.house,
            (self.window_start, end),
            denials,
        )?)
    }

    fn on_governance_epoch(&mut self, t: SimTime) -> Result<(), EngineError> {
        let metrics = self.window_metrics(t)?;
        self.windows.push(metrics.clone());
        self.window_start = t;
        self.denial_snapshot = self.pipeline.denials.clone();

        let phase = self.scenario.phase_at(t).clone();
        if phase.policies_enabled {
            let drafts = meso_policy_tick(
                t,
                &metrics,
                &self.scenario.policies,
                &mut self.policy_cooldowns,
                self.house.registry(),
            );
            for draft in drafts {
                let closes_at = t + self.scenario.timing.vote_window_s;
                let proposal = self.governance.open_proposal(
                    draft.parameter.clone(),
                    draft.new_value.clone(),
                    draft.policy_id.clone(),
                    t,
                    closes_at,
                    phase.mechanism,
                );
                self.pipeline.record(PipelineEvent::ProposalOpened {
                    t,
                    proposal,
                    parameter: draft.parameter.clone(),
                    value: draft.new_value.canonical(),
                    proposer: draft.policy_id.clone(),
                    mechanism: phase.mechanism.to_string(),
                    closes_at,
                });
                self.governance_records.insert(
                    proposal,
                    GovernanceRecord {
                        proposal,
                        parameter: draft.parameter.clone(),
                        new_value: draft.new_value.canonical(),
                        proposer: draft.policy_id.clone(),
                        mechanism: phase.mechanism.to_string(),
                        opened_at: t,
                        closes_at,
                        yes: Rat::zero(),
                        no: Rat::zero(),
                        participation: Rat::zero(),
                        total: Rat::zero(),
                        status: ProposalStatus::Open.to_string(),
                        enacted_at: None,
                    },
                );

                let representatives = if phase.mechanism == Mechanism::Representative {
                    self.elect_for_epoch(&phase.mix)
                } else {
                    Vec::new()
                };
                let voters: Vec<AccountId> = match phase.mechanism {
                    Mechanism::Representative => representatives.clone(),
                    Mechanism::Liquid => self
                        .governance
                        .stakeholders()
                        .iter()
                        .filter(|s| s.delegate.is_none())
                        .map(|s| s.account.clone())
                        .collect(),
                    _ => self
                        .governance
                        .stakeholders()
                        .iter()
                        .map(|s| s.account.clone())
                        .collect(),
                };
                self.proposal_ctx.insert(
                    proposal,
                    ProposalContext {
                        mix: phase.mix,
                        mechanism: phase.mechanism,
                        representatives,
                    },
                );
                for voter in voters {
                    let offset = 1 + self
                        .rng
                        .next_below(self.scenario.timing.vote_window_s.max(2) - 1);
                    self.schedule(t + offset, EventKind::BallotDue { proposal, voter });
                }
                self.schedule(closes_at, EventKind::TallyDue { proposal });
            }
        }

        self.schedule(
            t + self.scenario.timing.governance_epoch_s,
            EventKind::GovernanceEpoch,
        );
        Ok(())
    }

    /// Approval-ballot election among stakeholder accounts; every stakeholder
    /// approves each candidate with probability 1/2.
    fn elect_for_epoch(&mut self, mix: &GovernanceMix) -> Vec<AccountId> {
        let accounts: Vec<AccountId> = self
            .governance
            .stakeholders()
            .iter()
            .map(|s| s.account.clone())
            .collect();
        let mut approvals = Vec::new();
        for voter in &accounts {
            let approves: Vec<AccountId> = accounts
                .iter()
                .filter(|_| self.rng.next_bool(0.5))
                .cloned()
                .collect();
            if !approves.is_empty() {
                approvals.push(ApprovalBallot {
                    voter: voter.clone(),
                    approves,
                });
            }
        }
        let k = self.scenario.timing.representatives.min(accounts.len());
        elect_representatives(self.governance.stakeholders(), mix, &approvals, k)
            .unwrap_or_default()
    }

    fn on_ballot_due(&mut self, t: SimTime, proposal: u64, voter: AccountId) {
        let Some(ctx) = self.proposal_ctx.get(&proposal) else {
            return;
        };
        let roll = self.rng.next_f64();
        let choice = if roll < self.scenario.behaviour.approval_probability {
            Choice::Yes
        } else if roll
            < self.scenario.behaviour.approval_probability
                + self.scenario.behaviour.abstain_probability
        {
            Choice::Abstain
        } else {
            Choice::No
        };
        let votes_bought = if ctx.mechanism == Mechanism::Quadratic && choice != Choice::Abstain {
            let credits = self
                .governance
                .stakeholders()
                .iter()
                .find(|s| s.account == voter)
                .map(|s| s.vote_credits)
                .unwrap_or(0);
            let max = max_affordable_votes(credits);
            if max == 0 {
                0
            } else {
                1 + self.rng.next_below(max)
            }
        } else {
            0
        };
        let ballot = Ballot {
            voter: voter.clone(),
            proposal,
            choice,
            votes_bought,
        };
        if self.governance.cast_ballot(ballot, t).is_ok() {
            self.pipeline.record(PipelineEvent::BallotCast {
                t,
                proposal,
                voter,
                choice: choice.to_string(),
                votes_bought,
            });
        }
    }

    fn on_tally_due(&mut self, t: SimTime, proposal: u64) -> Result<(), EngineError> {
        let ctx = self
            .proposal_ctx
            .get(&proposal)
            .expect("tally scheduled with context");
        let quorum = self.house.registry().quorum_fraction;
        let reps = ctx.representatives.clone();
        let mix = ctx.mix;
        let proof = self.governance.tally(
            proposal,
            t,
            &mix,
            quorum,
            if ctx.mechanism == Mechanism::Representative {
                Some(reps.as_slice())
            } else {
                None
            },
        )?;
        self.pipeline.record(PipelineEvent::Tallied {
            t,
            proposal,
            yes: proof.yes_power,
            no: proof.no_power,
            participation: proof.participation,
            total: proof.total_power,
            passed: proof.passed,
        });
        if let Some(record) = self.governance_records.get_mut(&proposal) {
            record.yes = proof.yes_power;
            record.no = proof.no_power;
            record.participation = proof.participation;
            record.total = proof.total_power;
            record.status = if proof.passed {
                ProposalStatus::Passed.to_string()
            } else {
                ProposalStatus::Failed.to_string()
            };
        }
        if proof.passed {
            let update = self.governance.enact(&proof)?;
            let parameter = update.name.clone();
            let value = update.value.canonical();
            let tx = Transaction {
                seq: self.ledger.log.len() as u64,
                timestamp: t,
                kind: TxKind::ParamUpdate(update),
                signer: self.scenario.house_account.clone(),
            };
            match self.ledger.submit(&mut self.house, tx) {
                Receipt::Accepted { .. } => {}
                Receipt::Rejected { reason } => {
                    return Err(LoopError::UnexpectedRejection {
                        stage: "param_update",
                        reason,
                    }
                    .into())
                }
            }
            self.pipeline.refresh_menu(&self.house, t);
            self.pipeline.record(PipelineEvent::Enacted {
                t,
                proposal,
                parameter,
                value,
            });
            if let Some(record) = self.governance_records.get_mut(&proposal) {
                record.status = ProposalStatus::Enacted.to_string();
                record.enacted_at = Some(t);
            }
        }
        Ok(())
    }

    fn check_invariants(&self) -> Result<(), EngineError> {
        let fail = |detail: String| {
            Err(EngineError::InvariantViolation {
                t: self.clock,
                detail,
            })
        };
        if !self.ledger.conserves_supply() {
            return fail(format!(
                "conservation: total {} != genesis supply {}",
                self.ledger.funds.total(),
                self.ledger.genesis_supply()
            ));
        }
        if self.house.active_grant_count() > 1 {
            return fail("single occupancy: more than one active grant".into());
        }
        if !(0.0..=1.0).contains(&self.battery.soc) {
            return fail(format!("battery soc {} outside [0, 1]", self.battery.soc));
        }
        if !(0.0..=1.0).contains(&self.house.energy().soc) {
            return fail(format!(
                "recorded soc {} outside [0, 1]",
                self.house.energy().soc
            ));
        }
        let occupancy = self.house.occupancy();
        if (occupancy.status == OccupancyStatus::Vacant) != occupancy.active_grant.is_none() {
            return fail("occupancy: vacant iff no active grant".into());
        }
        Ok(())
    }

    fn into_artifacts(self) -> RunArtifacts {
        let mut event_counts: BTreeMap<String, u64> = BTreeMap::new();
        event_counts.insert("arrivals".into(), self.arrivals_seen);
        for event in &self.pipeline.events {
            let key = match event {
                PipelineEvent::Menu { .. } => "menu_changes",
                PipelineEvent::Arrival { .. } => continue,
                PipelineEvent::Reserved { .. } => "reservations",
                PipelineEvent::Denied { .. } => "denials",
                PipelineEvent::Unlocked { .. } => "unlocks",
                PipelineEvent::CheckedIn { .. } => "check_ins",
                PipelineEvent::DoorClosed { .. } => "door_closes",
                PipelineEvent::Relocked { .. } => "relocks",
                PipelineEvent::Settled { .. } => "settlements",
                PipelineEvent::ProposalOpened { .. } => "proposals",
                PipelineEvent::BallotCast { .. } => "ballots",
                PipelineEvent::Tallied { .. } => "tallies",
                PipelineEvent::Enacted { .. } => "enactments",
            };
            *event_counts.entry(key.into()).or_insert(0) += 1;
        }

        let settlements: Vec<SettlementRecord> = self
            .house
            .grants()
            .values()
            .map(|g| SettlementRecord {
                grant: g.id.to_string(),
                renter: g.renter.clone(),
                minutes_purchased: g.minutes_purchased,
                deposit: g.deposit_held,
                issued_at: g.issued_at,
                entered_at: g.entered_at,
                settled_at: g.settled_at,
                fee: g.fee,
                refund: g.refund,
                state: g.state.to_string(),
            })
            .collect();

        let report = RunReport {
            state_root: self.ledger.state_root(),
            windows: self.windows,
            event_counts,
            settlements,
            governance: self.governance_records.into_values().collect(),
            final_soc: self.battery.soc,
            house_balance: self.ledger.funds.balance(&self.scenario.house_account),
            sustainability_reserve: self.house.reserve_earmarked(),
            scenario: self.scenario,
        };
        RunArtifacts {
            report,
            log: self.ledger.log,
            events: self.pipeline.events,
            trace: self.trace,
        }
    }
}

/// Corrupt a QR payload the way a bad camera read would: one hex character
/// flipped, still well-formed.
fn corrupt_token(token: &TokenDigest) -> TokenDigest {
    let mut hex = token.as_str().to_owned();
    let head = if hex.starts_with('0') { '1' } else { '0' };
    hex.replace_range(0..1, &head.to_string());
    TokenDigest::from_hex(hex).expect("corrupted token stays well-formed")
}

/// Execute a scenario to completion. The same (scenario, seed) always yields
/// an identical transaction log and report.
pub fn run(scenario: Scenario) -> Result<RunArtifacts, EngineError> {
    Engine::new(scenario)?.run()
}
