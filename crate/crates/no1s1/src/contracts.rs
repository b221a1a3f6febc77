//! The cabin's smart contract: energy record, occupancy state machine,
//! duration pricing, deposit escrow, access grants, and the governance-gated
//! parameter registry.
//!
//! All mutations run inside ledger transaction dispatch, so contract state is
//! exactly reproducible from the log.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::device::{self, DeviceError, TokenDigest};
use crate::governance::{EnactmentProof, Mechanism};
use crate::ledger::{AccountId, Funds, GrantId, LedgerError, RejectReason};
use crate::rat::Rat;
use crate::SimTime;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ContractError {
    #[error("soc {0} outside [0, 1]")]
    OutOfRangeSoc(f64),
    #[error("broadcast timestamp {got} precedes energy record at {head}")]
    StaleTimestamp { got: SimTime, head: SimTime },
    #[error("house is already reserved or occupied")]
    Occupied,
    #[error("house is dead: state of charge at or below the death threshold")]
    DeadHouse,
    #[error("{0} minutes is not on the offered duration menu")]
    InvalidDuration(u64),
    #[error("deposit {offered} below required default {required}")]
    InsufficientDeposit { offered: Rat, required: Rat },
    #[error("identity field {0:?} is empty")]
    EmptyIdentityField(String),
    #[error("identity field {0:?} contains the separator '|'")]
    SeparatorInField(String),
    #[error("no presence detection confirmed after unlock")]
    NoPresenceConfirmed,
    #[error("grant {grant} is {state}, operation needs {needed}")]
    WrongGrantState {
        grant: GrantId,
        state: String,
        needed: String,
    },
    #[error("unknown grant {0}")]
    UnknownGrant(GrantId),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("parameter change lacks a passed enactment proof")]
    UnauthorizedChange,
    #[error("parameter invariant violated: {0}")]
    InvariantViolation(String),
}

impl From<DeviceError> for ContractError {
    fn from(e: DeviceError) -> Self {
        match e {
            DeviceError::EmptyIdentityField(f) => ContractError::EmptyIdentityField(f.into()),
            DeviceError::SeparatorInField(f) => ContractError::SeparatorInField(f.into()),
            other => ContractError::InvariantViolation(other.to_string()),
        }
    }
}

/// One row of the duration menu: offered rental minutes for state of charge
/// at or above `min_soc` (up to the next band).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationBand {
    pub min_soc: f64,
    pub minutes: Vec<u64>,
}

/// Ascending soc bands mapping charge level to offered rental durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DurationTable(pub Vec<DurationBand>);

impl DurationTable {
    pub fn band_for(&self, soc: f64) -> &[u64] {
        self.0
            .iter()
            .rev()
            .find(|band| soc >= band.min_soc)
            .map(|band| band.minutes.as_slice())
            .unwrap_or(&[])
    }

    pub fn validate(&self) -> Result<(), ContractError> {
        if self.0.is_empty() {
            return Err(ContractError::InvariantViolation(
                "duration table must have at least one band".into(),
            ));
        }
        if self.0[0].min_soc != 0.0 {
            return Err(ContractError::InvariantViolation(
                "first duration band must start at soc 0".into(),
            ));
        }
        for pair in self.0.windows(2) {
            if pair[0].min_soc >= pair[1].min_soc {
                return Err(ContractError::InvariantViolation(
                    "duration bands must be strictly ascending in min_soc".into(),
                ));
            }
        }
        for band in &self.0 {
            if !(0.0..=1.0).contains(&band.min_soc) {
                return Err(ContractError::InvariantViolation(
                    "band min_soc outside [0, 1]".into(),
                ));
            }
            for pair in band.minutes.windows(2) {
                if pair[0] >= pair[1] {
                    return Err(ContractError::InvariantViolation(
                        "duration menu must be sorted ascending".into(),
                    ));
                }
            }
            if band.minutes.contains(&0) {
                return Err(ContractError::InvariantViolation(
                    "zero-minute rentals are not offerable".into(),
                ));
            }
        }
        Ok(())
    }

    fn canonical(&self) -> String {
        self.0
            .iter()
            .map(|b| {
                let mins = b
                    .minutes
                    .iter()
                    .map(u64::to_string)
                    .collect::<Vec<_>>()
                    .join(",");
                format!("{}:{}", b.min_soc, mins)
            })
            .collect::<Vec<_>>()
            .join(";")
    }

    fn parse(s: &str) -> Result<Self, String> {
        let mut bands = Vec::new();
        for part in s.split(';') {
            let (soc, mins) = part
                .split_once(':')
                .ok_or_else(|| format!("bad duration band {part:?}"))?;
            let min_soc: f64 = soc.parse().map_err(|_| format!("bad band soc {soc:?}"))?;
            let minutes = if mins.is_empty() {
                Vec::new()
            } else {
                mins.split(',')
                    .map(|m| m.parse().map_err(|_| format!("bad minutes {m:?}")))
                    .collect::<Result<Vec<u64>, _>>()?
            };
            bands.push(DurationBand { min_soc, minutes });
        }
        Ok(DurationTable(bands))
    }
}

/// A typed registry value. The kind is fixed per parameter name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamValue {
    Amount(Rat),
    Fraction(Rat),
    Seconds(u64),
    Meters(f64),
    Table(DurationTable),
}

impl ParamValue {
    pub fn canonical(&self) -> String {
        match self {
            ParamValue::Amount(v) | ParamValue::Fraction(v) => v.to_string(),
            ParamValue::Seconds(v) => v.to_string(),
            ParamValue::Meters(v) => format!("{v}"),
            ParamValue::Table(t) => t.canonical(),
        }
    }

    /// Parse a canonical value string, with the kind determined by the
    /// parameter name.
    pub fn parse_for(name: &str, s: &str) -> Result<ParamValue, String> {
        match name {
            "deposit_default" | "price_per_minute" => {
                Ok(ParamValue::Amount(s.parse().map_err(|e| format!("{e}"))?))
            }
            "soc_death" | "quorum_fraction" | "sustainability_reserve_fraction" => {
                Ok(ParamValue::Fraction(s.parse().map_err(|e| format!("{e}"))?))
            }
            "relock_timeout" => Ok(ParamValue::Seconds(
                s.parse().map_err(|_| format!("bad seconds {s:?}"))?,
            )),
            "presence_threshold_m" => Ok(ParamValue::Meters(
                s.parse().map_err(|_| format!("bad meters {s:?}"))?,
            )),
            "duration_table" => Ok(ParamValue::Table(DurationTable::parse(s)?)),
            other => Err(format!("unknown parameter {other:?}")),
        }
    }
}

/// The governance surface: every rule of the cabin that a vote can change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRegistry {
    pub deposit_default: Rat,
    pub price_per_minute: Rat,
    pub duration_table: DurationTable,
    pub soc_death: Rat,
    pub relock_timeout: u64,
    pub presence_threshold_m: f64,
    pub quorum_fraction: Rat,
    pub sustainability_reserve_fraction: Rat,
}

pub const PARAM_NAMES: &[&str] = &[
    "deposit_default",
    "price_per_minute",
    "duration_table",
    "soc_death",
    "relock_timeout",
    "presence_threshold_m",
    "quorum_fraction",
    "sustainability_reserve_fraction",
];

impl Default for ParamRegistry {
    fn default() -> Self {
        ParamRegistry {
            deposit_default: Rat::one(),
            price_per_minute: Rat::new(5, 1000),
            duration_table: DurationTable(vec![
                DurationBand { min_soc: 0.0, minutes: vec![] },
                DurationBand { min_soc: 0.1, minutes: vec![30] },
                DurationBand { min_soc: 0.2, minutes: vec![30, 60] },
                DurationBand { min_soc: 0.5, minutes: vec![30, 60, 120] },
                DurationBand { min_soc: 0.8, minutes: vec![30, 60, 120, 240] },
            ]),
            soc_death: Rat::new(1, 10),
            relock_timeout: 30,
            presence_threshold_m: 1.0,
            quorum_fraction: Rat::new(1, 2),
            sustainability_reserve_fraction: Rat::zero(),
        }
    }
}

impl ParamRegistry {
    pub fn get(&self, name: &str) -> Result<ParamValue, ContractError> {
        match name {
            "deposit_default" => Ok(ParamValue::Amount(self.deposit_default)),
            "price_per_minute" => Ok(ParamValue::Amount(self.price_per_minute)),
            "duration_table" => Ok(ParamValue::Table(self.duration_table.clone())),
            "soc_death" => Ok(ParamValue::Fraction(self.soc_death)),
            "relock_timeout" => Ok(ParamValue::Seconds(self.relock_timeout)),
            "presence_threshold_m" => Ok(ParamValue::Meters(self.presence_threshold_m)),
            "quorum_fraction" => Ok(ParamValue::Fraction(self.quorum_fraction)),
            "sustainability_reserve_fraction" => {
                Ok(ParamValue::Fraction(self.sustainability_reserve_fraction))
            }
            _ => Err(ContractError::UnknownParam(name.into())),
        }
    }

    pub fn set(&mut self, name: &str, value: ParamValue) -> Result<(), ContractError> {
        fn fraction(name: &str, value: &ParamValue) -> Result<Rat, ContractError> {
            match value {
                ParamValue::Fraction(v) if !v.is_negative() && *v <= Rat::one() => Ok(*v),
                ParamValue::Fraction(_) => Err(ContractError::InvariantViolation(format!(
                    "{name} must lie in [0, 1]"
                ))),
                _ => Err(ContractError::InvariantViolation(format!(
                    "{name} expects a fraction"
                ))),
            }
        }
        fn amount(name: &str, value: &ParamValue) -> Result<Rat, ContractError> {
            match value {
                ParamValue::Amount(v) if !v.is_negative() => Ok(*v),
                ParamValue::Amount(_) => Err(ContractError::InvariantViolation(format!(
                    "{name} must be non-negative"
                ))),
                _ => Err(ContractError::InvariantViolation(format!(
                    "{name} expects an amount"
                ))),
            }
        }
        match name {
            "deposit_default" => self.deposit_default = amount(name, &value)?,
            "price_per_minute" => self.price_per_minute = amount(name, &value)?,
            "duration_table" => match value {
                ParamValue::Table(t) => {
                    t.validate()?;
                    self.duration_table = t;
                }
                _ => {
                    return Err(ContractError::InvariantViolation(
                        "duration_table expects a band table".into(),
                    ))
                }
            },
            "soc_death" => self.soc_death = fraction(name, &value)?,
            "relock_timeout" => match value {
                ParamValue::Seconds(s) => self.relock_timeout = s,
                _ => {
                    return Err(ContractError::InvariantViolation(
                        "relock_timeout expects seconds".into(),
                    ))
                }
            },
            "presence_threshold_m" => match value {
                ParamValue::Meters(m) if m.is_finite() && m > 0.0 => {
                    self.presence_threshold_m = m
                }
                _ => {
                    return Err(ContractError::InvariantViolation(
                        "presence_threshold_m must be a positive distance".into(),
                    ))
                }
            },
            "quorum_fraction" => self.quorum_fraction = fraction(name, &value)?,
            "sustainability_reserve_fraction" => {
                self.sustainability_reserve_fraction = fraction(name, &value)?
            }
            _ => return Err(ContractError::UnknownParam(name.into())),
        }
        Ok(())
    }
}

/// Latest broadcast energy level. `alive` tracks the death threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub soc: f64,
    pub timestamp: SimTime,
    pub alive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OccupancyStatus {
    Vacant,
    Reserved,
    Occupied,
}

impl fmt::Display for OccupancyStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OccupancyStatus::Vacant => "vacant",
            OccupancyStatus::Reserved => "reserved",
            OccupancyStatus::Occupied => "occupied",
        })
    }
}

/// Occupancy is vacant iff there is no active grant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyState {
    pub status: OccupancyStatus,
    pub active_grant: Option<GrantId>,
}

impl OccupancyState {
    fn vacant() -> Self {
        OccupancyState {
            status: OccupancyStatus::Vacant,
            active_grant: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrantState {
    Issued,
    Entered,
    Settled,
    Expired,
}

impl fmt::Display for GrantState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrantState::Issued => "issued",
            GrantState::Entered => "entered",
            GrantState::Settled => "settled",
            GrantState::Expired => "expired",
        })
    }
}

/// Token-bound, deposit-backed right to enter the cabin once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessGrant {
    pub id: GrantId,
    pub renter: AccountId,
    pub token: TokenDigest,
    pub minutes_purchased: u64,
    pub deposit_held: Rat,
    pub issued_at: SimTime,
    pub entered_at: Option<SimTime>,
    pub state: GrantState,
    pub fee: Option<Rat>,
    pub refund: Option<Rat>,
    pub settled_at: Option<SimTime>,
}

/// Checkout split. `fee + refund` equals the held deposit exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settlement {
    pub fee: Rat,
    pub refund: Rat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SettlementOutcome {
    Checkout,
    NoShow,
}

impl fmt::Display for SettlementOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SettlementOutcome::Checkout => "checkout",
            SettlementOutcome::NoShow => "no_show",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    UnknownToken,
    AlreadyOccupied,
    Expired,
    DeadHouse,
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenyReason::UnknownToken => "unknown_token",
            DenyReason::AlreadyOccupied => "already_occupied",
            DenyReason::Expired => "expired",
            DenyReason::DeadHouse => "dead_house",
        })
    }
}

/// Outcome of a token check at the door. Decisions are values; the lock
/// state machine consumes them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EntryDecision {
    Unlock,
    Deny(DenyReason),
}

/// Renter identity triple from which the QR token is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrInputs {
    pub username: String,
    pub location: String,
    pub wallet: AccountId,
}

/// Contract-call transaction payloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ContractCall {
    Reserve {
        renter: AccountId,
        minutes: u64,
        deposit: Rat,
        qr: QrInputs,
    },
    CheckIn {
        grant: GrantId,
        presence_confirmed: bool,
    },
    CheckOut {
        grant: GrantId,
    },
}

impl ContractCall {
    pub fn canonical_payload(&self) -> String {
        match self {
            ContractCall::Reserve {
                renter,
                minutes,
                deposit,
                qr,
            } => format!(
                "reserve|{renter}|{minutes}|{deposit}|{}|{}|{}",
                qr.username, qr.location, qr.wallet
            ),
            ContractCall::CheckIn {
                grant,
                presence_confirmed,
            } => format!("check_in|{grant}|{presence_confirmed}"),
            ContractCall::CheckOut { grant } => format!("check_out|{grant}"),
        }
    }

    pub fn parse_payload(payload: &str) -> Result<ContractCall, String> {
        let parts: Vec<&str> = payload.split('|').collect();
        match parts.first().copied() {
            Some("reserve") if parts.len() == 7 => Ok(ContractCall::Reserve {
                renter: AccountId::new(parts[1]),
                minutes: parts[2].parse().map_err(|_| "bad minutes".to_string())?,
                deposit: parts[3].parse().map_err(|e| format!("bad deposit: {e}"))?,
                qr: QrInputs {
                    username: parts[4].into(),
                    location: parts[5].into(),
                    wallet: AccountId::new(parts[6]),
                },
            }),
            Some("check_in") if parts.len() == 3 => Ok(ContractCall::CheckIn {
                grant: parts[1].parse().map_err(|_| "bad grant id".to_string())?,
                presence_confirmed: parts[2]
                    .parse()
                    .map_err(|_| "bad presence flag".to_string())?,
            }),
            Some("check_out") if parts.len() == 2 => Ok(ContractCall::CheckOut {
                grant: parts[1].parse().map_err(|_| "bad grant id".to_string())?,
            }),
            _ => Err(format!("unparseable contract call {payload:?}")),
        }
    }
}

/// Parameter-update payload. Carries the enactment proof so provenance is
/// verifiable from the log alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamUpdate {
    pub name: String,
    pub value: ParamValue,
    pub proof: EnactmentProof,
}

impl ParamUpdate {
    pub fn canonical_payload(&self) -> String {
        let p = &self.proof;
        format!(
            "{}|{}|{}|{}|{}|{}|{}|{}|{}",
            self.name,
            self.value.canonical(),
            p.proposal,
            p.mechanism,
            p.yes_power,
            p.no_power,
            p.participation,
            p.total_power,
            p.passed
        )
    }

    pub fn parse_payload(payload: &str) -> Result<ParamUpdate, String> {
        let parts: Vec<&str> = payload.split('|').collect();
        if parts.len() != 9 {
            return Err(format!("ParamUpdate payload has {} fields", parts.len()));
        }
        let name = parts[0].to_string();
        let value = ParamValue::parse_for(&name, parts[1])?;
        let mechanism: Mechanism = parts[3].parse()?;
        let rat = |s: &str| -> Result<Rat, String> { s.parse().map_err(|e| format!("{e}")) };
        Ok(ParamUpdate {
            name,
            value,
            proof: EnactmentProof {
                proposal: parts[2].parse().map_err(|_| "bad proposal id".to_string())?,
                mechanism,
                yes_power: rat(parts[4])?,
                no_power: rat(parts[5])?,
                participation: rat(parts[6])?,
                total_power: rat(parts[7])?,
                passed: parts[8].parse().map_err(|_| "bad passed flag".to_string())?,
            },
        })
    }
}

/// Effect of an accepted transaction, for callers that schedule follow-ups.
#[derive(Debug, Clone, PartialEq)]
pub enum CallEffect {
    Transferred,
    EnergyRecorded {
        soc: f64,
        alive: bool,
    },
    Reserved {
        grant: GrantId,
        token: TokenDigest,
    },
    CheckedIn {
        grant: GrantId,
    },
    Settled {
        grant: GrantId,
        renter: AccountId,
        fee: Rat,
        refund: Rat,
        outcome: SettlementOutcome,
    },
    ParamSet {
        name: String,
    },
}

/// The no1s1 house contract state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct House {
    account: AccountId,
    registry: ParamRegistry,
    energy: EnergyRecord,
    occupancy: OccupancyState,
    grants: BTreeMap<GrantId, AccessGrant>,
    next_grant: u64,
    /// Fee share earmarked for sustainability; an accounting label on the
    /// house balance, not a separate account.
    reserve_earmarked: Rat,
    grant_expiry_s: SimTime,
}

impl House {
    pub fn new(
        account: AccountId,
        registry: ParamRegistry,
        grant_expiry_s: SimTime,
        initial_soc: f64,
    ) -> Self {
        let soc = initial_soc.clamp(0.0, 1.0);
        let alive = soc > registry.soc_death.to_f64();
        House {
            account,
            registry,
            energy: EnergyRecord {
                soc,
                timestamp: 0,
                alive,
            },
            occupancy: OccupancyState::vacant(),
            grants: BTreeMap::new(),
            next_grant: 0,
            reserve_earmarked: Rat::zero(),
            grant_expiry_s,
        }
    }

    pub fn account(&self) -> &AccountId {
        &self.account
    }

    pub fn registry(&self) -> &ParamRegistry {
        &self.registry
    }

    pub fn energy(&self) -> &EnergyRecord {
        &self.energy
    }

    pub fn occupancy(&self) -> &OccupancyState {
        &self.occupancy
    }

    pub fn grants(&self) -> &BTreeMap<GrantId, AccessGrant> {
        &self.grants
    }

    pub fn grant_expiry_s(&self) -> SimTime {
        self.grant_expiry_s
    }

    pub fn reserve_earmarked(&self) -> Rat {
        self.reserve_earmarked
    }

    /// Count of grants currently holding the house (Issued or Entered).
    /// Safety demands this never exceeds one.
    pub fn active_grant_count(&self) -> usize {
        self.grants
            .values()
            .filter(|g| matches!(g.state, GrantState::Issued | GrantState::Entered))
            .count()
    }

    pub fn broadcast_energy(
        &mut self,
        soc: f64,
        t: SimTime,
    ) -> Result<EnergyRecord, ContractError> {
        if !(0.0..=1.0).contains(&soc) || soc.is_nan() {
            return Err(ContractError::OutOfRangeSoc(soc));
        }
        if t < self.energy.timestamp {
            return Err(ContractError::StaleTimestamp {
                got: t,
                head: self.energy.timestamp,
            });
        }
        self.energy = EnergyRecord {
            soc,
            timestamp: t,
            alive: soc > self.registry.soc_death.to_f64(),
        };
        Ok(self.energy)
    }

    /// Rental durations offered right now. Empty while dead, reserved, or
    /// occupied.
    pub fn quote_durations(&self) -> Vec<u64> {
        if !self.energy.alive || self.occupancy.status != OccupancyStatus::Vacant {
            return Vec::new();
        }
        self.registry.duration_table.band_for(self.energy.soc).to_vec()
    }

    pub fn apply_call(
        &mut self,
        funds: &mut Funds,
        signer: &AccountId,
        t: SimTime,
        call: &ContractCall,
    ) -> Result<CallEffect, RejectReason> {
        match call {
            ContractCall::Reserve {
                renter,
                minutes,
                deposit,
                qr,
            } => {
                if signer != renter {
                    return Err(LedgerError::UnauthorizedSigner(signer.clone()).into());
                }
                let (grant, token) = self.reserve(funds, renter, *minutes, *deposit, qr, t)?;
                Ok(CallEffect::Reserved { grant, token })
            }
            ContractCall::CheckIn {
                grant,
                presence_confirmed,
            } => {
                self.check_in(*grant, t, *presence_confirmed)?;
                Ok(CallEffect::CheckedIn { grant: *grant })
            }
            ContractCall::CheckOut { grant } => {
                let (renter, settlement, outcome) = self.check_out(funds, *grant, t)?;
                Ok(CallEffect::Settled {
                    grant: *grant,
                    renter,
                    fee: settlement.fee,
                    refund: settlement.refund,
                    outcome,
                })
            }
        }
    }

    /// Take a deposit into escrow and issue a token-bound grant.
    pub fn reserve(
        &mut self,
        funds: &mut Funds,
        renter: &AccountId,
        minutes: u64,
        deposit: Rat,
        qr: &QrInputs,
        t: SimTime,
    ) -> Result<(GrantId, TokenDigest), RejectReason> {
        if self.occupancy.status != OccupancyStatus::Vacant {
            return Err(ContractError::Occupied.into());
        }
        if !self.energy.alive {
            return Err(ContractError::DeadHouse.into());
        }
        let menu = self.quote_durations();
        if !menu.contains(&minutes) {
            return Err(ContractError::InvalidDuration(minutes).into());
        }
        if deposit < self.registry.deposit_default {
            return Err(ContractError::InsufficientDeposit {
                offered: deposit,
                required: self.registry.deposit_default,
            }
            .into());
        }
        let token = device::qr_token(&qr.username, &qr.location, &qr.wallet)
            .map_err(ContractError::from)?;
        let grant_id = GrantId(self.next_grant);
        funds.hold_in_escrow(renter, grant_id, deposit)?;
        self.next_grant += 1;
        self.grants.insert(
            grant_id,
            AccessGrant {
                id: grant_id,
                renter: renter.clone(),
                token: token.clone(),
                minutes_purchased: minutes,
                deposit_held: deposit,
                issued_at: t,
                entered_at: None,
                state: GrantState::Issued,
                fee: None,
                refund: None,
                settled_at: None,
            },
        );
        self.occupancy = OccupancyState {
            status: OccupancyStatus::Reserved,
            active_grant: Some(grant_id),
        };
        Ok((grant_id, token))
    }

    fn grant_is_expired(&self, grant: &AccessGrant, t: SimTime) -> bool {
        grant.state == GrantState::Issued && t >= grant.issued_at + self.grant_expiry_s
    }

    /// Decide whether a presented token opens the door. Pure; the lock
    /// state machine consumes the decision.
    pub fn verify_entry(&self, token: &TokenDigest, t: SimTime) -> EntryDecision {
        if !self.energy.alive {
            return EntryDecision::Deny(DenyReason::DeadHouse);
        }
        let grant = match self
            .occupancy
            .active_grant
            .and_then(|id| self.grants.get(&id))
        {
            Some(g) => g,
            None => return EntryDecision::Deny(DenyReason::UnknownToken),
        };
        if grant.token != *token {
            return EntryDecision::Deny(DenyReason::UnknownToken);
        }
        match grant.state {
            GrantState::Entered => EntryDecision::Deny(DenyReason::AlreadyOccupied),
            GrantState::Issued if self.grant_is_expired(grant, t) => {
                EntryDecision::Deny(DenyReason::Expired)
            }
            GrantState::Issued => EntryDecision::Unlock,
            _ => EntryDecision::Deny(DenyReason::UnknownToken),
        }
    }

    /// Transition a grant to Entered once presence is confirmed after unlock.
    pub fn check_in(
        &mut self,
        grant_id: GrantId,
        t: SimTime,
        presence_confirmed: bool,
    ) -> Result<(), ContractError> {
        let expired = {
            let grant = self
                .grants
                .get(&grant_id)
                .ok_or(ContractError::UnknownGrant(grant_id))?;
            if grant.state != GrantState::Issued {
                return Err(ContractError::WrongGrantState {
                    grant: grant_id,
                    state: grant.state.to_string(),
                    needed: "issued".into(),
                });
            }
            self.grant_is_expired(grant, t)
        };
        if expired {
            return Err(ContractError::WrongGrantState {
                grant: grant_id,
                state: "expired".into(),
                needed: "issued".into(),
            });
        }
        if !presence_confirmed {
            return Err(ContractError::NoPresenceConfirmed);
        }
        let grant = self.grants.get_mut(&grant_id).expect("checked above");
        grant.state = GrantState::Entered;
        grant.entered_at = Some(t);
        self.occupancy = OccupancyState {
            status: OccupancyStatus::Occupied,
            active_grant: Some(grant_id),
        };
        Ok(())
    }

    /// Settle a grant: fee to the house, remainder refunded, house vacant.
    /// An Issued grant past expiry settles as a no-show with zero fee.
    pub fn check_out(
        &mut self,
        funds: &mut Funds,
        grant_id: GrantId,
        t: SimTime,
    ) -> Result<(AccountId, Settlement, SettlementOutcome), RejectReason> {
        let (fee, outcome) = {
            let grant = self
                .grants
                .get(&grant_id)
                .ok_or(ContractError::UnknownGrant(grant_id))?;
            match grant.state {
                GrantState::Entered => {
                    let entered = grant.entered_at.expect("entered grants have entry time");
                    let minutes_used = t.saturating_sub(entered).div_ceil(60);
                    let metered = self.registry.price_per_minute * Rat::from_int(minutes_used as i64);
                    (grant.deposit_held.min(metered), SettlementOutcome::Checkout)
                }
                GrantState::Issued if self.grant_is_expired(grant, t) => {
                    (Rat::zero(), SettlementOutcome::NoShow)
                }
                ref state => {
                    return Err(ContractError::WrongGrantState {
                        grant: grant_id,
                        state: state.to_string(),
                        needed: "entered, or issued past expiry".into(),
                    }
                    .into())
                }
            }
        };
        let grant = self.grants.get(&grant_id).expect("checked above");
        let refund = grant.deposit_held - fee;
        let renter = grant.renter.clone();
        funds.release_escrow(grant_id, &self.account, fee, &renter, refund)?;
        self.reserve_earmarked += fee * self.registry.sustainability_reserve_fraction;
        let grant = self.grants.get_mut(&grant_id).expect("checked above");
        grant.state = match outcome {
            SettlementOutcome::Checkout => GrantState::Settled,
            SettlementOutcome::NoShow => GrantState::Expired,
        };
        grant.fee = Some(fee);
        grant.refund = Some(refund);
        grant.settled_at = Some(t);
        self.occupancy = OccupancyState::vacant();
        Ok((renter, Settlement { fee, refund }, outcome))
    }

    pub fn get_param(&self, name: &str) -> Result<ParamValue, ContractError> {
        self.registry.get(name)
    }

    /// Registry changes require a passed enactment proof; the authorized
    /// path is a ParamUpdate transaction produced by governance.
    pub fn set_param(
        &mut self,
        name: &str,
        value: ParamValue,
        proof: &EnactmentProof,
    ) -> Result<(), ContractError> {
        if !proof.passed {
            return Err(ContractError::UnauthorizedChange);
        }
        self.registry.set(name, value)?;
        if name == "soc_death" {
            self.energy.alive = self.energy.soc > self.registry.soc_death.to_f64();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proof(passed: bool) -> EnactmentProof {
        EnactmentProof {
            proposal: 1,
            mechanism: Mechanism::Direct,
            yes_power: Rat::new(3, 5),
            no_power: Rat::new(1, 5),
            participation: Rat::new(4, 5),
            total_power: Rat::one(),
            passed,
        }
    }

    fn world() -> (Funds, House) {
        let mut funds = Funds::default();
        funds.accounts.insert(AccountId::new("house"), Rat::zero());
        funds
            .accounts
            .insert(AccountId::new("alice"), Rat::from_int(2));
        funds
            .accounts
            .insert(AccountId::new("bob"), Rat::from_int(2));
        let mut house = House::new(
            AccountId::new("house"),
            ParamRegistry::default(),
            1800,
            0.9,
        );
        house.broadcast_energy(0.85, 0).unwrap();
        (funds, house)
    }

    fn qr(name: &str) -> QrInputs {
        QrInputs {
            username: name.into(),
            location: "zurich".into(),
            wallet: AccountId::new("0xA1"),
        }
    }

    #[test]
    fn broadcast_tracks_death_threshold() {
        let (_, mut house) = world();
        let rec = house.broadcast_energy(0.85, 10).unwrap();
        assert!(rec.alive);
        let rec = house.broadcast_energy(0.05, 20).unwrap();
        assert!(!rec.alive);
        assert_eq!(
            house.broadcast_energy(1.2, 30),
            Err(ContractError::OutOfRangeSoc(1.2))
        );
        assert_eq!(
            house.broadcast_energy(0.5, 5),
            Err(ContractError::StaleTimestamp { got: 5, head: 20 })
        );
    }

    #[test]
    fn menu_follows_soc_band() {
        let (_, mut house) = world();
        assert_eq!(house.quote_durations(), vec![30, 60, 120, 240]);
        assert!(house.quote_durations().iter().any(|&m| m > 120));
        house.broadcast_energy(0.6, 10).unwrap();
        assert_eq!(house.quote_durations(), vec![30, 60, 120]);
        house.broadcast_energy(0.05, 20).unwrap();
        assert!(house.quote_durations().is_empty());
    }

    #[test]
    fn menu_empty_when_not_vacant() {
        let (mut funds, mut house) = world();
        house
            .reserve(&mut funds, &AccountId::new("alice"), 120, Rat::one(), &qr("alice"), 0)
            .unwrap();
        assert!(house.quote_durations().is_empty());
    }

    #[test]
    fn reserve_escrows_deposit() {
        let (mut funds, mut house) = world();
        let (grant, _) = house
            .reserve(&mut funds, &AccountId::new("alice"), 120, Rat::one(), &qr("alice"), 0)
            .unwrap();
        assert_eq!(funds.balance(&AccountId::new("alice")), Rat::one());
        assert_eq!(funds.escrow.get(&grant), Some(&Rat::one()));
        assert_eq!(house.occupancy().status, OccupancyStatus::Reserved);
        assert_eq!(house.active_grant_count(), 1);
    }

    #[test]
    fn reserve_rejects_off_menu_duration() {
        let (mut funds, mut house) = world();
        house.broadcast_energy(0.6, 0).unwrap(); // menu [30, 60, 120]
        let err = house
            .reserve(&mut funds, &AccountId::new("alice"), 45, Rat::one(), &qr("alice"), 0)
            .unwrap_err();
        assert_eq!(
            err,
            RejectReason::Contract(ContractError::InvalidDuration(45))
        );
    }

    #[test]
    fn reserve_while_reserved_moves_no_funds() {
        let (mut funds, mut house) = world();
        house
            .reserve(&mut funds, &AccountId::new("alice"), 120, Rat::one(), &qr("alice"), 0)
            .unwrap();
        let before = funds.clone();
        let err = house
            .reserve(&mut funds, &AccountId::new("bob"), 120, Rat::one(), &qr("bob"), 5)
            .unwrap_err();
        assert_eq!(err, RejectReason::Contract(ContractError::Occupied));
        assert_eq!(funds, before);
    }

    #[test]
    fn reserve_guards() {
        let (mut funds, mut house) = world();
        let err = house
            .reserve(
                &mut funds,
                &AccountId::new("alice"),
                120,
                Rat::new(1, 2),
                &qr("alice"),
                0,
            )
            .unwrap_err();
        assert!(matches!(
            err,
            RejectReason::Contract(ContractError::InsufficientDeposit { .. })
        ));

        house.broadcast_energy(0.05, 1).unwrap();
        let err = house
            .reserve(&mut funds, &AccountId::new("alice"), 30, Rat::one(), &qr("alice"), 2)
            .unwrap_err();
        assert_eq!(err, RejectReason::Contract(ContractError::DeadHouse));
    }

    #[test]
    fn verify_entry_decisions() {
        let (mut funds, mut house) = world();
        let (_, token) = house
            .reserve(&mut funds, &AccountId::new("alice"), 120, Rat::one(), &qr("alice"), 0)
            .unwrap();
        assert_eq!(house.verify_entry(&token, 60), EntryDecision::Unlock);

        let wrong = device::qr_token("bob", "zurich", &AccountId::new("0xA1")).unwrap();
        assert_eq!(
            house.verify_entry(&wrong, 60),
            EntryDecision::Deny(DenyReason::UnknownToken)
        );

        house.check_in(GrantId(0), 120, true).unwrap();
        assert_eq!(
            house.verify_entry(&token, 180),
            EntryDecision::Deny(DenyReason::AlreadyOccupied)
        );
    }

    #[test]
    fn verify_entry_expired_grant() {
        let (mut funds, mut house) = world();
        let (_, token) = house
            .reserve(&mut funds, &AccountId::new("alice"), 120, Rat::one(), &qr("alice"), 0)
            .unwrap();
        assert_eq!(
            house.verify_entry(&token, 1800),
            EntryDecision::Deny(DenyReason::Expired)
        );
    }

    #[test]
    fn verify_entry_settled_grant_is_unknown() {
        let (mut funds, mut house) = world();
        let (grant, token) = house
            .reserve(&mut funds, &AccountId::new("alice"), 120, Rat::one(), &qr("alice"), 0)
            .unwrap();
        house.check_in(grant, 60, true).unwrap();
        house.check_out(&mut funds, grant, 3660).unwrap();
        assert_eq!(
            house.verify_entry(&token, 3700),
            EntryDecision::Deny(DenyReason::UnknownToken)
        );
    }

    #[test]
    fn check_in_requires_presence_and_issued_state() {
        let (mut funds, mut house) = world();
        let (grant, _) = house
            .reserve(&mut funds, &AccountId::new("alice"), 120, Rat::one(), &qr("alice"), 0)
            .unwrap();
        assert_eq!(
            house.check_in(grant, 60, false),
            Err(ContractError::NoPresenceConfirmed)
        );
        house.check_in(grant, 60, true).unwrap();
        assert_eq!(house.occupancy().status, OccupancyStatus::Occupied);
        assert!(matches!(
            house.check_in(grant, 70, true),
            Err(ContractError::WrongGrantState { .. })
        ));
    }

    #[test]
    fn checkout_fee_and_refund_split_exactly() {
        let (mut funds, mut house) = world();
        let (grant, _) = house
            .reserve(&mut funds, &AccountId::new("alice"), 120, Rat::one(), &qr("alice"), 0)
            .unwrap();
        house.check_in(grant, 0, true).unwrap();
        // 60 minutes at 0.005/min -> fee 0.3, refund 0.7
        let (_, settlement, outcome) = house.check_out(&mut funds, grant, 3600).unwrap();
        assert_eq!(settlement.fee, Rat::new(3, 10));
        assert_eq!(settlement.refund, Rat::new(7, 10));
        assert_eq!(outcome, SettlementOutcome::Checkout);
        assert_eq!(
            funds.balance(&AccountId::new("house")),
            Rat::new(3, 10)
        );
        assert_eq!(
            funds.balance(&AccountId::new("alice")),
            Rat::one() + Rat::new(7, 10)
        );
        assert_eq!(funds.total(), Rat::from_int(4));
        assert_eq!(house.occupancy().status, OccupancyStatus::Vacant);
    }

    #[test]
    fn checkout_fee_clamped_to_deposit() {
        let (mut funds, mut house) = world();
        let (grant, _) = house
            .reserve(&mut funds, &AccountId::new("alice"), 240, Rat::one(), &qr("alice"), 0)
            .unwrap();
        house.check_in(grant, 0, true).unwrap();
        // 500 minutes metered at 0.005 = 2.5, clamped to the 1.0 deposit.
        let (_, settlement, _) = house.check_out(&mut funds, grant, 30_000).unwrap();
        assert_eq!(settlement.fee, Rat::one());
        assert_eq!(settlement.refund, Rat::zero());
    }

    #[test]
    fn no_show_refunds_everything() {
        let (mut funds, mut house) = world();
        let (grant, _) = house
            .reserve(&mut funds, &AccountId::new("alice"), 120, Rat::one(), &qr("alice"), 0)
            .unwrap();
        let (_, settlement, outcome) = house.check_out(&mut funds, grant, 1800).unwrap();
        assert_eq!(settlement.fee, Rat::zero());
        assert_eq!(settlement.refund, Rat::one());
        assert_eq!(outcome, SettlementOutcome::NoShow);
        assert_eq!(funds.balance(&AccountId::new("alice")), Rat::from_int(2));
        assert_eq!(house.grants()[&grant].state, GrantState::Expired);
        assert_eq!(house.occupancy().status, OccupancyStatus::Vacant);
    }

    #[test]
    fn checkout_before_expiry_of_unentered_grant_fails() {
        let (mut funds, mut house) = world();
        let (grant, _) = house
            .reserve(&mut funds, &AccountId::new("alice"), 120, Rat::one(), &qr("alice"), 0)
            .unwrap();
        assert!(matches!(
            house.check_out(&mut funds, grant, 600).unwrap_err(),
            RejectReason::Contract(ContractError::WrongGrantState { .. })
        ));
    }

    #[test]
    fn sustainability_share_is_earmarked() {
        let (mut funds, mut house) = world();
        house
            .set_param(
                "sustainability_reserve_fraction",
                ParamValue::Fraction(Rat::new(1, 5)),
                &proof(true),
            )
            .unwrap();
        let (grant, _) = house
            .reserve(&mut funds, &AccountId::new("alice"), 120, Rat::one(), &qr("alice"), 0)
            .unwrap();
        house.check_in(grant, 0, true).unwrap();
        house.check_out(&mut funds, grant, 3600).unwrap();
        // 20% of the 0.3 fee.
        assert_eq!(house.reserve_earmarked(), Rat::new(3, 50));
    }

    #[test]
    fn set_param_requires_passed_proof() {
        let (_, mut house) = world();
        assert_eq!(
            house.set_param(
                "price_per_minute",
                ParamValue::Amount(Rat::new(4, 1000)),
                &proof(false),
            ),
            Err(ContractError::UnauthorizedChange)
        );
        house
            .set_param(
                "price_per_minute",
                ParamValue::Amount(Rat::new(4, 1000)),
                &proof(true),
            )
            .unwrap();
        assert_eq!(house.registry().price_per_minute, Rat::new(4, 1000));
    }

    #[test]
    fn set_param_validates_ranges() {
        let (_, mut house) = world();
        assert!(matches!(
            house.set_param(
                "soc_death",
                ParamValue::Fraction(Rat::new(3, 2)),
                &proof(true),
            ),
            Err(ContractError::InvariantViolation(_))
        ));
        assert_eq!(
            house.set_param("volume", ParamValue::Seconds(3), &proof(true)),
            Err(ContractError::UnknownParam("volume".into()))
        );
    }

    #[test]
    fn param_values_roundtrip_canonical_form() {
        let registry = ParamRegistry::default();
        for name in PARAM_NAMES {
            let value = registry.get(name).unwrap();
            let parsed = ParamValue::parse_for(name, &value.canonical()).unwrap();
            assert_eq!(parsed, value, "param {name}");
        }
    }

    #[test]
    fn contract_call_payloads_roundtrip() {
        let calls = vec![
            ContractCall::Reserve {
                renter: AccountId::new("alice"),
                minutes: 120,
                deposit: Rat::one(),
                qr: qr("alice"),
            },
            ContractCall::CheckIn {
                grant: GrantId(3),
                presence_confirmed: true,
            },
            ContractCall::CheckOut { grant: GrantId(3) },
        ];
        for call in calls {
            let payload = call.canonical_payload();
            assert_eq!(ContractCall::parse_payload(&payload).unwrap(), call);
        }
    }

    #[test]
    fn soc_death_update_recomputes_alive() {
        let (_, mut house) = world();
        assert!(house.energy().alive);
        house
            .set_param("soc_death", ParamValue::Fraction(Rat::new(9, 10)), &proof(true))
            .unwrap();
        assert!(!house.energy().alive);
    }
}
