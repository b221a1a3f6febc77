//! Deterministic single-node append-only ledger: accounts, value transfers,
//! contract-call dispatch, and a verifiable state digest.
//!
//! Every crucial state change of the cabin is a [`Transaction`]. Accepted
//! transactions are applied atomically and appended to the log; rejected ones
//! leave all state untouched. The digest over the canonical log form is the
//! determinism witness used by replay verification.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::contracts::{CallEffect, ContractCall, ContractError, House, ParamUpdate};
use crate::digest::sha256_hex;
use crate::rat::Rat;
use crate::SimTime;

/// Opaque account identifier: the house, renters, stakeholders.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(String);

impl AccountId {
    pub fn new(id: impl Into<String>) -> Self {
        AccountId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AccountId {
    fn from(s: &str) -> Self {
        AccountId(s.to_owned())
    }
}

/// Identifier of an access grant; also keys the escrow map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GrantId(pub u64);

impl fmt::Display for GrantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

impl std::str::FromStr for GrantId {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let n = s.strip_prefix('g').ok_or(())?;
        n.parse().map(GrantId).map_err(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LedgerError {
    #[error("account id {0:?} is empty or contains wire-format separators")]
    BadAccountId(String),
    #[error("account {0} already exists")]
    DuplicateAccount(AccountId),
    #[error("cannot open funded account {0} after genesis")]
    PostGenesisMint(AccountId),
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("transaction seq {got} does not match log length {expected}")]
    BadSequence { got: u64, expected: u64 },
    #[error("transaction timestamp {got} precedes log head {head}")]
    NonMonotonicTimestamp { got: SimTime, head: SimTime },
    #[error("signer {0} is not authorized for this transaction")]
    UnauthorizedSigner(AccountId),
    #[error("insufficient funds: {account} holds {balance}, needs {needed}")]
    InsufficientFunds {
        account: AccountId,
        balance: Rat,
        needed: Rat,
    },
    #[error("amount must be non-negative")]
    NegativeAmount,
}

/// Why a submitted transaction was rejected.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RejectReason {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Contract(#[from] ContractError),
}

/// Outcome of [`Ledger::submit`]. Rejections carry the reason; accepted
/// transactions carry the applied effect for callers that schedule follow-ups.
#[derive(Debug, Clone, PartialEq)]
pub enum Receipt {
    Accepted { seq: u64, effect: CallEffect },
    Rejected { reason: RejectReason },
}

impl Receipt {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Receipt::Accepted { .. })
    }

    pub fn reject_reason(&self) -> Option<&RejectReason> {
        match self {
            Receipt::Rejected { reason } => Some(reason),
            Receipt::Accepted { .. } => None,
        }
    }
}

/// Transaction kinds. The payload is kind-specific.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TxKind {
    Transfer {
        from: AccountId,
        to: AccountId,
        amount: Rat,
    },
    ContractCall(ContractCall),
    ParamUpdate(ParamUpdate),
    EnergyBroadcast {
        soc: f64,
    },
}

impl TxKind {
    pub fn kind_name(&self) -> &'static str {
        match self {
            TxKind::Transfer { .. } => "Transfer",
            TxKind::ContractCall(_) => "ContractCall",
            TxKind::ParamUpdate(_) => "ParamUpdate",
            TxKind::EnergyBroadcast { .. } => "EnergyBroadcast",
        }
    }

    /// Payload fields in declared order, pipe-joined.
    pub fn canonical_payload(&self) -> String {
        match self {
            TxKind::Transfer { from, to, amount } => format!("{from}|{to}|{amount}"),
            TxKind::ContractCall(call) => call.canonical_payload(),
            TxKind::ParamUpdate(update) => update.canonical_payload(),
            TxKind::EnergyBroadcast { soc } => format!("{soc}"),
        }
    }

    /// Inverse of [`TxKind::canonical_payload`], given the kind name.
    pub fn parse_payload(kind: &str, payload: &str) -> Result<TxKind, String> {
        match kind {
            "Transfer" => {
                let parts: Vec<&str> = payload.split('|').collect();
                if parts.len() != 3 {
                    return Err(format!("Transfer payload has {} fields", parts.len()));
                }
                let amount: Rat = parts[2]
                    .parse()
                    .map_err(|e| format!("bad transfer amount: {e}"))?;
                Ok(TxKind::Transfer {
                    from: AccountId::new(parts[0]),
                    to: AccountId::new(parts[1]),
                    amount,
                })
            }
            "ContractCall" => ContractCall::parse_payload(payload).map(TxKind::ContractCall),
            "ParamUpdate" => ParamUpdate::parse_payload(payload).map(TxKind::ParamUpdate),
            "EnergyBroadcast" => {
                let soc: f64 = payload
                    .parse()
                    .map_err(|_| format!("bad soc value {payload:?}"))?;
                Ok(TxKind::EnergyBroadcast { soc })
            }
            other => Err(format!("unknown transaction kind {other:?}")),
        }
    }
}

/// One ledger entry. `seq` values are contiguous from 0 and timestamps are
/// non-decreasing in `seq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub seq: u64,
    pub timestamp: SimTime,
    pub kind: TxKind,
    pub signer: AccountId,
}

impl Transaction {
    /// Canonical line: `seq|timestamp|kind|signer|payload-fields`.
    pub fn canonical_line(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            self.seq,
            self.timestamp,
            self.kind.kind_name(),
            self.signer,
            self.kind.canonical_payload()
        )
    }

    /// Parse a canonical line back into a transaction.
    pub fn from_canonical_line(line: &str) -> Result<Transaction, String> {
        let mut parts = line.splitn(5, '|');
        let seq: u64 = parts
            .next()
            .ok_or("missing seq")?
            .parse()
            .map_err(|_| "bad seq".to_string())?;
        let timestamp: SimTime = parts
            .next()
            .ok_or("missing timestamp")?
            .parse()
            .map_err(|_| "bad timestamp".to_string())?;
        let kind_name = parts.next().ok_or("missing kind")?;
        let signer = parts.next().ok_or("missing signer")?;
        let payload = parts.next().unwrap_or("");
        let kind = TxKind::parse_payload(kind_name, payload)?;
        Ok(Transaction {
            seq,
            timestamp,
            kind,
            signer: AccountId::new(signer),
        })
    }
}

/// Account balances plus deposit escrow. The only surface through which
/// contract code may move funds, so conservation is preserved by
/// construction.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Funds {
    pub accounts: BTreeMap<AccountId, Rat>,
    pub escrow: BTreeMap<GrantId, Rat>,
}

impl Funds {
    pub fn balance(&self, id: &AccountId) -> Rat {
        self.accounts.get(id).copied().unwrap_or_else(Rat::zero)
    }

    pub fn has_account(&self, id: &AccountId) -> bool {
        self.accounts.contains_key(id)
    }

    /// Total value in the system: balances plus escrow.
    pub fn total(&self) -> Rat {
        self.accounts.values().copied().sum::<Rat>()
            + self.escrow.values().copied().sum::<Rat>()
    }

    pub fn transfer(&mut self, from: &AccountId, to: &AccountId, amount: Rat) -> Result<(), LedgerError> {
        if amount.is_negative() {
            return Err(LedgerError::NegativeAmount);
        }
        if !self.has_account(to) {
            return Err(LedgerError::UnknownAccount(to.clone()));
        }
        let balance = self.balance(from);
        if !self.has_account(from) {
            return Err(LedgerError::UnknownAccount(from.clone()));
        }
        if balance < amount {
            return Err(LedgerError::InsufficientFunds {
                account: from.clone(),
                balance,
                needed: amount,
            });
        }
        *self.accounts.get_mut(from).expect("checked") -= amount;
        *self.accounts.get_mut(to).expect("checked") += amount;
        Ok(())
    }

    /// Move a deposit from a renter into escrow under a grant id.
    pub fn hold_in_escrow(
        &mut self,
        from: &AccountId,
        grant: GrantId,
        amount: Rat,
    ) -> Result<(), LedgerError> {
        if amount.is_negative() {
            return Err(LedgerError::NegativeAmount);
        }
        if !self.has_account(from) {
            return Err(LedgerError::UnknownAccount(from.clone()));
        }
        let balance = self.balance(from);
        if balance < amount {
            return Err(LedgerError::InsufficientFunds {
                account: from.clone(),
                balance,
                needed: amount,
            });
        }
        *self.accounts.get_mut(from).expect("checked") -= amount;
        *self.escrow.entry(grant).or_insert_with(Rat::zero) += amount;
        Ok(())
    }

    /// Release an escrow entry as fee to the house and refund to the renter.
    /// `fee + refund` must equal the held amount exactly.
    pub fn release_escrow(
        &mut self,
        grant: GrantId,
        house: &AccountId,
        fee: Rat,
        renter: &AccountId,
        refund: Rat,
    ) -> Result<(), LedgerError> {
        let held = self
            .escrow
            .get(&grant)
            .copied()
            .ok_or_else(|| LedgerError::UnknownAccount(AccountId::new(grant.to_string())))?;
        assert_eq!(
            fee + refund,
            held,
            "settlement must split the escrow exactly"
        );
        self.escrow.remove(&grant);
        *self
            .accounts
            .get_mut(house)
            .ok_or_else(|| LedgerError::UnknownAccount(house.clone()))? += fee;
        *self
            .accounts
            .get_mut(renter)
            .ok_or_else(|| LedgerError::UnknownAccount(renter.clone()))? += refund;
        Ok(())
    }
}

/// The single source of truth: accounts, escrow, and the ordered log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub funds: Funds,
    pub log: Vec<Transaction>,
    genesis_supply: Rat,
    /// Only this account may sign energy broadcasts.
    device_account: AccountId,
}

impl Ledger {
    pub fn new(device_account: AccountId) -> Self {
        Ledger {
            funds: Funds::default(),
            log: Vec::new(),
            genesis_supply: Rat::zero(),
            device_account,
        }
    }

    pub fn device_account(&self) -> &AccountId {
        &self.device_account
    }

    pub fn genesis_supply(&self) -> Rat {
        self.genesis_supply
    }

    /// Open an account. Funded accounts may only be opened during genesis,
    /// i.e. before the first transaction is accepted. Ids must be clean of
    /// the canonical-form separators so the log stays parseable.
    pub fn open_account(&mut self, id: AccountId, initial: Rat) -> Result<(), LedgerError> {
        if id.as_str().is_empty() || id.as_str().contains(['|', ',', '\n', '\r']) {
            return Err(LedgerError::BadAccountId(id.as_str().into()));
        }
        if initial.is_negative() {
            return Err(LedgerError::NegativeAmount);
        }
        if self.funds.has_account(&id) {
            return Err(LedgerError::DuplicateAccount(id));
        }
        if !self.log.is_empty() && !initial.is_zero() {
            return Err(LedgerError::PostGenesisMint(id));
        }
        self.genesis_supply += initial;
        self.funds.accounts.insert(id, initial);
        Ok(())
    }

    /// Conservation witness: balances plus escrow must equal genesis supply.
    pub fn conserves_supply(&self) -> bool {
        self.funds.total() == self.genesis_supply
    }

    /// Apply a transaction. Accepted transactions mutate state and extend the
    /// log; rejected ones leave ledger and contract state bit-identical.
    pub fn submit(&mut self, house: &mut House, tx: Transaction) -> Receipt {
        let reason = match self.validate_header(&tx) {
            Ok(()) => {
                let snapshot_funds = self.funds.clone();
                let snapshot_house = house.clone();
                match self.apply(house, &tx) {
                    Ok(effect) => {
                        let seq = tx.seq;
                        self.log.push(tx);
                        return Receipt::Accepted { seq, effect };
                    }
                    Err(reason) => {
                        self.funds = snapshot_funds;
                        *house = snapshot_house;
                        reason
                    }
                }
            }
            Err(e) => RejectReason::Ledger(e),
        };
        Receipt::Rejected { reason }
    }

    fn validate_header(&self, tx: &Transaction) -> Result<(), LedgerError> {
        let expected = self.log.len() as u64;
        if tx.seq != expected {
            return Err(LedgerError::BadSequence {
                got: tx.seq,
                expected,
            });
        }
        if let Some(last) = self.log.last() {
            if tx.timestamp < last.timestamp {
                return Err(LedgerError::NonMonotonicTimestamp {
                    got: tx.timestamp,
                    head: last.timestamp,
                });
            }
        }
        if !self.funds.has_account(&tx.signer) {
            return Err(LedgerError::UnauthorizedSigner(tx.signer.clone()));
        }
        Ok(())
    }

    fn apply(&mut self, house: &mut House, tx: &Transaction) -> Result<CallEffect, RejectReason> {
        match &tx.kind {
            TxKind::Transfer { from, to, amount } => {
                if &tx.signer != from {
                    return Err(LedgerError::UnauthorizedSigner(tx.signer.clone()).into());
                }
                self.funds.transfer(from, to, *amount)?;
                Ok(CallEffect::Transferred)
            }
            TxKind::EnergyBroadcast { soc } => {
                if tx.signer != self.device_account {
                    return Err(LedgerError::UnauthorizedSigner(tx.signer.clone()).into());
                }
                let record = house.broadcast_energy(*soc, tx.timestamp)?;
                Ok(CallEffect::EnergyRecorded {
                    soc: record.soc,
                    alive: record.alive,
                })
            }
            TxKind::ContractCall(call) => house.apply_call(&mut self.funds, &tx.signer, tx.timestamp, call),
            TxKind::ParamUpdate(update) => {
                house.set_param(&update.name, update.value.clone(), &update.proof)?;
                Ok(CallEffect::ParamSet {
                    name: update.name.clone(),
                })
            }
        }
    }

    /// Canonical serialization of the whole log: one line per transaction,
    /// joined with `\n`, no trailing newline.
    pub fn canonical_log(&self) -> String {
        self.log
            .iter()
            .map(Transaction::canonical_line)
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// SHA-256 of the canonical log form, lowercase hex. Equal logs produce
    /// equal digests.
    pub fn state_root(&self) -> String {
        sha256_hex(self.canonical_log().as_bytes())
    }
}
