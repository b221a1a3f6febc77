//! Second-order steering: stakeholder registry with capital/usage/labour
//! weighting, the proposal lifecycle, and four voting mechanisms producing
//! enactment proofs that gate parameter changes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::contracts::ParamValue;
use crate::ledger::AccountId;
use crate::rat::Rat;
use crate::SimTime;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GovernanceError {
    #[error("weight mix does not sum to 1")]
    BadMix,
    #[error("{voter} delegates to unregistered account {delegate}")]
    UnknownDelegate { voter: AccountId, delegate: AccountId },
    #[error("no candidates received approvals")]
    NoCandidates,
    #[error("proposal {0} is still open for voting")]
    ProposalStillOpen(u64),
    #[error("proposal {0} was already decided")]
    AlreadyDecided(u64),
    #[error("ballot from {voter} spends {cost} credits but holds {credits}")]
    OverBudget {
        voter: AccountId,
        cost: u64,
        credits: u64,
    },
    #[error("unknown proposal {0}")]
    UnknownProposal(u64),
    #[error("{0} is not a registered stakeholder")]
    UnknownVoter(AccountId),
    #[error("{0} already voted on this proposal")]
    DuplicateBallot(AccountId),
    #[error("voting on proposal {0} has closed")]
    VotingClosed(u64),
    #[error("proposal {0} did not pass")]
    NotPassed(u64),
    #[error("proposal {0} was already enacted")]
    AlreadyEnacted(u64),
    #[error("{0} holds no veto right")]
    NotVetoHolder(AccountId),
}

/// A governance participant. Shares are fractions of each dimension's total;
/// per dimension they sum to 1 across all stakeholders (or all zero when the
/// dimension is unused).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stakeholder {
    pub account: AccountId,
    #[serde(default = "Rat::zero")]
    pub capital_share: Rat,
    #[serde(default = "Rat::zero")]
    pub usage_share: Rat,
    #[serde(default = "Rat::zero")]
    pub labour_share: Rat,
    #[serde(default = "default_credits")]
    pub vote_credits: u64,
    #[serde(default)]
    pub delegate: Option<AccountId>,
}

fn default_credits() -> u64 {
    9
}

/// Relative weight of the capital, usage, and labour dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GovernanceMix {
    pub capital: Rat,
    pub usage: Rat,
    pub labour: Rat,
}

impl GovernanceMix {
    pub fn equal_thirds() -> Self {
        GovernanceMix {
            capital: Rat::new(1, 3),
            usage: Rat::new(1, 3),
            labour: Rat::new(1, 3),
        }
    }

    pub fn validate(&self) -> Result<(), GovernanceError> {
        for alpha in [self.capital, self.usage, self.labour] {
            if alpha.is_negative() {
                return Err(GovernanceError::BadMix);
            }
        }
        let sum = self.capital + self.usage + self.labour;
        if (sum - Rat::one()).abs() > Rat::new(1, 1_000_000_000) {
            return Err(GovernanceError::BadMix);
        }
        Ok(())
    }
}

/// Base voting power: the mix-weighted sum of a stakeholder's shares.
pub fn voting_power(s: &Stakeholder, mix: &GovernanceMix) -> Result<Rat, GovernanceError> {
    mix.validate()?;
    Ok(mix.capital * s.capital_share + mix.usage * s.usage_share + mix.labour * s.labour_share)
}

/// Buying `votes` votes costs `votes^2` credits.
pub fn quadratic_cost(votes: u64) -> u64 {
    votes * votes
}

/// Largest vote count whose quadratic cost fits within `credits`.
pub fn max_affordable_votes(credits: u64) -> u64 {
    let mut v = (credits as f64).sqrt() as u64;
    while quadratic_cost(v + 1) <= credits {
        v += 1;
    }
    while v > 0 && quadratic_cost(v) > credits {
        v -= 1;
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Direct,
    Representative,
    Liquid,
    Quadratic,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Direct => "direct",
            Mechanism::Representative => "representative",
            Mechanism::Liquid => "liquid",
            Mechanism::Quadratic => "quadratic",
        })
    }
}

impl FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "direct" => Ok(Mechanism::Direct),
            "representative" => Ok(Mechanism::Representative),
            "liquid" => Ok(Mechanism::Liquid),
            "quadratic" => Ok(Mechanism::Quadratic),
            other => Err(format!("unknown mechanism {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    Yes,
    No,
    Abstain,
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Choice::Yes => "yes",
            Choice::No => "no",
            Choice::Abstain => "abstain",
        })
    }
}

/// One vote. `votes_bought` matters only under the quadratic mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ballot {
    pub voter: AccountId,
    pub proposal: u64,
    pub choice: Choice,
    pub votes_bought: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalStatus {
    Open,
    Passed,
    Failed,
    Enacted,
}

impl fmt::Display for ProposalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProposalStatus::Open => "open",
            ProposalStatus::Passed => "passed",
            ProposalStatus::Failed => "failed",
            ProposalStatus::Enacted => "enacted",
        })
    }
}

/// A requested registry change, voted on under one mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: u64,
    pub parameter: String,
    pub new_value: ParamValue,
    /// Stakeholder account or policy-rule id.
    pub proposer: String,
    pub opened_at: SimTime,
    pub closes_at: SimTime,
    pub mechanism: Mechanism,
    pub status: ProposalStatus,
}

/// Tally summary binding a proposal to its outcome. `passed == true` is what
/// the contract's parameter gate demands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnactmentProof {
    pub proposal: u64,
    pub mechanism: Mechanism,
    pub yes_power: Rat,
    pub no_power: Rat,
    pub participation: Rat,
    pub total_power: Rat,
    pub passed: bool,
}

/// Flow each voter's base power along delegation edges to the terminal
/// non-delegating voter. Members of a delegation cycle keep their own power
/// (their outgoing edges are void). Total power is conserved.
pub fn resolve_delegation(
    stakeholders: &[Stakeholder],
    mix: &GovernanceMix,
) -> Result<BTreeMap<AccountId, Rat>, GovernanceError> {
    mix.validate()?;
    let registered: BTreeSet<&AccountId> = stakeholders.iter().map(|s| &s.account).collect();
    let mut edges: BTreeMap<&AccountId, &AccountId> = BTreeMap::new();
    for s in stakeholders {
        if let Some(delegate) = &s.delegate {
            if !registered.contains(delegate) {
                return Err(GovernanceError::UnknownDelegate {
                    voter: s.account.clone(),
                    delegate: delegate.clone(),
                });
            }
            if delegate != &s.account {
                edges.insert(&s.account, delegate);
            }
        }
    }

    // A node sits on a cycle iff following the chain from it returns to it.
    let on_cycle: BTreeSet<&AccountId> = edges
        .keys()
        .copied()
        .filter(|start| {
            let mut cur = *start;
            for _ in 0..=edges.len() {
                match edges.get(cur) {
                    Some(next) => {
                        cur = next;
                        if cur == *start {
                            return true;
                        }
                    }
                    None => return false,
                }
            }
            false
        })
        .collect();

    let mut effective: BTreeMap<AccountId, Rat> = stakeholders
        .iter()
        .map(|s| (s.account.clone(), Rat::zero()))
        .collect();
    for s in stakeholders {
        let power = voting_power(s, mix)?;
        // Walk until a natural terminal or a cycle member (whose edges are
        // void, making it a terminal sink).
        let mut cur = &s.account;
        while !on_cycle.contains(cur) {
            match edges.get(cur) {
                Some(next) => cur = next,
                None => break,
            }
        }
        *effective.get_mut(cur).expect("registered") += power;
    }
    Ok(effective)
}

/// Approval ballot used to elect representatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ApprovalBallot {
    pub voter: AccountId,
    pub approves: Vec<AccountId>,
}

/// The `k` candidates with the highest power-weighted approval win; ties go
/// to the lexicographically smaller account id.
pub fn elect_representatives(
    stakeholders: &[Stakeholder],
    mix: &GovernanceMix,
    approvals: &[ApprovalBallot],
    k: usize,
) -> Result<Vec<AccountId>, GovernanceError> {
    mix.validate()?;
    let powers: BTreeMap<&AccountId, Rat> = stakeholders
        .iter()
        .map(|s| Ok((&s.account, voting_power(s, mix)?)))
        .collect::<Result<_, GovernanceError>>()?;
    let mut scores: BTreeMap<&AccountId, Rat> = BTreeMap::new();
    for ballot in approvals {
        let power = powers
            .get(&ballot.voter)
            .copied()
            .ok_or_else(|| GovernanceError::UnknownVoter(ballot.voter.clone()))?;
        for candidate in &ballot.approves {
            *scores.entry(candidate).or_insert_with(Rat::zero) += power;
        }
    }
    if scores.is_empty() {
        return Err(GovernanceError::NoCandidates);
    }
    let mut ranked: Vec<(&AccountId, Rat)> = scores.into_iter().collect();
    // Highest score first; ties resolve to the smaller id.
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked.into_iter().take(k).map(|(id, _)| id.clone()).collect())
}

struct TallySums {
    yes: Rat,
    no: Rat,
    participation: Rat,
    total: Rat,
}

fn proof(
    proposal: u64,
    mechanism: Mechanism,
    sums: TallySums,
    quorum: Rat,
    vetoed: bool,
) -> EnactmentProof {
    let quorum_met = sums.participation >= quorum * sums.total;
    EnactmentProof {
        proposal,
        mechanism,
        yes_power: sums.yes,
        no_power: sums.no,
        participation: sums.participation,
        total_power: sums.total,
        passed: !vetoed && quorum_met && sums.yes > sums.no,
    }
}

/// Power-weighted majority with participation quorum. Used directly and, on
/// resolved effective powers, for liquid delegation.
pub fn tally_direct(
    proposal: u64,
    mechanism: Mechanism,
    powers: &BTreeMap<AccountId, Rat>,
    ballots: &[Ballot],
    quorum: Rat,
    vetoed: bool,
) -> EnactmentProof {
    let total: Rat = powers.values().copied().sum();
    let mut yes = Rat::zero();
    let mut no = Rat::zero();
    let mut participation = Rat::zero();
    for ballot in ballots {
        let power = powers
            .get(&ballot.voter)
            .copied()
            .unwrap_or_else(Rat::zero);
        participation += power;
        match ballot.choice {
            Choice::Yes => yes += power,
            Choice::No => no += power,
            Choice::Abstain => {}
        }
    }
    proof(
        proposal,
        mechanism,
        TallySums {
            yes,
            no,
            participation,
            total,
        },
        quorum,
        vetoed,
    )
}

/// One head, one vote, counted over the elected representative set only.
/// Quorum applies to representative head-count participation.
pub fn tally_representative(
    proposal: u64,
    representatives: &[AccountId],
    ballots: &[Ballot],
    quorum: Rat,
    vetoed: bool,
) -> EnactmentProof {
    let seat: BTreeSet<&AccountId> = representatives.iter().collect();
    let mut yes = 0i64;
    let mut no = 0i64;
    let mut participating = 0i64;
    for ballot in ballots {
        if !seat.contains(&ballot.voter) {
            continue;
        }
        participating += 1;
        match ballot.choice {
            Choice::Yes => yes += 1,
            Choice::No => no += 1,
            Choice::Abstain => {}
        }
    }
    proof(
        proposal,
        Mechanism::Representative,
        TallySums {
            yes: Rat::from_int(yes),
            no: Rat::from_int(no),
            participation: Rat::from_int(participating),
            total: Rat::from_int(representatives.len() as i64),
        },
        quorum,
        vetoed,
    )
}

/// Vote buying at quadratic cost: yes/no compared in bought votes, with each
/// voter's spend bounded by their credit budget. Quorum is measured over the
/// participating voters' base power.
pub fn tally_quadratic(
    proposal: u64,
    powers: &BTreeMap<AccountId, Rat>,
    credits: &BTreeMap<AccountId, u64>,
    ballots: &[Ballot],
    quorum: Rat,
    vetoed: bool,
) -> Result<EnactmentProof, GovernanceError> {
    let total: Rat = powers.values().copied().sum();
    let mut yes = 0u64;
    let mut no = 0u64;
    let mut participation = Rat::zero();
    for ballot in ballots {
        let budget = credits.get(&ballot.voter).copied().unwrap_or(0);
        let cost = quadratic_cost(ballot.votes_bought);
        if cost > budget {
            return Err(GovernanceError::OverBudget {
                voter: ballot.voter.clone(),
                cost,
                credits: budget,
            });
        }
        participation += powers
            .get(&ballot.voter)
            .copied()
            .unwrap_or_else(Rat::zero);
        match ballot.choice {
            Choice::Yes => yes += ballot.votes_bought,
            Choice::No => no += ballot.votes_bought,
            Choice::Abstain => {}
        }
    }
    Ok(proof(
        proposal,
        Mechanism::Quadratic,
        TallySums {
            yes: Rat::from_int(yes as i64),
            no: Rat::from_int(no as i64),
            participation,
            total,
        },
        quorum,
        vetoed,
    ))
}

/// Proposal lifecycle and ballot box. All state changes flow through the
/// single simulation thread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Governance {
    stakeholders: Vec<Stakeholder>,
    veto_holders: BTreeSet<AccountId>,
    proposals: BTreeMap<u64, Proposal>,
    ballots: BTreeMap<u64, Vec<Ballot>>,
    vetoes: BTreeMap<u64, BTreeSet<AccountId>>,
    next_id: u64,
}

impl Governance {
    pub fn new(stakeholders: Vec<Stakeholder>, veto_holders: BTreeSet<AccountId>) -> Self {
        Governance {
            stakeholders,
            veto_holders,
            proposals: BTreeMap::new(),
            ballots: BTreeMap::new(),
            vetoes: BTreeMap::new(),
            next_id: 0,
        }
    }

    pub fn stakeholders(&self) -> &[Stakeholder] {
        &self.stakeholders
    }

    pub fn proposals(&self) -> &BTreeMap<u64, Proposal> {
        &self.proposals
    }

    pub fn proposal(&self, id: u64) -> Result<&Proposal, GovernanceError> {
        self.proposals
            .get(&id)
            .ok_or(GovernanceError::UnknownProposal(id))
    }

    pub fn open_proposal(
        &mut self,
        parameter: String,
        new_value: ParamValue,
        proposer: String,
        opened_at: SimTime,
        closes_at: SimTime,
        mechanism: Mechanism,
    ) -> u64 {
        assert!(closes_at > opened_at, "voting window must be non-empty");
        let id = self.next_id;
        self.next_id += 1;
        self.proposals.insert(
            id,
            Proposal {
                id,
                parameter,
                new_value,
                proposer,
                opened_at,
                closes_at,
                mechanism,
                status: ProposalStatus::Open,
            },
        );
        id
    }

    /// One ballot per (voter, proposal), from registered stakeholders, while
    /// voting is open.
    pub fn cast_ballot(&mut self, ballot: Ballot, t: SimTime) -> Result<(), GovernanceError> {
        let proposal = self
            .proposals
            .get(&ballot.proposal)
            .ok_or(GovernanceError::UnknownProposal(ballot.proposal))?;
        if proposal.status != ProposalStatus::Open || t >= proposal.closes_at {
            return Err(GovernanceError::VotingClosed(ballot.proposal));
        }
        if !self.stakeholders.iter().any(|s| s.account == ballot.voter) {
            return Err(GovernanceError::UnknownVoter(ballot.voter.clone()));
        }
        let box_ = self.ballots.entry(ballot.proposal).or_default();
        if box_.iter().any(|b| b.voter == ballot.voter) {
            return Err(GovernanceError::DuplicateBallot(ballot.voter.clone()));
        }
        box_.push(ballot);
        Ok(())
    }

    /// Record a veto. Any veto from a configured veto holder forces the
    /// proposal to fail at tally time.
    pub fn cast_veto(&mut self, proposal: u64, account: AccountId) -> Result<(), GovernanceError> {
        if !self.proposals.contains_key(&proposal) {
            return Err(GovernanceError::UnknownProposal(proposal));
        }
        if !self.veto_holders.contains(&account) {
            return Err(GovernanceError::NotVetoHolder(account));
        }
        self.vetoes.entry(proposal).or_default().insert(account);
        Ok(())
    }

    /// Close the vote and produce the enactment proof. `representatives`
    /// is required by (and only consulted for) the representative mechanism.
    pub fn tally(
        &mut self,
        proposal_id: u64,
        t: SimTime,
        mix: &GovernanceMix,
        quorum: Rat,
        representatives: Option<&[AccountId]>,
    ) -> Result<EnactmentProof, GovernanceError> {
        let proposal = self
            .proposals
            .get(&proposal_id)
            .ok_or(GovernanceError::UnknownProposal(proposal_id))?;
        if proposal.status != ProposalStatus::Open {
            return Err(GovernanceError::AlreadyDecided(proposal_id));
        }
        if t < proposal.closes_at {
            return Err(GovernanceError::ProposalStillOpen(proposal_id));
        }
        let mechanism = proposal.mechanism;
        let ballots = self.ballots.get(&proposal_id).cloned().unwrap_or_default();
        let vetoed = self
            .vetoes
            .get(&proposal_id)
            .is_some_and(|v| !v.is_empty());

        let proof = match mechanism {
            Mechanism::Direct => {
                let powers = self
                    .stakeholders
                    .iter()
                    .map(|s| Ok((s.account.clone(), voting_power(s, mix)?)))
                    .collect::<Result<BTreeMap<_, _>, GovernanceError>>()?;
                tally_direct(proposal_id, mechanism, &powers, &ballots, quorum, vetoed)
            }
            Mechanism::Liquid => {
                let powers = resolve_delegation(&self.stakeholders, mix)?;
                tally_direct(proposal_id, mechanism, &powers, &ballots, quorum, vetoed)
            }
            Mechanism::Representative => {
                let reps = representatives.unwrap_or(&[]);
                tally_representative(proposal_id, reps, &ballots, quorum, vetoed)
            }
            Mechanism::Quadratic => {
                let mut powers = BTreeMap::new();
                let mut credits = BTreeMap::new();
                for s in &self.stakeholders {
                    powers.insert(s.account.clone(), voting_power(s, mix)?);
                    credits.insert(s.account.clone(), s.vote_credits);
                }
                tally_quadratic(proposal_id, &powers, &credits, &ballots, quorum, vetoed)?
            }
        };

        let proposal = self.proposals.get_mut(&proposal_id).expect("checked");
        proposal.status = if proof.passed {
            ProposalStatus::Passed
        } else {
            ProposalStatus::Failed
        };
        Ok(proof)
    }

    /// Consume a passed proposal exactly once, yielding the parameter-update
    /// payload for the ledger.
    pub fn enact(
        &mut self,
        proof: &EnactmentProof,
    ) -> Result<crate::contracts::ParamUpdate, GovernanceError> {
        let proposal = self
            .proposals
            .get_mut(&proof.proposal)
            .ok_or(GovernanceError::UnknownProposal(proof.proposal))?;
        match proposal.status {
            ProposalStatus::Enacted => return Err(GovernanceError::AlreadyEnacted(proof.proposal)),
            ProposalStatus::Passed if proof.passed => {}
            _ => return Err(GovernanceError::NotPassed(proof.proposal)),
        }
        proposal.status = ProposalStatus::Enacted;
        Ok(crate::contracts::ParamUpdate {
            name: proposal.parameter.clone(),
            value: proposal.new_value.clone(),
            proof: proof.clone(),
        })
    }
}
