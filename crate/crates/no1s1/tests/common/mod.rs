//! Shared oracles and builders for the integration suites. Oracles are
//! deliberately independent re-derivations of the contracts they check.
#![allow(dead_code)] // each test binary uses a different subset

use std::collections::BTreeMap;

use no1s1::governance::Stakeholder;
use no1s1::ledger::AccountId;
use no1s1::rat::Rat;

/// Brute-force delegation oracle: walk each voter's chain step by step,
/// tracking the path. Power lands on the first node that either has no
/// delegate or sits on a cycle (detected by path revisit). Independent of
/// the library's edge-voiding implementation.
pub fn oracle_resolve_delegation(
    accounts: &[AccountId],
    powers: &[Rat],
    delegates: &[Option<usize>],
) -> BTreeMap<AccountId, Rat> {
    let mut effective: BTreeMap<AccountId, Rat> = accounts
        .iter()
        .map(|a| (a.clone(), Rat::zero()))
        .collect();
    for (start, power) in powers.iter().enumerate() {
        let mut path: Vec<usize> = vec![start];
        let sink = loop {
            let cur = *path.last().expect("non-empty path");
            match delegates[cur] {
                None => break cur,
                Some(next) => {
                    if let Some(pos) = path.iter().position(|&p| p == next) {
                        // Revisit: path[pos..] is a cycle; the landing node is
                        // the first on-path cycle member.
                        break path[pos];
                    }
                    path.push(next);
                }
            }
        };
        *effective.get_mut(&accounts[sink]).expect("registered") += *power;
    }
    effective
}

/// Stakeholders holding pure capital shares (i+1)/T for T = n(n+1)/2, with
/// optional delegation edges by index.
pub fn capital_stakeholders(n: usize, delegates: &[Option<usize>]) -> Vec<Stakeholder> {
    let total: i128 = (n as i128) * (n as i128 + 1) / 2;
    (0..n)
        .map(|i| Stakeholder {
            account: account(i),
            capital_share: Rat::new(i as i128 + 1, total),
            usage_share: Rat::zero(),
            labour_share: Rat::zero(),
            vote_credits: 9,
            delegate: delegates[i].map(account),
        })
        .collect()
}

pub fn account(i: usize) -> AccountId {
    AccountId::new(format!("v{i}"))
}

/// Every delegate assignment for `n` nodes: each node delegates to nobody or
/// to one of the other `n - 1` nodes.
pub fn all_delegate_assignments(n: usize) -> Vec<Vec<Option<usize>>> {
    let mut out = Vec::new();
    let choices = n; // 0 = none, k = delegate to (k-1 skipping self)
    let total = (choices as u64).pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let mut assignment = Vec::with_capacity(n);
        for i in 0..n {
            let digit = (c % choices as u64) as usize;
            c /= choices as u64;
            let delegate = if digit == 0 {
                None
            } else {
                let mut target = digit - 1;
                if target >= i {
                    target += 1; // skip self
                }
                Some(target)
            };
            assignment.push(delegate);
        }
        out.push(assignment);
    }
    out
}

/// Fresh per-test directory under the cargo-managed tmp dir.
pub fn test_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join(tag);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("create test dir");
    dir
}
