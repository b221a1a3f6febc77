//! Physical twin of the cabin: solar-battery energy dynamics, ultrasonic
//! distance sensing, QR token derivation, and the smart-lock state machine.

use serde::{Deserialize, Serialize};

use crate::contracts::EntryDecision;
use crate::digest::sha256_hex;
use crate::ledger::AccountId;
use crate::SimTime;

/// Speed of sound in air used for echo ranging, m/s.
pub const SPEED_OF_SOUND_M_S: f64 = 343.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeviceError {
    #[error("echo delay must be non-negative")]
    NegativeDelay,
    #[error("presence window has {got} samples, need {need}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("identity field {0:?} is empty")]
    EmptyIdentityField(&'static str),
    #[error("identity field {0:?} contains the separator '|'")]
    SeparatorInField(&'static str),
    #[error("unlock command without a positive entry decision")]
    UnauthorizedUnlock,
}

/// Hardware parameters of the cabin. All values are scenario-overridable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceConfig {
    pub mppt_efficiency: f64,
    pub capacity_wh: f64,
    pub idle_load_w: f64,
    pub occupied_load_w: f64,
    pub initial_soc: f64,
    /// Consecutive below-threshold readings required for a presence decision.
    pub presence_samples: usize,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            mppt_efficiency: 0.95,
            capacity_wh: 1000.0,
            idle_load_w: 10.0,
            occupied_load_w: 60.0,
            initial_soc: 0.9,
            presence_samples: 3,
        }
    }
}

/// Battery charge state. `soc` stays clamped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub soc: f64,
    pub capacity_wh: f64,
    pub last_update: SimTime,
}

impl BatteryState {
    pub fn new(config: &DeviceConfig) -> Self {
        BatteryState {
            soc: config.initial_soc.clamp(0.0, 1.0),
            capacity_wh: config.capacity_wh,
            last_update: 0,
        }
    }
}

/// Instantaneous environment acting on the battery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSample {
    pub solar_power_w: f64,
    pub load_power_w: f64,
}

impl EnvSample {
    pub fn new(solar_power_w: f64, load_power_w: f64) -> Self {
        EnvSample {
            solar_power_w: solar_power_w.max(0.0),
            load_power_w: load_power_w.max(0.0),
        }
    }
}

/// Advance the battery by `dt_s` seconds under constant environment.
/// Charge in = MPPT efficiency x solar power; the result is clamped to [0, 1].
pub fn step_energy(
    b: &BatteryState,
    env: &EnvSample,
    dt_s: SimTime,
    mppt_efficiency: f64,
) -> BatteryState {
    if dt_s == 0 {
        return *b;
    }
    let net_w = mppt_efficiency * env.solar_power_w - env.load_power_w;
    let delta_soc = net_w * (dt_s as f64 / 3600.0) / b.capacity_wh;
    BatteryState {
        soc: (b.soc + delta_soc).clamp(0.0, 1.0),
        capacity_wh: b.capacity_wh,
        last_update: b.last_update + dt_s,
    }
}

/// Echo ranging: distance = speed of sound x delay / 2.
pub fn uds_distance(echo_delay_s: f64) -> Result<f64, DeviceError> {
    if echo_delay_s < 0.0 || echo_delay_s.is_nan() {
        return Err(DeviceError::NegativeDelay);
    }
    Ok(SPEED_OF_SOUND_M_S * echo_delay_s / 2.0)
}

/// True iff the `k` most recent readings are all below the threshold.
/// Debounces single-sample flicker.
pub fn detect_presence(window: &[f64], k: usize, threshold_m: f64) -> Result<bool, DeviceError> {
    if window.len() < k {
        return Err(DeviceError::InsufficientSamples {
            got: window.len(),
            need: k,
        });
    }
    Ok(window[window.len() - k..].iter().all(|&d| d < threshold_m))
}

/// A 64-char lowercase hex digest used as the QR payload.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenDigest(String);

impl TokenDigest {
    pub fn from_hex(hex: String) -> Option<Self> {
        let ok = hex.len() == 64
            && hex
                .chars()
                .all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase());
        ok.then_some(TokenDigest(hex))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for TokenDigest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Derive the access token from the renter's identity triple.
/// Digest = SHA-256 of `username|location|wallet`.
pub fn qr_token(
    username: &str,
    location: &str,
    wallet: &AccountId,
) -> Result<TokenDigest, DeviceError> {
    for (name, value) in [
        ("username", username),
        ("location", location),
        ("wallet", wallet.as_str()),
    ] {
        if value.is_empty() {
            return Err(DeviceError::EmptyIdentityField(name));
        }
        // Newlines would also break the canonical transaction form.
        if value.contains(['|', '\n', '\r']) {
            return Err(DeviceError::SeparatorInField(name));
        }
    }
    let preimage = format!("{username}|{location}|{wallet}");
    Ok(TokenDigest(sha256_hex(preimage.as_bytes())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LockStatus {
    Locked,
    Unlocked,
}

impl std::fmt::Display for LockStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LockStatus::Locked => "locked",
            LockStatus::Unlocked => "unlocked",
        })
    }
}

/// Smart-lock state. Unlocked always carries the unlock time so the
/// auto-relock timeout can be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockState {
    pub status: LockStatus,
    pub unlocked_at: Option<SimTime>,
}

impl LockState {
    pub fn locked() -> Self {
        LockState {
            status: LockStatus::Locked,
            unlocked_at: None,
        }
    }
}

/// Commands accepted by the lock state machine.
#[derive(Debug, Clone, PartialEq)]
pub enum LockCommand {
    /// Unlock request carrying the contract's entry decision as authority.
    Unlock(EntryDecision, SimTime),
    DoorClosed,
    Tick(SimTime),
}

/// Lock transition table. Unknown (state, command) pairs are identity.
pub fn lock_transition(
    l: &LockState,
    cmd: LockCommand,
    relock_timeout_s: SimTime,
) -> Result<LockState, DeviceError> {
    match (l.status, cmd) {
        (_, LockCommand::Unlock(decision, t)) => match decision {
            EntryDecision::Unlock => Ok(match l.status {
                LockStatus::Locked => LockState {
                    status: LockStatus::Unlocked,
                    unlocked_at: Some(t),
                },
                LockStatus::Unlocked => *l,
            }),
            EntryDecision::Deny(_) => Err(DeviceError::UnauthorizedUnlock),
        },
        (LockStatus::Unlocked, LockCommand::DoorClosed) => Ok(LockState::locked()),
        (LockStatus::Unlocked, LockCommand::Tick(t)) => {
            let opened = l.unlocked_at.unwrap_or(0);
            if t.saturating_sub(opened) >= relock_timeout_s {
                Ok(LockState::locked())
            } else {
                Ok(*l)
            }
        }
        _ => Ok(*l),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::DenyReason;

    fn cfg() -> DeviceConfig {
        DeviceConfig::default()
    }

    #[test]
    fn step_energy_charges_per_power_balance() {
        let b = BatteryState {
            soc: 0.5,
            capacity_wh: 1000.0,
            last_update: 0,
        };
        let env = EnvSample::new(200.0, 50.0);
        let next = step_energy(&b, &env, 3600, 0.95);
        // (0.95*200 - 50) * 1h / 1000Wh = 0.14
        assert!((next.soc - 0.64).abs() < 1e-12);
        assert_eq!(next.last_update, 3600);
    }

    #[test]
    fn step_energy_identity_without_power() {
        let b = BatteryState {
            soc: 0.37,
            capacity_wh: 1000.0,
            last_update: 10,
        };
        let next = step_energy(&b, &EnvSample::new(0.0, 0.0), 600, 0.95);
        assert_eq!(next.soc, 0.37);
    }

    #[test]
    fn step_energy_clamps_at_zero() {
        let b = BatteryState {
            soc: 0.1,
            capacity_wh: 1000.0,
            last_update: 0,
        };
        let next = step_energy(&b, &EnvSample::new(0.0, 500.0), 7 * 24 * 3600, 0.95);
        assert_eq!(next.soc, 0.0);
    }

    #[test]
    fn step_energy_clamps_at_one() {
        let b = BatteryState {
            soc: 0.95,
            capacity_wh: 1000.0,
            last_update: 0,
        };
        let next = step_energy(&b, &EnvSample::new(800.0, 0.0), 24 * 3600, 0.95);
        assert_eq!(next.soc, 1.0);
    }

    #[test]
    fn uds_distance_examples() {
        assert_eq!(uds_distance(0.0).unwrap(), 0.0);
        assert!((uds_distance(0.005).unwrap() - 0.8575).abs() < 1e-12);
        assert!((uds_distance(0.010).unwrap() - 1.715).abs() < 1e-12);
        assert_eq!(uds_distance(-0.001), Err(DeviceError::NegativeDelay));
    }

    #[test]
    fn presence_needs_k_consecutive_below() {
        assert_eq!(detect_presence(&[0.4, 0.5, 0.45], 3, 1.0), Ok(true));
        assert_eq!(detect_presence(&[0.4, 2.5, 0.45], 3, 1.0), Ok(false));
        assert_eq!(
            detect_presence(&[], 3, 1.0),
            Err(DeviceError::InsufficientSamples { got: 0, need: 3 })
        );
        // Older samples outside the window do not matter.
        assert_eq!(detect_presence(&[9.0, 0.4, 0.5, 0.45], 3, 1.0), Ok(true));
    }

    #[test]
    fn qr_token_is_deterministic_and_pinned() {
        let wallet = AccountId::new("0xA1");
        let a = qr_token("alice", "zurich", &wallet).unwrap();
        let b = qr_token("alice", "zurich", &wallet).unwrap();
        assert_eq!(a, b);
        // Reference vector computed with an independent SHA-256 tool.
        assert_eq!(
            a.as_str(),
            "f465bc4c71ab69c71308e77cfdfaaf65e42b107893dc1a8def6144ce44965430"
        );
        let c = qr_token("bob", "zurich", &wallet).unwrap();
        assert_eq!(
            c.as_str(),
            "9f039345ae784c86b9df3c527e7331257a6d32a62b26f00842ac60a5d2c1bebd"
        );
        assert_ne!(a, c);
    }

    #[test]
    fn qr_token_rejects_bad_fields() {
        let wallet = AccountId::new("0xA1");
        assert_eq!(
            qr_token("", "zurich", &wallet),
            Err(DeviceError::EmptyIdentityField("username"))
        );
        assert_eq!(
            qr_token("a|b", "zurich", &wallet),
            Err(DeviceError::SeparatorInField("username"))
        );
    }

    #[test]
    fn lock_unlocks_only_on_positive_decision() {
        let locked = LockState::locked();
        let open = lock_transition(&locked, LockCommand::Unlock(EntryDecision::Unlock, 100), 30)
            .unwrap();
        assert_eq!(open.status, LockStatus::Unlocked);
        assert_eq!(open.unlocked_at, Some(100));

        let denied = lock_transition(
            &locked,
            LockCommand::Unlock(EntryDecision::Deny(DenyReason::UnknownToken), 100),
            30,
        );
        assert_eq!(denied, Err(DeviceError::UnauthorizedUnlock));
    }

    #[test]
    fn lock_relocks_after_timeout() {
        let open = LockState {
            status: LockStatus::Unlocked,
            unlocked_at: Some(100),
        };
        let still = lock_transition(&open, LockCommand::Tick(120), 30).unwrap();
        assert_eq!(still.status, LockStatus::Unlocked);
        let closed = lock_transition(&open, LockCommand::Tick(130), 30).unwrap();
        assert_eq!(closed.status, LockStatus::Locked);
    }

    #[test]
    fn lock_door_closed_locks() {
        let open = LockState {
            status: LockStatus::Unlocked,
            unlocked_at: Some(5),
        };
        let closed = lock_transition(&open, LockCommand::DoorClosed, 30).unwrap();
        assert_eq!(closed.status, LockStatus::Locked);
        // DoorClosed while already locked is identity.
        let same = lock_transition(&closed, LockCommand::DoorClosed, 30).unwrap();
        assert_eq!(same, closed);
    }

    #[test]
    fn battery_from_config_clamps_initial_soc() {
        let mut c = cfg();
        c.initial_soc = 1.4;
        assert_eq!(BatteryState::new(&c).soc, 1.0);
    }
}
