//! Exact rational arithmetic for currency amounts, shares, and fractions.
//!
//! All money and voting-power math runs on `Rat` so conservation checks can
//! demand exact equality instead of float tolerances. Values render as a
//! terminating decimal when the denominator allows it ("0.3", "1"), otherwise
//! as a fraction ("1/3"); both forms parse back losslessly.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Exact rational number over `i128`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rat(Ratio<i128>);

impl Rat {
    pub const fn raw(ratio: Ratio<i128>) -> Self {
        Rat(ratio)
    }

    /// `numer / denom`, reduced. Panics on zero denominator.
    pub fn new(numer: i128, denom: i128) -> Self {
        Rat(Ratio::new(numer, denom))
    }

    pub fn from_int(v: i64) -> Self {
        Rat(Ratio::from_integer(v as i128))
    }

    pub fn zero() -> Self {
        Rat(Ratio::zero())
    }

    pub fn one() -> Self {
        Rat(Ratio::from_integer(1))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn abs(self) -> Self {
        Rat(self.0.abs())
    }

    /// Round to `dp` decimal places, ties away from zero. Used to keep
    /// denominators bounded when policies scale prices repeatedly.
    pub fn round_dp(self, dp: u32) -> Self {
        let scale = Ratio::from_integer(10i128.pow(dp));
        Rat((self.0 * scale).round() / scale)
    }

    /// Lossy conversion for display-side metrics only; never used in
    /// conservation checks.
    pub fn to_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    /// Parse a decimal string ("1.25", "-0.005", "3") into an exact rational.
    fn parse_decimal(s: &str) -> Option<Self> {
        let (sign, body) = match s.strip_prefix('-') {
            Some(rest) => (-1i128, rest),
            None => (1i128, s),
        };
        if body.is_empty() {
            return None;
        }
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return None;
        }
        if frac_part.len() > 30 {
            return None;
        }
        let int_val: i128 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().ok()?
        };
        let denom = 10i128.checked_pow(frac_part.len() as u32)?;
        let frac_val: i128 = if frac_part.is_empty() {
            0
        } else {
            frac_part.parse().ok()?
        };
        let numer = int_val.checked_mul(denom)?.checked_add(frac_val)?;
        Some(Rat(Ratio::new(sign * numer, denom)))
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let denom = *self.0.denom();
        if denom == 1 {
            return write!(f, "{}", self.0.numer());
        }
        // Terminating decimal iff denom = 2^a * 5^b.
        let mut d = denom;
        let mut twos = 0u32;
        let mut fives = 0u32;
        while d % 2 == 0 {
            d /= 2;
            twos += 1;
        }
        while d % 5 == 0 {
            d /= 5;
            fives += 1;
        }
        if d != 1 {
            return write!(f, "{}/{}", self.0.numer(), denom);
        }
        let dp = twos.max(fives);
        let scale = 10i128.pow(dp);
        let scaled = self.0.numer() * (scale / denom);
        let (sign, mag) = if scaled < 0 {
            ("-", scaled.unsigned_abs())
        } else {
            ("", scaled.unsigned_abs())
        };
        let int_part = mag / 10u128.pow(dp);
        let mut frac = format!("{:0width$}", mag % 10u128.pow(dp), width = dp as usize);
        while frac.ends_with('0') {
            frac.pop();
        }
        if frac.is_empty() {
            write!(f, "{sign}{int_part}")
        } else {
            write!(f, "{sign}{int_part}.{frac}")
        }
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rat({self})")
    }
}

#[derive(Debug, thiserror::Error)]
#[error("not a rational number: {0:?}")]
pub struct ParseRatError(String);

impl FromStr for Rat {
    type Err = ParseRatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let numer: i128 = n.trim().parse().map_err(|_| ParseRatError(s.into()))?;
            let denom: i128 = d.trim().parse().map_err(|_| ParseRatError(s.into()))?;
            if denom == 0 {
                return Err(ParseRatError(s.into()));
            }
            return Ok(Rat(Ratio::new(numer, denom)));
        }
        Rat::parse_decimal(s).ok_or_else(|| ParseRatError(s.into()))
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

struct RatVisitor;

impl Visitor<'_> for RatVisitor {
    type Value = Rat;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number or a string like \"0.25\" or \"1/3\"")
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rat, E> {
        Ok(Rat(Ratio::from_integer(v as i128)))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rat, E> {
        Ok(Rat(Ratio::from_integer(v as i128)))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rat, E> {
        // Shortest round-trip rendering of the f64, parsed as an exact
        // decimal: a scenario author writing 0.005 gets exactly 5/1000.
        if !v.is_finite() {
            return Err(E::custom("non-finite number"));
        }
        Rat::parse_decimal(&format!("{v}")).ok_or_else(|| E::custom("unrepresentable number"))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Rat, E> {
        v.parse().map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(RatVisitor)
    }
}

impl Add for Rat {
    type Output = Rat;
    fn add(self, rhs: Rat) -> Rat {
        Rat(self.0 + rhs.0)
    }
}

impl Sub for Rat {
    type Output = Rat;
    fn sub(self, rhs: Rat) -> Rat {
        Rat(self.0 - rhs.0)
    }
}

impl Mul for Rat {
    type Output = Rat;
    fn mul(self, rhs: Rat) -> Rat {
        Rat(self.0 * rhs.0)
    }
}

impl Div for Rat {
    type Output = Rat;
    fn div(self, rhs: Rat) -> Rat {
        Rat(self.0 / rhs.0)
    }
}

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-self.0)
    }
}

impl AddAssign for Rat {
    fn add_assign(&mut self, rhs: Rat) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Rat {
    fn sub_assign(&mut self, rhs: Rat) {
        self.0 -= rhs.0;
    }
}

impl std::iter::Sum for Rat {
    fn sum<I: Iterator<Item = Rat>>(iter: I) -> Rat {
        iter.fold(Rat::zero(), |a, b| a + b)
    }
}
