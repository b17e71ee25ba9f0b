//! Millisecond timestamps.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use thiserror::Error;

/// Milliseconds since the Unix epoch. Trace files and logs carry decimal
/// seconds; everything in memory is integral milliseconds so the virtual
/// clock never accumulates float error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

#[derive(Debug, Error, PartialEq)]
pub enum TimeError {
    #[error("invalid decimal seconds {0:?}")]
    Invalid(String),
    #[error("time must be finite and non-negative, got {0}")]
    Negative(String),
}

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_millis(ms: i64) -> Self {
        Timestamp(ms)
    }

    pub fn from_secs(secs: i64) -> Self {
        Timestamp(secs * 1000)
    }

    /// Rounds to the nearest millisecond.
    pub fn from_secs_f64(secs: f64) -> Result<Self, TimeError> {
        if !secs.is_finite() || secs < 0.0 {
            return Err(TimeError::Negative(secs.to_string()));
        }
        Ok(Timestamp((secs * 1000.0).round() as i64))
    }

    pub fn millis(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn saturating_sub(self, other: Timestamp) -> Timestamp {
        Timestamp(self.0.saturating_sub(other.0))
    }
}

impl Add<i64> for Timestamp {
    type Output = Timestamp;
    fn add(self, ms: i64) -> Timestamp {
        Timestamp(self.0 + ms)
    }
}

impl Sub for Timestamp {
    type Output = i64;
    fn sub(self, other: Timestamp) -> i64 {
        self.0 - other.0
    }
}

/// Decimal seconds with exactly three fractional digits, e.g. `100.250`.
impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{}{}.{:03}", sign, abs / 1000, abs % 1000)
    }
}

/// Parses decimal seconds (`12`, `12.5`, `12.0004`) without going through a
/// float for the integral part, so large epoch values stay exact.
impl FromStr for Timestamp {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || TimeError::Invalid(s.to_string());
        if s.starts_with('-') {
            return Err(TimeError::Negative(s.to_string()));
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(bad());
        }
        let secs: i64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| bad())?
        };
        let mut millis = 0i64;
        let digits: Vec<i64> = frac_part.bytes().map(|b| (b - b'0') as i64).collect();
        for (k, d) in digits.iter().take(3).enumerate() {
            millis += d * 10i64.pow(2 - k as u32);
        }
        // round half up on the fourth digit
        if digits.get(3).copied().unwrap_or(0) >= 5 {
            millis += 1;
        }
        secs.checked_mul(1000)
            .and_then(|v| v.checked_add(millis))
            .map(Timestamp)
            .ok_or_else(bad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse() {
        let t: Timestamp = "1375315200.25".parse().unwrap();
        assert_eq!(t.millis(), 1_375_315_200_250);
        assert_eq!(t.to_string(), "1375315200.250");
        assert_eq!("100".parse::<Timestamp>().unwrap(), Timestamp::from_secs(100));
        assert_eq!("0.0005".parse::<Timestamp>().unwrap(), Timestamp(1));
        assert_eq!(".5".parse::<Timestamp>().unwrap(), Timestamp(500));
    }

    #[test]
    fn rejects_garbage() {
        assert!("-1".parse::<Timestamp>().is_err());
        assert!("1e5".parse::<Timestamp>().is_err());
        assert!("".parse::<Timestamp>().is_err());
        assert!(Timestamp::from_secs_f64(f64::NAN).is_err());
        assert!(Timestamp::from_secs_f64(-0.5).is_err());
    }
}
