//! Durations and UTC timestamp helpers. All timestamps are epoch milliseconds.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MINUTE_MS: i64 = 60_000;
pub const HOUR_MS: i64 = 60 * MINUTE_MS;
pub const DAY_MS: i64 = 24 * HOUR_MS;
pub const WEEK_MS: i64 = 7 * DAY_MS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DurationUnit {
    Minute,
    Hour,
    Day,
    Week,
}

impl DurationUnit {
    pub fn millis(self) -> i64 {
        match self {
            DurationUnit::Minute => MINUTE_MS,
            DurationUnit::Hour => HOUR_MS,
            DurationUnit::Day => DAY_MS,
            DurationUnit::Week => WEEK_MS,
        }
    }

    pub fn suffix(self) -> char {
        match self {
            DurationUnit::Minute => 'm',
            DurationUnit::Hour => 'h',
            DurationUnit::Day => 'd',
            DurationUnit::Week => 'w',
        }
    }

    pub fn from_suffix(c: char) -> Option<Self> {
        match c {
            'm' => Some(DurationUnit::Minute),
            'h' => Some(DurationUnit::Hour),
            'd' => Some(DurationUnit::Day),
            'w' => Some(DurationUnit::Week),
            _ => None,
        }
    }

    /// English noun, singular.
    pub fn noun(self) -> &'static str {
        match self {
            DurationUnit::Minute => "minute",
            DurationUnit::Hour => "hour",
            DurationUnit::Day => "day",
            DurationUnit::Week => "week",
        }
    }
}

/// A fixed-length span of time such as `30d`. Days are always 86 400 000 ms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Duration {
    magnitude: u32,
    unit: DurationUnit,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DurationError {
    #[error("duration magnitude must be at least 1")]
    Zero,
    #[error("invalid duration `{0}`; expected a positive integer followed by m, h, d or w")]
    Malformed(String),
}

impl Duration {
    pub fn new(magnitude: u32, unit: DurationUnit) -> Result<Self, DurationError> {
        if magnitude == 0 {
            return Err(DurationError::Zero);
        }
        Ok(Self { magnitude, unit })
    }

    pub fn magnitude(&self) -> u32 {
        self.magnitude
    }

    pub fn unit(&self) -> DurationUnit {
        self.unit
    }

    pub fn as_millis(&self) -> i64 {
        i64::from(self.magnitude) * self.unit.millis()
    }

    /// "30 days", "1 hour".
    pub fn describe(&self) -> String {
        let noun = self.unit.noun();
        if self.magnitude == 1 {
            format!("1 {noun}")
        } else {
            format!("{} {noun}s", self.magnitude)
        }
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.magnitude, self.unit.suffix())
    }
}

impl FromStr for Duration {
    type Err = DurationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || DurationError::Malformed(s.to_string());
        let mut chars = s.chars();
        let unit = chars
            .next_back()
            .and_then(DurationUnit::from_suffix)
            .ok_or_else(malformed)?;
        let digits = chars.as_str();
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        let magnitude: u32 = digits.parse().map_err(|_| malformed())?;
        Duration::new(magnitude, unit)
    }
}

impl Serialize for Duration {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Duration {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses RFC 3339 text into epoch milliseconds (UTC). Sub-millisecond
/// precision is truncated toward negative infinity.
pub fn parse_rfc3339_ms(text: &str) -> Option<i64> {
    let dt = DateTime::parse_from_rfc3339(text.trim()).ok()?;
    Some(dt.timestamp_millis())
}

/// Formats epoch milliseconds as `YYYY-MM-DDTHH:MM:SS.sssZ`.
pub fn format_rfc3339_ms(ms: i64) -> String {
    match Utc.timestamp_millis_opt(ms).single() {
        Some(dt) => dt.to_rfc3339_opts(SecondsFormat::Millis, true),
        None => ms.to_string(),
    }
}

/// Current wall clock in epoch milliseconds.
pub fn now_ms() -> i64 {
    match std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH) {
        Ok(d) => d.as_millis() as i64,
        Err(e) => -(e.duration().as_millis() as i64),
    }
}
