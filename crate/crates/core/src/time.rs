//! UTC second timestamps and day bucketing.

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

pub const DAY: i64 = 86_400;

/// UTC day index (days since the epoch) containing `ts`.
pub fn day_of(ts: Timestamp) -> i64 {
    ts.div_euclid(DAY)
}

pub fn day_start(day: i64) -> Timestamp {
    day * DAY
}

/// Formats as `2024-01-01T00:00:00Z`.
pub fn format_iso(ts: Timestamp) -> String {
    match DateTime::<Utc>::from_timestamp(ts, 0) {
        Some(dt) => dt.to_rfc3339_opts(SecondsFormat::Secs, true),
        None => ts.to_string(),
    }
}

pub fn format_day(day: i64) -> String {
    match DateTime::<Utc>::from_timestamp(day_start(day), 0) {
        Some(dt) => dt.format("%Y-%m-%d").to_string(),
        None => day.to_string(),
    }
}

/// Parses an RFC 3339 timestamp, a `YYYY-MM-DD` date (midnight UTC), or raw epoch seconds.
pub fn parse_time(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    if let Ok(secs) = s.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

/// Parses a day given as `YYYY-MM-DD` or as a raw day index.
pub fn parse_day(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(d) = s.parse::<i64>() {
        return Some(d);
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| day_of(dt.and_utc().timestamp()))
}
