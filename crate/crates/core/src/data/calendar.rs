//! Calendar indexing for hourly data: hour-of-day and hour-of-week counters
//! and the fixed phase origin used by the annual basis.

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};

/// Hours in one nominal year; period of the annual basis.
pub const HOURS_PER_YEAR: f64 = 24.0 * 365.24;

/// Fixed origin for annual phase computations (2000-01-01 00:00).
pub fn phase_epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2000, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

/// Hour of the day in 1..=24, where 00:00 maps to 1.
pub fn hour_of_day(t: NaiveDateTime) -> u32 {
    t.hour() + 1
}

/// Hour of the week in 1..=168, where Monday 00:00 maps to 1.
pub fn hour_of_week(t: NaiveDateTime) -> u32 {
    t.weekday().num_days_from_monday() * 24 + t.hour() + 1
}

/// Signed whole hours from `epoch` to `t`.
pub fn hours_since(epoch: NaiveDateTime, t: NaiveDateTime) -> i64 {
    (t - epoch).num_hours()
}

/// Phase of `t` within the nominal year, in hours: `[0, HOURS_PER_YEAR)`.
pub fn annual_phase(t: NaiveDateTime) -> f64 {
    let h = hours_since(phase_epoch(), t) as f64;
    h.rem_euclid(HOURS_PER_YEAR)
}
