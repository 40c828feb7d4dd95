//! Day-ahead forecasting task: anchor time, horizon set, target hours.

use chrono::{Duration, NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};

/// First and last forecast horizon in hours ahead of the anchor.
pub const H_MIN: u32 = 17;
pub const H_MAX: u32 = 40;
/// Number of target hours per task.
pub const N_HORIZONS: usize = (H_MAX - H_MIN + 1) as usize;

/// One day-ahead task: data is available through `anchor`, and the 24 target
/// hours run from `anchor + 17h` to `anchor + 40h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForecastTask {
    issue_day: NaiveDate,
    anchor: NaiveDateTime,
}

impl ForecastTask {
    /// `anchor_hour` is the hour of the last available observation on the
    /// issue day; the data this engine mirrors supports 7 or 8.
    pub fn new(issue_day: NaiveDate, anchor_hour: u32) -> Result<ForecastTask> {
        if anchor_hour != 7 && anchor_hour != 8 {
            return Err(Error::Config(format!(
                "anchor hour must be 7 or 8, got {anchor_hour}"
            )));
        }
        Ok(ForecastTask {
            issue_day,
            anchor: issue_day.and_hms_opt(anchor_hour, 0, 0).unwrap(),
        })
    }

    pub fn issue_day(&self) -> NaiveDate {
        self.issue_day
    }

    pub fn anchor(&self) -> NaiveDateTime {
        self.anchor
    }

    pub fn horizons(&self) -> impl Iterator<Item = u32> {
        H_MIN..=H_MAX
    }

    /// The 24 consecutive target timestamps.
    pub fn target_timestamps(&self) -> Vec<NaiveDateTime> {
        (H_MIN..=H_MAX)
            .map(|h| self.anchor + Duration::hours(h as i64))
            .collect()
    }

    pub fn last_target(&self) -> NaiveDateTime {
        self.anchor + Duration::hours(H_MAX as i64)
    }
}
