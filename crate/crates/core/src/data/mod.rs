//! Shared data model: the hourly series, calendar helpers, the day-ahead
//! task geometry, and the expert forecast panel.

pub mod calendar;
pub mod panel;
pub mod series;
pub mod task;

pub use calendar::{annual_phase, hour_of_day, hour_of_week, HOURS_PER_YEAR};
pub use panel::{ExpertFamily, ExpertId, ExpertPanel, TargetScale};
pub use series::HourlySeries;
pub use task::{ForecastTask, H_MAX, H_MIN, N_HORIZONS};
