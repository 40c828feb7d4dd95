//! Forecast error metrics. Daily scores average the absolute errors of the
//! 24 target hours; period scores average the daily scores, so every day
//! counts equally regardless of gaps elsewhere.

use crate::data::task::N_HORIZONS;

pub fn mean_abs_error(forecast: &[f64], actual: &[f64]) -> f64 {
    debug_assert_eq!(forecast.len(), actual.len());
    debug_assert!(!forecast.is_empty());
    let s: f64 = forecast.iter().zip(actual).map(|(f, y)| (f - y).abs()).sum();
    s / forecast.len() as f64
}

/// Per-day MAE over consecutive 24-hour blocks.
pub fn daily_maes(forecasts: &[f64], actuals: &[f64]) -> Vec<f64> {
    debug_assert_eq!(forecasts.len(), actuals.len());
    debug_assert_eq!(forecasts.len() % N_HORIZONS, 0);
    forecasts
        .chunks(N_HORIZONS)
        .zip(actuals.chunks(N_HORIZONS))
        .map(|(f, y)| mean_abs_error(f, y))
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    values.iter().sum::<f64>() / values.len() as f64
}
