//! Seasonal-trend decomposition by iterated loess with an exponential
//! smoothing forecast of the remainder. The decomposition is the classical
//! two-pass scheme: cycle-subseries smoothing for the seasonal, a moving
//! average cascade to keep seasonal and trend identifiable, and a wide loess
//! for the trend. Spans are fixed: 11 cycles for the seasonal smoother and
//! the next odd number above 1.5 periods for the trend.

use crate::error::{Error, Result};
use crate::experts::features::{loess, loess_extended, moving_average, ses_optimize};

pub const PERIOD: usize = 168;
const SEASONAL_SPAN: usize = 11;
const TREND_SPAN: usize = 253;
const INNER_PASSES: usize = 2;

pub struct Decomposition {
    pub seasonal: Vec<f64>,
    pub trend: Vec<f64>,
    pub remainder: Vec<f64>,
}

/// Classical decomposition into period-168 seasonal, trend, and remainder.
pub fn decompose(y: &[f64]) -> Result<Decomposition> {
    let n = y.len();
    if n < 2 * PERIOD {
        return Err(Error::Data(format!(
            "seasonal decomposition needs at least {} observations, got {n}",
            2 * PERIOD
        )));
    }
    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    let mut detrended = vec![0.0; n];
    let mut sub = Vec::with_capacity(n / PERIOD + 1);
    // Cycle-subseries fits, extended one period on each side so the moving
    // average cascade comes back out at full length.
    let mut extended = vec![0.0; n + 2 * PERIOD];
    for _ in 0..INNER_PASSES {
        for i in 0..n {
            detrended[i] = y[i] - trend[i];
        }
        for s in 0..PERIOD {
            sub.clear();
            let mut i = s;
            while i < n {
                sub.push(detrended[i]);
                i += PERIOD;
            }
            let smoothed = loess_extended(&sub, SEASONAL_SPAN);
            for (j, v) in smoothed.iter().enumerate() {
                // Position j corresponds to cycle j - 1 of the subseries.
                extended[s + j * PERIOD] = *v;
            }
        }
        // Low-pass: two period-length averages and one of length 3 drop the
        // extensions and leave a series aligned with y.
        let low = moving_average(&moving_average(&moving_average(&extended, PERIOD), PERIOD), 3);
        debug_assert_eq!(low.len(), n);
        for i in 0..n {
            seasonal[i] = extended[i + PERIOD] - low[i];
            detrended[i] = y[i] - seasonal[i]; // now actually deseasonalized
        }
        trend = loess(&detrended, TREND_SPAN);
    }
    let remainder: Vec<f64> = (0..n).map(|i| y[i] - seasonal[i] - trend[i]).collect();
    Ok(Decomposition { seasonal, trend, remainder })
}

/// Decompose the calibration window, smooth the remainder exponentially, and
/// forecast `1..=h_max` steps ahead: linearly extrapolated trend, the last
/// full seasonal cycle repeated, and the flat remainder level.
pub fn forecast(y: &[f64], h_max: usize) -> Result<Vec<f64>> {
    assert!(h_max <= PERIOD);
    let n = y.len();
    let parts = decompose(y)?;
    let (_, level) = ses_optimize(&parts.remainder);
    let slope = parts.trend[n - 1] - parts.trend[n - 2];
    let mut out = Vec::with_capacity(h_max);
    for h in 1..=h_max {
        let trend = parts.trend[n - 1] + slope * h as f64;
        let seasonal = parts.seasonal[n - 1 + h - PERIOD];
        out.push(trend + seasonal + level);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn weekly_pattern(t: usize) -> f64 {
        let w = t % PERIOD;
        100.0
            + 12.0 * (2.0 * std::f64::consts::PI * (w % 24) as f64 / 24.0).cos()
            + 5.0 * (2.0 * std::f64::consts::PI * w as f64 / PERIOD as f64).sin()
    }

    #[test]
    fn a_pure_periodic_series_is_forecast_exactly() {
        let n = 6 * PERIOD;
        let y: Vec<f64> = (0..n).map(weekly_pattern).collect();
        let fc = forecast(&y, 40).unwrap();
        for (h, v) in fc.iter().enumerate() {
            assert_abs_diff_eq!(*v, weekly_pattern(n + h), epsilon = 1e-8);
        }
        let parts = decompose(&y).unwrap();
        let worst = parts.remainder.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        assert!(worst < 1e-8, "remainder peak {worst}");
    }

    #[test]
    fn a_constant_series_stays_constant() {
        let y = vec![42.5; 3 * PERIOD];
        let fc = forecast(&y, 40).unwrap();
        for v in fc {
            assert_abs_diff_eq!(v, 42.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn a_linear_trend_over_seasonality_extrapolates() {
        let n = 6 * PERIOD;
        let y: Vec<f64> = (0..n).map(|t| weekly_pattern(t) + t as f64).collect();
        let fc = forecast(&y, 40).unwrap();
        for (i, v) in fc.iter().enumerate() {
            let truth = weekly_pattern(n + i) + (n + i) as f64;
            assert!(
                (v - truth).abs() / truth.abs() < 0.02,
                "h={} forecast {v} truth {truth}",
                i + 1
            );
        }
    }

    #[test]
    fn noise_lands_in_the_remainder_not_the_seasonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 8 * PERIOD;
        let y: Vec<f64> =
            (0..n).map(|t| weekly_pattern(t) + 0.5 * (rng.gen::<f64>() - 0.5)).collect();
        let parts = decompose(&y).unwrap();
        // The seasonal must track the deterministic pattern closely even
        // under noise; averaging over 8 cycles shrinks it well below the
        // noise amplitude.
        let mut worst = 0.0f64;
        for t in 0..n {
            let mean = parts.seasonal.iter().skip(t % PERIOD).step_by(PERIOD).sum::<f64>()
                / (n / PERIOD) as f64;
            worst = worst.max((parts.seasonal[t] - mean).abs());
        }
        assert!(worst < 0.45, "seasonal wobble {worst}");
        let var_r: f64 =
            parts.remainder.iter().map(|r| r * r).sum::<f64>() / parts.remainder.len() as f64;
        assert!(var_r < 0.05, "remainder variance {var_r}");
    }

    #[test]
    fn short_windows_are_refused() {
        let y = vec![1.0; 2 * PERIOD - 1];
        assert!(decompose(&y).is_err());
    }
}
