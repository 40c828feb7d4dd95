//! High-dimensional lasso expert: one model per horizon, trained on daily
//! rows at the target's hour of day. Lag features are measured from each
//! row's own anchor: the 40 hours available at issue time, same-hour weekly
//! lags out to eight weeks, and same-hour lags near one year. Weather enters
//! as hinge features of the forecast channels with pairwise interactions,
//! joined by calendar dummies and the annual splines. The penalty path is a
//! fixed 20-point dyadic grid and the fit is chosen by BIC.

use crate::data::task::{H_MAX, H_MIN, N_HORIZONS};
use crate::design::{
    add_annual_spline_columns, add_calendar_dummies, add_interaction_columns, add_lag_columns,
    add_relu_columns, quantile_thresholds, DesignMatrix, RELU_PROBS,
};
use crate::error::{Error, Result};
use crate::experts::DayContext;
use crate::lasso::{fit_path, select_bic};
use crate::splines::AnnualBasis;

pub const WEEK_LAG_DAYS: [usize; 6] = [21, 28, 35, 42, 49, 56];
pub const YEAR_LAG_DAYS: [usize; 4] = [350, 357, 364, 371];
/// Most recent observed hours used as anchor-aligned lags.
pub const RECENT_HOURS: usize = 40;

/// The fixed penalty path: 20 powers of two with exponents equidistant from
/// 6 down to -1.
pub fn alpha_grid() -> Vec<f64> {
    (0..20).map(|i| 2f64.powf(6.0 - 7.0 * i as f64 / 19.0)).collect()
}

fn weather_channels(ctx: &DayContext) -> Vec<String> {
    let mut names: Vec<String> = ctx
        .series
        .channel_names()
        .filter(|n| n.ends_with("_fc") && !n.contains("wind_dir_deg"))
        .map(str::to_string)
        .collect();
    names.sort();
    names
}

/// Signed lag offsets for one horizon, restricted to what the window can
/// supply for at least one row: the 40 hours ending at the row's anchor plus
/// the feasible same-hour weekly and annual lags.
fn lag_offsets(h: u32, max_supported: usize) -> Vec<i64> {
    let mut lags: Vec<i64> = (0..RECENT_HOURS as i64).map(|j| -(h as i64 + j)).collect();
    for d in WEEK_LAG_DAYS.iter().chain(YEAR_LAG_DAYS.iter()) {
        if 24 * d <= max_supported {
            lags.push(-(24 * *d as i64));
        }
    }
    lags
}

struct HourDesign {
    dm: DesignMatrix,
    thresholds: Vec<Vec<f64>>,
}

fn build_design(
    ctx: &DayContext,
    rows: &[usize],
    lags: &[i64],
    channels: &[String],
    frozen: Option<&HourDesign>,
) -> Result<HourDesign> {
    let mut dm = DesignMatrix::new(rows.len());
    add_lag_columns(&mut dm, &ctx.y, lags, rows);
    let mut thresholds = Vec::with_capacity(channels.len());
    let mut gathered = Vec::with_capacity(channels.len());
    for (i, name) in channels.iter().enumerate() {
        let full = ctx.series.channel(name)?;
        let vals: Vec<f64> = rows.iter().map(|&t| full[t]).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("channel `{name}` is not finite on the model rows")));
        }
        let th = match frozen {
            Some(f) => f.thresholds[i].clone(),
            None => quantile_thresholds(&vals, &RELU_PROBS),
        };
        add_relu_columns(&mut dm, name, &vals, &th);
        thresholds.push(th);
        gathered.push((name.clone(), vals));
    }
    add_interaction_columns(&mut dm, &gathered);
    let times: Vec<_> = rows.iter().map(|&t| ctx.series.timestamp(t)).collect();
    add_calendar_dummies(&mut dm, &times);
    add_annual_spline_columns(&mut dm, &times, &AnnualBasis::default());
    if !dm.all_rows_valid() {
        return Err(Error::Data("lag columns read outside the observed window".into()));
    }
    Ok(HourDesign { dm, thresholds })
}

fn forecast_one(ctx: &DayContext, h: u32, channels: &[String], grid: &[f64]) -> Result<f64> {
    let t_star = ctx.anchor + h as usize;
    let t_top = t_star - 24 * h.div_ceil(24) as usize;
    if t_top < ctx.window_start {
        return Err(Error::Data(format!("horizon {h}: no same-hour rows in the window")));
    }
    let lags = lag_offsets(h, t_top - ctx.window_start);
    let max_lag = lags.iter().map(|k| (-k) as usize).max().unwrap();
    let n = (t_top - ctx.window_start).saturating_sub(max_lag) / 24 + 1;
    if n < 4 {
        return Err(Error::Data(format!("horizon {h}: only {n} usable rows in the window")));
    }
    let rows: Vec<usize> = (0..n).map(|i| t_top - 24 * (n - 1 - i)).collect();
    let raw: Vec<f64> = rows.iter().map(|&t| ctx.y[t]).collect();
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("response reads into unobserved hours".into()));
    }
    let mean = raw.iter().sum::<f64>() / n as f64;
    let sd = (raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    if sd == 0.0 {
        return Ok(mean);
    }
    let y: Vec<f64> = raw.iter().map(|v| (v - mean) / sd).collect();

    let design = build_design(ctx, &rows, &lags, channels, None)?;
    // The dyadic grid penalizes the summed squared error of the standardized
    // response; the solver works in mean-loss units, hence the 1/n.
    let scaled: Vec<f64> = grid.iter().map(|a| a / n as f64).collect();
    let fits = fit_path(&design.dm, &y, &scaled)?;
    let best = &fits[select_bic(&fits, n)];
    let pred = build_design(ctx, &[t_star], &lags, channels, Some(&design))?;
    let value = mean + sd * best.predict(&pred.dm)[0];
    if !value.is_finite() {
        return Err(Error::Data(format!("lasso forecast for horizon {h} is not finite")));
    }
    Ok(value)
}

/// Direct forecasts for all 24 horizons, one lasso path per horizon. The
/// response is standardized per horizon so the fixed grid is scale-free; the
/// top of the grid always yields the null model.
pub fn forecast(ctx: &DayContext) -> Result<Vec<f64>> {
    forecast_with(ctx, &alpha_grid())
}

/// Same, but on a caller-supplied penalty grid.
pub fn forecast_with(ctx: &DayContext, grid: &[f64]) -> Result<Vec<f64>> {
    let channels = weather_channels(ctx);
    let mut out = Vec::with_capacity(N_HORIZONS);
    for h in H_MIN..=H_MAX {
        out.push(forecast_one(ctx, h, &channels, grid)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{HourlySeries, TargetScale};
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn series_with(load: Vec<f64>) -> HourlySeries {
        let start = NaiveDate::from_ymd_opt(2020, 1, 6).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let mut s = HourlySeries::new(start, load.len());
        s.insert_channel("load", load).unwrap();
        s
    }

    fn ctx_for(series: &HourlySeries, window_days: u32) -> DayContext<'_> {
        let anchor = series.len() - 41;
        DayContext::new(series, TargetScale::Level, anchor, window_days).unwrap()
    }

    #[test]
    fn the_grid_is_twenty_descending_powers_of_two() {
        let g = alpha_grid();
        assert_eq!(g.len(), 20);
        assert_abs_diff_eq!(g[0], 64.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[19], 0.5, epsilon = 1e-12);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn the_top_of_the_grid_is_the_null_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let load: Vec<f64> = (0..24 * 80).map(|_| 50.0 + rng.gen::<f64>()).collect();
        let s = series_with(load);
        let ctx = ctx_for(&s, 56);
        let channels = weather_channels(&ctx);
        // With the path cut at its top value, nothing can enter the model.
        let v = forecast_one(&ctx, 17, &channels, &[64.0]).unwrap();
        let t_top = ctx.anchor + 17 - 24;
        let max_lag = lag_offsets(17, t_top - ctx.window_start)
            .iter()
            .map(|k| (-k) as usize)
            .max()
            .unwrap();
        let n = (t_top - ctx.window_start - max_lag) / 24 + 1;
        let mean = (0..n).map(|i| ctx.y[t_top - 24 * i]).sum::<f64>() / n as f64;
        assert_abs_diff_eq!(v, mean, epsilon = 1e-10);
    }

    #[test]
    fn a_three_week_cycle_is_tracked_through_its_lag() {
        let period = 24 * 21;
        let tau = 2.0 * std::f64::consts::PI;
        let load: Vec<f64> = (0..24 * 120)
            .map(|t| {
                let w = (t % period) as f64 / period as f64;
                100.0 + 14.0 * (tau * w).sin() + 7.0 * (3.0 * tau * w).cos()
                    + 9.0 * (tau * (t % 24) as f64 / 24.0).sin()
            })
            .collect();
        let s = series_with(load.clone());
        let ctx = ctx_for(&s, 119);
        let fc = forecast(&ctx).unwrap();
        let range = 2.0 * (14.0 + 7.0 + 9.0);
        let mut abs_err = 0.0;
        for (i, v) in fc.iter().enumerate() {
            abs_err += (v - load[ctx.anchor + 17 + i]).abs();
        }
        let mae = abs_err / fc.len() as f64;
        assert!(mae < 0.01 * range, "mae {mae} vs range {range}");
    }

    #[test]
    fn annual_lags_join_only_when_the_window_reaches_them() {
        let short = lag_offsets(17, 24 * 77 - 16);
        assert_eq!(short.len(), RECENT_HOURS + 6);
        let long = lag_offsets(17, 24 * 393 - 16);
        assert_eq!(long.len(), RECENT_HOURS + 6 + 4);
        assert!(long.contains(&-(24 * 350)));
    }

    #[test]
    fn a_constant_window_forecasts_the_constant_without_fitting() {
        let s = series_with(vec![88.0; 24 * 70]);
        let ctx = ctx_for(&s, 28);
        for v in forecast(&ctx).unwrap() {
            assert_abs_diff_eq!(v, 88.0, epsilon = 1e-12);
        }
    }
}
