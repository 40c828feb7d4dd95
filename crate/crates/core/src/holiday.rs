//! Holiday adjustment of the load series. A high-dimensional lasso is fit to
//! log-load over lag, weather, calendar, annual-shape, and scaled holiday
//! dummy columns; the fitted values with the holiday block zeroed become the
//! adjusted series. Because the lag set reaches 510 hours into both past and
//! future, the first and last 510 hours are covered by one-sided refits of
//! the same model, and the three pieces are stitched into one series. The
//! backward-only (tail) model is kept so the adjustment can be extended
//! hour by hour without ever looking past the data available at fit time.

use chrono::{Datelike, NaiveDateTime};
use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use crate::data::calendar::hour_of_day;
use crate::data::HourlySeries;
use crate::design::{
    add_annual_spline_columns, add_calendar_dummies, add_holiday_dummies,
    add_interaction_columns, add_lag_columns, add_relu_columns, gather, holiday_scale,
    quantile_thresholds, ColumnGroup, DesignMatrix, HolidayDate, RELU_PROBS,
};
use crate::error::{Error, Result};
use crate::lasso::{alpha_max, fit_path, select_bic, LassoFit};
use crate::preprocess::ROLLING_SUFFIX;
use crate::splines::AnnualBasis;

/// Farthest lag on each side, in hours.
pub const MAX_LAG: usize = 510;
/// Nearest lag on each side, in hours.
pub const MIN_LAG: usize = 168;

/// Channel name for the adjusted series when written back into a file.
pub const ADJUSTED_CHANNEL: &str = "load_hldadj";

/// Recurring dates worth a dummy by default.
pub const DEFAULT_CANDIDATES: [HolidayDate; 6] =
    [(1, 12), (4, 17), (8, 1), (9, 18), (12, 11), (12, 18)];

#[derive(Debug, Clone)]
pub struct HolidayConfig {
    pub candidates: Vec<HolidayDate>,
    /// Descending BIC search grid; `None` derives one from the data, 20
    /// points log-spaced over three decades below the empty-model boundary.
    pub alphas: Option<Vec<f64>>,
    /// Keep observed residuals on top of the holiday-free fit instead of
    /// replacing the series with fitted values.
    pub preserve_residuals: bool,
    /// `None` uses every channel except load, day-ahead forecasts (`_fc`),
    /// rolling means, raw wind angles, and a previous adjustment output.
    pub weather_channels: Option<Vec<String>>,
    pub load_channel: String,
}

impl Default for HolidayConfig {
    fn default() -> Self {
        HolidayConfig {
            candidates: DEFAULT_CANDIDATES.to_vec(),
            alphas: None,
            preserve_residuals: false,
            weather_channels: None,
            load_channel: "load".into(),
        }
    }
}

/// Result of [`adjust`]: the stitched series on both scales plus the frozen
/// backward-only model for causal extension.
#[derive(Debug, Clone)]
pub struct Adjusted {
    pub log_adjusted: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub model: HolidayModel,
}

/// Output ranges of the three stitched segments for a series of `len` hours.
pub fn segment_bounds(len: usize) -> (Range<usize>, Range<usize>, Range<usize>) {
    (0..MAX_LAG, MAX_LAG..len - MAX_LAG, len - MAX_LAG..len)
}

struct Ctx<'a> {
    times: Vec<NaiveDateTime>,
    log_load: Arc<Vec<f64>>,
    load: &'a [f64],
    weather: Vec<(String, &'a [f64])>,
    candidates: Vec<HolidayDate>,
    eps: f64,
    basis: AnnualBasis,
}

fn resolve_weather(series: &HourlySeries, cfg: &HolidayConfig) -> Vec<String> {
    match &cfg.weather_channels {
        Some(names) => names.clone(),
        None => series
            .channel_names()
            .filter(|n| {
                *n != cfg.load_channel
                    && *n != ADJUSTED_CHANNEL
                    && !n.ends_with("_fc")
                    && !n.ends_with(ROLLING_SUFFIX)
                    && !n.ends_with("wind_dir_deg")
            })
            .map(str::to_string)
            .collect(),
    }
}

fn check_load(load: &[f64], name: &str, range: Range<usize>) -> Result<()> {
    for r in range {
        let v = load[r];
        if v.is_nan() {
            return Err(Error::Data(format!(
                "channel `{name}` is missing a value at row {r}; interpolate gaps first"
            )));
        }
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Data(format!(
                "channel `{name}` must stay strictly positive for the log transform; row {r} is {v}"
            )));
        }
    }
    Ok(())
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn make_ctx<'a>(series: &'a HourlySeries, cfg: &HolidayConfig) -> Result<Ctx<'a>> {
    let len = series.len();
    if len < 2 * MAX_LAG + 1 {
        return Err(Error::Data(format!(
            "holiday adjustment needs at least {} hours of load, got {len}",
            2 * MAX_LAG + 1
        )));
    }
    let load = series.channel(&cfg.load_channel)?;
    check_load(load, &cfg.load_channel, 0..len)?;
    let names = resolve_weather(series, cfg);
    if names.is_empty() {
        log::warn!("no weather channels for the holiday model; fitting without them");
    }
    let mut weather = Vec::new();
    for name in &names {
        let v = series.channel(name)?;
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!(
                "channel `{name}` has a non-finite value at row {i}; interpolate gaps first"
            )));
        }
        weather.push((name.clone(), v));
    }
    Ok(Ctx {
        times: (0..len).map(|i| series.timestamp(i)).collect(),
        log_load: Arc::new(load.iter().map(|v| v.ln()).collect()),
        load,
        weather,
        candidates: cfg.candidates.clone(),
        eps: 1e-6 * median(load),
        basis: AnnualBasis::default(),
    })
}

/// Builds the full column set over the given absolute rows. The holiday block
/// always comes last so a fit can be cut at `n_plain` columns.
fn assemble(
    ctx: &Ctx,
    rows: &[usize],
    lags: &[i64],
    thresholds: &[Vec<f64>],
    with_holidays: bool,
) -> (DesignMatrix, Vec<(HolidayDate, u32)>) {
    let mut dm = DesignMatrix::new(rows.len());
    add_lag_columns(&mut dm, &ctx.log_load, lags, rows);
    let gathered: Vec<(String, Vec<f64>)> = ctx
        .weather
        .iter()
        .map(|(n, v)| (n.clone(), gather(v, rows)))
        .collect();
    for ((name, x), th) in gathered.iter().zip(thresholds) {
        add_relu_columns(&mut dm, name, x, th);
    }
    add_interaction_columns(&mut dm, &gathered);
    let times: Vec<NaiveDateTime> = rows.iter().map(|&r| ctx.times[r]).collect();
    add_calendar_dummies(&mut dm, &times);
    add_annual_spline_columns(&mut dm, &times, &ctx.basis);
    let keys = if with_holidays {
        add_holiday_dummies(&mut dm, &times, rows, &ctx.candidates, ctx.load, ctx.eps)
    } else {
        Vec::new()
    };
    (dm, keys)
}

fn relu_thresholds(ctx: &Ctx, rows: &[usize]) -> Vec<Vec<f64>> {
    ctx.weather
        .iter()
        .map(|(_, v)| quantile_thresholds(&gather(v, rows), &RELU_PROBS))
        .collect()
}

// Four decades below the empty-model boundary when rows outnumber columns
// (the shrinkage bias on holiday coefficients has to die out), two when they
// do not, so the bottom of the grid cannot chase an interpolating fit.
fn auto_alpha_grid(dm: &DesignMatrix, y: &[f64]) -> Vec<f64> {
    let top = alpha_max(dm, y).max(1e-12);
    let ratio: f64 = if dm.n_rows() > dm.n_cols() { 1e-4 } else { 1e-2 };
    (0..20)
        .map(|i| top * ratio.powf(i as f64 / 19.0))
        .collect()
}

struct Segment {
    fit: LassoFit,
    n_plain: usize,
    keys: Vec<(HolidayDate, u32)>,
    thresholds: Vec<Vec<f64>>,
    /// Adjusted log-load on the training rows, mode already applied.
    adjusted_log: Vec<f64>,
}

fn fit_segment(ctx: &Ctx, train: Range<usize>, lags: &[i64], cfg: &HolidayConfig) -> Result<Segment> {
    let rows: Vec<usize> = train.collect();
    let thresholds = relu_thresholds(ctx, &rows);
    let (dm, keys) = assemble(ctx, &rows, lags, &thresholds, true);
    let y = gather(&ctx.log_load, &rows);
    let mut grid = match &cfg.alphas {
        Some(g) => g.clone(),
        None => auto_alpha_grid(&dm, &y),
    };
    // The deepest grid points can exceed the solver's practical depth on
    // designs with near-duplicate columns; the search then simply stops at
    // the last penalty that converged.
    let mut fits = loop {
        match fit_path(&dm, &y, &grid) {
            Ok(fits) => break fits,
            Err(Error::NoConvergence { alpha, delta, sweeps }) => {
                let keep = grid.iter().filter(|a| **a > alpha).count();
                if keep == 0 || keep == grid.len() {
                    return Err(Error::NoConvergence { alpha, delta, sweeps });
                }
                log::warn!("penalty grid truncated to {keep} points above {alpha:.3e}");
                grid.truncate(keep);
            }
            Err(e) => return Err(e),
        }
    };
    let best = select_bic(&fits, rows.len());
    let fit = fits.swap_remove(best);
    let holiday_cols = dm.group_indices(ColumnGroup::HolidayDummies);
    let n_plain = dm.n_cols() - holiday_cols.len();
    let zeroed = fit.with_zeroed(&holiday_cols);
    let base = zeroed.predict(&dm);
    let adjusted_log = if cfg.preserve_residuals {
        let full = fit.predict(&dm);
        y.iter()
            .zip(full.iter().zip(base.iter()))
            .map(|(&yi, (&f, &b))| yi - (f - b))
            .collect()
    } else {
        base
    };
    Ok(Segment { fit, n_plain, keys, thresholds, adjusted_log })
}

/// Fits the adjustment on the whole series and returns the stitched result.
/// The interior uses lags on both sides; the first and last [`MAX_LAG`] hours
/// come from forward-only and backward-only refits.
pub fn adjust(series: &HourlySeries, cfg: &HolidayConfig) -> Result<Adjusted> {
    let ctx = make_ctx(series, cfg)?;
    let len = series.len();
    let lags_neg: Vec<i64> = (-(MAX_LAG as i64)..=-(MIN_LAG as i64)).collect();
    let lags_pos: Vec<i64> = (MIN_LAG as i64..=MAX_LAG as i64).collect();
    let lags_both: Vec<i64> = lags_neg.iter().chain(lags_pos.iter()).copied().collect();

    let (head_r, interior_r, tail_r) = segment_bounds(len);
    let ((head, interior), tail) = rayon::join(
        || {
            rayon::join(
                || fit_segment(&ctx, 0..len - MAX_LAG, &lags_pos, cfg),
                || fit_segment(&ctx, MAX_LAG..len - MAX_LAG, &lags_both, cfg),
            )
        },
        || fit_segment(&ctx, MAX_LAG..len, &lags_neg, cfg),
    );
    let (head, interior, tail) = (head?, interior?, tail?);

    let mut log_adjusted = vec![0.0; len];
    log_adjusted[head_r].copy_from_slice(&head.adjusted_log[..MAX_LAG]);
    log_adjusted[interior_r].copy_from_slice(&interior.adjusted_log);
    let tail_skip = tail.adjusted_log.len() - MAX_LAG;
    log_adjusted[tail_r].copy_from_slice(&tail.adjusted_log[tail_skip..]);
    let adjusted: Vec<f64> = log_adjusted.iter().map(|v| v.exp()).collect();

    let model = HolidayModel {
        load_channel: cfg.load_channel.clone(),
        weather: ctx.weather.iter().map(|(n, _)| n.clone()).collect(),
        thresholds: tail.thresholds,
        lags: lags_neg,
        candidates: ctx.candidates,
        eps: ctx.eps,
        intercept: tail.fit.intercept,
        coefficients: tail.fit.coefficients,
        n_plain: tail.n_plain,
        keys: tail.keys,
        preserve_residuals: cfg.preserve_residuals,
    };
    Ok(Adjusted { log_adjusted, adjusted, model })
}

/// The interior (two-sided) design, exposed for inspection.
pub fn build_holiday_design(series: &HourlySeries, cfg: &HolidayConfig) -> Result<DesignMatrix> {
    let ctx = make_ctx(series, cfg)?;
    let len = series.len();
    let lags: Vec<i64> = (-(MAX_LAG as i64)..=-(MIN_LAG as i64))
        .chain(MIN_LAG as i64..=MAX_LAG as i64)
        .collect();
    let rows: Vec<usize> = (MAX_LAG..len - MAX_LAG).collect();
    let thresholds = relu_thresholds(&ctx, &rows);
    Ok(assemble(&ctx, &rows, &lags, &thresholds, true).0)
}

/// The backward-only fit frozen at adjustment time. Extending with it only
/// reads values at or before each requested hour, so rows appended after the
/// fit can be adjusted as they arrive.
#[derive(Debug, Clone)]
pub struct HolidayModel {
    load_channel: String,
    weather: Vec<String>,
    thresholds: Vec<Vec<f64>>,
    lags: Vec<i64>,
    candidates: Vec<HolidayDate>,
    eps: f64,
    intercept: f64,
    coefficients: Vec<f64>,
    n_plain: usize,
    keys: Vec<(HolidayDate, u32)>,
    preserve_residuals: bool,
}

impl HolidayModel {
    pub fn candidates(&self) -> &[HolidayDate] {
        &self.candidates
    }

    /// Adjusted values (level scale) for grid rows `range` of `series`. Rows
    /// need [`MAX_LAG`] hours of history; nothing after `range` is read.
    pub fn extend(&self, series: &HourlySeries, range: Range<usize>) -> Result<Vec<f64>> {
        if range.end > series.len() {
            return Err(Error::Data(format!(
                "extension rows {}..{} run past the series ({} hours)",
                range.start,
                range.end,
                series.len()
            )));
        }
        if range.start < MAX_LAG {
            return Err(Error::Data(format!(
                "extension rows need {MAX_LAG} hours of history; first requested row is {}",
                range.start
            )));
        }
        if range.is_empty() {
            return Ok(Vec::new());
        }
        let load = series.channel(&self.load_channel)?;
        check_load(load, &self.load_channel, range.start - MAX_LAG..range.end)?;

        if self.preserve_residuals {
            let coef: HashMap<(u32, u32, u32), f64> = self
                .keys
                .iter()
                .zip(&self.coefficients[self.n_plain..])
                .filter(|(_, c)| **c != 0.0)
                .map(|(&((m, d), h), &c)| ((m, d, h), c))
                .collect();
            let out = range
                .map(|r| {
                    let t = series.timestamp(r);
                    let mut v = load[r].ln();
                    if let Some(c) = coef.get(&(t.month(), t.day(), hour_of_day(t))) {
                        v -= c * holiday_scale(load, r, self.eps);
                    }
                    v.exp()
                })
                .collect();
            return Ok(out);
        }

        let mut weather = Vec::new();
        for name in &self.weather {
            let v = series.channel(name)?;
            if let Some(i) = range.clone().find(|&r| !v[r].is_finite()) {
                return Err(Error::Data(format!(
                    "channel `{name}` has a non-finite value at row {i}"
                )));
            }
            weather.push((name.clone(), v));
        }
        let ctx = Ctx {
            times: (0..range.end).map(|i| series.timestamp(i)).collect(),
            log_load: Arc::new(load[..range.end].iter().map(|v| v.ln()).collect()),
            load: &load[..range.end],
            weather,
            candidates: Vec::new(),
            eps: self.eps,
            basis: AnnualBasis::default(),
        };
        let rows: Vec<usize> = range.collect();
        let (dm, _) = assemble(&ctx, &rows, &self.lags, &self.thresholds, false);
        debug_assert_eq!(dm.n_cols(), self.n_plain);
        if dm.n_cols() != self.n_plain {
            return Err(Error::Design(format!(
                "extension design has {} columns, the frozen model has {}",
                dm.n_cols(),
                self.n_plain
            )));
        }
        let base = dm.predict(&self.coefficients[..self.n_plain], self.intercept);
        Ok(base.iter().map(|v| v.exp()).collect())
    }
}
