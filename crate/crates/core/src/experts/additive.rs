//! Additive per-hour expert. Each horizon gets its own penalized linear
//! model, trained only on rows sharing the target's hour of day: B-spline
//! expansions of the daily and weekly load lags and of the forecast daily
//! rolling-mean weather, weekday-interacted copies of the temperature and
//! cloud-cover smooths plus their tensor product, linear long lags, and
//! weekday dummies. Spline coefficients carry a shared ridge penalty chosen
//! by generalized cross-validation; everything else is unpenalized.

use chrono::Datelike;
use nalgebra::{DMatrix, DVector};

use crate::data::task::{H_MAX, H_MIN, N_HORIZONS};
use crate::error::{Error, Result};
use crate::experts::features::ridge_gcv;
use crate::experts::DayContext;
use crate::splines::CubicBasis;

const TEMP_CHANNEL: &str = "temp_fc_rm24";
const CLOUD_CHANNEL: &str = "cloud_fc_rm24";
const SMOOTH_SUFFIX: &str = "_fc_rm24";

pub const J_SHORT_DAYS: [i64; 8] = [2, 3, 8, 14, 21, 28, 35, 42];
pub const J_LONG_DAYS: [i64; 6] = [350, 357, 364, 371, 378, 385];

const FULL_BASIS: usize = 8;
const REDUCED_BASIS: usize = 4;
const TENSOR_BASIS: usize = 4;
/// Ridge weights tried by GCV, as multiples of the mean penalized-column
/// energy; the grid spans four decades around it.
const LAMBDA_MULTIPLIERS: [f64; 5] = [1e-2, 1e-1, 1.0, 1e1, 1e2];
/// Training rows required beyond the unpenalized column count before a long
/// lag is worth its row cost.
const ROW_MARGIN: usize = 10;

/// A frozen univariate smooth: basis plus the training-data domain inputs
/// are clamped to. Degenerate (constant) features carry no smooth.
struct Smooth {
    basis: CubicBasis,
    lo: f64,
    hi: f64,
}

impl Smooth {
    fn over(values: &[f64], n_basis: usize) -> Option<Smooth> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi - lo).is_finite() || hi - lo < 1e-9 * (1.0 + lo.abs()) {
            return None;
        }
        Some(Smooth { basis: CubicBasis::equidistant(lo, hi, n_basis), lo, hi })
    }

    fn eval_into(&self, x: f64, out: &mut [f64]) {
        self.basis.eval_into(x.clamp(self.lo, self.hi), out);
    }

    fn n_basis(&self) -> usize {
        self.basis.n_basis()
    }
}

/// Raw per-row features, training rows first and the prediction row last.
struct Raw {
    n_train: usize,
    j_lags: Vec<Vec<f64>>,
    lag24: Option<Vec<f64>>,
    lag168: Vec<f64>,
    /// (channel name, values); temperature and cloud cover first when
    /// present, remaining smooth channels in name order.
    weather: Vec<(String, Vec<f64>)>,
    weekday: Vec<usize>,
    response: Vec<f64>,
}

/// Frozen column layout for one horizon's model.
struct Layout {
    lag24: Option<Smooth>,
    lag168: Option<Smooth>,
    weather: Vec<Option<Smooth>>,
    temp_idx: Option<usize>,
    cloud_idx: Option<usize>,
    interact: Vec<(usize, Smooth)>,
    tensor: Option<(Smooth, Smooth)>,
    p: usize,
    penalized: Vec<bool>,
}

impl Layout {
    fn from_raw(raw: &Raw) -> Layout {
        let n = raw.n_train;
        let nb = if n >= 2 * FULL_BASIS { FULL_BASIS } else { REDUCED_BASIS };
        // A cubic basis cannot shrink below 4 functions, so a window too
        // small for the 4x4 tensor drops that term instead.
        let keep_tensor = n >= 2 * TENSOR_BASIS * TENSOR_BASIS;
        if nb != FULL_BASIS || !keep_tensor {
            log::warn!("additive model: only {n} training rows, reducing the spline terms");
        }
        let lag24 = raw.lag24.as_ref().and_then(|v| Smooth::over(&v[..n], nb));
        let lag168 = Smooth::over(&raw.lag168[..n], nb);
        let weather: Vec<Option<Smooth>> =
            raw.weather.iter().map(|(_, v)| Smooth::over(&v[..n], nb)).collect();
        let temp_idx = raw.weather.iter().position(|(name, _)| name == TEMP_CHANNEL);
        let cloud_idx = raw.weather.iter().position(|(name, _)| name == CLOUD_CHANNEL);
        let mut interact = Vec::new();
        for idx in [temp_idx, cloud_idx].into_iter().flatten() {
            if let Some(s) = Smooth::over(&raw.weather[idx].1[..n], nb) {
                interact.push((idx, s));
            }
        }
        let tensor = match (temp_idx, cloud_idx) {
            (Some(ti), Some(ci)) if keep_tensor => {
                let a = Smooth::over(&raw.weather[ti].1[..n], TENSOR_BASIS);
                let b = Smooth::over(&raw.weather[ci].1[..n], TENSOR_BASIS);
                a.zip(b)
            }
            _ => None,
        };
        let smooth_cols = |s: &Option<Smooth>| s.as_ref().map_or(0, Smooth::n_basis);
        let p_unpen = 1 + raw.j_lags.len() + 6;
        let p_pen = smooth_cols(&lag24)
            + smooth_cols(&lag168)
            + weather.iter().map(smooth_cols).sum::<usize>()
            + interact.iter().map(|(_, s)| 7 * s.n_basis()).sum::<usize>()
            + tensor.as_ref().map_or(0, |(a, b)| a.n_basis() * b.n_basis());
        let mut penalized = vec![false; p_unpen];
        penalized.extend(std::iter::repeat_n(true, p_pen));
        Layout {
            lag24,
            lag168,
            weather,
            temp_idx,
            cloud_idx,
            interact,
            tensor,
            p: p_unpen + p_pen,
            penalized,
        }
    }

    /// Writes row `r` of the design into `out`.
    fn fill_row(&self, raw: &Raw, r: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.p);
        out.fill(0.0);
        let mut c = 0;
        out[c] = 1.0;
        c += 1;
        for lag in &raw.j_lags {
            out[c] = lag[r];
            c += 1;
        }
        let wd = raw.weekday[r];
        if (1..=6).contains(&wd) {
            out[c + wd - 1] = 1.0;
        }
        c += 6;
        let smooth = |s: &Option<Smooth>, x: f64, c: &mut usize, out: &mut [f64]| {
            if let Some(s) = s {
                s.eval_into(x, &mut out[*c..*c + s.n_basis()]);
                *c += s.n_basis();
            }
        };
        if let Some(v) = &raw.lag24 {
            smooth(&self.lag24, v[r], &mut c, out);
        }
        smooth(&self.lag168, raw.lag168[r], &mut c, out);
        for (s, (_, v)) in self.weather.iter().zip(&raw.weather) {
            smooth(s, v[r], &mut c, out);
        }
        for (idx, s) in &self.interact {
            let nb = s.n_basis();
            s.eval_into(raw.weather[*idx].1[r], &mut out[c + wd * nb..c + (wd + 1) * nb]);
            c += 7 * nb;
        }
        if let Some((a, b)) = &self.tensor {
            let (ti, ci) = (self.temp_idx.unwrap(), self.cloud_idx.unwrap());
            let mut va = vec![0.0; a.n_basis()];
            let mut vb = vec![0.0; b.n_basis()];
            a.eval_into(raw.weather[ti].1[r], &mut va);
            b.eval_into(raw.weather[ci].1[r], &mut vb);
            for x in &va {
                for y in &vb {
                    out[c] = x * y;
                    c += 1;
                }
            }
        }
        debug_assert_eq!(c, self.p);
    }
}

/// Smooth-channel names in their fixed model order: temperature and cloud
/// cover first, then the remaining forecast rolling means by name.
fn smooth_channels(ctx: &DayContext) -> Vec<String> {
    let mut rest: Vec<String> = ctx
        .series
        .channel_names()
        .filter(|n| {
            n.ends_with(SMOOTH_SUFFIX)
                && !n.contains("wind_dir_deg")
                && *n != TEMP_CHANNEL
                && *n != CLOUD_CHANNEL
        })
        .map(str::to_string)
        .collect();
    rest.sort();
    let mut out = Vec::new();
    for name in [TEMP_CHANNEL, CLOUD_CHANNEL] {
        if ctx.series.has_channel(name) {
            out.push(name.to_string());
        }
    }
    out.extend(rest);
    out
}

fn gather_raw(ctx: &DayContext, h: u32, channels: &[String]) -> Result<Raw> {
    let wlen = ctx.anchor + 1 - ctx.window_start;
    let t_star = ctx.anchor + h as usize;
    let t_top = t_star - 24 * h.div_ceil(24) as usize;

    // Long lags are kept largest-first only while enough same-hour rows
    // remain to support the unpenalized block with a margin.
    let mut j_days: Vec<i64> = J_SHORT_DAYS
        .iter()
        .chain(J_LONG_DAYS.iter())
        .copied()
        .filter(|d| (24 * d) < wlen as i64)
        .collect();
    let rows_with = |max_lag: usize| -> usize {
        if t_top < ctx.window_start + max_lag {
            0
        } else {
            (t_top - ctx.window_start - max_lag) / 24 + 1
        }
    };
    loop {
        let max_lag = j_days.last().map_or(168, |d| (24 * *d as usize).max(168));
        if j_days.is_empty() || rows_with(max_lag) >= 1 + 6 + j_days.len() + ROW_MARGIN {
            break;
        }
        j_days.pop();
    }
    let max_lag = j_days.last().map_or(168, |d| (24 * *d as usize).max(168));
    let n = rows_with(max_lag);
    if n < 8 {
        return Err(Error::Data(format!(
            "additive model for horizon {h}: only {n} usable rows in the window"
        )));
    }

    // Training rows ascending, prediction row last.
    let mut ts: Vec<usize> = (0..n).map(|i| t_top - 24 * (n - 1 - i)).collect();
    ts.push(t_star);
    let grab_lag = |lag: usize| -> Result<Vec<f64>> {
        ts.iter()
            .map(|&t| {
                let v = ctx.y[t - lag];
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Data(format!("load lag {lag} reads into unobserved hours")))
                }
            })
            .collect()
    };
    let j_lags: Vec<Vec<f64>> =
        j_days.iter().map(|d| grab_lag(24 * *d as usize)).collect::<Result<_>>()?;
    let lag24 = if h <= 24 { Some(grab_lag(24)?) } else { None };
    let lag168 = grab_lag(168)?;
    let mut weather = Vec::with_capacity(channels.len());
    for name in channels {
        let full = ctx.series.channel(name)?;
        let vals: Vec<f64> = ts.iter().map(|&t| full[t]).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("channel `{name}` is not finite on the model rows")));
        }
        weather.push((name.clone(), vals));
    }
    let weekday: Vec<usize> = ts
        .iter()
        .map(|&t| ctx.series.timestamp(t).weekday().num_days_from_monday() as usize)
        .collect();
    let response: Vec<f64> = ts[..n].iter().map(|&t| ctx.y[t]).collect();
    if response.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("response reads into unobserved hours".into()));
    }
    Ok(Raw { n_train: n, j_lags, lag24, lag168, weather, weekday, response })
}

fn forecast_one(ctx: &DayContext, h: u32, channels: &[String]) -> Result<f64> {
    let raw = gather_raw(ctx, h, channels)?;
    let layout = Layout::from_raw(&raw);
    let n = raw.n_train;
    let mut x = DMatrix::zeros(n, layout.p);
    let mut buf = vec![0.0; layout.p];
    for r in 0..n {
        layout.fill_row(&raw, r, &mut buf);
        for (j, v) in buf.iter().enumerate() {
            x[(r, j)] = *v;
        }
    }
    let y = DVector::from_row_slice(&raw.response);
    let n_pen = layout.penalized.iter().filter(|p| **p).count();
    let pen_scale = if n_pen == 0 {
        1.0
    } else {
        let mut acc = 0.0;
        for (j, pen) in layout.penalized.iter().enumerate() {
            if *pen {
                acc += x.column(j).norm_squared();
            }
        }
        (acc / n_pen as f64).max(1e-300)
    };
    let grid: Vec<f64> = LAMBDA_MULTIPLIERS.iter().map(|m| m * pen_scale).collect();
    let fit = ridge_gcv(&x, &y, &layout.penalized, &grid)?;
    layout.fill_row(&raw, n, &mut buf);
    let value: f64 = buf.iter().zip(fit.beta.iter()).map(|(a, b)| a * b).sum();
    if !value.is_finite() {
        return Err(Error::Data(format!("additive forecast for horizon {h} is not finite")));
    }
    Ok(value)
}

/// Direct forecasts for all 24 horizons, one model per horizon.
pub fn forecast(ctx: &DayContext) -> Result<Vec<f64>> {
    let channels = smooth_channels(ctx);
    let mut out = Vec::with_capacity(N_HORIZONS);
    for h in H_MIN..=H_MAX {
        out.push(forecast_one(ctx, h, &channels)?);
    }
    Ok(out)
}
