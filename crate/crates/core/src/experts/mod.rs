//! The expert pool: four forecasting families, each trained over eight
//! rolling calibration windows on both the log and the level of the adjusted
//! load. Every (issue day, expert) pair is an independent fit; results land
//! in the shared panel, with failures recorded as gaps rather than aborting
//! the run.

pub mod additive;
pub mod ar;
pub mod features;
pub mod lasso_hd;
pub mod stl;

use std::sync::Arc;

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::data::{
    ExpertFamily, ExpertId, ExpertPanel, ForecastTask, HourlySeries, TargetScale, H_MAX, H_MIN,
    N_HORIZONS,
};
use crate::error::{Error, Result};
use crate::holiday::ADJUSTED_CHANNEL;

/// Calibration window lengths in nominal days.
pub const WINDOW_DAYS: [u32; 8] = [28, 56, 77, 119, 210, 393, 758, 1123];

/// Windows end at the anchor, so the nominal day count loses the 16 hours
/// between the anchor and the following midnight.
pub fn window_len_hours(window_days: u32) -> usize {
    24 * window_days as usize - 16
}

/// Everything one expert may look at when forecasting one issue day. The
/// target series is a full-length copy with hours outside the calibration
/// window overwritten by NaN, so an out-of-window read surfaces as a loud
/// gap instead of quiet lookahead. Weather forecast channels stay on the
/// underlying series and may be read at target times.
pub struct DayContext<'a> {
    pub(crate) series: &'a HourlySeries,
    pub(crate) y: Arc<Vec<f64>>,
    pub(crate) scale: TargetScale,
    pub(crate) anchor: usize,
    pub(crate) window_start: usize,
}

impl<'a> DayContext<'a> {
    /// `anchor` is the index of the last observable hour. Prefers the
    /// holiday-adjusted load channel and falls back to the raw load.
    pub fn new(
        series: &'a HourlySeries,
        scale: TargetScale,
        anchor: usize,
        window_days: u32,
    ) -> Result<DayContext<'a>> {
        let window_len = window_len_hours(window_days);
        if anchor + 1 < window_len {
            return Err(Error::Data(format!(
                "a {window_days}-day window needs {window_len} hours, only {} end at the anchor",
                anchor + 1
            )));
        }
        if anchor + H_MAX as usize >= series.len() {
            return Err(Error::Data("target hours run past the series end".into()));
        }
        let base = match series.channel(ADJUSTED_CHANNEL) {
            Ok(c) => c,
            Err(_) => series.channel("load")?,
        };
        let window_start = anchor + 1 - window_len;
        let mut y = vec![f64::NAN; base.len()];
        for t in window_start..=anchor {
            let v = base[t];
            if !v.is_finite() {
                return Err(Error::Data(format!("load is not finite at hour {t}")));
            }
            y[t] = match scale {
                TargetScale::Level => v,
                TargetScale::Log => {
                    if v <= 0.0 {
                        return Err(Error::Data(format!(
                            "log scale needs positive load, found {v} at hour {t}"
                        )));
                    }
                    v.ln()
                }
            };
        }
        Ok(DayContext { series, y: Arc::new(y), scale, anchor, window_start })
    }
}

/// The full candidate pool: 4 families x 8 windows x 2 scales, family-major.
pub fn candidate_pool() -> Vec<ExpertId> {
    let mut pool = Vec::with_capacity(64);
    for family in ExpertFamily::ALL {
        for window_days in WINDOW_DAYS {
            for scale in [TargetScale::Log, TargetScale::Level] {
                pool.push(ExpertId { family, window_days, scale });
            }
        }
    }
    pool
}

/// Whether a window is long enough for the family at all. The seasonal
/// decomposition needs two weekly cycles; the autoregression needs two
/// observations per parameter at its maximum order.
pub fn statically_feasible(id: ExpertId) -> bool {
    let len = window_len_hours(id.window_days);
    match id.family {
        ExpertFamily::StlEs => len >= 2 * stl::PERIOD,
        ExpertFamily::ArP => len >= 2 * (ar::P_MAX + 1),
        ExpertFamily::Additive | ExpertFamily::LassoHd => true,
    }
}

/// One expert, one issue day: 24 forecasts on the load level. Log-scale
/// experts are exponentiated here.
pub fn forecast_expert(series: &HourlySeries, id: ExpertId, anchor: usize) -> Result<Vec<f64>> {
    forecast_expert_with(series, id, anchor, &lasso_hd::alpha_grid())
}

/// Same, with the lasso family's penalty grid supplied by the caller. The
/// other families take no tuning input and ignore it.
pub fn forecast_expert_with(
    series: &HourlySeries,
    id: ExpertId,
    anchor: usize,
    alpha_grid: &[f64],
) -> Result<Vec<f64>> {
    let ctx = DayContext::new(series, id.scale, anchor, id.window_days)?;
    let raw = match id.family {
        ExpertFamily::StlEs => {
            let fc = stl::forecast(&ctx.y[ctx.window_start..=ctx.anchor], H_MAX as usize)?;
            fc[H_MIN as usize - 1..].to_vec()
        }
        ExpertFamily::ArP => {
            let fc = ar::forecast(&ctx.y[ctx.window_start..=ctx.anchor], H_MAX as usize)?;
            fc[H_MIN as usize - 1..].to_vec()
        }
        ExpertFamily::Additive => additive::forecast(&ctx)?,
        ExpertFamily::LassoHd => lasso_hd::forecast_with(&ctx, alpha_grid)?,
    };
    debug_assert_eq!(raw.len(), N_HORIZONS);
    Ok(match ctx.scale {
        TargetScale::Log => raw.iter().map(|v| v.exp()).collect(),
        TargetScale::Level => raw,
    })
}

/// Fits and forecasts every (issue day, expert) pair. Jobs run in parallel
/// but results are written in deterministic (day, expert) order; failures
/// become panel gaps. A window the family can never use is logged once and
/// skipped without fitting.
pub fn build_panel(
    series: &HourlySeries,
    experts: &[ExpertId],
    issue_days: &[NaiveDate],
    anchor_hour: u32,
) -> Result<ExpertPanel> {
    build_panel_with(series, experts, issue_days, anchor_hour, &lasso_hd::alpha_grid())
}

/// [`build_panel`] with an explicit lasso penalty grid.
pub fn build_panel_with(
    series: &HourlySeries,
    experts: &[ExpertId],
    issue_days: &[NaiveDate],
    anchor_hour: u32,
    alpha_grid: &[f64],
) -> Result<ExpertPanel> {
    let mut panel = ExpertPanel::new(issue_days.to_vec(), experts.to_vec());
    let feasible: Vec<bool> = experts
        .iter()
        .map(|&id| {
            let ok = statically_feasible(id);
            if !ok {
                log::info!("expert {id}: window too short for the family, leaving gaps");
            }
            ok
        })
        .collect();
    let mut anchors = Vec::with_capacity(issue_days.len());
    for &day in issue_days {
        let task = ForecastTask::new(day, anchor_hour)?;
        let anchor = series
            .index_of(task.anchor())
            .ok_or_else(|| Error::Data(format!("issue day {day} is outside the series")))?;
        anchors.push(anchor);
    }

    let jobs: Vec<(usize, usize)> = (0..issue_days.len())
        .flat_map(|d| (0..experts.len()).map(move |k| (d, k)))
        .filter(|&(_, k)| feasible[k])
        .collect();
    let results: Vec<((usize, usize), Result<Vec<f64>>)> = jobs
        .into_par_iter()
        .map(|(d, k)| ((d, k), forecast_expert_with(series, experts[k], anchors[d], alpha_grid)))
        .collect();

    for ((d, k), res) in results {
        match res {
            Ok(values) => panel.set_forecast(d, k, &values)?,
            Err(e) => {
                log::warn!("expert {} on {}: {e}", experts[k], issue_days[d]);
                panel.set_gap(d, k)?;
            }
        }
    }
    for (k, ok) in feasible.iter().enumerate() {
        if !ok {
            for d in 0..issue_days.len() {
                panel.set_gap(d, k)?;
            }
        }
    }
    Ok(panel)
}
