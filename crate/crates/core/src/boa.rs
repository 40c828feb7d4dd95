//! Online forecast combination. Each (horizon, expert) cell keeps an
//! adaptive-range exponential-weights state driven by a linearized absolute
//! deviation regret; weight curves are smoothed across horizons with a
//! penalty chosen online by discounted MAE, and the expert pool itself is
//! chosen by greedy forward selection on a validation window.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::data::panel::ExpertPanel;
use crate::data::task::N_HORIZONS;
use crate::error::{Error, Result};
use crate::metrics::mean_abs_error;
use crate::smoothing::{default_lambda_grid, WeightSmoother};

pub fn ad_loss(x: f64, y: f64) -> f64 {
    (y - x).abs()
}

/// Subgradient of `ad_loss` in the forecast, taken as 0 at the kink.
pub fn ad_subgradient(x: f64, y: f64) -> f64 {
    if x > y {
        1.0
    } else if x < y {
        -1.0
    } else {
        0.0
    }
}

/// Learning-rate rule: both take the variance-based rate `sqrt(ln K / sum r^2)`
/// capped by a range term, `HalfRange` at half the observed regret range and
/// `InverseRange` at its reciprocal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaVariant {
    HalfRange,
    InverseRange,
}

impl EtaVariant {
    fn rate(self, range: f64, sq_sum: f64, ln_k: f64) -> f64 {
        let root = if sq_sum > 0.0 { (ln_k / sq_sum).sqrt() } else { f64::INFINITY };
        match self {
            EtaVariant::HalfRange => (range / 2.0).min(root),
            EtaVariant::InverseRange => {
                if range > 0.0 {
                    (1.0 / (2.0 * range)).min(root)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoaConfig {
    pub eta_variant: EtaVariant,
    /// Weights below this are raised to it, then the row is renormalized;
    /// keeps experts revivable. 0 disables.
    pub weight_floor: f64,
    /// Forgetting factor on accumulated regret terms; 1 disables.
    pub regret_forget: f64,
}

impl Default for BoaConfig {
    fn default() -> Self {
        BoaConfig { eta_variant: EtaVariant::HalfRange, weight_floor: 1e-12, regret_forget: 1.0 }
    }
}

/// Per-(horizon, expert) aggregation state. All arrays are horizon-major.
#[derive(Debug, Clone)]
pub struct AggregationState {
    n_experts: usize,
    ln_k: f64,
    cfg: BoaConfig,
    day: usize,
    range: Vec<f64>,
    eta: Vec<f64>,
    regret: Vec<f64>,
    sq_sum: Vec<f64>,
    weights: Vec<f64>,
}

impl AggregationState {
    pub fn new(n_experts: usize, cfg: BoaConfig) -> AggregationState {
        assert!(n_experts > 0);
        let cells = N_HORIZONS * n_experts;
        AggregationState {
            n_experts,
            ln_k: (n_experts as f64).ln(),
            cfg,
            day: 0,
            range: vec![0.0; cells],
            eta: vec![0.0; cells],
            regret: vec![0.0; cells],
            sq_sum: vec![0.0; cells],
            weights: vec![1.0 / n_experts as f64; cells],
        }
    }

    pub fn n_experts(&self) -> usize {
        self.n_experts
    }

    pub fn day(&self) -> usize {
        self.day
    }

    /// Current weights, horizon-major, each horizon on the simplex.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn range(&self) -> &[f64] {
        &self.range
    }

    pub fn learning_rates(&self) -> &[f64] {
        &self.eta
    }

    pub fn sq_regret_sums(&self) -> &[f64] {
        &self.sq_sum
    }

    /// Combination under the state's own (unsmoothed) weights.
    pub fn combine(&self, forecasts: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; N_HORIZONS];
        combine_with(&self.weights, forecasts, self.n_experts, &mut out)?;
        Ok(out)
    }

    /// Folds one day's outcome into the state. `combined` must be the
    /// forecast that was actually issued for this day, since the regret
    /// linearizes the loss there. Experts with a gap (NaN) are skipped.
    pub fn update(&mut self, forecasts: &[f64], combined: &[f64], actuals: &[f64]) {
        debug_assert_eq!(forecasts.len(), N_HORIZONS * self.n_experts);
        debug_assert_eq!(combined.len(), N_HORIZONS);
        debug_assert_eq!(actuals.len(), N_HORIZONS);
        let kk = self.n_experts;
        let gamma = self.cfg.regret_forget;
        for h in 0..N_HORIZONS {
            let g = ad_subgradient(combined[h], actuals[h]);
            let base = h * kk;
            for k in 0..kk {
                let f = forecasts[base + k];
                if !f.is_finite() {
                    continue;
                }
                let r = g * (combined[h] - f);
                let e = self.range[base + k].max(r.abs());
                let v = gamma * self.sq_sum[base + k] + r * r;
                let eta = self.cfg.eta_variant.rate(e, v, self.ln_k);
                let mut cum = gamma * self.regret[base + k] + r * (eta * r - 1.0) / 2.0;
                if -2.0 * eta * r > 1.0 {
                    cum += e;
                }
                self.range[base + k] = e;
                self.sq_sum[base + k] = v;
                self.eta[base + k] = eta;
                self.regret[base + k] = cum;
            }
            self.recompute_weights(h);
        }
        self.day += 1;
    }

    /// Weights from (eta, regret) in log space; if every rate is still zero
    /// the row is left as it is.
    fn recompute_weights(&mut self, h: usize) {
        let kk = self.n_experts;
        let base = h * kk;
        let mut m = f64::NEG_INFINITY;
        for k in 0..kk {
            let eta = self.eta[base + k];
            if eta > 0.0 {
                m = m.max(eta.ln() - eta * self.regret[base + k]);
            }
        }
        if m == f64::NEG_INFINITY {
            return;
        }
        let mut total = 0.0;
        for k in 0..kk {
            let eta = self.eta[base + k];
            let w = if eta > 0.0 { (eta.ln() - eta * self.regret[base + k] - m).exp() } else { 0.0 };
            self.weights[base + k] = w;
            total += w;
        }
        for k in 0..kk {
            self.weights[base + k] /= total;
        }
        let floor = self.cfg.weight_floor;
        if floor > 0.0 {
            let mut t = 0.0;
            for k in 0..kk {
                if self.weights[base + k] < floor {
                    self.weights[base + k] = floor;
                }
                t += self.weights[base + k];
            }
            for k in 0..kk {
                self.weights[base + k] /= t;
            }
        }
    }
}

/// Convex combination per horizon. Gap forecasts (NaN) are excluded and the
/// remaining weights renormalized; a horizon with no forecast at all is an
/// error.
pub fn combine_with(
    weights: &[f64],
    forecasts: &[f64],
    n_experts: usize,
    out: &mut [f64],
) -> Result<()> {
    debug_assert_eq!(weights.len(), N_HORIZONS * n_experts);
    debug_assert_eq!(forecasts.len(), N_HORIZONS * n_experts);
    debug_assert_eq!(out.len(), N_HORIZONS);
    for h in 0..N_HORIZONS {
        let wrow = &weights[h * n_experts..(h + 1) * n_experts];
        let frow = &forecasts[h * n_experts..(h + 1) * n_experts];
        let mut acc = 0.0;
        let mut mass = 0.0;
        let mut avail = 0usize;
        let mut plain = 0.0;
        for k in 0..n_experts {
            if frow[k].is_finite() {
                acc += wrow[k] * frow[k];
                mass += wrow[k];
                plain += frow[k];
                avail += 1;
            }
        }
        if avail == 0 {
            return Err(Error::Data(format!("no expert forecast available at horizon index {h}")));
        }
        if avail < n_experts {
            log::debug!("horizon index {h}: combining over {avail}/{n_experts} experts");
        }
        out[h] = if mass > 0.0 { acc / mass } else { plain / avail as f64 };
    }
    Ok(())
}

/// Everything the combiner needs besides the expert pool itself.
#[derive(Debug, Clone)]
pub struct CombinerConfig {
    pub lambdas: Vec<f64>,
    /// Forgetting parameter of the discounted MAE used to pick the penalty.
    pub rho: f64,
    /// Clip-and-renormalize smoothed weights back onto the simplex.
    pub repair: bool,
    /// Days between issuing a forecast and its outcome becoming usable.
    pub update_lag: usize,
    pub boa: BoaConfig,
}

impl Default for CombinerConfig {
    fn default() -> Self {
        CombinerConfig {
            lambdas: default_lambda_grid(),
            rho: 0.01,
            repair: true,
            update_lag: 2,
            boa: BoaConfig::default(),
        }
    }
}

struct LambdaReplicate {
    smoother: WeightSmoother,
    state: AggregationState,
    dm_num: f64,
    dm_den: f64,
}

struct PendingDay {
    day_id: usize,
    /// Issued combination of every replicate, needed when its outcome lands.
    per_lambda_combined: Vec<Vec<f64>>,
}

/// What one forecast call reports: the issued combination plus the weight
/// diagnostics of the replicate that produced it.
#[derive(Debug, Clone)]
pub struct DayForecast {
    pub day_id: usize,
    pub combined: Vec<f64>,
    pub lambda_index: usize,
    pub lambda: f64,
    pub raw_weights: Vec<f64>,
    pub smoothed_weights: Vec<f64>,
}

/// One aggregation state per smoothing penalty; forecasts report the
/// replicate with the lowest discounted MAE so far, ties to the lowest
/// grid index. Outcomes may arrive lagged but must arrive in issue order.
pub struct SmoothedBoa {
    n_experts: usize,
    rho: f64,
    repair: bool,
    replicates: Vec<LambdaReplicate>,
    pending: VecDeque<PendingDay>,
    last_forecast: Option<usize>,
}

impl SmoothedBoa {
    pub fn new(n_experts: usize, cfg: &CombinerConfig) -> Result<SmoothedBoa> {
        if cfg.lambdas.is_empty() {
            return Err(Error::Config("smoothing grid must not be empty".into()));
        }
        if !(0.0..1.0).contains(&cfg.rho) {
            return Err(Error::Config(format!("rho {} outside [0, 1)", cfg.rho)));
        }
        let replicates = cfg
            .lambdas
            .iter()
            .map(|&lambda| {
                Ok(LambdaReplicate {
                    smoother: WeightSmoother::new(lambda)?,
                    state: AggregationState::new(n_experts, cfg.boa.clone()),
                    dm_num: 0.0,
                    dm_den: 0.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SmoothedBoa {
            n_experts,
            rho: cfg.rho,
            repair: cfg.repair,
            replicates,
            pending: VecDeque::new(),
            last_forecast: None,
        })
    }

    /// Replicate index with the lowest discounted MAE; grid order breaks ties.
    pub fn selected_index(&self) -> usize {
        let mut best = 0usize;
        let mut best_dm = f64::INFINITY;
        for (i, rep) in self.replicates.iter().enumerate() {
            if rep.dm_den > 0.0 {
                let dm = rep.dm_num / rep.dm_den;
                if dm < best_dm {
                    best_dm = dm;
                    best = i;
                }
            }
        }
        best
    }

    pub fn discounted_mae(&self, index: usize) -> Option<f64> {
        let rep = &self.replicates[index];
        (rep.dm_den > 0.0).then(|| rep.dm_num / rep.dm_den)
    }

    /// Earliest issued day still waiting for its outcome.
    pub fn next_pending(&self) -> Option<usize> {
        self.pending.front().map(|p| p.day_id)
    }

    /// Issues the forecast for `day_id`. Every replicate combines under its
    /// own smoothed weights; all of them are stashed for later scoring.
    pub fn forecast(&mut self, day_id: usize, forecasts: &[f64]) -> Result<DayForecast> {
        if let Some(last) = self.last_forecast {
            if day_id <= last {
                return Err(Error::Data(format!(
                    "forecast days must increase: got {day_id} after {last}"
                )));
            }
        }
        let kk = self.n_experts;
        let repair = self.repair;
        let per_lambda: Vec<(Vec<f64>, Vec<f64>)> = self
            .replicates
            .par_iter()
            .map(|rep| {
                let mut w = rep.state.weights().to_vec();
                rep.smoother.apply(&mut w, kk, repair);
                let mut comb = vec![0.0; N_HORIZONS];
                combine_with(&w, forecasts, kk, &mut comb)?;
                Ok((w, comb))
            })
            .collect::<Result<Vec<_>>>()?;
        let sel = self.selected_index();
        let report = DayForecast {
            day_id,
            combined: per_lambda[sel].1.clone(),
            lambda_index: sel,
            lambda: self.replicates[sel].smoother.lambda(),
            raw_weights: self.replicates[sel].state.weights().to_vec(),
            smoothed_weights: per_lambda[sel].0.clone(),
        };
        self.pending.push_back(PendingDay {
            day_id,
            per_lambda_combined: per_lambda.into_iter().map(|(_, c)| c).collect(),
        });
        self.last_forecast = Some(day_id);
        Ok(report)
    }

    /// Applies the outcome of the earliest pending day. Every replicate
    /// updates against the combination it issued itself.
    pub fn observe(&mut self, day_id: usize, forecasts: &[f64], actuals: &[f64]) -> Result<()> {
        let front = self
            .pending
            .front()
            .ok_or_else(|| Error::Data("no pending forecast to observe".into()))?;
        if front.day_id != day_id {
            return Err(Error::Data(format!(
                "outcomes must arrive in issue order: expected day {}, got {day_id}",
                front.day_id
            )));
        }
        let pending = self.pending.pop_front().unwrap();
        let rho = self.rho;
        self.replicates
            .par_iter_mut()
            .zip(pending.per_lambda_combined.par_iter())
            .for_each(|(rep, combined)| {
                rep.state.update(forecasts, combined, actuals);
                let mae = mean_abs_error(combined, actuals);
                rep.dm_num = (1.0 - rho) * rep.dm_num + mae;
                rep.dm_den = (1.0 - rho) * rep.dm_den + 1.0;
            });
        Ok(())
    }

    /// Textbook protocol: forecast, then fold in the outcome immediately.
    pub fn run_day(&mut self, day_id: usize, forecasts: &[f64], actuals: &[f64]) -> Result<DayForecast> {
        let report = self.forecast(day_id, forecasts)?;
        self.observe(day_id, forecasts, actuals)?;
        Ok(report)
    }
}

/// Replays a panel through the combiner in issue order, applying outcomes
/// `cfg.update_lag` days late, and returns the issued forecasts day by day.
pub fn replay(panel: &ExpertPanel, actuals: &[f64], cfg: &CombinerConfig) -> Result<Vec<DayForecast>> {
    let n_days = panel.n_days();
    if actuals.len() != n_days * N_HORIZONS {
        return Err(Error::Data(format!(
            "expected {} actuals for {} days, got {}",
            n_days * N_HORIZONS,
            n_days,
            actuals.len()
        )));
    }
    let mut boa = SmoothedBoa::new(panel.n_experts(), cfg)?;
    let mut out = Vec::with_capacity(n_days);
    for d in 0..n_days {
        while let Some(p) = boa.next_pending() {
            if p + cfg.update_lag > d {
                break;
            }
            boa.observe(p, panel.day_block(p), &actuals[p * N_HORIZONS..(p + 1) * N_HORIZONS])?;
        }
        out.push(boa.forecast(d, panel.day_block(d))?);
    }
    Ok(out)
}

/// Mean daily MAE of a replay over its last `scored_days` days.
fn replay_tail_mae(
    panel: &ExpertPanel,
    actuals: &[f64],
    scored_days: usize,
    cfg: &CombinerConfig,
) -> Result<f64> {
    let n_days = panel.n_days();
    debug_assert!(scored_days <= n_days);
    let first_scored = n_days - scored_days;
    let forecasts = replay(panel, actuals, cfg)?;
    let mut total = 0.0;
    for d in first_scored..n_days {
        total += mean_abs_error(
            &forecasts[d].combined,
            &actuals[d * N_HORIZONS..(d + 1) * N_HORIZONS],
        );
    }
    Ok(total / scored_days as f64)
}

#[derive(Debug, Clone)]
pub struct SelectionConfig {
    /// Days at the start of the window excluded from scoring.
    pub burn_in: usize,
    /// Days at the end of the window that are scored.
    pub validation: usize,
    /// Cap on the pool size the greedy search explores.
    pub m_max: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig { burn_in: 30, validation: 60, m_max: 40 }
    }
}

#[derive(Debug, Clone)]
pub struct Selection {
    /// Full greedy order over explored pool sizes.
    pub ordered: Vec<usize>,
    /// Validation MAE at each pool size, aligned with `ordered`.
    pub mae_curve: Vec<f64>,
    /// Pool size at the curve minimum; ties go to the smaller pool.
    pub chosen_m: usize,
}

impl Selection {
    pub fn selected(&self) -> &[usize] {
        &self.ordered[..self.chosen_m]
    }
}

/// Greedy forward search over `candidates` (panel expert indices): each round
/// adds the candidate whose pool has the lowest validation MAE under a full
/// combiner replay. Candidate order breaks ties, so reruns are identical.
pub fn forward_select(
    panel: &ExpertPanel,
    actuals: &[f64],
    candidates: &[usize],
    sel: &SelectionConfig,
    cfg: &CombinerConfig,
) -> Result<Selection> {
    let n_days = panel.n_days();
    if n_days < sel.burn_in + sel.validation {
        return Err(Error::Data(format!(
            "selection window needs {} days, panel has {n_days}",
            sel.burn_in + sel.validation
        )));
    }
    if candidates.is_empty() {
        return Err(Error::Data("no candidate experts to select from".into()));
    }
    let mut ordered: Vec<usize> = Vec::new();
    let mut mae_curve: Vec<f64> = Vec::new();
    let m_cap = sel.m_max.min(candidates.len());
    for _ in 0..m_cap {
        let remaining: Vec<usize> =
            candidates.iter().copied().filter(|c| !ordered.contains(c)).collect();
        let evals: Vec<f64> = remaining
            .par_iter()
            .map(|&c| {
                let mut pool = ordered.clone();
                pool.push(c);
                let sub = panel.select_experts(&pool);
                replay_tail_mae(&sub, actuals, sel.validation, cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut best = 0usize;
        for i in 1..evals.len() {
            if evals[i] < evals[best] {
                best = i;
            }
        }
        ordered.push(remaining[best]);
        mae_curve.push(evals[best]);
    }
    let mut chosen_m = 1;
    for m in 2..=mae_curve.len() {
        if mae_curve[m - 1] < mae_curve[chosen_m - 1] {
            chosen_m = m;
        }
    }
    Ok(Selection { ordered, mae_curve, chosen_m })
}
