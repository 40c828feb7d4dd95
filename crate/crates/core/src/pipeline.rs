//! Stage orchestration. Four stages hand off through files in the output
//! directory, so each also works as a standalone command: preprocess writes
//! the cleaned series, holiday adjustment appends the adjusted channel, the
//! expert stage fills (or reloads) the forecast panel, and aggregation runs
//! the combiner and writes every reporting artifact.
//!
//! The holiday model is fitted once, on data visible at the first issue day's
//! anchor, and extended causally from there; nothing in any stage reads past
//! the anchor of the day being forecast.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use chrono::{NaiveDate, NaiveDateTime};
use serde::Serialize;

use crate::boa::{forward_select, replay};
use crate::config::{sha256_hex, PipelineConfig};
use crate::data::series::TIMESTAMP_FORMAT;
use crate::data::{ExpertPanel, ForecastTask, HourlySeries, H_MIN, N_HORIZONS};
use crate::error::{Error, Result};
use crate::experts::build_panel_with;
use crate::holiday::{adjust, ADJUSTED_CHANNEL};
use crate::metrics::{mean, mean_abs_error};
use crate::preprocess;

pub const CLEAN_CSV: &str = "clean.csv";
pub const ADJUSTED_CSV: &str = "adjusted.csv";
pub const PANEL_CSV: &str = "panel.csv";
pub const PANEL_BIN: &str = "panel.bin";
pub const FORECAST_CSV: &str = "forecast.csv";
pub const WEIGHTS_CSV: &str = "weights.csv";
pub const LAMBDA_CSV: &str = "lambda_trace.csv";
pub const DAILY_MAE_CSV: &str = "daily_mae.csv";
pub const SELECTION_CSV: &str = "selection.csv";
pub const SUMMARY_JSON: &str = "summary.json";

pub fn artifact(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

/// Cleans the raw input and writes `clean.csv`.
pub fn run_preprocess(cfg: &PipelineConfig) -> Result<PathBuf> {
    let r = (|| {
        fs::create_dir_all(&cfg.output_dir)?;
        let raw = HourlySeries::read_csv(&cfg.input_csv)?;
        raw.channel("load")?;
        let clean = preprocess::run(&raw)?;
        let path = artifact(cfg, CLEAN_CSV);
        clean.write_csv(&path)?;
        log::info!(
            "preprocess: {} hours, {} channels",
            clean.len(),
            clean.channel_names().count()
        );
        Ok(path)
    })();
    r.map_err(|e: Error| e.in_stage("preprocess"))
}

/// Appends the holiday-adjusted load channel and writes `adjusted.csv`.
pub fn run_adjust(cfg: &PipelineConfig) -> Result<PathBuf> {
    let r = (|| {
        let clean = HourlySeries::read_csv(&artifact(cfg, CLEAN_CSV))?;
        let path = artifact(cfg, ADJUSTED_CSV);
        let dates = cfg.holiday_dates()?;
        if dates.is_empty() {
            log::info!("holiday adjustment skipped: no candidate dates");
            clean.write_csv(&path)?;
            return Ok(path);
        }
        let first_task = ForecastTask::new(cfg.first_panel_day()?, cfg.anchor_hour)?;
        let first_anchor = clean.index_of(first_task.anchor()).ok_or_else(|| {
            Error::Data(format!(
                "first issue day {} has no anchor in the series",
                first_task.issue_day()
            ))
        })?;
        // Fit on what the first issue day could see, then extend causally;
        // later hours never influence earlier adjusted values.
        let fit_input = clean.truncated(first_anchor + 1)?;
        let fitted = adjust(&fit_input, &cfg.holiday_config()?)?;
        let mut values = fitted.adjusted;
        values.extend(fitted.model.extend(&clean, first_anchor + 1..clean.len())?);
        let mut out = clean;
        out.insert_channel(ADJUSTED_CHANNEL, values)?;
        out.write_csv(&path)?;
        log::info!("holiday adjustment: model fitted on {} hours", first_anchor + 1);
        Ok(path)
    })();
    r.map_err(|e: Error| e.in_stage("holiday-adjust"))
}

/// The expert panel plus what aggregation needs alongside it.
pub struct PanelStage {
    pub panel: ExpertPanel,
    pub series: HourlySeries,
    pub cache_key: String,
    pub from_cache: bool,
}

/// Fills the expert panel, or reloads it when the cache key still matches.
pub fn run_train_experts(cfg: &PipelineConfig) -> Result<PanelStage> {
    let r = (|| {
        let path = artifact(cfg, ADJUSTED_CSV);
        let bytes = fs::read(&path)?;
        let cache_key = cfg.panel_cache_key(&sha256_hex(&bytes));
        let series = HourlySeries::read_csv(&path)?;
        let issue_days = cfg.issue_days()?;
        let last_task = ForecastTask::new(*issue_days.last().unwrap(), cfg.anchor_hour)?;
        if series.index_of(last_task.last_target()).is_none() {
            return Err(Error::Data(format!(
                "series ends {} but issue day {} needs targets through {}",
                series.end(),
                last_task.issue_day(),
                last_task.last_target()
            )));
        }
        let bin = artifact(cfg, PANEL_BIN);
        if bin.exists() {
            match ExpertPanel::read_binary(&bin, &cache_key) {
                Ok(Some(panel)) => {
                    log::info!(
                        "train-experts: cache hit, {} days x {} experts",
                        panel.n_days(),
                        panel.n_experts()
                    );
                    return Ok(PanelStage { panel, series, cache_key, from_cache: true });
                }
                Ok(None) => log::info!("train-experts: cache key changed, refitting"),
                Err(e) => log::warn!("train-experts: unreadable cache ({e}), refitting"),
            }
        }
        let pool = cfg.expert_pool()?;
        let t0 = Instant::now();
        let panel =
            build_panel_with(&series, &pool, &issue_days, cfg.anchor_hour, &cfg.alpha_grid)?;
        log::info!(
            "train-experts: {} days x {} experts in {:.1}s",
            panel.n_days(),
            panel.n_experts(),
            t0.elapsed().as_secs_f64()
        );
        panel.write_csv(&artifact(cfg, PANEL_CSV))?;
        panel.write_binary(&bin, &cache_key)?;
        Ok(PanelStage { panel, series, cache_key, from_cache: false })
    })();
    r.map_err(|e: Error| e.in_stage("train-experts"))
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpertScore {
    pub expert: String,
    /// Mean daily MAE over scored test days; absent when every day gapped.
    pub test_mae: Option<f64>,
    pub gap_days: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub complete: bool,
    pub first_test_day: NaiveDate,
    pub test_days: usize,
    pub test_mae: f64,
    /// Validation MAE of the chosen pool during expert selection.
    pub validation_mae: f64,
    pub chosen_m: usize,
    pub selected_experts: Vec<String>,
    /// Experts that were gap-free over the selection window.
    pub candidate_experts: usize,
    pub pool_experts: usize,
    pub panel_cache_key: String,
    pub expert_test_mae: Vec<ExpertScore>,
}

/// Actual load at every target hour of every panel day, horizon-major.
fn panel_actuals(series: &HourlySeries, panel: &ExpertPanel, anchor_hour: u32) -> Result<Vec<f64>> {
    let load = series.channel("load")?;
    let mut out = Vec::with_capacity(panel.n_days() * N_HORIZONS);
    for &day in panel.issue_days() {
        for ts in ForecastTask::new(day, anchor_hour)?.target_timestamps() {
            let idx = series
                .index_of(ts)
                .ok_or_else(|| Error::Data(format!("no actual load at {ts}")))?;
            out.push(load[idx]);
        }
    }
    Ok(out)
}

/// Selects the pool, replays the combiner over the whole panel and writes the
/// forecast, weight, trace, MAE and summary artifacts.
pub fn run_aggregate(cfg: &PipelineConfig, stage: &PanelStage) -> Result<RunSummary> {
    let r = (|| {
        let panel = &stage.panel;
        let n_days = panel.n_days();
        let n_sel = cfg.burn_in + cfg.validation;
        // Selection scores the last validation day against its target, which
        // only completes update_lag - 1 days later; the buffer keeps every
        // test anchor strictly after the data selection saw.
        let n_skip = n_sel + cfg.buffer_days();
        if n_days <= n_skip {
            return Err(Error::Data(format!(
                "panel has {n_days} days but warmup alone needs {n_skip}"
            )));
        }
        let actuals = panel_actuals(&stage.series, panel, cfg.anchor_hour)?;
        let comb_cfg = cfg.combiner_config();

        let candidates: Vec<usize> = (0..panel.n_experts())
            .filter(|&k| (0..n_sel).all(|d| !panel.is_gap(d, k)))
            .collect();
        if candidates.is_empty() {
            return Err(Error::Data(
                "no expert is gap-free over the burn-in and validation days".into(),
            ));
        }
        log::info!(
            "aggregate: {} of {} experts are gap-free candidates",
            candidates.len(),
            panel.n_experts()
        );
        let t0 = Instant::now();
        let sel_panel = panel.select_days(0..n_sel);
        let selection = forward_select(
            &sel_panel,
            &actuals[..n_sel * N_HORIZONS],
            &candidates,
            &cfg.selection_config(),
            &comb_cfg,
        )?;
        log::info!(
            "aggregate: picked {} experts in {:.1}s",
            selection.chosen_m,
            t0.elapsed().as_secs_f64()
        );
        let sub = panel.select_experts(selection.selected());
        let forecasts = replay(&sub, &actuals, &comb_cfg)?;

        let phase = |d: usize| {
            if d < cfg.burn_in {
                "burn_in"
            } else if d < n_sel {
                "validation"
            } else if d < n_skip {
                "buffer"
            } else {
                "test"
            }
        };

        let mut w = csv::Writer::from_path(artifact(cfg, SELECTION_CSV))?;
        w.write_record(["pool_size", "added_expert", "validation_mae"])?;
        for (i, (&k, mae)) in selection.ordered.iter().zip(&selection.mae_curve).enumerate() {
            w.write_record([
                (i + 1).to_string(),
                panel.experts()[k].to_string(),
                mae.to_string(),
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(artifact(cfg, FORECAST_CSV))?;
        w.write_record(["timestamp", "forecast"])?;
        for (d, fc) in forecasts.iter().enumerate().skip(n_skip) {
            let task = ForecastTask::new(panel.issue_days()[d], cfg.anchor_hour)?;
            for (h, ts) in task.target_timestamps().into_iter().enumerate() {
                w.write_record([
                    ts.format(TIMESTAMP_FORMAT).to_string(),
                    fc.combined[h].to_string(),
                ])?;
            }
        }
        w.flush()?;

        let kk = sub.n_experts();
        let mut w = csv::Writer::from_path(artifact(cfg, WEIGHTS_CSV))?;
        w.write_record(["issue_day", "horizon", "expert", "weight", "smoothed_weight", "lambda"])?;
        for (d, fc) in forecasts.iter().enumerate() {
            let day = panel.issue_days()[d].to_string();
            for h in 0..N_HORIZONS {
                for (j, id) in sub.experts().iter().enumerate() {
                    w.write_record([
                        day.clone(),
                        (H_MIN + h as u32).to_string(),
                        id.to_string(),
                        fc.raw_weights[h * kk + j].to_string(),
                        fc.smoothed_weights[h * kk + j].to_string(),
                        fc.lambda.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(artifact(cfg, LAMBDA_CSV))?;
        w.write_record(["issue_day", "phase", "lambda_index", "lambda"])?;
        for (d, fc) in forecasts.iter().enumerate() {
            w.write_record([
                panel.issue_days()[d].to_string(),
                phase(d).to_string(),
                fc.lambda_index.to_string(),
                fc.lambda.to_string(),
            ])?;
        }
        w.flush()?;

        let daily: Vec<f64> = forecasts
            .iter()
            .map(|fc| {
                let d = fc.day_id;
                mean_abs_error(&fc.combined, &actuals[d * N_HORIZONS..(d + 1) * N_HORIZONS])
            })
            .collect();
        let mut w = csv::Writer::from_path(artifact(cfg, DAILY_MAE_CSV))?;
        w.write_record(["issue_day", "phase", "mae"])?;
        for (d, mae) in daily.iter().enumerate() {
            w.write_record([
                panel.issue_days()[d].to_string(),
                phase(d).to_string(),
                mae.to_string(),
            ])?;
        }
        w.flush()?;

        let expert_test_mae: Vec<ExpertScore> = (0..panel.n_experts())
            .map(|k| {
                let mut maes = Vec::new();
                let mut gap_days = 0usize;
                for d in n_skip..n_days {
                    if panel.is_gap(d, k) {
                        gap_days += 1;
                        continue;
                    }
                    let fc: Vec<f64> = (0..N_HORIZONS).map(|h| panel.value(d, h, k)).collect();
                    maes.push(mean_abs_error(&fc, &actuals[d * N_HORIZONS..(d + 1) * N_HORIZONS]));
                }
                ExpertScore {
                    expert: panel.experts()[k].to_string(),
                    test_mae: if maes.is_empty() { None } else { Some(mean(&maes)) },
                    gap_days,
                }
            })
            .collect();

        let summary = RunSummary {
            complete: true,
            first_test_day: panel.issue_days()[n_skip],
            test_days: n_days - n_skip,
            test_mae: mean(&daily[n_skip..]),
            validation_mae: selection.mae_curve[selection.chosen_m - 1],
            chosen_m: selection.chosen_m,
            selected_experts: selection
                .selected()
                .iter()
                .map(|&k| panel.experts()[k].to_string())
                .collect(),
            candidate_experts: candidates.len(),
            pool_experts: panel.n_experts(),
            panel_cache_key: stage.cache_key.clone(),
            expert_test_mae,
        };
        let doc = serde_json::to_string_pretty(&summary).expect("summary serializes");
        fs::write(artifact(cfg, SUMMARY_JSON), doc + "\n")?;
        Ok(summary)
    })();
    r.map_err(|e: Error| e.in_stage("aggregate"))
}

fn write_failure_summary(cfg: &PipelineConfig, err: &Error) {
    let stage = match err {
        Error::Stage { stage, .. } => stage,
        _ => "config",
    };
    let doc = serde_json::json!({
        "complete": false,
        "stage": stage,
        "error": err.to_string(),
    });
    if fs::create_dir_all(&cfg.output_dir).is_ok() {
        let text = serde_json::to_string_pretty(&doc).expect("failure doc serializes");
        let _ = fs::write(artifact(cfg, SUMMARY_JSON), text + "\n");
    }
}

/// The whole four-stage flow. On failure the summary artifact is rewritten
/// with `complete: false` and the failing stage before the error propagates.
pub fn run(cfg: &PipelineConfig) -> Result<RunSummary> {
    let t0 = Instant::now();
    let result = (|| {
        cfg.validate().map_err(|e| e.in_stage("config"))?;
        run_preprocess(cfg)?;
        run_adjust(cfg)?;
        let stage = run_train_experts(cfg)?;
        run_aggregate(cfg, &stage)
    })();
    match result {
        Ok(summary) => {
            log::info!(
                "run complete in {:.1}s, test MAE {:.4}",
                t0.elapsed().as_secs_f64(),
                summary.test_mae
            );
            Ok(summary)
        }
        Err(e) => {
            write_failure_summary(cfg, &e);
            Err(e)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MaeReport {
    pub daily: Vec<(NaiveDate, f64)>,
    /// Mean of the daily MAEs.
    pub aggregate: f64,
}

/// Scores forecasts against observed load, one MAE per 24-hour target day.
/// Timestamps absent from the actuals, or days with a partial set of target
/// hours, are alignment errors.
pub fn evaluate_mae(forecasts: &[(NaiveDateTime, f64)], actuals: &HourlySeries) -> Result<MaeReport> {
    if forecasts.is_empty() {
        return Err(Error::Data("no forecasts to evaluate".into()));
    }
    let load = actuals.channel("load")?;
    let mut missing = Vec::new();
    let mut by_day: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
    for &(ts, fc) in forecasts {
        match actuals.index_of(ts) {
            Some(idx) => by_day.entry(ts.date()).or_default().push((fc - load[idx]).abs()),
            None => missing.push(ts),
        }
    }
    if !missing.is_empty() {
        let shown: Vec<String> = missing.iter().take(8).map(|t| t.to_string()).collect();
        let more = if missing.len() > 8 {
            format!(" and {} more", missing.len() - 8)
        } else {
            String::new()
        };
        return Err(Error::Data(format!(
            "actuals are missing {} forecast timestamps: {}{more}",
            missing.len(),
            shown.join(", ")
        )));
    }
    let mut daily = Vec::with_capacity(by_day.len());
    for (day, errors) in &by_day {
        if errors.len() != N_HORIZONS {
            return Err(Error::Data(format!(
                "target day {day} covers {} hours, expected {N_HORIZONS}",
                errors.len()
            )));
        }
        daily.push((*day, mean(errors)));
    }
    let aggregate = mean(&daily.iter().map(|&(_, m)| m).collect::<Vec<f64>>());
    Ok(MaeReport { daily, aggregate })
}

/// Reads a `timestamp,forecast` artifact back.
pub fn read_forecast_csv(path: &std::path::Path) -> Result<Vec<(NaiveDateTime, f64)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let ts = NaiveDateTime::parse_from_str(&record[0], TIMESTAMP_FORMAT)
            .map_err(|e| Error::Data(format!("bad timestamp `{}`: {e}", &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|_| Error::Data(format!("bad forecast value `{}`", &record[1])))?;
        out.push((ts, value));
    }
    Ok(out)
}
