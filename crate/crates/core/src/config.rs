//! Run configuration. One TOML document drives every stage; its canonical
//! serialization is hashed to key the expert-panel cache, so any field change
//! forces a rebuild while a byte-for-byte rerun hits the cache.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boa::{BoaConfig, CombinerConfig, EtaVariant, SelectionConfig};
use crate::data::{ExpertFamily, ExpertId, TargetScale, H_MAX, H_MIN};
use crate::design::HolidayDate;
use crate::error::{Error, Result};
use crate::experts::{self, WINDOW_DAYS};
use crate::holiday::{HolidayConfig, DEFAULT_CANDIDATES};
use crate::smoothing::default_lambda_grid;

fn default_families() -> Vec<String> {
    ExpertFamily::ALL.iter().map(|f| f.name().to_string()).collect()
}

fn default_scales() -> Vec<String> {
    vec![TargetScale::Log.name().to_string(), TargetScale::Level.name().to_string()]
}

fn default_holidays() -> Vec<String> {
    DEFAULT_CANDIDATES.iter().map(|&(m, d)| format!("{m:02}-{d:02}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Raw input CSV: a `timestamp` column plus one numeric column per channel.
    pub input_csv: PathBuf,
    /// Every artifact lands here.
    pub output_dir: PathBuf,
    /// First scored day. The combiner warms up on the `burn_in + validation`
    /// days before it, so the series must start early enough to cover those
    /// plus the longest calibration window.
    pub first_forecast_date: Option<NaiveDate>,
    /// Length of the scored span.
    pub test_days: usize,
    /// Forecasts are issued at this local hour, 7 or 8.
    pub anchor_hour: u32,
    /// Day-ahead span relative to the anchor, inclusive. The panel layout is
    /// built around 17..40; anything else is rejected rather than mis-shaped.
    pub horizon_min: u32,
    pub horizon_max: u32,
    /// Calibration window lengths in nominal days.
    pub window_days: Vec<u32>,
    /// Expert families by name; the pool is families x windows x scales.
    pub families: Vec<String>,
    pub scales: Vec<String>,
    /// Penalty grid for the high-dimensional lasso experts, descending.
    pub alpha_grid: Vec<f64>,
    /// Weight-smoothing penalties; may include `inf` for the flat smoother.
    pub lambda_grid: Vec<f64>,
    /// Forgetting factor of the discounted MAE that picks the penalty.
    pub rho: f64,
    /// Unscored warm-up days at the head of the rolling study.
    pub burn_in: usize,
    /// Days scored by the greedy expert selection.
    pub validation: usize,
    /// Cap on the selected pool size.
    pub m_max: usize,
    /// Days between issuing a forecast and its outcome feeding the update.
    pub update_lag: usize,
    pub eta_variant: EtaVariant,
    /// Clip-and-renormalize smoothed weights back onto the simplex.
    pub simplex_repair: bool,
    /// Recurring holiday candidates as `MM-DD`.
    pub holidays: Vec<String>,
    /// Keep observed residuals on top of the holiday-free fit.
    pub preserve_residuals: bool,
    /// Only stochastic consumer is synthetic data generation.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input_csv: PathBuf::new(),
            output_dir: PathBuf::from("out"),
            first_forecast_date: None,
            test_days: 60,
            anchor_hour: 7,
            horizon_min: H_MIN,
            horizon_max: H_MAX,
            window_days: WINDOW_DAYS.to_vec(),
            families: default_families(),
            scales: default_scales(),
            alpha_grid: experts::lasso_hd::alpha_grid(),
            lambda_grid: default_lambda_grid(),
            rho: 0.01,
            burn_in: 30,
            validation: 60,
            m_max: 40,
            update_lag: 2,
            eta_variant: EtaVariant::HalfRange,
            simplex_repair: true,
            holidays: default_holidays(),
            preserve_residuals: false,
            seed: 1,
        }
    }
}

/// Partial document for layering: only the fields present in the source are
/// applied, everything else keeps its current value. Field set must mirror
/// [`PipelineConfig`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigOverlay {
    pub input_csv: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub first_forecast_date: Option<NaiveDate>,
    pub test_days: Option<usize>,
    pub anchor_hour: Option<u32>,
    pub horizon_min: Option<u32>,
    pub horizon_max: Option<u32>,
    pub window_days: Option<Vec<u32>>,
    pub families: Option<Vec<String>>,
    pub scales: Option<Vec<String>>,
    pub alpha_grid: Option<Vec<f64>>,
    pub lambda_grid: Option<Vec<f64>>,
    pub rho: Option<f64>,
    pub burn_in: Option<usize>,
    pub validation: Option<usize>,
    pub m_max: Option<usize>,
    pub update_lag: Option<usize>,
    pub eta_variant: Option<EtaVariant>,
    pub simplex_repair: Option<bool>,
    pub holidays: Option<Vec<String>>,
    pub preserve_residuals: Option<bool>,
    pub seed: Option<u64>,
}

macro_rules! overlay {
    ($self:ident, $cfg:ident, $($field:ident),* $(,)?) => {
        $(if let Some(v) = $self.$field { $cfg.$field = v; })*
    };
}

impl ConfigOverlay {
    pub fn parse(text: &str) -> Result<ConfigOverlay> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ConfigOverlay> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn apply(self, cfg: &mut PipelineConfig) {
        overlay!(
            self, cfg, input_csv, output_dir, test_days, anchor_hour, horizon_min, horizon_max,
            window_days, families, scales, alpha_grid, lambda_grid, rho, burn_in, validation,
            m_max, update_lag, eta_variant, simplex_repair, holidays, preserve_residuals, seed,
        );
        // Not covered by the macro: the target field is itself optional.
        if self.first_forecast_date.is_some() {
            cfg.first_forecast_date = self.first_forecast_date;
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        ConfigOverlay::load(path)?.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.input_csv.as_os_str().is_empty() {
            return fail("input_csv is not set".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            return fail("output_dir is not set".into());
        }
        if !(self.anchor_hour == 7 || self.anchor_hour == 8) {
            return fail(format!("anchor_hour {} not supported, use 7 or 8", self.anchor_hour));
        }
        if (self.horizon_min, self.horizon_max) != (H_MIN, H_MAX) {
            return fail(format!(
                "horizon span {}..{} unsupported; the panel layout is fixed to {H_MIN}..{H_MAX}",
                self.horizon_min, self.horizon_max
            ));
        }
        if self.test_days == 0 {
            return fail("test_days must be positive".into());
        }
        if self.burn_in + self.validation == 0 {
            return fail("burn_in + validation must be positive".into());
        }
        if self.m_max == 0 {
            return fail("m_max must be positive".into());
        }
        if self.update_lag < 2 {
            return fail(format!(
                "update_lag {} reads the future: day-ahead targets only complete after the next anchor",
                self.update_lag
            ));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return fail(format!("rho {} outside [0, 1)", self.rho));
        }
        if self.window_days.is_empty() {
            return fail("window_days is empty".into());
        }
        if self.families.is_empty() || self.scales.is_empty() {
            return fail("families and scales must be nonempty".into());
        }
        if self.alpha_grid.is_empty() {
            return fail("alpha_grid is empty".into());
        }
        if self.alpha_grid.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return fail("alpha_grid entries must be positive and finite".into());
        }
        if self.alpha_grid.windows(2).any(|w| w[0] <= w[1]) {
            return fail("alpha_grid must be strictly descending".into());
        }
        if self.lambda_grid.is_empty() {
            return fail("lambda_grid is empty".into());
        }
        if self.lambda_grid.iter().any(|l| l.is_nan() || *l < 0.0) {
            return fail("lambda_grid entries must be nonnegative".into());
        }
        self.expert_pool()?;
        self.holiday_dates()?;
        Ok(())
    }

    /// Families x windows x scales, family-major like the full default pool.
    pub fn expert_pool(&self) -> Result<Vec<ExpertId>> {
        let mut pool = Vec::new();
        for name in &self.families {
            let family = ExpertFamily::parse(name)?;
            for &window_days in &self.window_days {
                if window_days < 2 {
                    return Err(Error::Config(format!(
                        "calibration window of {window_days} days is too short"
                    )));
                }
                for name in &self.scales {
                    let scale = TargetScale::parse(name)?;
                    pool.push(ExpertId { family, window_days, scale });
                }
            }
        }
        Ok(pool)
    }

    pub fn holiday_dates(&self) -> Result<Vec<HolidayDate>> {
        parse_holiday_specs(&self.holidays)
    }

    pub fn holiday_config(&self) -> Result<HolidayConfig> {
        Ok(HolidayConfig {
            candidates: self.holiday_dates()?,
            preserve_residuals: self.preserve_residuals,
            ..HolidayConfig::default()
        })
    }

    pub fn combiner_config(&self) -> CombinerConfig {
        CombinerConfig {
            lambdas: self.lambda_grid.clone(),
            rho: self.rho,
            repair: self.simplex_repair,
            update_lag: self.update_lag,
            boa: BoaConfig { eta_variant: self.eta_variant, ..BoaConfig::default() },
        }
    }

    pub fn selection_config(&self) -> SelectionConfig {
        SelectionConfig { burn_in: self.burn_in, validation: self.validation, m_max: self.m_max }
    }

    /// Days the panel must cover: warm-up plus the scored span.
    /// Days between the selection window and the first test day; the last
    /// validation outcome only completes this much later.
    pub fn buffer_days(&self) -> usize {
        self.update_lag.saturating_sub(1)
    }

    pub fn panel_days(&self) -> usize {
        self.burn_in + self.validation + self.buffer_days() + self.test_days
    }

    /// First issue day of the panel, the full warmup before the first scored
    /// day: burn-in, validation, and the outcome buffer.
    pub fn first_panel_day(&self) -> Result<NaiveDate> {
        let first = self
            .first_forecast_date
            .ok_or_else(|| Error::Config("first_forecast_date is not set".into()))?;
        let warmup = self.burn_in + self.validation + self.buffer_days();
        Ok(first - chrono::Duration::days(warmup as i64))
    }

    pub fn issue_days(&self) -> Result<Vec<NaiveDate>> {
        let start = self.first_panel_day()?;
        Ok((0..self.panel_days()).map(|d| start + chrono::Duration::days(d as i64)).collect())
    }

    /// Canonical textual form: full TOML in declaration order.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex digest of the canonical form plus the adjusted-data fingerprint;
    /// keys the expert-panel cache.
    pub fn panel_cache_key(&self, data_fingerprint: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical().as_bytes());
        hasher.update(b"\n");
        hasher.update(data_fingerprint.as_bytes());
        hex(&hasher.finalize())
    }
}

/// Parses recurring "MM-DD" date specs.
pub fn parse_holiday_specs(specs: &[String]) -> Result<Vec<HolidayDate>> {
    specs
        .iter()
        .map(|s| {
            let parts: Vec<&str> = s.split('-').collect();
            let bad = || Error::Config(format!("holiday `{s}` is not MM-DD"));
            if parts.len() != 2 {
                return Err(bad());
            }
            let month: u32 = parts[0].parse().map_err(|_| bad())?;
            let day: u32 = parts[1].parse().map_err(|_| bad())?;
            // 2000 is a leap year, so 02-29 passes.
            NaiveDate::from_ymd_opt(2000, month, day).ok_or_else(bad)?;
            Ok((month, day))
        })
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
