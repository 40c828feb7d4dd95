//! Command line driver for the load forecasting pipeline.
//!
//! Stages can run one at a time (each reads what the previous one wrote to
//! the output directory) or all at once with `run-all`. Settings resolve in
//! three layers: built-in defaults, then command line flags, then the
//! `--config` file, which has the last word.

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use loadcast_core::boa::EtaVariant;
use loadcast_core::config::ConfigOverlay;
use loadcast_core::data::HourlySeries;
use loadcast_core::pipeline::{self, RunSummary};
use loadcast_core::synth::{self, SynthConfig};
use loadcast_core::{PipelineConfig, Result};

#[derive(Parser)]
#[command(name = "loadcast", version, about = "Day-ahead load forecasting with online expert aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align the raw CSV onto a complete hourly grid and add derived channels.
    Preprocess(StageArgs),
    /// Remove holiday dips from the load series ahead of expert training.
    AdjustHolidays(StageArgs),
    /// Fit every expert at every issue day and cache the forecast panel.
    TrainExperts(StageArgs),
    /// Select a pool from the cached panel and combine it online.
    Aggregate(StageArgs),
    /// All four stages in order.
    RunAll(StageArgs),
    /// Score a forecast CSV against an actuals CSV.
    Report(ReportArgs),
    /// Write a synthetic hourly input CSV for trials and benchmarks.
    Synth(SynthArgs),
}

/// Flags shared by every pipeline stage; each one overrides the built-in
/// default of the config field with the same name. Unset flags leave the
/// default alone, and `--config` overrides both.
#[derive(Args)]
struct StageArgs {
    /// TOML settings file applied on top of flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input_csv: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// First issue day of the test span (YYYY-MM-DD).
    #[arg(long)]
    first_forecast_date: Option<NaiveDate>,
    #[arg(long)]
    test_days: Option<usize>,
    #[arg(long)]
    anchor_hour: Option<u32>,
    #[arg(long)]
    horizon_min: Option<u32>,
    #[arg(long)]
    horizon_max: Option<u32>,
    /// Calibration window lengths in days.
    #[arg(long, value_delimiter = ',')]
    window_days: Option<Vec<u32>>,
    /// Expert families (stl_es, additive, ar_long, lasso_hd).
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    /// Target scales (log, level).
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<String>>,
    /// Penalty grid for the high-dimensional lasso expert, descending.
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Option<Vec<f64>>,
    /// Weight smoothing penalties searched online ("inf" allowed).
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Forgetting factor of the discounted MAE that picks the penalty.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    validation: Option<usize>,
    /// Cap on the forward-selected pool size.
    #[arg(long)]
    m_max: Option<usize>,
    /// Days between issuing a forecast and learning its outcome.
    #[arg(long)]
    update_lag: Option<usize>,
    /// Learning-rate cap: half_range or inverse_range.
    #[arg(long, value_parser = parse_eta)]
    eta_variant: Option<EtaVariant>,
    /// Clip and renormalize smoothed weights back onto the simplex.
    #[arg(long)]
    simplex_repair: Option<bool>,
    /// Recurring holiday dates as MM-DD.
    #[arg(long, value_delimiter = ',')]
    holidays: Option<Vec<String>>,
    /// Keep observed residuals on top of the holiday-free fit.
    #[arg(long)]
    preserve_residuals: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_eta(s: &str) -> std::result::Result<EtaVariant, String> {
    match s {
        "half_range" => Ok(EtaVariant::HalfRange),
        "inverse_range" => Ok(EtaVariant::InverseRange),
        other => Err(format!("unknown learning-rate variant `{other}` (expected half_range or inverse_range)")),
    }
}

impl StageArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        self.overlay().apply(&mut cfg);
        if let Some(path) = &self.config {
            ConfigOverlay::load(path)?.apply(&mut cfg);
        }
        Ok(cfg)
    }

    fn overlay(&self) -> ConfigOverlay {
        ConfigOverlay {
            input_csv: self.input_csv.clone(),
            output_dir: self.output_dir.clone(),
            first_forecast_date: self.first_forecast_date,
            test_days: self.test_days,
            anchor_hour: self.anchor_hour,
            horizon_min: self.horizon_min,
            horizon_max: self.horizon_max,
            window_days: self.window_days.clone(),
            families: self.families.clone(),
            scales: self.scales.clone(),
            alpha_grid: self.alpha_grid.clone(),
            lambda_grid: self.lambda_grid.clone(),
            rho: self.rho,
            burn_in: self.burn_in,
            validation: self.validation,
            m_max: self.m_max,
            update_lag: self.update_lag,
            eta_variant: self.eta_variant,
            simplex_repair: self.simplex_repair,
            holidays: self.holidays.clone(),
            preserve_residuals: self.preserve_residuals,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct ReportArgs {
    /// Forecast CSV as written by the aggregate stage.
    #[arg(long)]
    forecast: PathBuf,
    /// Hourly CSV holding a `load` channel with the actuals.
    #[arg(long)]
    actuals: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Where to write the generated CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 730)]
    days: usize,
    #[arg(long, default_value = "2019-01-07")]
    start: NaiveDate,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Recurring dipped dates as MM-DD; empty for none.
    #[arg(long, value_delimiter = ',')]
    holidays: Option<Vec<String>>,
    /// Multiplicative load effect on those dates (-0.2 = a 20% dip).
    #[arg(long, default_value_t = -0.2, allow_hyphen_values = true)]
    holiday_effect: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(args) => {
            let cfg = args.resolve()?;
            cfg.validate()?;
            let path = pipeline::run_preprocess(&cfg)?;
            println!("clean series written to {}", path.display());
        }
        Command::AdjustHolidays(args) => {
            let cfg = args.resolve()?;
            cfg.validate()?;
            let path = pipeline::run_adjust(&cfg)?;
            println!("adjusted series written to {}", path.display());
        }
        Command::TrainExperts(args) => {
            let cfg = args.resolve()?;
            cfg.validate()?;
            let stage = pipeline::run_train_experts(&cfg)?;
            let source = if stage.from_cache { "cache" } else { "fresh fits" };
            println!(
                "panel ready from {source}: {} experts x {} issue days",
                stage.panel.n_experts(),
                stage.panel.n_days()
            );
        }
        Command::Aggregate(args) => {
            let cfg = args.resolve()?;
            cfg.validate()?;
            let stage = pipeline::run_train_experts(&cfg)?;
            let summary = pipeline::run_aggregate(&cfg, &stage)?;
            print_summary(&cfg, &summary);
        }
        Command::RunAll(args) => {
            let cfg = args.resolve()?;
            let summary = pipeline::run(&cfg)?;
            print_summary(&cfg, &summary);
        }
        Command::Report(args) => {
            let forecasts = pipeline::read_forecast_csv(&args.forecast)?;
            let series = HourlySeries::read_csv(&args.actuals)?;
            let report = pipeline::evaluate_mae(&forecasts, &series)?;
            for (day, mae) in &report.daily {
                println!("{day}  {mae:.6}");
            }
            println!("aggregate MAE over {} days: {:.6}", report.daily.len(), report.aggregate);
        }
        Command::Synth(args) => {
            let mut cfg = SynthConfig { days: args.days, start: args.start, seed: args.seed, ..SynthConfig::default() };
            cfg.holiday_effect = args.holiday_effect;
            if let Some(spec) = &args.holidays {
                cfg.holidays = loadcast_core::config::parse_holiday_specs(spec)?;
            }
            let series = synth::generate(&cfg);
            if let Some(dir) = args.out.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir).map_err(loadcast_core::Error::from)?;
                }
            }
            series.write_csv(&args.out)?;
            println!("synthetic series written to {} ({} days)", args.out.display(), args.days);
        }
    }
    Ok(())
}

fn print_summary(cfg: &PipelineConfig, summary: &RunSummary) {
    println!(
        "pool of {} selected from {} candidates; validation MAE {:.4}",
        summary.chosen_m, summary.candidate_experts, summary.validation_mae
    );
    for name in &summary.selected_experts {
        println!("  {name}");
    }
    println!(
        "test MAE {:.4} over {} days from {}",
        summary.test_mae, summary.test_days, summary.first_test_day
    );
    println!("artifacts in {}", cfg.output_dir.display());
}
