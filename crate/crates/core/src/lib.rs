//! Core library for day-ahead electricity load forecasting: data handling,
//! holiday adjustment, a pool of expert forecasters over rolling calibration
//! windows, and online aggregation of their forecasts.

pub mod boa;
pub mod config;
pub mod data;
pub mod design;
pub mod error;
pub mod experts;
pub mod holiday;
pub mod lasso;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod smoothing;
pub mod splines;
pub mod synth;

pub use data::{ExpertFamily, ExpertId, ExpertPanel, ForecastTask, HourlySeries, TargetScale};
pub use config::PipelineConfig;
pub use error::{Error, Result};
