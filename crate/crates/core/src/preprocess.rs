//! Input cleaning and derived channels: gap interpolation, wind direction
//! decomposition, and trailing daily rolling means.

use crate::data::HourlySeries;
use crate::error::{Error, Result};

/// Linearly interpolates interior NaN runs in place. Leading or trailing
/// missing values cannot be interpolated and are an error.
pub fn interpolate_gaps(values: &mut [f64], channel: &str) -> Result<()> {
    let n = values.len();
    if n == 0 || values.iter().all(|v| v.is_nan()) {
        return Err(Error::Data(format!("channel `{channel}` has no observed values")));
    }
    if values[0].is_nan() {
        let end = values.iter().position(|v| !v.is_nan()).unwrap();
        return Err(Error::Data(format!(
            "channel `{channel}`: leading missing span [0, {})",
            end
        )));
    }
    if values[n - 1].is_nan() {
        let start = n - values.iter().rev().position(|v| !v.is_nan()).unwrap();
        return Err(Error::Data(format!(
            "channel `{channel}`: trailing missing span [{start}, {n})"
        )));
    }
    let mut i = 1;
    while i < n {
        if values[i].is_nan() {
            let start = i; // first missing index; values[start-1] is observed
            let mut end = i;
            while values[end].is_nan() {
                end += 1;
            }
            let left = values[start - 1];
            let right = values[end];
            let span = (end - start + 1) as f64;
            for (step, v) in values[start..end].iter_mut().enumerate() {
                *v = left + (right - left) * (step as f64 + 1.0) / span;
            }
            i = end;
        }
        i += 1;
    }
    Ok(())
}

/// North-south and east-west components of a wind direction in degrees.
pub fn wind_components(dir_deg: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let ns = dir_deg.iter().map(|d| (d.to_radians()).cos()).collect();
    let ew = dir_deg.iter().map(|d| (d.to_radians()).sin()).collect();
    (ns, ew)
}

/// Trailing 24-hour mean; the first 23 entries use the expanding prefix mean.
pub fn rolling_daily_mean(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= 24 {
            sum -= values[i - 24];
        }
        let window = (i + 1).min(24) as f64;
        out.push(sum / window);
    }
    out
}

/// Suffix used for rolling-mean channels.
pub const ROLLING_SUFFIX: &str = "_rm24";

/// Cleans every channel and derives wind components and rolling means for
/// each weather channel (actuals and provided day-ahead forecasts alike).
pub fn run(series: &HourlySeries) -> Result<HourlySeries> {
    let mut out = series.clone();
    let names: Vec<String> = series.channel_names().map(str::to_string).collect();
    for name in &names {
        let mut values = series.channel(name)?.to_vec();
        interpolate_gaps(&mut values, name)?;
        out.insert_channel(name, values)?;
    }
    // Wind direction decomposes into components; the raw angle is kept.
    for name in &names {
        if let Some(prefix) = name.strip_suffix("wind_dir_deg") {
            let (ns, ew) = wind_components(out.channel(name)?);
            out.insert_channel(&format!("{prefix}wind_ns"), ns)?;
            out.insert_channel(&format!("{prefix}wind_ew"), ew)?;
        } else if let Some(rest) = name.strip_suffix("_fc") {
            if rest.ends_with("wind_dir_deg") {
                let (ns, ew) = wind_components(out.channel(name)?);
                out.insert_channel("wind_ns_fc", ns)?;
                out.insert_channel("wind_ew_fc", ew)?;
            }
        }
    }
    let derived: Vec<String> = out
        .channel_names()
        .filter(|n| *n != "load" && !n.ends_with(ROLLING_SUFFIX))
        .map(str::to_string)
        .collect();
    for name in derived {
        let rm = rolling_daily_mean(out.channel(&name)?);
        out.insert_channel(&format!("{name}{ROLLING_SUFFIX}"), rm)?;
    }
    Ok(out)
}
