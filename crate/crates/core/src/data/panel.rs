//! The expert panel: one forecast per (issue day, horizon, expert), written
//! once by the training stage and read by the aggregation stage. Gaps are
//! explicit NaN entries; stored forecasts must be finite and positive.

use chrono::{Datelike, NaiveDate};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::task::N_HORIZONS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExpertFamily {
    StlEs,
    ArP,
    Additive,
    LassoHd,
}

impl ExpertFamily {
    pub const ALL: [ExpertFamily; 4] = [
        ExpertFamily::StlEs,
        ExpertFamily::ArP,
        ExpertFamily::Additive,
        ExpertFamily::LassoHd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExpertFamily::StlEs => "stl_es",
            ExpertFamily::ArP => "ar_p",
            ExpertFamily::Additive => "additive",
            ExpertFamily::LassoHd => "lasso_hd",
        }
    }

    pub fn parse(s: &str) -> Result<ExpertFamily> {
        match s {
            "stl_es" => Ok(ExpertFamily::StlEs),
            "ar_p" => Ok(ExpertFamily::ArP),
            "additive" => Ok(ExpertFamily::Additive),
            "lasso_hd" => Ok(ExpertFamily::LassoHd),
            other => Err(Error::Data(format!("unknown expert family `{other}`"))),
        }
    }
}

/// Whether an expert models the log of the adjusted load or its level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TargetScale {
    Log,
    Level,
}

impl TargetScale {
    pub fn name(&self) -> &'static str {
        match self {
            TargetScale::Log => "log",
            TargetScale::Level => "level",
        }
    }

    pub fn parse(s: &str) -> Result<TargetScale> {
        match s {
            "log" => Ok(TargetScale::Log),
            "level" => Ok(TargetScale::Level),
            other => Err(Error::Data(format!("unknown target scale `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExpertId {
    pub family: ExpertFamily,
    pub window_days: u32,
    pub scale: TargetScale,
}

impl fmt::Display for ExpertId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-w{:04}-{}", self.family.name(), self.window_days, self.scale.name())
    }
}

impl ExpertId {
    pub fn parse(s: &str) -> Result<ExpertId> {
        let parts: Vec<&str> = s.split('-').collect();
        if parts.len() != 3 || !parts[1].starts_with('w') {
            return Err(Error::Data(format!("bad expert id `{s}`")));
        }
        let window_days: u32 = parts[1][1..]
            .parse()
            .map_err(|_| Error::Data(format!("bad expert id `{s}`")))?;
        Ok(ExpertId {
            family: ExpertFamily::parse(parts[0])?,
            window_days,
            scale: TargetScale::parse(parts[2])?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExpertPanel {
    issue_days: Vec<NaiveDate>,
    experts: Vec<ExpertId>,
    /// Flat [day][horizon][expert], NaN = gap.
    values: Vec<f64>,
    /// One flag per (day, expert); a slot may be written exactly once.
    written: Vec<bool>,
}

impl ExpertPanel {
    pub fn new(issue_days: Vec<NaiveDate>, experts: Vec<ExpertId>) -> ExpertPanel {
        let n = issue_days.len() * N_HORIZONS * experts.len();
        let slots = issue_days.len() * experts.len();
        ExpertPanel {
            issue_days,
            experts,
            values: vec![f64::NAN; n],
            written: vec![false; slots],
        }
    }

    pub fn n_days(&self) -> usize {
        self.issue_days.len()
    }

    pub fn n_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn issue_days(&self) -> &[NaiveDate] {
        &self.issue_days
    }

    pub fn experts(&self) -> &[ExpertId] {
        &self.experts
    }

    pub fn expert_index(&self, id: ExpertId) -> Option<usize> {
        self.experts.iter().position(|e| *e == id)
    }

    pub fn day_index(&self, day: NaiveDate) -> Option<usize> {
        self.issue_days.iter().position(|d| *d == day)
    }

    fn offset(&self, day: usize, h: usize, k: usize) -> usize {
        (day * N_HORIZONS + h) * self.experts.len() + k
    }

    /// Writes the 24 forecasts of one expert for one issue day. Non-finite or
    /// non-positive values are recorded as a gap for the whole day.
    pub fn set_forecast(&mut self, day: usize, expert: usize, values: &[f64]) -> Result<()> {
        if values.len() != N_HORIZONS {
            return Err(Error::Data(format!(
                "expected {N_HORIZONS} forecasts, got {}",
                values.len()
            )));
        }
        self.claim_slot(day, expert)?;
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            log::warn!(
                "expert {} day {}: non-positive or non-finite forecast, recording a gap",
                self.experts[expert],
                self.issue_days[day]
            );
            return Ok(());
        }
        for (h, v) in values.iter().enumerate() {
            let o = self.offset(day, h, expert);
            self.values[o] = *v;
        }
        Ok(())
    }

    /// Marks one (day, expert) slot as a gap.
    pub fn set_gap(&mut self, day: usize, expert: usize) -> Result<()> {
        self.claim_slot(day, expert)
    }

    fn claim_slot(&mut self, day: usize, expert: usize) -> Result<()> {
        let slot = day * self.experts.len() + expert;
        if self.written[slot] {
            return Err(Error::Data(format!(
                "panel slot (day {}, expert {}) written twice",
                self.issue_days[day], self.experts[expert]
            )));
        }
        self.written[slot] = true;
        Ok(())
    }

    pub fn value(&self, day: usize, h: usize, expert: usize) -> f64 {
        self.values[self.offset(day, h, expert)]
    }

    pub fn is_gap(&self, day: usize, expert: usize) -> bool {
        self.value(day, 0, expert).is_nan()
    }

    /// Forecasts of all experts for one (day, horizon): a length-K slice.
    pub fn row(&self, day: usize, h: usize) -> &[f64] {
        let o = self.offset(day, h, 0);
        &self.values[o..o + self.experts.len()]
    }

    /// All forecasts of one issue day, horizon-major: length 24 * K.
    pub fn day_block(&self, day: usize) -> &[f64] {
        let o = self.offset(day, 0, 0);
        &self.values[o..o + N_HORIZONS * self.experts.len()]
    }

    /// Restriction of the panel to a contiguous run of issue days.
    pub fn select_days(&self, range: std::ops::Range<usize>) -> ExpertPanel {
        debug_assert!(range.end <= self.n_days());
        let kk = self.experts.len();
        let mut out =
            ExpertPanel::new(self.issue_days[range.clone()].to_vec(), self.experts.clone());
        let (vo, wo) = (self.offset(range.start, 0, 0), range.start * kk);
        let (vn, wn) = (out.values.len(), out.written.len());
        out.values.copy_from_slice(&self.values[vo..vo + vn]);
        out.written.copy_from_slice(&self.written[wo..wo + wn]);
        out
    }

    /// Restriction of the panel to an expert subset, in the given order.
    pub fn select_experts(&self, subset: &[usize]) -> ExpertPanel {
        let experts: Vec<ExpertId> = subset.iter().map(|&k| self.experts[k]).collect();
        let mut out = ExpertPanel::new(self.issue_days.clone(), experts);
        for d in 0..self.n_days() {
            for (new_k, &old_k) in subset.iter().enumerate() {
                for h in 0..N_HORIZONS {
                    let o = out.offset(d, h, new_k);
                    out.values[o] = self.value(d, h, old_k);
                }
                out.written[d * subset.len() + new_k] = true;
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["issue_day", "horizon", "expert", "value"])?;
        for (d, day) in self.issue_days.iter().enumerate() {
            for h in 0..N_HORIZONS {
                for (k, id) in self.experts.iter().enumerate() {
                    let v = self.value(d, h, k);
                    w.write_record([
                        day.format("%Y-%m-%d").to_string(),
                        (crate::data::task::H_MIN + h as u32).to_string(),
                        id.to_string(),
                        if v.is_nan() { String::new() } else { format!("{v}") },
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    const MAGIC: &'static [u8; 8] = b"LDCPANEL";
    const VERSION: u32 = 1;

    /// Compact cache: magic, version, config hash, dimensions, ids, raw f64s.
    pub fn write_binary(&self, path: &Path, config_hash: &str) -> Result<()> {
        let mut buf: Vec<u8> = Vec::with_capacity(self.values.len() * 8 + 4096);
        buf.extend_from_slice(Self::MAGIC);
        buf.extend_from_slice(&Self::VERSION.to_le_bytes());
        let hash = config_hash.as_bytes();
        buf.extend_from_slice(&(hash.len() as u32).to_le_bytes());
        buf.extend_from_slice(hash);
        buf.extend_from_slice(&(self.issue_days.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.experts.len() as u64).to_le_bytes());
        for d in &self.issue_days {
            buf.extend_from_slice(&(d.num_days_from_ce() as i64).to_le_bytes());
        }
        for e in &self.experts {
            let id = e.to_string();
            buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
        }
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    /// Reads a cache written by `write_binary`; `Ok(None)` when the stored
    /// config hash differs from `expected_hash`.
    pub fn read_binary(path: &Path, expected_hash: &str) -> Result<Option<ExpertPanel>> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > bytes.len() {
                return Err(Error::Cache("truncated panel cache".into()));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        if take(&mut pos, 8)? != Self::MAGIC {
            return Err(Error::Cache("bad panel cache magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        if version != Self::VERSION {
            return Err(Error::Cache(format!("unsupported panel cache version {version}")));
        }
        let hash_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let hash = String::from_utf8_lossy(take(&mut pos, hash_len)?).into_owned();
        if hash != expected_hash {
            return Ok(None);
        }
        let n_days = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        let n_experts = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        let mut issue_days = Vec::with_capacity(n_days);
        for _ in 0..n_days {
            let days = i64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
            let date = NaiveDate::from_num_days_from_ce_opt(days as i32)
                .ok_or_else(|| Error::Cache("bad date in panel cache".into()))?;
            issue_days.push(date);
        }
        let mut experts = Vec::with_capacity(n_experts);
        for _ in 0..n_experts {
            let len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let id = String::from_utf8_lossy(take(&mut pos, len)?).into_owned();
            experts.push(ExpertId::parse(&id)?);
        }
        let mut panel = ExpertPanel::new(issue_days, experts);
        let n_values = panel.values.len();
        for i in 0..n_values {
            panel.values[i] = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        }
        for w in panel.written.iter_mut() {
            *w = true;
        }
        Ok(Some(panel))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn days(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2020, 6, 1).unwrap();
        (0..n).map(|i| d0 + chrono::Duration::days(i as i64)).collect()
    }

    fn two_experts() -> Vec<ExpertId> {
        vec![
            ExpertId { family: ExpertFamily::StlEs, window_days: 56, scale: TargetScale::Log },
            ExpertId { family: ExpertFamily::ArP, window_days: 119, scale: TargetScale::Level },
        ]
    }

    #[test]
    fn rows_expose_expert_values_in_order() {
        let mut p = ExpertPanel::new(days(2), two_experts());
        p.set_forecast(0, 0, &[1.0; 24]).unwrap();
        p.set_forecast(0, 1, &[2.0; 24]).unwrap();
        assert_eq!(p.row(0, 5), &[1.0, 2.0]);
        assert!(p.row(1, 0).iter().all(|v| v.is_nan()));
    }

    #[test]
    fn double_writes_are_rejected() {
        let mut p = ExpertPanel::new(days(1), two_experts());
        p.set_forecast(0, 0, &[1.0; 24]).unwrap();
        assert!(p.set_forecast(0, 0, &[1.0; 24]).is_err());
        assert!(p.set_gap(0, 0).is_err());
    }

    #[test]
    fn non_positive_forecasts_become_gaps() {
        let mut p = ExpertPanel::new(days(1), two_experts());
        let mut vals = [1.0; 24];
        vals[7] = -0.5;
        p.set_forecast(0, 0, &vals).unwrap();
        assert!(p.is_gap(0, 0));
    }

    #[test]
    fn binary_cache_round_trips_and_checks_hash() {
        let mut p = ExpertPanel::new(days(3), two_experts());
        for d in 0..3 {
            p.set_forecast(d, 0, &[100.0 + d as f64; 24]).unwrap();
            p.set_gap(d, 1).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.bin");
        p.write_binary(&path, "abc123").unwrap();
        let back = ExpertPanel::read_binary(&path, "abc123").unwrap().unwrap();
        assert_eq!(back.issue_days(), p.issue_days());
        assert_eq!(back.experts(), p.experts());
        assert_eq!(back.value(2, 10, 0), 102.0);
        assert!(back.is_gap(1, 1));
        assert!(ExpertPanel::read_binary(&path, "other").unwrap().is_none());
    }

    #[test]
    fn expert_ids_parse_their_display_form() {
        for id in two_experts() {
            assert_eq!(ExpertId::parse(&id.to_string()).unwrap(), id);
        }
    }
}
