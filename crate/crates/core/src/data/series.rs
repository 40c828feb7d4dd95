//! Hourly multi-channel series on a gapless UTC-naive grid. Missing values
//! are stored as NaN; the hourly grid itself never has holes.

use chrono::{Duration, NaiveDateTime};
use indexmap::IndexMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone)]
pub struct HourlySeries {
    start: NaiveDateTime,
    len: usize,
    channels: IndexMap<String, Vec<f64>>,
}

impl HourlySeries {
    pub fn new(start: NaiveDateTime, len: usize) -> Self {
        HourlySeries {
            start,
            len,
            channels: IndexMap::new(),
        }
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn timestamp(&self, idx: usize) -> NaiveDateTime {
        self.start + Duration::hours(idx as i64)
    }

    pub fn end(&self) -> NaiveDateTime {
        self.timestamp(self.len.saturating_sub(1))
    }

    /// Grid index of `t`, if it falls on the series range.
    pub fn index_of(&self, t: NaiveDateTime) -> Option<usize> {
        let h = (t - self.start).num_hours();
        if t - self.start != Duration::hours(h) {
            return None; // not on the hourly grid
        }
        if h < 0 || h as usize >= self.len {
            return None;
        }
        Some(h as usize)
    }

    pub fn has_channel(&self, name: &str) -> bool {
        self.channels.contains_key(name)
    }

    pub fn channel(&self, name: &str) -> Result<&[f64]> {
        self.channels
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.channels.keys().map(String::as_str)
    }

    /// Adds a channel; replaces an existing one of the same name.
    pub fn insert_channel(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len {
            return Err(Error::Data(format!(
                "channel `{name}` has {} values, series length is {}",
                values.len(),
                self.len
            )));
        }
        self.channels.insert(name.to_string(), values);
        Ok(())
    }

    /// Copy of the first `new_len` hours, all channels.
    pub fn truncated(&self, new_len: usize) -> Result<HourlySeries> {
        if new_len > self.len {
            return Err(Error::Data(format!(
                "cannot truncate length-{} series to {new_len}",
                self.len
            )));
        }
        let mut out = HourlySeries::new(self.start, new_len);
        for (name, values) in &self.channels {
            out.channels.insert(name.clone(), values[..new_len].to_vec());
        }
        Ok(out)
    }

    /// Reads `timestamp` plus one numeric column per channel. Empty fields
    /// become NaN. Timestamps must be hourly, increasing, and gapless.
    pub fn read_csv(path: &Path) -> Result<HourlySeries> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.is_empty() || &headers[0] != "timestamp" {
            return Err(Error::Data(format!(
                "{}: first column must be `timestamp`",
                path.display()
            )));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        let mut start: Option<NaiveDateTime> = None;
        let mut expected: Option<NaiveDateTime> = None;
        for record in reader.records() {
            let record = record?;
            let ts = NaiveDateTime::parse_from_str(&record[0], TIMESTAMP_FORMAT)
                .map_err(|e| Error::Data(format!("bad timestamp `{}`: {e}", &record[0])))?;
            match expected {
                None => start = Some(ts),
                Some(want) if ts != want => {
                    return Err(Error::Data(format!(
                        "{}: expected timestamp {want}, found {ts}; the hourly grid must be gapless",
                        path.display()
                    )));
                }
                _ => {}
            }
            expected = Some(ts + Duration::hours(1));
            for (i, field) in record.iter().skip(1).enumerate() {
                let v = if field.is_empty() {
                    f64::NAN
                } else {
                    field.parse::<f64>().map_err(|e| {
                        Error::Data(format!("bad value `{field}` in column `{}`: {e}", names[i]))
                    })?
                };
                columns[i].push(v);
            }
        }
        let start = start.ok_or_else(|| Error::Data(format!("{}: no rows", path.display())))?;
        let len = columns.first().map_or(0, Vec::len);
        let mut series = HourlySeries::new(start, len);
        for (name, col) in names.into_iter().zip(columns) {
            series.channels.insert(name, col);
        }
        Ok(series)
    }

    /// Writes all channels; NaN becomes an empty field.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_channels(path, &self.channels.keys().cloned().collect::<Vec<_>>())
    }

    pub fn write_csv_channels(&self, path: &Path, names: &[String]) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header = vec!["timestamp".to_string()];
        header.extend(names.iter().cloned());
        writer.write_record(&header)?;
        let columns: Vec<&[f64]> = names
            .iter()
            .map(|n| self.channel(n))
            .collect::<Result<_>>()?;
        for i in 0..self.len {
            let mut record = vec![self.timestamp(i).format(TIMESTAMP_FORMAT).to_string()];
            for col in &columns {
                let v = col[i];
                record.push(if v.is_nan() { String::new() } else { format!("{v}") });
            }
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn start() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    #[test]
    fn index_round_trips() {
        let s = HourlySeries::new(start(), 100);
        for i in [0usize, 1, 50, 99] {
            assert_eq!(s.index_of(s.timestamp(i)), Some(i));
        }
        assert_eq!(s.index_of(start() - Duration::hours(1)), None);
        assert_eq!(s.index_of(s.timestamp(99) + Duration::hours(1)), None);
        assert_eq!(s.index_of(start() + Duration::minutes(30)), None);
    }

    #[test]
    fn csv_round_trip_preserves_missing() {
        let mut s = HourlySeries::new(start(), 4);
        s.insert_channel("load", vec![1.0, f64::NAN, 3.0, 4.5]).unwrap();
        s.insert_channel("temperature", vec![-1.25, 0.0, f64::NAN, 2.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        s.write_csv(&path).unwrap();
        let back = HourlySeries::read_csv(&path).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back.start(), start());
        let load = back.channel("load").unwrap();
        assert_eq!(load[0], 1.0);
        assert!(load[1].is_nan());
        assert_eq!(load[3], 4.5);
        let temp = back.channel("temperature").unwrap();
        assert!(temp[2].is_nan());
    }

    #[test]
    fn gapped_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gap.csv");
        std::fs::write(
            &path,
            "timestamp,load\n2020-01-01T00:00:00,1\n2020-01-01T02:00:00,2\n",
        )
        .unwrap();
        assert!(HourlySeries::read_csv(&path).is_err());
    }
}
