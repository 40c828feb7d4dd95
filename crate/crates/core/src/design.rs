//! Design matrix construction for the high-dimensional regressions: signed
//! lag columns, quantile-ReLU weather transforms, pairwise interactions,
//! calendar dummies, periodic annual splines, and scaled holiday dummies.
//! Columns carry a group tag so fits can address whole blocks (for example
//! to zero the holiday block after fitting).

use chrono::{Datelike, NaiveDateTime};
use std::sync::Arc;

use crate::data::calendar::{annual_phase, hour_of_day, hour_of_week};
use crate::splines::AnnualBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnGroup {
    Lags,
    ReluWeather,
    Interactions,
    DayDummies,
    CdayDummies,
    WeekDummies,
    CweekDummies,
    AnnualSplines,
    HolidayDummies,
}

impl ColumnGroup {
    pub const ALL: [ColumnGroup; 9] = [
        ColumnGroup::Lags,
        ColumnGroup::ReluWeather,
        ColumnGroup::Interactions,
        ColumnGroup::DayDummies,
        ColumnGroup::CdayDummies,
        ColumnGroup::WeekDummies,
        ColumnGroup::CweekDummies,
        ColumnGroup::AnnualSplines,
        ColumnGroup::HolidayDummies,
    ];
}

#[derive(Debug, Clone)]
pub enum ColumnData {
    Dense(Vec<f64>),
    /// Row indices (sorted) with their values; absent rows are zero.
    Sparse { indices: Vec<u32>, values: Vec<f64> },
    /// Window into a shared backing series starting at `offset`; used for
    /// lag columns over contiguous row ranges so shifts cost no memory.
    Shifted { source: usize, offset: usize },
}

#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub group: ColumnGroup,
    pub data: ColumnData,
}

/// Borrowed view of one column, unified over the storage kinds.
#[derive(Debug, Clone, Copy)]
pub enum ColRef<'a> {
    Slice(&'a [f64]),
    Sparse(&'a [u32], &'a [f64]),
}

/// Unrolled dot product; four independent accumulators so the reduction
/// pipelines, with a fixed summation order for reproducibility.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        acc[0] += xa[0] * xb[0];
        acc[1] += xa[1] * xb[1];
        acc[2] += xa[2] * xb[2];
        acc[3] += xa[3] * xb[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (xa, xb) in ca.remainder().iter().zip(cb.remainder()) {
        s += xa * xb;
    }
    s
}

impl<'a> ColRef<'a> {
    pub fn sum(&self) -> f64 {
        match self {
            ColRef::Slice(s) => s.iter().sum(),
            ColRef::Sparse(_, v) => v.iter().sum(),
        }
    }

    pub fn sumsq(&self) -> f64 {
        match self {
            ColRef::Slice(s) => dot(s, s),
            ColRef::Sparse(_, v) => dot(v, v),
        }
    }

    pub fn dot(&self, u: &[f64]) -> f64 {
        match self {
            ColRef::Slice(s) => dot(s, u),
            ColRef::Sparse(idx, v) => idx
                .iter()
                .zip(v.iter())
                .map(|(&i, &x)| x * u[i as usize])
                .sum(),
        }
    }

    /// `u += a * column`.
    pub fn axpy(&self, a: f64, u: &mut [f64]) {
        match self {
            ColRef::Slice(s) => {
                for (ui, si) in u.iter_mut().zip(s.iter()) {
                    *ui += a * si;
                }
            }
            ColRef::Sparse(idx, v) => {
                for (&i, &x) in idx.iter().zip(v.iter()) {
                    u[i as usize] += a * x;
                }
            }
        }
    }

    pub fn value_at(&self, row: usize) -> f64 {
        match self {
            ColRef::Slice(s) => s[row],
            ColRef::Sparse(idx, v) => match idx.binary_search(&(row as u32)) {
                Ok(p) => v[p],
                Err(_) => 0.0,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct DesignMatrix {
    n_rows: usize,
    columns: Vec<Column>,
    sources: Vec<Arc<Vec<f64>>>,
    row_valid: Vec<bool>,
}

impl DesignMatrix {
    pub fn new(n_rows: usize) -> DesignMatrix {
        DesignMatrix {
            n_rows,
            columns: Vec::new(),
            sources: Vec::new(),
            row_valid: vec![true; n_rows],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn add_source(&mut self, source: Arc<Vec<f64>>) -> usize {
        self.sources.push(source);
        self.sources.len() - 1
    }

    pub fn push_dense(&mut self, name: String, group: ColumnGroup, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.n_rows);
        self.columns.push(Column { name, group, data: ColumnData::Dense(values) });
    }

    pub fn push_sparse(
        &mut self,
        name: String,
        group: ColumnGroup,
        indices: Vec<u32>,
        values: Vec<f64>,
    ) {
        debug_assert_eq!(indices.len(), values.len());
        self.columns.push(Column { name, group, data: ColumnData::Sparse { indices, values } });
    }

    pub fn push_shifted(&mut self, name: String, group: ColumnGroup, source: usize, offset: usize) {
        debug_assert!(offset + self.n_rows <= self.sources[source].len());
        self.columns.push(Column { name, group, data: ColumnData::Shifted { source, offset } });
    }

    pub fn col_ref(&self, j: usize) -> ColRef<'_> {
        match &self.columns[j].data {
            ColumnData::Dense(v) => ColRef::Slice(v),
            ColumnData::Sparse { indices, values } => ColRef::Sparse(indices, values),
            ColumnData::Shifted { source, offset } => {
                ColRef::Slice(&self.sources[*source][*offset..*offset + self.n_rows])
            }
        }
    }

    pub fn value(&self, row: usize, j: usize) -> f64 {
        self.col_ref(j).value_at(row)
    }

    pub fn col_materialize(&self, j: usize) -> Vec<f64> {
        match self.col_ref(j) {
            ColRef::Slice(s) => s.to_vec(),
            ColRef::Sparse(idx, v) => {
                let mut out = vec![0.0; self.n_rows];
                for (&i, &x) in idx.iter().zip(v.iter()) {
                    out[i as usize] = x;
                }
                out
            }
        }
    }

    pub fn group_indices(&self, group: ColumnGroup) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.group == group)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn groups_present(&self) -> Vec<ColumnGroup> {
        ColumnGroup::ALL
            .iter()
            .copied()
            .filter(|g| self.columns.iter().any(|c| c.group == *g))
            .collect()
    }

    pub fn row_valid(&self) -> &[bool] {
        &self.row_valid
    }

    pub fn all_rows_valid(&self) -> bool {
        self.row_valid.iter().all(|v| *v)
    }

    pub fn set_row_invalid(&mut self, row: usize) {
        self.row_valid[row] = false;
    }

    /// `intercept + X b`, accumulated column-wise so zero coefficients of a
    /// sparse fit cost nothing.
    pub fn predict(&self, coefficients: &[f64], intercept: f64) -> Vec<f64> {
        debug_assert_eq!(coefficients.len(), self.n_cols());
        let mut out = vec![intercept; self.n_rows];
        for (j, &b) in coefficients.iter().enumerate() {
            if b != 0.0 {
                self.col_ref(j).axpy(b, &mut out);
            }
        }
        out
    }
}

/// Gathers `values` at absolute indices `rows`.
pub fn gather(values: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&r| values[r]).collect()
}

fn rows_contiguous(rows: &[usize]) -> bool {
    rows.windows(2).all(|w| w[1] == w[0] + 1)
}

/// Appends one column per signed lag `k`: the value of the shared series at
/// `t + k` for each row time `t`. Rows where a lag falls outside the series
/// are flagged unusable. Contiguous row ranges share the backing store.
pub fn add_lag_columns(
    dm: &mut DesignMatrix,
    series: &Arc<Vec<f64>>,
    lags: &[i64],
    rows: &[usize],
) {
    debug_assert_eq!(dm.n_rows(), rows.len());
    let n = series.len() as i64;
    let contiguous = !rows.is_empty() && rows_contiguous(rows);
    let mut source_idx: Option<usize> = None;
    for &k in lags {
        let name = format!("lag{k:+05}");
        let first = rows.first().map_or(0, |&r| r as i64 + k);
        let last = rows.last().map_or(-1, |&r| r as i64 + k);
        if contiguous && first >= 0 && last < n {
            let source = *source_idx.get_or_insert_with(|| dm.add_source(series.clone()));
            dm.push_shifted(name, ColumnGroup::Lags, source, first as usize);
        } else {
            let mut col = vec![0.0; rows.len()];
            for (i, &r) in rows.iter().enumerate() {
                let t = r as i64 + k;
                if t < 0 || t >= n || series[t as usize].is_nan() {
                    dm.set_row_invalid(i);
                } else {
                    col[i] = series[t as usize];
                }
            }
            dm.push_dense(name, ColumnGroup::Lags, col);
        }
    }
}

/// Sample quantiles by linear interpolation of order statistics.
pub fn quantile_thresholds(values: &[f64], probs: &[f64]) -> Vec<f64> {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    probs
        .iter()
        .map(|&p| {
            let h = (sorted.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        })
        .collect()
}

/// The quantile probabilities used for the ReLU transform.
pub const RELU_PROBS: [f64; 10] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Appends `max(x - q_p, 0)` columns for the given thresholds. A constant
/// input has collapsed thresholds and produces all-zero columns.
pub fn add_relu_columns(dm: &mut DesignMatrix, channel: &str, x: &[f64], thresholds: &[f64]) {
    debug_assert_eq!(dm.n_rows(), x.len());
    debug_assert_eq!(thresholds.len(), RELU_PROBS.len());
    let constant = x.iter().all(|v| *v == x[0]);
    if constant {
        log::warn!("channel `{channel}` is constant; its ReLU columns are all zero");
    }
    for (p, &q) in RELU_PROBS.iter().zip(thresholds.iter()) {
        let name = format!("{channel}_relu{:02}", (p * 100.0).round() as u32);
        let col: Vec<f64> = if constant {
            vec![0.0; x.len()]
        } else {
            x.iter().map(|&v| (v - q).max(0.0)).collect()
        };
        dm.push_dense(name, ColumnGroup::ReluWeather, col);
    }
}

/// Appends all unordered pairwise products of `channels`, squares included:
/// `m (m + 1) / 2` columns for `m` channels.
pub fn add_interaction_columns(dm: &mut DesignMatrix, channels: &[(String, Vec<f64>)]) {
    for i in 0..channels.len() {
        for j in i..channels.len() {
            let (a_name, a) = &channels[i];
            let (b_name, b) = &channels[j];
            let col: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x * y).collect();
            dm.push_dense(format!("{a_name}*{b_name}"), ColumnGroup::Interactions, col);
        }
    }
}

/// Appends the four calendar dummy blocks: hour-of-day indicators, their
/// cumulative versions, and the same pair for hour-of-week.
pub fn add_calendar_dummies(dm: &mut DesignMatrix, times: &[NaiveDateTime]) {
    debug_assert_eq!(dm.n_rows(), times.len());
    let hod: Vec<u32> = times.iter().map(|t| hour_of_day(*t)).collect();
    let how: Vec<u32> = times.iter().map(|t| hour_of_week(*t)).collect();
    for k in 1..=24u32 {
        let indices: Vec<u32> = hod
            .iter()
            .enumerate()
            .filter(|(_, &h)| h == k)
            .map(|(i, _)| i as u32)
            .collect();
        let values = vec![1.0; indices.len()];
        dm.push_sparse(format!("day{k:02}"), ColumnGroup::DayDummies, indices, values);
    }
    for k in 1..=24u32 {
        let col: Vec<f64> = hod.iter().map(|&h| if h <= k { 1.0 } else { 0.0 }).collect();
        dm.push_dense(format!("cday{k:02}"), ColumnGroup::CdayDummies, col);
    }
    for k in 1..=168u32 {
        let indices: Vec<u32> = how
            .iter()
            .enumerate()
            .filter(|(_, &h)| h == k)
            .map(|(i, _)| i as u32)
            .collect();
        let values = vec![1.0; indices.len()];
        dm.push_sparse(format!("week{k:03}"), ColumnGroup::WeekDummies, indices, values);
    }
    for k in 1..=168u32 {
        let col: Vec<f64> = how.iter().map(|&h| if h <= k { 1.0 } else { 0.0 }).collect();
        dm.push_dense(format!("cweek{k:03}"), ColumnGroup::CweekDummies, col);
    }
}

/// Appends the periodic annual spline block.
pub fn add_annual_spline_columns(dm: &mut DesignMatrix, times: &[NaiveDateTime], basis: &AnnualBasis) {
    debug_assert_eq!(dm.n_rows(), times.len());
    let mut cols = vec![vec![0.0; times.len()]; basis.n_basis()];
    let mut row = vec![0.0; basis.n_basis()];
    for (i, t) in times.iter().enumerate() {
        basis.eval_into(annual_phase(*t), &mut row);
        for (j, &v) in row.iter().enumerate() {
            cols[j][i] = v;
        }
    }
    for (j, col) in cols.into_iter().enumerate() {
        dm.push_dense(format!("yspl{j:02}"), ColumnGroup::AnnualSplines, col);
    }
}

/// Candidate holiday: recurring (month, day).
pub type HolidayDate = (u32, u32);

/// Local load scale for holiday dummies at absolute time `t`: the 0.90/0.37
/// inter-quantile range of the previous week of load, floored at `eps`.
pub fn holiday_scale(load: &[f64], t: usize, eps: f64) -> f64 {
    let start = t.saturating_sub(168);
    if t - start < 24 {
        return eps;
    }
    let window = &load[start..t];
    let q = quantile_thresholds(window, &[0.9, 0.37]);
    (q[0] - q[1]).max(eps)
}

/// Appends one column per (candidate date, hour of day) pair observed in the
/// rows, valued at the local load scale. Candidates absent from the sample
/// are dropped with a warning. Returns the (candidate, hour 1..=24) key of
/// each appended column, in column order.
pub fn add_holiday_dummies(
    dm: &mut DesignMatrix,
    times: &[NaiveDateTime],
    time_idx: &[usize],
    candidates: &[HolidayDate],
    load: &[f64],
    eps: f64,
) -> Vec<(HolidayDate, u32)> {
    debug_assert_eq!(dm.n_rows(), times.len());
    let mut keys = Vec::new();
    for &(month, day) in candidates {
        let mut by_hour: Vec<(Vec<u32>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); 24];
        let mut seen = false;
        for (i, t) in times.iter().enumerate() {
            if t.month() == month && t.day() == day {
                seen = true;
                let hh = hour_of_day(*t) as usize - 1;
                by_hour[hh].0.push(i as u32);
                by_hour[hh].1.push(holiday_scale(load, time_idx[i], eps));
            }
        }
        if !seen {
            log::warn!("holiday candidate {month:02}-{day:02} absent from sample; dropped");
            continue;
        }
        for (hh, (indices, values)) in by_hour.into_iter().enumerate() {
            if indices.is_empty() {
                continue;
            }
            dm.push_sparse(
                format!("hol{month:02}{day:02}_h{:02}", hh + 1),
                ColumnGroup::HolidayDummies,
                indices,
                values,
            );
            keys.push(((month, day), hh as u32 + 1));
        }
    }
    keys
}
