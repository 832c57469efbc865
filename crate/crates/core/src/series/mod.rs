//! Model-ready datasets: monthly aggregation, min-max scaling, sliding windows
//! and the chronological train/validation split.

mod scaler;
mod window;

pub use scaler::{fit_scaler, inverse_transform, transform, Scaler};
pub use window::{chrono_split, make_windows, prepare_supervised, window_starts, SupervisedData, WindowedDataset};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{days_in_month, first_of_month, month_index, Frequency};
use crate::ingest::CitySeries;

pub const FEATURE_TMIN: &str = "tmin";
pub const FEATURE_TMAX: &str = "tmax";
pub const FEATURE_PRCP: &str = "prcp";
pub const DEFAULT_MIN_VALID_FRACTION: f64 = 0.8;

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("feature arity mismatch: expected {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("unknown feature {0}")]
    UnknownFeature(String),
    #[error("series of length {len} is shorter than input {input_len} + horizon {horizon}")]
    TooShort {
        len: usize,
        input_len: usize,
        horizon: usize,
    },
    #[error("no stamps in the requested span")]
    EmptySpan,
    #[error("no usable windows")]
    NoWindows,
}

/// A regular series of feature vectors; `None` marks a masked value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub frequency: Frequency,
    pub start: NaiveDate,
    pub features: Vec<String>,
    /// One row per stamp, each with `features.len()` entries.
    pub rows: Vec<Vec<Option<f64>>>,
}

impl TimeSeries {
    pub fn new(frequency: Frequency, start: NaiveDate, features: Vec<String>, rows: Vec<Vec<Option<f64>>>) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == features.len()));
        Self {
            frequency,
            start: frequency.normalize(start),
            features,
            rows,
        }
    }

    /// Daily series with features `[tmin, tmax, prcp]`.
    pub fn daily(series: &CitySeries) -> Self {
        let rows = (0..series.len())
            .map(|i| vec![series.tmin[i], series.tmax[i], series.prcp[i]])
            .collect();
        Self::new(Frequency::Daily, series.start, default_features(), rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn stamp(&self, index: usize) -> NaiveDate {
        self.frequency.advance(self.start, index)
    }

    pub fn stamps(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.len()).map(|i| self.stamp(i))
    }

    pub fn end(&self) -> Option<NaiveDate> {
        (!self.is_empty()).then(|| self.stamp(self.len() - 1))
    }

    pub fn index_of(&self, stamp: NaiveDate) -> Option<usize> {
        let offset = self
            .frequency
            .steps_between(self.start, self.frequency.normalize(stamp));
        (offset >= 0 && (offset as usize) < self.len()).then_some(offset as usize)
    }

    pub fn feature_index(&self, name: &str) -> Result<usize, SeriesError> {
        self.features
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| SeriesError::UnknownFeature(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>, SeriesError> {
        let j = self.feature_index(name)?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }

    /// A copy restricted to the named features, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<TimeSeries, SeriesError> {
        let idx = names
            .iter()
            .map(|n| self.feature_index(n))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = self.rows.iter().map(|r| idx.iter().map(|&j| r[j]).collect()).collect();
        Ok(TimeSeries::new(
            self.frequency,
            self.start,
            names.iter().map(|s| s.to_string()).collect(),
            rows,
        ))
    }

    /// Drops every stamp after `cutoff`.
    pub fn truncated_after(&self, cutoff: NaiveDate) -> TimeSeries {
        let keep = (self
            .frequency
            .steps_between(self.start, self.frequency.normalize(cutoff))
            + 1)
        .clamp(0, self.len() as i64) as usize;
        TimeSeries {
            rows: self.rows[..keep].to_vec(),
            ..self.clone()
        }
    }
}

pub fn default_features() -> Vec<String> {
    vec![FEATURE_TMIN.into(), FEATURE_TMAX.into(), FEATURE_PRCP.into()]
}

/// Monthly series with features `[tmin, tmax, prcp]`.
///
/// Precipitation is the sum of present days rescaled to the full month length;
/// temperatures are means of present days. A month is masked for a feature when
/// fewer than `min_valid_fraction` of its days are present.
pub fn aggregate_monthly(series: &CitySeries, min_valid_fraction: f64) -> TimeSeries {
    assert!(
        min_valid_fraction > 0.0 && min_valid_fraction <= 1.0,
        "min_valid_fraction must be in (0, 1]"
    );
    if series.is_empty() {
        return TimeSeries::new(
            Frequency::Monthly,
            first_of_month(series.start),
            default_features(),
            vec![],
        );
    }
    let first = first_of_month(series.start);
    let n_months = (month_index(series.end()) - month_index(first) + 1) as usize;
    let mut rows = Vec::with_capacity(n_months);
    for m in 0..n_months {
        let month_start = Frequency::Monthly.advance(first, m);
        let days = days_in_month(month_start.year(), month_start.month());
        let mut acc = [(0.0f64, 0u32); 3];
        for day in 0..days {
            let Some(i) = series.index_of(month_start + chrono::Days::new(day as u64)) else {
                continue;
            };
            for (slot, value) in acc.iter_mut().zip([series.tmin[i], series.tmax[i], series.prcp[i]]) {
                if let Some(v) = value {
                    slot.0 += v;
                    slot.1 += 1;
                }
            }
        }
        let valid = |present: u32| present > 0 && present as f64 / days as f64 >= min_valid_fraction;
        let [(tmin_sum, tmin_n), (tmax_sum, tmax_n), (prcp_sum, prcp_n)] = acc;
        rows.push(vec![
            valid(tmin_n).then(|| tmin_sum / tmin_n as f64),
            valid(tmax_n).then(|| tmax_sum / tmax_n as f64),
            valid(prcp_n).then(|| prcp_sum * days as f64 / prcp_n as f64),
        ]);
    }
    TimeSeries::new(Frequency::Monthly, first, default_features(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn full_month_sums() {
        let mut s = CitySeries::empty("X", d(2023, 1, 1), d(2023, 1, 31));
        s.prcp = vec![Some(1.0); 31];
        let m = aggregate_monthly(&s, 0.8);
        assert_eq!(m.len(), 1);
        assert_eq!(m.rows[0][2], Some(31.0));
        assert_eq!(m.rows[0][0], None);
    }

    #[test]
    fn sparse_month_is_masked() {
        let mut s = CitySeries::empty("X", d(2023, 1, 1), d(2023, 1, 31));
        for i in 0..10 {
            s.prcp[i] = Some(2.0);
        }
        assert_eq!(aggregate_monthly(&s, 0.8).rows[0][2], None);
    }

    #[test]
    fn partial_month_is_rescaled() {
        let mut s = CitySeries::empty("X", d(2023, 4, 1), d(2023, 4, 30));
        for i in 0..29 {
            s.prcp[i] = Some(2.0);
            s.tmin[i] = Some(i as f64);
            s.tmax[i] = Some(40.0);
        }
        let m = aggregate_monthly(&s, 0.8);
        let prcp = m.rows[0][2].unwrap();
        assert!((prcp - 60.0).abs() < 1e-12);
        assert_eq!(m.rows[0][0], Some(14.0));
        assert_eq!(m.rows[0][1], Some(40.0));
    }

    #[test]
    fn months_outside_coverage_are_masked() {
        let mut s = CitySeries::empty("X", d(2023, 1, 20), d(2023, 3, 5));
        s.prcp = vec![Some(1.0); s.len()];
        let m = aggregate_monthly(&s, 0.8);
        assert_eq!(m.len(), 3);
        assert_eq!(m.start, d(2023, 1, 1));
        assert_eq!(m.rows[0][2], None);
        assert_eq!(m.rows[1][2], Some(28.0));
        assert_eq!(m.rows[2][2], None);
    }

    #[test]
    fn select_and_truncate() {
        let mut s = CitySeries::empty("X", d(2023, 1, 1), d(2023, 1, 10));
        s.tmin = (0..10).map(|i| Some(i as f64)).collect();
        let ts = TimeSeries::daily(&s);
        let t = ts.select(&[FEATURE_TMIN]).unwrap().truncated_after(d(2023, 1, 4));
        assert_eq!(t.len(), 4);
        assert_eq!(t.rows[3], vec![Some(3.0)]);
        assert!(ts.select(&["snow"]).is_err());
        assert_eq!(ts.index_of(d(2023, 1, 5)), Some(4));
    }
}
