//! Raw climate inputs: GHCN-daily station files, CSV series and monthly
//! teleconnection index tables, parsed into calendar-aligned series.
//!
//! All rainfall is carried in mm and all temperature in °C from this point on.

mod csv_series;
mod ghcn;
mod index;

pub use csv_series::{load_csv_series, CsvSchema, PrecipUnit, TempUnit};
pub use ghcn::{
    build_city_series, parse_ghcn_dly, read_ghcn_file, serialize_ghcn_dly, DayValue, Element, GhcnRecord, GHCN_LINE_LEN,
};
pub use index::{parse_index_table, IndexName, TeleconnectionSeries, DEFAULT_INDEX_SENTINELS};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MM_PER_INCH: f64 = 25.4;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {0}: shorter than the fixed GHCN-daily layout")]
    MalformedLine(usize),
    #[error("line {line}: unparseable field at column {col}")]
    UnparseableField { line: usize, col: usize },
    #[error("no record matches station {0}")]
    EmptySelection(String),
    #[error("empty date range")]
    EmptyRange,
    #[error("index row for year {0} does not have 13 tokens")]
    RowArity(i32),
    #[error("index table years repeat or decrease at year {0}")]
    NonMonotonicYears(i32),
    #[error("index table skips from year {0} to {1}")]
    YearGap(i32, i32),
    #[error("line {line}: bad token {token:?}")]
    BadToken { line: usize, token: String },
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("row {0}: bad date")]
    BadDate(usize),
    #[error("row {row}: bad value in column {column}")]
    BadValue { row: usize, column: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A contradiction found while assembling a series; the offending values are masked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub date: NaiveDate,
    pub detail: String,
}

/// Calendar-aligned daily minimum/maximum temperature (°C) and precipitation (mm) for one city.
///
/// Days are contiguous from `start`; missing data is `None`, never omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitySeries {
    pub city: String,
    pub start: NaiveDate,
    pub tmin: Vec<Option<f64>>,
    pub tmax: Vec<Option<f64>>,
    pub prcp: Vec<Option<f64>>,
}

impl CitySeries {
    /// An all-missing series covering `start..=end`.
    pub fn empty(city: impl Into<String>, start: NaiveDate, end: NaiveDate) -> Self {
        let len = ((end - start).num_days() + 1).max(0) as usize;
        Self {
            city: city.into(),
            start,
            tmin: vec![None; len],
            tmax: vec![None; len],
            prcp: vec![None; len],
        }
    }

    pub fn len(&self) -> usize {
        self.prcp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prcp.is_empty()
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        self.start + chrono::Days::new(index as u64)
    }

    /// Last covered day. Panics on an empty series.
    pub fn end(&self) -> NaiveDate {
        assert!(!self.is_empty(), "empty series has no end date");
        self.date(self.len() - 1)
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.len()).map(|i| self.date(i))
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start).num_days();
        (offset >= 0 && (offset as usize) < self.len()).then_some(offset as usize)
    }

    /// Drops every day after `cutoff`.
    pub fn truncated_after(&self, cutoff: NaiveDate) -> CitySeries {
        let keep = ((cutoff - self.start).num_days() + 1).clamp(0, self.len() as i64) as usize;
        CitySeries {
            city: self.city.clone(),
            start: self.start,
            tmin: self.tmin[..keep].to_vec(),
            tmax: self.tmax[..keep].to_vec(),
            prcp: self.prcp[..keep].to_vec(),
        }
    }

    /// Masks tmin>tmax pairs and negative precipitation, returning what was masked.
    pub(crate) fn enforce_invariants(&mut self) -> Vec<Violation> {
        let mut violations = Vec::new();
        for i in 0..self.len() {
            if let (Some(lo), Some(hi)) = (self.tmin[i], self.tmax[i]) {
                if lo > hi {
                    let date = self.date(i);
                    log::warn!("{}: tmin {lo} > tmax {hi} on {date}, both masked", self.city);
                    violations.push(Violation {
                        date,
                        detail: format!("tmin {lo} > tmax {hi}"),
                    });
                    self.tmin[i] = None;
                    self.tmax[i] = None;
                }
            }
            if let Some(p) = self.prcp[i] {
                if p < 0.0 || !p.is_finite() {
                    let date = self.date(i);
                    log::warn!("{}: invalid precipitation {p} on {date}, masked", self.city);
                    violations.push(Violation {
                        date,
                        detail: format!("precipitation {p}"),
                    });
                    self.prcp[i] = None;
                }
            }
        }
        violations
    }
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}
