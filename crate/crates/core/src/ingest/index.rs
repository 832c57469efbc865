//! Monthly teleconnection index tables (`year v1 .. v12` rows).

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::calendar::Frequency;

pub const DEFAULT_INDEX_SENTINELS: [f64; 2] = [-99.99, -9.90];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IndexName {
    #[serde(rename = "Nino3.4")]
    Nino34,
    #[serde(rename = "PDO")]
    Pdo,
    #[serde(rename = "NAO")]
    Nao,
}

impl IndexName {
    pub const ALL: [IndexName; 3] = [IndexName::Nino34, IndexName::Pdo, IndexName::Nao];

    pub fn label(self) -> &'static str {
        match self {
            IndexName::Nino34 => "Nino3.4",
            IndexName::Pdo => "PDO",
            IndexName::Nao => "NAO",
        }
    }
}

impl fmt::Display for IndexName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Monthly index values starting at `start` (first of a month), contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleconnectionSeries {
    pub index_name: IndexName,
    pub start: NaiveDate,
    pub values: Vec<Option<f64>>,
}

impl TeleconnectionSeries {
    pub fn value_at(&self, month: NaiveDate) -> Option<f64> {
        let offset = Frequency::Monthly.steps_between(self.start, month);
        if offset < 0 {
            return None;
        }
        self.values.get(offset as usize).copied().flatten()
    }
}

/// Parses a whitespace-delimited table of `year v1 .. v12` rows. Blank lines and
/// lines starting with `#` are ignored; values equal to a sentinel become missing.
pub fn parse_index_table(
    text: &str,
    index_name: IndexName,
    sentinels: &[f64],
) -> Result<TeleconnectionSeries, IngestError> {
    let mut first_year = None;
    let mut last_year: Option<i32> = None;
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        let year: i32 = tokens[0].parse().map_err(|_| IngestError::BadToken {
            line: idx + 1,
            token: tokens[0].to_string(),
        })?;
        if tokens.len() != 13 {
            return Err(IngestError::RowArity(year));
        }
        if let Some(prev) = last_year {
            if year <= prev {
                return Err(IngestError::NonMonotonicYears(year));
            }
            if year != prev + 1 {
                return Err(IngestError::YearGap(prev, year));
            }
        }
        for tok in &tokens[1..] {
            let v: f64 = tok.parse().map_err(|_| IngestError::BadToken {
                line: idx + 1,
                token: tok.to_string(),
            })?;
            let is_sentinel = sentinels.iter().any(|s| (v - s).abs() < 1e-9);
            values.push((!is_sentinel && v.is_finite()).then_some(v));
        }
        first_year.get_or_insert(year);
        last_year = Some(year);
    }
    let start_year = first_year.unwrap_or(1970);
    Ok(TeleconnectionSeries {
        index_name,
        start: NaiveDate::from_ymd_opt(start_year, 1, 1).expect("valid year"),
        values,
    })
}
