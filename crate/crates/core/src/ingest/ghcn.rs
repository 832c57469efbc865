//! GHCN-daily `.dly` fixed-width station files.
//!
//! Layout per line (1-based columns): station 1-11, year 12-15, month 16-17,
//! element 18-21, then 31 day groups of an 5-char value followed by the
//! measurement, quality and source flags.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{read_to_string, CitySeries, IngestError, Violation};
use crate::calendar::days_in_month;

pub const GHCN_LINE_LEN: usize = 269;
const MISSING: i32 = -9999;
const DAY_GROUP: usize = 8;
const FIRST_DAY_COL: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Element {
    Prcp,
    Tmax,
    Tmin,
}

impl Element {
    pub fn code(self) -> &'static str {
        match self {
            Element::Prcp => "PRCP",
            Element::Tmax => "TMAX",
            Element::Tmin => "TMIN",
        }
    }

    fn from_code(code: &str) -> Option<Self> {
        match code {
            "PRCP" => Some(Element::Prcp),
            "TMAX" => Some(Element::Tmax),
            "TMIN" => Some(Element::Tmin),
            _ => None,
        }
    }
}

/// One day slot: the raw value in tenths (None for -9999) and its three flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayValue {
    pub raw: Option<i32>,
    pub mflag: char,
    pub qflag: char,
    pub sflag: char,
}

impl DayValue {
    pub const MISSING: DayValue = DayValue {
        raw: None,
        mflag: ' ',
        qflag: ' ',
        sflag: ' ',
    };

    /// The usable value in source units; quality-flagged values count as missing.
    pub fn value(&self) -> Option<i32> {
        if self.qflag != ' ' {
            None
        } else {
            self.raw
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhcnRecord {
    pub station_id: String,
    pub year: i32,
    pub month: u32,
    pub element: Element,
    pub days: [DayValue; 31],
}

impl GhcnRecord {
    /// Value for 1-based `day`, missing for slots past the end of the month.
    pub fn day_value(&self, day: u32) -> Option<i32> {
        if day == 0 || day > days_in_month(self.year, self.month) {
            return None;
        }
        self.days[day as usize - 1].value()
    }
}

fn field(line: &str, line_no: usize, start: usize, end: usize) -> Result<&str, IngestError> {
    line.get(start..end).ok_or(IngestError::UnparseableField {
        line: line_no,
        col: start + 1,
    })
}

fn parse_int(line: &str, line_no: usize, start: usize, end: usize) -> Result<i32, IngestError> {
    field(line, line_no, start, end)?
        .trim()
        .parse()
        .map_err(|_| IngestError::UnparseableField {
            line: line_no,
            col: start + 1,
        })
}

fn flag(line: &str, col: usize) -> char {
    line.as_bytes().get(col).map(|&b| b as char).unwrap_or(' ')
}

/// Parses a GHCN-daily file body. Elements other than PRCP/TMAX/TMIN are skipped.
pub fn parse_ghcn_dly(text: &str) -> Result<Vec<GhcnRecord>, IngestError> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if line.len() < GHCN_LINE_LEN || !line.is_ascii() {
            return Err(IngestError::MalformedLine(line_no));
        }
        let Some(element) = Element::from_code(&line[17..21]) else {
            continue;
        };
        let year = parse_int(line, line_no, 11, 15)?;
        let month = parse_int(line, line_no, 15, 17)? as u32;
        if !(1..=12).contains(&month) {
            return Err(IngestError::UnparseableField { line: line_no, col: 16 });
        }
        let mut days = [DayValue::MISSING; 31];
        for (d, slot) in days.iter_mut().enumerate() {
            let start = FIRST_DAY_COL + d * DAY_GROUP;
            let raw = parse_int(line, line_no, start, start + 5)?;
            *slot = DayValue {
                raw: (raw != MISSING).then_some(raw),
                mflag: flag(line, start + 5),
                qflag: flag(line, start + 6),
                sflag: flag(line, start + 7),
            };
        }
        records.push(GhcnRecord {
            station_id: line[0..11].to_string(),
            year,
            month,
            element,
            days,
        });
    }
    Ok(records)
}

pub fn read_ghcn_file(path: &Path) -> Result<Vec<GhcnRecord>, IngestError> {
    parse_ghcn_dly(&read_to_string(path)?)
}

/// Writes records back in the fixed-width layout, one line each.
pub fn serialize_ghcn_dly(records: &[GhcnRecord]) -> String {
    let mut out = String::with_capacity(records.len() * (GHCN_LINE_LEN + 1));
    for r in records {
        let _ = write!(
            out,
            "{:<11.11}{:04}{:02}{}",
            r.station_id,
            r.year,
            r.month,
            r.element.code()
        );
        for d in &r.days {
            let _ = write!(out, "{:>5}{}{}{}", d.raw.unwrap_or(MISSING), d.mflag, d.qflag, d.sflag);
        }
        out.push('\n');
    }
    out
}

/// Assembles a daily series for `station_id` over `start..=end`, converting tenths
/// to mm and °C. Days without a record stay missing.
pub fn build_city_series(
    records: &[GhcnRecord],
    city: &str,
    station_id: &str,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<(CitySeries, Vec<Violation>), IngestError> {
    if end < start {
        return Err(IngestError::EmptyRange);
    }
    let mut series = CitySeries::empty(city, start, end);
    let mut matched = false;
    for r in records.iter().filter(|r| r.station_id.trim() == station_id.trim()) {
        matched = true;
        for day in 1..=days_in_month(r.year, r.month) {
            let Some(date) = NaiveDate::from_ymd_opt(r.year, r.month, day) else {
                continue;
            };
            let Some(i) = series.index_of(date) else {
                continue;
            };
            let value = r.day_value(day).map(|v| v as f64 / 10.0);
            let target = match r.element {
                Element::Prcp => &mut series.prcp,
                Element::Tmax => &mut series.tmax,
                Element::Tmin => &mut series.tmin,
            };
            target[i] = value;
        }
    }
    if !matched {
        return Err(IngestError::EmptySelection(station_id.to_string()));
    }
    let violations = series.enforce_invariants();
    Ok((series, violations))
}
