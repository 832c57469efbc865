//! Small calendar helpers shared by the ingest, series and climatology code.

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

/// Sampling frequency of a series. Monthly stamps are always the first of the month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Monthly,
}

impl Frequency {
    /// The stamp `steps` positions after `start`.
    pub fn advance(self, start: NaiveDate, steps: usize) -> NaiveDate {
        match self {
            Frequency::Daily => start + chrono::Days::new(steps as u64),
            Frequency::Monthly => start + Months::new(steps as u32),
        }
    }

    /// Number of steps from `from` to `to` (negative when `to` precedes `from`).
    pub fn steps_between(self, from: NaiveDate, to: NaiveDate) -> i64 {
        match self {
            Frequency::Daily => (to - from).num_days(),
            Frequency::Monthly => month_index(to) - month_index(from),
        }
    }

    /// Canonical stamp for a date at this frequency.
    pub fn normalize(self, date: NaiveDate) -> NaiveDate {
        match self {
            Frequency::Daily => date,
            Frequency::Monthly => first_of_month(date),
        }
    }

    pub fn label(self, date: NaiveDate) -> String {
        match self {
            Frequency::Daily => date.format("%Y-%m-%d").to_string(),
            Frequency::Monthly => date.format("%Y-%m").to_string(),
        }
    }
}

pub fn is_leap_year(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

pub fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap_year(year) => 29,
        2 => 28,
        _ => panic!("month out of range: {month}"),
    }
}

pub fn first_of_month(date: NaiveDate) -> NaiveDate {
    date.with_day(1).expect("day 1 always exists")
}

/// Months since year 0, used for monthly arithmetic.
pub fn month_index(date: NaiveDate) -> i64 {
    date.year() as i64 * 12 + date.month0() as i64
}

/// Slot of a date in a 366-entry leap-year calendar (0 = Jan 1, 59 = Feb 29, 365 = Dec 31).
pub fn calendar_slot(date: NaiveDate) -> usize {
    const CUMULATIVE: [usize; 12] = [0, 31, 60, 91, 121, 152, 182, 213, 244, 274, 305, 335];
    CUMULATIVE[date.month0() as usize] + date.day0() as usize
}

/// Month/day label of a calendar slot, e.g. slot 59 is `02-29`.
pub fn calendar_slot_label(slot: usize) -> String {
    let date = NaiveDate::from_yo_opt(2000, slot as u32 + 1).expect("slot < 366");
    date.format("%m-%d").to_string()
}

/// Parses `YYYY-MM-DD` or `YYYY-MM` (the latter as the first of the month).
pub fn parse_stamp(text: &str) -> Option<NaiveDate> {
    let text = text.trim();
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .ok()
        .or_else(|| NaiveDate::parse_from_str(&format!("{text}-01"), "%Y-%m-%d").ok())
}
