//! The 30-year historical baseline: per calendar position mean and sample
//! standard deviation of a series feature over the complete years before a cutoff.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{calendar_slot, calendar_slot_label, Frequency};
use crate::series::{SeriesError, TimeSeries};

pub const DEFAULT_WINDOW_YEARS: u32 = 30;

#[derive(Debug, Error, PartialEq)]
pub enum ClimatologyError {
    #[error("only {found} of the window years {first}-{last} have data; at least 2 are required")]
    InsufficientHistory { found: usize, first: i32, last: i32 },
    #[error("no historical support for {0}")]
    MissingEntry(String),
    #[error("stamp frequency {0:?} does not match the climatology")]
    FrequencyMismatch(Frequency),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Climatology {
    pub frequency: Frequency,
    pub feature: String,
    pub as_of: NaiveDate,
    pub window_years: u32,
    /// Contributing calendar years, inclusive.
    pub years: (i32, i32),
    /// 366 leap-calendar day slots (daily) or 12 months (monthly); None without support.
    pub mean: Vec<Option<f64>>,
    /// Sample (n − 1) standard deviation; 0 for single-support entries.
    pub std: Vec<Option<f64>>,
    pub support: Vec<u32>,
}

impl Climatology {
    pub fn entry_index(&self, stamp: NaiveDate) -> usize {
        match self.frequency {
            Frequency::Daily => calendar_slot(stamp),
            Frequency::Monthly => stamp.month0() as usize,
        }
    }

    pub fn entry_label(&self, index: usize) -> String {
        match self.frequency {
            Frequency::Daily => calendar_slot_label(index),
            Frequency::Monthly => format!("{:02}", index + 1),
        }
    }

    fn lookup(&self, stamps: &[NaiveDate], values: &[Option<f64>]) -> Result<Vec<f64>, ClimatologyError> {
        stamps
            .iter()
            .map(|&s| {
                values[self.entry_index(s)].ok_or_else(|| ClimatologyError::MissingEntry(self.frequency.label(s)))
            })
            .collect()
    }

    /// Historical mean for each stamp of a forecast period.
    pub fn baseline_forecast(&self, period: &[NaiveDate]) -> Result<Vec<f64>, ClimatologyError> {
        self.lookup(period, &self.mean)
    }

    /// Historical standard deviation for each stamp of a forecast period.
    pub fn std_for(&self, period: &[NaiveDate]) -> Result<Vec<f64>, ClimatologyError> {
        self.lookup(period, &self.std)
    }

    /// `entry,mean,std,support` rows; empty fields for unsupported entries.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("entry,mean,std,support\n");
        for i in 0..self.mean.len() {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.entry_label(i),
                fmt(self.mean[i]),
                fmt(self.std[i]),
                self.support[i]
            ));
        }
        out
    }
}

/// Builds the climatology of `feature` over the `window_years` complete calendar
/// years strictly before the year of `as_of`.
pub fn build_climatology(
    ts: &TimeSeries,
    feature: &str,
    as_of: NaiveDate,
    window_years: u32,
) -> Result<Climatology, ClimatologyError> {
    let j = ts.feature_index(feature)?;
    let last = as_of.year() - 1;
    let first = as_of.year() - window_years as i32;
    let entries = match ts.frequency {
        Frequency::Daily => 366,
        Frequency::Monthly => 12,
    };
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); entries];
    let mut years_seen = std::collections::BTreeSet::new();
    for (i, stamp) in ts.stamps().enumerate() {
        if stamp.year() < first || stamp.year() > last {
            continue;
        }
        if let Some(v) = ts.rows[i][j] {
            let slot = match ts.frequency {
                Frequency::Daily => calendar_slot(stamp),
                Frequency::Monthly => stamp.month0() as usize,
            };
            samples[slot].push(v);
            years_seen.insert(stamp.year());
        }
    }
    if years_seen.len() < 2 {
        return Err(ClimatologyError::InsufficientHistory {
            found: years_seen.len(),
            first,
            last,
        });
    }

    let mut mean = Vec::with_capacity(entries);
    let mut std = Vec::with_capacity(entries);
    let mut support = Vec::with_capacity(entries);
    for (slot, xs) in samples.iter().enumerate() {
        let n = xs.len();
        support.push(n as u32);
        if n == 0 {
            mean.push(None);
            std.push(None);
            continue;
        }
        let m = xs.iter().sum::<f64>() / n as f64;
        mean.push(Some(m));
        if n == 1 {
            log::warn!("{feature} climatology entry {slot} has a single year of support; std set to 0");
            std.push(Some(0.0));
        } else {
            let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
            std.push(Some((ss / (n - 1) as f64).sqrt()));
        }
    }
    Ok(Climatology {
        frequency: ts.frequency,
        feature: feature.to_string(),
        as_of,
        window_years,
        years: (first, last),
        mean,
        std,
        support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn monthly(start_year: i32, values: Vec<Option<f64>>) -> TimeSeries {
        TimeSeries::new(
            Frequency::Monthly,
            d(start_year, 1, 1),
            vec!["prcp".into()],
            values.into_iter().map(|v| vec![v]).collect(),
        )
    }

    #[test]
    fn constant_daily_series() {
        let start = d(1990, 1, 1);
        let n = (d(2023, 9, 30) - start).num_days() as usize + 1;
        let ts = TimeSeries::new(Frequency::Daily, start, vec!["prcp".into()], vec![vec![Some(3.0)]; n]);
        let c = build_climatology(&ts, "prcp", d(2023, 9, 30), 30).unwrap();
        assert_eq!(c.years, (1993, 2022));
        assert!(c.mean.iter().all(|m| *m == Some(3.0)));
        assert!(c.std.iter().all(|s| *s == Some(0.0)));
        assert_eq!(c.support[0], 30);
        // Feb 29 only from leap years 1996..=2020.
        assert_eq!(c.support[59], 7);

        let period: Vec<NaiveDate> = (1..=15).map(|day| d(2023, 10, day)).collect();
        assert_eq!(period[0].ordinal(), 274);
        assert_eq!(period[14].ordinal(), 288);
        assert_eq!(c.baseline_forecast(&period).unwrap(), vec![3.0; 15]);
    }

    #[test]
    fn two_januaries() {
        let mut values = vec![None; 24];
        values[0] = Some(10.0);
        values[12] = Some(20.0);
        let c = build_climatology(&monthly(2021, values), "prcp", d(2023, 9, 30), 30).unwrap();
        assert_eq!(c.mean[0], Some(15.0));
        assert!((c.std[0].unwrap() - 50f64.sqrt()).abs() < 1e-12);
        assert_eq!(c.support[0], 2);
        assert_eq!(c.mean[1], None);
        assert!(matches!(
            c.baseline_forecast(&[d(2024, 2, 1)]),
            Err(ClimatologyError::MissingEntry(_))
        ));
    }

    #[test]
    fn window_excludes_as_of_year_and_older_years() {
        // 1950..=2023, value = year.
        let values: Vec<Option<f64>> = (1950..=2023).flat_map(|y| vec![Some(y as f64); 12]).collect();
        let c = build_climatology(&monthly(1950, values), "prcp", d(2023, 9, 30), 30).unwrap();
        assert_eq!(c.support, vec![30; 12]);
        assert_eq!(c.mean[0], Some((1993..=2022).sum::<i32>() as f64 / 30.0));
    }

    #[test]
    fn monthly_baseline_order() {
        let values: Vec<Option<f64>> = (0..36).map(|i| Some((i % 12) as f64)).collect();
        let c = build_climatology(&monthly(2020, values), "prcp", d(2023, 9, 30), 30).unwrap();
        let period: Vec<NaiveDate> = (0..12).map(|k| Frequency::Monthly.advance(d(2023, 10, 1), k)).collect();
        let expected: Vec<f64> = [9, 10, 11, 0, 1, 2, 3, 4, 5, 6, 7, 8]
            .iter()
            .map(|&m| m as f64)
            .collect();
        assert_eq!(c.baseline_forecast(&period).unwrap(), expected);
        assert!(c.to_csv().starts_with("entry,mean,std,support\n01,0,0,3\n"));
    }

    #[test]
    fn insufficient_history() {
        let values = vec![Some(1.0); 12];
        assert!(matches!(
            build_climatology(&monthly(2022, values), "prcp", d(2023, 9, 30), 30),
            Err(ClimatologyError::InsufficientHistory { found: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn year_order_and_mean_year_invariance(years in prop::collection::vec(prop::collection::vec(0.0f64..200.0, 12), 2..8)) {
            let n = years.len();
            let flat = |ys: &[Vec<f64>]| ys.iter().flatten().map(|v| Some(*v)).collect::<Vec<_>>();
            let c = build_climatology(&monthly(2000, flat(&years)), "prcp", d(2000 + n as i32, 1, 1), 30).unwrap();

            let mut reversed = years.clone();
            reversed.reverse();
            let r = build_climatology(&monthly(2000, flat(&reversed)), "prcp", d(2000 + n as i32, 1, 1), 30).unwrap();
            for k in 0..12 {
                prop_assert!((c.mean[k].unwrap() - r.mean[k].unwrap()).abs() < 1e-9);
                prop_assert!((c.std[k].unwrap() - r.std[k].unwrap()).abs() < 1e-9);
            }

            let mut extended = years.clone();
            extended.push(c.mean.iter().map(|m| m.unwrap()).collect());
            let e = build_climatology(&monthly(2000, flat(&extended)), "prcp", d(2001 + n as i32, 1, 1), 30).unwrap();
            for k in 0..12 {
                prop_assert!((e.mean[k].unwrap() - c.mean[k].unwrap()).abs() < 1e-9);
                prop_assert!(e.std[k].unwrap() <= c.std[k].unwrap() + 1e-9);
            }
        }
    }
}
