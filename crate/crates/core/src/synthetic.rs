//! Seeded synthetic station data: a sinusoidal seasonal rainfall cycle with a
//! linear trend and Gaussian noise, generated month by month and spread evenly
//! over the days of each month.

use chrono::{Datelike, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calendar::{days_in_month, Frequency};
use crate::ingest::CitySeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub start_year: i32,
    /// Last generated day; the month containing it is generated in full.
    pub end: NaiveDate,
    /// Mean monthly rainfall, mm.
    pub base: f64,
    /// Seasonal amplitude, mm.
    pub amplitude: f64,
    /// mm per year.
    pub trend_per_year: f64,
    /// Noise standard deviation as a fraction of the amplitude.
    pub noise_frac: f64,
    /// Seasonal phase in months.
    pub phase: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            start_year: 1964,
            end: NaiveDate::from_ymd_opt(2024, 9, 30).expect("valid date"),
            base: 100.0,
            amplitude: 50.0,
            trend_per_year: 1.0,
            noise_frac: 0.2,
            phase: 0.0,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn first_month(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.start_year, 1, 1).expect("valid year")
    }

    pub fn months(&self) -> usize {
        let last = NaiveDate::from_ymd_opt(self.end.year(), self.end.month(), 1).expect("valid month");
        Frequency::Monthly.steps_between(self.first_month(), last) as usize + 1
    }
}

/// Monthly series `(rainfall total mm, mean tmin °C, mean tmax °C)` from
/// January of `start_year` through the month of `end`.
pub fn monthly_signal(spec: &SyntheticSpec) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rain_noise = Normal::new(0.0, spec.noise_frac * spec.amplitude).expect("finite std");
    let temp_noise = Normal::new(0.0, 1.0).expect("finite std");
    (0..spec.months())
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * ((k % 12) as f64 + spec.phase) / 12.0;
            let years = k as f64 / 12.0;
            let rain =
                spec.base + spec.amplitude * angle.sin() + spec.trend_per_year * years + rain_noise.sample(&mut rng);
            let tmin = 8.0 - 9.0 * angle.cos() + temp_noise.sample(&mut rng);
            let tmax = tmin + 10.0 + temp_noise.sample(&mut rng).abs();
            (rain.max(0.0), tmin, tmax)
        })
        .collect()
}

/// Daily station series whose monthly rainfall totals and temperature means
/// equal [`monthly_signal`].
pub fn daily_city(spec: &SyntheticSpec, city: &str) -> CitySeries {
    let months = monthly_signal(spec);
    let start = spec.first_month();
    let last_month = Frequency::Monthly.advance(start, months.len() - 1);
    let end = NaiveDate::from_ymd_opt(
        last_month.year(),
        last_month.month(),
        days_in_month(last_month.year(), last_month.month()),
    )
    .expect("valid date");
    let mut series = CitySeries::empty(city, start, end);
    let mut i = 0;
    for (k, &(rain, tmin, tmax)) in months.iter().enumerate() {
        let month = Frequency::Monthly.advance(start, k);
        let days = days_in_month(month.year(), month.month());
        for _ in 0..days {
            series.prcp[i] = Some(rain / days as f64);
            series.tmin[i] = Some(tmin);
            series.tmax[i] = Some(tmax);
            i += 1;
        }
    }
    series
}
