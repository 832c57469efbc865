use std::path::Path;

use chrono::NaiveDate;
use climcast::ingest::{build_city_series, parse_ghcn_dly, read_ghcn_file, serialize_ghcn_dly, Element};
use climcast::series::{aggregate_monthly, DEFAULT_MIN_VALID_FRACTION};

fn fixture() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/USC00099999.dly")
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

#[test]
fn fixture_round_trips_byte_for_byte() {
    let text = std::fs::read_to_string(fixture()).unwrap();
    let records = parse_ghcn_dly(&text).unwrap();
    assert_eq!(records.len(), 18);
    assert_eq!(serialize_ghcn_dly(&records), text);
    assert_eq!(read_ghcn_file(&fixture()).unwrap(), records);
}

#[test]
fn flags_survive_and_quality_flag_masks() {
    let records = read_ghcn_file(&fixture()).unwrap();
    let may = records
        .iter()
        .find(|r| r.element == Element::Prcp && r.month == 5)
        .unwrap();
    assert_eq!(may.days[16].qflag, 'I');
    assert!(may.days[16].raw.is_some());
    assert_eq!(may.day_value(17), None);
    let feb = records
        .iter()
        .find(|r| r.element == Element::Tmin && r.month == 2)
        .unwrap();
    assert_eq!(feb.day_value(3), Some(-56));
    // Day slots past the month end are never values.
    assert_eq!(feb.day_value(29), None);
}

#[test]
fn series_in_mm_and_celsius() {
    let records = read_ghcn_file(&fixture()).unwrap();
    let (s, violations) =
        build_city_series(&records, "Fixture", "USC00099999", ymd(2022, 1, 1), ymd(2022, 6, 30)).unwrap();
    assert!(violations.is_empty(), "{violations:?}");
    assert_eq!(s.len(), 181);
    let i = s.index_of(ymd(2022, 2, 3)).unwrap();
    assert_eq!(s.tmin[i], Some(-5.6));
    let first_tmax = records.iter().find(|r| r.element == Element::Tmax).unwrap();
    assert_eq!(s.tmax[0], Some(first_tmax.days[0].raw.unwrap() as f64 / 10.0));
}

#[test]
fn sparse_month_is_masked() {
    let records = read_ghcn_file(&fixture()).unwrap();
    let (s, _) = build_city_series(&records, "Fixture", "USC00099999", ymd(2022, 1, 1), ymd(2022, 6, 30)).unwrap();
    let monthly = aggregate_monthly(&s, DEFAULT_MIN_VALID_FRACTION);
    let prcp = monthly.column("prcp").unwrap();
    assert_eq!(prcp[2], None);
    // May lost one quality-flagged day: still 30 of 31, rescaled to the full month.
    let may: f64 = (1..=31)
        .filter_map(|d| s.index_of(ymd(2022, 5, d)).and_then(|i| s.prcp[i]))
        .sum();
    assert!((prcp[4].unwrap() - may * 31.0 / 30.0).abs() < 1e-9);
    assert!(monthly.column("tmax").unwrap().iter().all(Option::is_some));
}

#[test]
fn unknown_station_is_an_error() {
    let records = read_ghcn_file(&fixture()).unwrap();
    assert!(build_city_series(&records, "X", "USW00000000", ymd(2022, 1, 1), ymd(2022, 1, 31)).is_err());
}
