use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{CitySeries, IngestError, Violation, MM_PER_INCH};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecipUnit {
    #[default]
    Mm,
    Inches,
    /// Tenths of a millimetre, as in GHCN-daily.
    Tenths,
}

impl PrecipUnit {
    fn to_mm(self, v: f64) -> f64 {
        match self {
            PrecipUnit::Mm => v,
            PrecipUnit::Inches => v * MM_PER_INCH,
            PrecipUnit::Tenths => v / 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TempUnit {
    #[default]
    Celsius,
    Fahrenheit,
    Tenths,
}

impl TempUnit {
    fn to_celsius(self, v: f64) -> f64 {
        match self {
            TempUnit::Celsius => v,
            TempUnit::Fahrenheit => (v - 32.0) * 5.0 / 9.0,
            TempUnit::Tenths => v / 10.0,
        }
    }
}

fn default_date_format() -> String {
    "%Y-%m-%d".to_string()
}

/// Column mapping for a CSV daily series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub date: String,
    pub tmin: String,
    pub tmax: String,
    pub prcp: String,
    #[serde(default)]
    pub precip_unit: PrecipUnit,
    #[serde(default)]
    pub temp_unit: TempUnit,
    #[serde(default = "default_date_format")]
    pub date_format: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            date: "date".into(),
            tmin: "tmin".into(),
            tmax: "tmax".into(),
            prcp: "prcp".into(),
            precip_unit: PrecipUnit::Mm,
            temp_unit: TempUnit::Celsius,
            date_format: default_date_format(),
        }
    }
}

type Row = (Option<f64>, Option<f64>, Option<f64>);

/// Loads a daily CSV series. Rows may come in any order; days between the first
/// and last date that have no row are missing, as are empty cells.
pub fn load_csv_series(
    text: &str,
    city: &str,
    schema: &CsvSchema,
) -> Result<(CitySeries, Vec<Violation>), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let (date_col, tmin_col, tmax_col, prcp_col) = (
        col(&schema.date)?,
        col(&schema.tmin)?,
        col(&schema.tmax)?,
        col(&schema.prcp)?,
    );

    let mut rows: BTreeMap<NaiveDate, Row> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let date = NaiveDate::parse_from_str(record.get(date_col).unwrap_or(""), &schema.date_format)
            .map_err(|_| IngestError::BadDate(row_no))?;
        let cell = |c: usize, name: &str| -> Result<Option<f64>, IngestError> {
            let raw = record.get(c).unwrap_or("");
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse::<f64>().map(Some).map_err(|_| IngestError::BadValue {
                row: row_no,
                column: name.to_string(),
            })
        };
        let tmin = cell(tmin_col, &schema.tmin)?.map(|v| schema.temp_unit.to_celsius(v));
        let tmax = cell(tmax_col, &schema.tmax)?.map(|v| schema.temp_unit.to_celsius(v));
        let prcp = cell(prcp_col, &schema.prcp)?.map(|v| schema.precip_unit.to_mm(v));
        rows.insert(date, (tmin, tmax, prcp));
    }

    let (Some((&first, _)), Some((&last, _))) = (rows.first_key_value(), rows.last_key_value()) else {
        return Err(IngestError::EmptyRange);
    };
    let mut series = CitySeries::empty(city, first, last);
    for (date, (tmin, tmax, prcp)) in rows {
        let i = series.index_of(date).expect("date within span");
        series.tmin[i] = tmin;
        series.tmax[i] = tmax;
        series.prcp[i] = prcp;
    }
    let violations = series.enforce_invariants();
    Ok((series, violations))
}
