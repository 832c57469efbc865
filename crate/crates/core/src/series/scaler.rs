use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{SeriesError, TimeSeries};

/// Per-feature min-max scaler fitted on a training span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub features: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub fitted_on: (NaiveDate, NaiveDate),
    /// Features with fewer than two distinct present values in the span.
    #[serde(default)]
    pub degenerate: Vec<String>,
}

impl Scaler {
    pub fn feature_index(&self, name: &str) -> Result<usize, SeriesError> {
        self.features
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| SeriesError::UnknownFeature(name.to_string()))
    }

    pub fn scale(&self, feature: usize, x: f64) -> f64 {
        let (lo, hi) = (self.min[feature], self.max[feature]);
        if hi > lo {
            (x - lo) / (hi - lo)
        } else {
            0.0
        }
    }

    pub fn unscale(&self, feature: usize, x: f64) -> f64 {
        let (lo, hi) = (self.min[feature], self.max[feature]);
        lo + x * (hi - lo)
    }
}

/// Fits min/max over present values whose stamp lies in `span` (inclusive).
pub fn fit_scaler(ts: &TimeSeries, span: (NaiveDate, NaiveDate)) -> Result<Scaler, SeriesError> {
    let (from, to) = span;
    let indices: Vec<usize> = (0..ts.len())
        .filter(|&i| {
            let s = ts.stamp(i);
            s >= from && s <= to
        })
        .collect();
    if indices.is_empty() {
        return Err(SeriesError::EmptySpan);
    }
    let n = ts.features.len();
    let mut min = vec![f64::INFINITY; n];
    let mut max = vec![f64::NEG_INFINITY; n];
    let mut count = vec![0usize; n];
    for &i in &indices {
        for (j, v) in ts.rows[i].iter().enumerate() {
            if let Some(v) = *v {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
                count[j] += 1;
            }
        }
    }
    let mut degenerate = Vec::new();
    for j in 0..n {
        if count[j] == 0 {
            min[j] = 0.0;
            max[j] = 0.0;
        }
        if count[j] < 2 || max[j] <= min[j] {
            log::warn!(
                "feature {} is degenerate over the training span; it scales to 0",
                ts.features[j]
            );
            degenerate.push(ts.features[j].clone());
        }
    }
    Ok(Scaler {
        features: ts.features.clone(),
        min,
        max,
        fitted_on: (ts.stamp(indices[0]), ts.stamp(*indices.last().unwrap())),
        degenerate,
    })
}

pub fn transform(scaler: &Scaler, ts: &TimeSeries) -> Result<TimeSeries, SeriesError> {
    if ts.features.len() != scaler.features.len() {
        return Err(SeriesError::ArityMismatch {
            expected: scaler.features.len(),
            got: ts.features.len(),
        });
    }
    let rows = ts
        .rows
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(j, v)| v.map(|x| scaler.scale(j, x)))
                .collect()
        })
        .collect();
    Ok(TimeSeries { rows, ..ts.clone() })
}

/// Maps scaled values of one feature back to physical units.
pub fn inverse_transform(scaler: &Scaler, feature: &str, values: &[f64]) -> Result<Vec<f64>, SeriesError> {
    let j = scaler.feature_index(feature)?;
    Ok(values.iter().map(|&x| scaler.unscale(j, x)).collect())
}
