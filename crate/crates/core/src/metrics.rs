//! Forecast verification: RMSE, Pearson correlation and Nash-Sutcliffe efficiency,
//! plus unweighted cross-city summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} predictions, {1} observations")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("observations are constant")]
    ConstantObservations,
}

fn check(pred: &[f64], obs: &[f64]) -> Result<(), MetricError> {
    if pred.len() != obs.len() {
        return Err(MetricError::LengthMismatch(pred.len(), obs.len()));
    }
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Root mean square error, same units as the inputs.
pub fn rmse(pred: &[f64], obs: &[f64]) -> Result<f64, MetricError> {
    check(pred, obs)?;
    let ss: f64 = pred.iter().zip(obs).map(|(p, o)| (p - o) * (p - o)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// Pearson product-moment correlation. `None` when either side has zero variance
/// (or fewer than two samples).
pub fn pearson(pred: &[f64], obs: &[f64]) -> Result<Option<f64>, MetricError> {
    if pred.len() != obs.len() {
        return Err(MetricError::LengthMismatch(pred.len(), obs.len()));
    }
    if pred.len() < 2 {
        return Ok(None);
    }
    let (mp, mo) = (mean(pred), mean(obs));
    let mut cov = 0.0;
    let mut var_p = 0.0;
    let mut var_o = 0.0;
    for (p, o) in pred.iter().zip(obs) {
        let (dp, d_o) = (p - mp, o - mo);
        cov += dp * d_o;
        var_p += dp * dp;
        var_o += d_o * d_o;
    }
    if var_p == 0.0 || var_o == 0.0 {
        return Ok(None);
    }
    Ok(Some((cov / (var_p.sqrt() * var_o.sqrt())).clamp(-1.0, 1.0)))
}

/// Nash-Sutcliffe efficiency: 1 − Σ(obs − pred)² / Σ(obs − mean(obs))².
pub fn nse(pred: &[f64], obs: &[f64]) -> Result<f64, MetricError> {
    check(pred, obs)?;
    let mo = mean(obs);
    let denom: f64 = obs.iter().map(|o| (o - mo) * (o - mo)).sum();
    if denom == 0.0 {
        return Err(MetricError::ConstantObservations);
    }
    let num: f64 = pred.iter().zip(obs).map(|(p, o)| (o - p) * (o - p)).sum();
    Ok(1.0 - num / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub pearson: Option<f64>,
    pub nse: Option<f64>,
    pub n: usize,
}

impl MetricReport {
    pub fn compute(pred: &[f64], obs: &[f64]) -> Result<Self, MetricError> {
        Ok(Self {
            rmse: rmse(pred, obs)?,
            pearson: pearson(pred, obs)?,
            nse: match nse(pred, obs) {
                Ok(v) => Some(v),
                Err(MetricError::ConstantObservations) => None,
                Err(e) => return Err(e),
            },
            n: pred.len(),
        })
    }
}

/// Unweighted cross-city means; undefined entries are skipped and counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub cities: usize,
    pub rmse: f64,
    pub pearson: Option<f64>,
    pub nse: Option<f64>,
    pub pearson_excluded: usize,
    pub nse_excluded: usize,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut n, mut excluded) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(x) => {
                sum += x;
                n += 1;
            }
            None => excluded += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), excluded)
}

pub fn summarize(per_city: &BTreeMap<String, MetricReport>) -> Option<MetricSummary> {
    if per_city.is_empty() {
        return None;
    }
    let reports: Vec<&MetricReport> = per_city.values().collect();
    let (pearson, pearson_excluded) = mean_defined(reports.iter().map(|r| r.pearson));
    let (nse, nse_excluded) = mean_defined(reports.iter().map(|r| r.nse));
    Some(MetricSummary {
        cities: reports.len(),
        rmse: reports.iter().map(|r| r.rmse).sum::<f64>() / reports.len() as f64,
        pearson,
        nse,
        pearson_excluded,
        nse_excluded,
    })
}

/// Metrics on the concatenation of every city's series instead of per-city means.
pub fn summarize_pooled(series: &[(&[f64], &[f64])]) -> Result<MetricReport, MetricError> {
    let pred: Vec<f64> = series.iter().flat_map(|(p, _)| p.iter().copied()).collect();
    let obs: Vec<f64> = series.iter().flat_map(|(_, o)| o.iter().copied()).collect();
    MetricReport::compute(&pred, &obs)
}
