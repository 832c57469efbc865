use chrono::NaiveDate;
use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{fit_scaler, transform, Scaler, SeriesError, TimeSeries};

/// Supervised pairs: `inputs` is N×input_len×F, `targets` is N×horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    pub inputs: Array3<f64>,
    pub targets: Array2<f64>,
    /// Stamp immediately after each input window (the first target stamp).
    pub origins: Vec<NaiveDate>,
    pub target_feature: String,
    pub scaler: Scaler,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.inputs.shape()[1]
    }

    pub fn horizon(&self) -> usize {
        self.targets.shape()[1]
    }

    pub fn n_features(&self) -> usize {
        self.inputs.shape()[2]
    }

    pub fn input(&self, i: usize) -> ArrayView2<'_, f64> {
        self.inputs.index_axis(Axis(0), i)
    }

    /// The windows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> WindowedDataset {
        WindowedDataset {
            inputs: self.inputs.select(Axis(0), indices),
            targets: self.targets.select(Axis(0), indices),
            origins: indices.iter().map(|&i| self.origins[i]).collect(),
            target_feature: self.target_feature.clone(),
            scaler: self.scaler.clone(),
        }
    }
}

/// Start indices of every stride-1 window whose full `input_len + horizon` span
/// is present in all features.
pub fn window_starts(ts: &TimeSeries, input_len: usize, horizon: usize) -> Result<Vec<usize>, SeriesError> {
    let span = input_len + horizon;
    if ts.len() < span {
        return Err(SeriesError::TooShort {
            len: ts.len(),
            input_len,
            horizon,
        });
    }
    // prefix[i] = number of complete rows among the first i.
    let mut prefix = Vec::with_capacity(ts.len() + 1);
    prefix.push(0usize);
    for row in &ts.rows {
        let complete = row.iter().all(Option::is_some) as usize;
        prefix.push(prefix.last().unwrap() + complete);
    }
    Ok((0..=ts.len() - span)
        .filter(|&s| prefix[s + span] - prefix[s] == span)
        .collect())
}

/// Builds windows from an already-scaled series.
pub fn make_windows(
    ts: &TimeSeries,
    input_len: usize,
    horizon: usize,
    target_feature: &str,
    scaler: &Scaler,
) -> Result<WindowedDataset, SeriesError> {
    let target = ts.feature_index(target_feature)?;
    let starts = window_starts(ts, input_len, horizon)?;
    let n_features = ts.features.len();
    let mut inputs = Array3::zeros((starts.len(), input_len, n_features));
    let mut targets = Array2::zeros((starts.len(), horizon));
    for (w, &s) in starts.iter().enumerate() {
        for t in 0..input_len {
            for (f, v) in ts.rows[s + t].iter().enumerate() {
                inputs[[w, t, f]] = v.expect("window rows are complete");
            }
        }
        for h in 0..horizon {
            targets[[w, h]] = ts.rows[s + input_len + h][target].expect("window rows are complete");
        }
    }
    Ok(WindowedDataset {
        inputs,
        targets,
        origins: starts.iter().map(|&s| ts.stamp(s + input_len)).collect(),
        target_feature: target_feature.to_string(),
        scaler: scaler.clone(),
    })
}

/// First ⌊train_frac·N⌋ windows by origin go to training, the rest to validation.
pub fn chrono_split(ds: &WindowedDataset, train_frac: f64) -> (WindowedDataset, WindowedDataset) {
    let n = ds.len();
    let n_train = ((n as f64) * train_frac).floor() as usize;
    if n_train == 0 {
        log::warn!("{n} window(s): training split is empty");
    }
    let all: Vec<usize> = (0..n).collect();
    (ds.subset(&all[..n_train]), ds.subset(&all[n_train..]))
}

/// Train/validation windows with a scaler fitted on the training span only.
#[derive(Debug, Clone)]
pub struct SupervisedData {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub scaler: Scaler,
    /// Stamps covered by the training windows, inputs and targets included.
    pub train_span: (NaiveDate, NaiveDate),
}

/// Windows a raw series, fits the scaler on the span covered by the training
/// windows, and returns scaled train/validation sets.
pub fn prepare_supervised(
    ts: &TimeSeries,
    input_len: usize,
    horizon: usize,
    target_feature: &str,
    train_frac: f64,
) -> Result<SupervisedData, SeriesError> {
    let starts = window_starts(ts, input_len, horizon)?;
    let n_train = ((starts.len() as f64) * train_frac).floor() as usize;
    if n_train == 0 {
        return Err(SeriesError::NoWindows);
    }
    let train_span = (
        ts.stamp(starts[0]),
        ts.stamp(starts[n_train - 1] + input_len + horizon - 1),
    );
    let scaler = fit_scaler(ts, train_span)?;
    let scaled = transform(&scaler, ts)?;
    let all = make_windows(&scaled, input_len, horizon, target_feature, &scaler)?;
    let (train, val) = chrono_split(&all, train_frac);
    Ok(SupervisedData {
        train,
        val,
        scaler,
        train_span,
    })
}
