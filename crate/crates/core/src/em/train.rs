use ndarray::{ArrayView2, Axis, Ix3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, forward, loss_and_grads, AdamState, EmError, EmModel, DEFAULT_HIDDEN};
use crate::series::{Scaler, WindowedDataset, FEATURE_PRCP};

const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub grad_clip_norm: f64,
    pub seed: u64,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            grad_clip_norm: 5.0,
            seed: 42,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation MSE (training MSE when there is no validation set).
    pub model: EmModel,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub adam: AdamState,
}

/// MSE over a whole dataset, evaluated in fixed-size chunks.
fn dataset_mse(model: &EmModel, ds: &WindowedDataset) -> Result<f64, EmError> {
    let mut total = 0.0;
    let n = ds.len();
    for start in (0..n).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(n);
        let pred = forward(model, ds.inputs.slice(ndarray::s![start..end, .., ..]))?;
        let targets = ds.targets.slice(ndarray::s![start..end, ..]);
        total += ndarray::Zip::from(&pred)
            .and(&targets)
            .fold(0.0, |acc, &p, &y| acc + (p - y) * (p - y));
    }
    Ok(total / (n * ds.horizon()) as f64)
}

/// Trains `model` with shuffled mini-batches for `cfg.epochs` epochs and returns
/// the best-validation parameters with the per-epoch history.
pub fn train(
    model: EmModel,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, EmError> {
    if train_set.is_empty() {
        return Err(EmError::EmptyTrainingSet);
    }
    if train_set.n_features() != model.dims.features || train_set.horizon() != model.dims.horizon {
        return Err(EmError::ShapeMismatch(format!(
            "dataset has {} features and horizon {}, model {:?}",
            train_set.n_features(),
            train_set.horizon(),
            model.dims
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut model = model;
    let mut adam = AdamState::new(&model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, EmModel)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum_sq = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let inputs = train_set.inputs.select(Axis(0), batch);
            let targets = train_set.targets.select(Axis(0), batch);
            let result = loss_and_grads(&model, inputs.view(), targets.view());
            let (loss, mut grads) = match result {
                Ok(ok) if ok.1.is_finite() => ok,
                Ok(_) | Err(EmError::NonFiniteLoss { .. }) => {
                    return Err(non_finite(epoch, best, history, adam));
                }
                Err(e) => return Err(e),
            };
            sum_sq += loss * targets.len() as f64;
            adam_step(&mut model, &mut grads, &mut adam, cfg);
        }
        let train_mse = sum_sq / (train_set.len() * train_set.horizon()) as f64;
        let val_mse = if val_set.is_empty() {
            None
        } else {
            Some(dataset_mse(&model, val_set)?)
        };
        if !train_mse.is_finite() || !model.is_finite() || val_mse.is_some_and(|v| !v.is_finite()) {
            return Err(non_finite(epoch, best, history, adam));
        }
        history.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
        });
        let score = val_mse.unwrap_or(train_mse);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, model.clone()));
        }
        log::debug!("epoch {epoch}: train {train_mse:.6} val {val_mse:?}");
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model: best_model,
        best_epoch,
        history,
        adam,
    })
}

fn non_finite(
    epoch: usize,
    best: Option<(f64, usize, EmModel)>,
    history: Vec<EpochRecord>,
    adam: AdamState,
) -> EmError {
    let partial = best.map(|(_, best_epoch, model)| {
        Box::new(TrainOutcome {
            model,
            best_epoch,
            history,
            adam,
        })
    });
    EmError::NonFiniteLoss { epoch, partial }
}

/// Forecast in physical units from one scaled input window (T × F).
/// Precipitation forecasts are clamped at zero.
pub fn predict(
    model: &EmModel,
    window: ArrayView2<f64>,
    scaler: &Scaler,
    target_feature: &str,
) -> Result<Vec<f64>, EmError> {
    let batch = window
        .to_owned()
        .insert_axis(Axis(0))
        .into_dimensionality::<Ix3>()
        .expect("three axes");
    let scaled = forward(model, batch.view())?;
    let physical = crate::series::inverse_transform(scaler, target_feature, scaled.row(0).as_slice().unwrap())?;
    Ok(if target_feature == FEATURE_PRCP {
        physical.into_iter().map(|v| v.max(0.0)).collect()
    } else {
        physical
    })
}

/// `epoch,train_mse,val_mse` rows; an empty field when there was no validation set.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_mse,val_mse\n");
    for r in history {
        let val = r.val_mse.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", r.epoch, r.train_mse, val));
    }
    out
}
