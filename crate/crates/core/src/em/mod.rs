//! The expert model: a two-layer LSTM with a dense head mapping the final
//! hidden state to every horizon step, trained with full backpropagation
//! through time and Adam.

mod adam;
mod checkpoint;
mod gradcheck;
mod lstm;
mod train;

pub use adam::{adam_step, clip_global_norm, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, grad_check_against};
pub use lstm::{forward, loss_and_grads, mse};
pub use train::{history_csv, predict, train, EpochRecord, TrainConfig, TrainOutcome};

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_HIDDEN: usize = 128;

#[derive(Debug, Error)]
pub enum EmError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss {
        epoch: usize,
        /// Best finite parameters and history up to the failure, if training had started.
        partial: Option<Box<TrainOutcome>>,
    },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("checkpoint version mismatch: {0}")]
    VersionMismatch(String),
    #[error("checkpoint dimension mismatch: {0}")]
    DimMismatch(String),
    #[error(transparent)]
    Series(#[from] crate::series::SeriesError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// LSTM gate blocks, in the row order used by the stacked weight matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Cell, Gate::Output];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub features: usize,
    pub hidden: usize,
    pub horizon: usize,
}

/// One LSTM layer. The four per-gate matrices are stacked row-wise in
/// [`Gate`] order, so `w_input` is 4·hidden × in and `w_recurrent` is
/// 4·hidden × hidden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerParams {
    pub w_input: Array2<f64>,
    pub w_recurrent: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_input: Array2::zeros((4 * hidden, input)),
            w_recurrent: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_recurrent.ncols()
    }

    pub fn input_size(&self) -> usize {
        self.w_input.ncols()
    }

    pub fn input_weights(&self, gate: Gate) -> ArrayView2<'_, f64> {
        let h = self.hidden();
        self.w_input.slice(s![gate as usize * h..(gate as usize + 1) * h, ..])
    }

    pub fn recurrent_weights(&self, gate: Gate) -> ArrayView2<'_, f64> {
        let h = self.hidden();
        self.w_recurrent
            .slice(s![gate as usize * h..(gate as usize + 1) * h, ..])
    }

    pub fn gate_bias(&self, gate: Gate) -> ndarray::ArrayView1<'_, f64> {
        let h = self.hidden();
        self.bias.slice(s![gate as usize * h..(gate as usize + 1) * h])
    }
}

/// Parameters of the expert model. Gradients and Adam moments reuse this
/// type, since they are shaped exactly like the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmModel {
    pub dims: ModelDims,
    pub layer1: LstmLayerParams,
    pub layer2: LstmLayerParams,
    /// horizon × hidden
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn fill_uniform(a: &mut Array2<f64>, bound: f64, rng: &mut ChaCha8Rng) {
    a.iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
}

fn init_layer(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> LstmLayerParams {
    let mut layer = LstmLayerParams::zeros(input, hidden);
    fill_uniform(&mut layer.w_input, xavier_bound(input, hidden), rng);
    fill_uniform(&mut layer.w_recurrent, xavier_bound(hidden, hidden), rng);
    layer.bias.slice_mut(s![hidden..2 * hidden]).fill(1.0);
    layer
}

/// Xavier-uniform weights per gate matrix from a seeded generator; zero biases
/// except the forget gate, which starts at 1.
pub fn init_model(features: usize, hidden: usize, horizon: usize, seed: u64) -> EmModel {
    assert!(
        features >= 1 && hidden >= 1 && horizon >= 1,
        "model dimensions must be positive"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer1 = init_layer(features, hidden, &mut rng);
    let layer2 = init_layer(hidden, hidden, &mut rng);
    let mut head_w = Array2::zeros((horizon, hidden));
    fill_uniform(&mut head_w, xavier_bound(hidden, horizon), &mut rng);
    EmModel {
        dims: ModelDims {
            features,
            hidden,
            horizon,
        },
        layer1,
        layer2,
        head_w,
        head_b: Array1::zeros(horizon),
    }
}

impl EmModel {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            layer1: LstmLayerParams::zeros(dims.features, dims.hidden),
            layer2: LstmLayerParams::zeros(dims.hidden, dims.hidden),
            head_w: Array2::zeros((dims.horizon, dims.hidden)),
            head_b: Array1::zeros(dims.horizon),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims)
    }

    /// Flat views of every parameter tensor, in a fixed order.
    pub fn tensors(&self) -> [&[f64]; 8] {
        fn flat(a: Option<&[f64]>) -> &[f64] {
            a.expect("parameters are in standard layout")
        }
        [
            flat(self.layer1.w_input.as_slice()),
            flat(self.layer1.w_recurrent.as_slice()),
            flat(self.layer1.bias.as_slice()),
            flat(self.layer2.w_input.as_slice()),
            flat(self.layer2.w_recurrent.as_slice()),
            flat(self.layer2.bias.as_slice()),
            flat(self.head_w.as_slice()),
            flat(self.head_b.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        fn flat(a: Option<&mut [f64]>) -> &mut [f64] {
            a.expect("parameters are in standard layout")
        }
        [
            flat(self.layer1.w_input.as_slice_mut()),
            flat(self.layer1.w_recurrent.as_slice_mut()),
            flat(self.layer1.bias.as_slice_mut()),
            flat(self.layer2.w_input.as_slice_mut()),
            flat(self.layer2.w_recurrent.as_slice_mut()),
            flat(self.layer2.bias.as_slice_mut()),
            flat(self.head_w.as_slice_mut()),
            flat(self.head_b.as_slice_mut()),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        assert_eq!(init_model(3, 16, 4, 7), init_model(3, 16, 4, 7));
        assert_ne!(init_model(3, 16, 4, 7), init_model(3, 16, 4, 8));
    }

    #[test]
    fn init_respects_bounds_and_biases() {
        let m = init_model(3, 16, 4, 1);
        let b_in = (6.0f64 / 19.0).sqrt();
        let b_rec = (6.0f64 / 32.0).sqrt();
        let b_head = (6.0f64 / 20.0).sqrt();
        assert!(m.layer1.w_input.iter().all(|w| w.abs() <= b_in));
        assert!(m.layer1.w_recurrent.iter().all(|w| w.abs() <= b_rec));
        assert!(m.layer2.w_input.iter().all(|w| w.abs() <= b_rec));
        assert!(m.head_w.iter().all(|w| w.abs() <= b_head));
        for layer in [&m.layer1, &m.layer2] {
            assert!(layer.gate_bias(Gate::Forget).iter().all(|&b| b == 1.0));
            for g in [Gate::Input, Gate::Cell, Gate::Output] {
                assert!(layer.gate_bias(g).iter().all(|&b| b == 0.0));
            }
        }
        assert!(m.head_b.iter().all(|&b| b == 0.0));
        assert_eq!(m.layer1.input_weights(Gate::Output).dim(), (16, 3));
    }

    #[test]
    fn default_hidden_size() {
        let m = init_model(3, DEFAULT_HIDDEN, 15, 42);
        assert_eq!(m.layer2.w_input.dim(), (512, 128));
        assert_eq!(m.head_w.dim(), (15, 128));
    }
}
