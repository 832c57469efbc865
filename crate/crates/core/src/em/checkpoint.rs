//! Versioned JSON checkpoints. Parameters are stored as flat row-major arrays
//! next to the declared dimensions; floats use shortest round-trip formatting
//! so a load reproduces the saved parameters bit for bit.

use std::path::Path;

use chrono::NaiveDate;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{AdamState, EmError, EmModel, LstmLayerParams, ModelDims, TrainConfig};
use crate::series::Scaler;

pub const CHECKPOINT_FORMAT: &str = "climcast-em-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model with everything needed to reuse it: optimizer state, the
/// training configuration, the fitted scaler and the data span it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: EmModel,
    pub adam: Option<AdamState>,
    pub config: TrainConfig,
    pub target_feature: String,
    pub scaler: Option<Scaler>,
    pub data_span: Option<(NaiveDate, NaiveDate)>,
}

#[derive(Serialize, Deserialize)]
struct FlatLayer {
    w_input: Vec<f64>,
    w_recurrent: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FlatModel {
    layer1: FlatLayer,
    layer2: FlatLayer,
    head_w: Vec<f64>,
    head_b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FlatAdam {
    t: u64,
    m: FlatModel,
    v: FlatModel,
}

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    dims: ModelDims,
    target_feature: String,
    config: TrainConfig,
    scaler: Option<Scaler>,
    data_span: Option<(NaiveDate, NaiveDate)>,
    params: FlatModel,
    adam: Option<FlatAdam>,
}

fn flatten_layer(l: &LstmLayerParams) -> FlatLayer {
    FlatLayer {
        w_input: l.w_input.iter().copied().collect(),
        w_recurrent: l.w_recurrent.iter().copied().collect(),
        bias: l.bias.to_vec(),
    }
}

fn flatten(m: &EmModel) -> FlatModel {
    FlatModel {
        layer1: flatten_layer(&m.layer1),
        layer2: flatten_layer(&m.layer2),
        head_w: m.head_w.iter().copied().collect(),
        head_b: m.head_b.to_vec(),
    }
}

fn matrix(name: &str, data: Vec<f64>, shape: (usize, usize)) -> Result<Array2<f64>, EmError> {
    let len = data.len();
    Array2::from_shape_vec(shape, data)
        .map_err(|_| EmError::DimMismatch(format!("{name}: {len} values for shape {shape:?}")))
}

fn vector(name: &str, data: Vec<f64>, len: usize) -> Result<Array1<f64>, EmError> {
    if data.len() != len {
        return Err(EmError::DimMismatch(format!(
            "{name}: {} values, expected {len}",
            data.len()
        )));
    }
    Ok(Array1::from(data))
}

fn unflatten_layer(name: &str, l: FlatLayer, input: usize, hidden: usize) -> Result<LstmLayerParams, EmError> {
    Ok(LstmLayerParams {
        w_input: matrix(&format!("{name}.w_input"), l.w_input, (4 * hidden, input))?,
        w_recurrent: matrix(&format!("{name}.w_recurrent"), l.w_recurrent, (4 * hidden, hidden))?,
        bias: vector(&format!("{name}.bias"), l.bias, 4 * hidden)?,
    })
}

fn unflatten(flat: FlatModel, dims: ModelDims) -> Result<EmModel, EmError> {
    Ok(EmModel {
        dims,
        layer1: unflatten_layer("layer1", flat.layer1, dims.features, dims.hidden)?,
        layer2: unflatten_layer("layer2", flat.layer2, dims.hidden, dims.hidden)?,
        head_w: matrix("head_w", flat.head_w, (dims.horizon, dims.hidden))?,
        head_b: vector("head_b", flat.head_b, dims.horizon)?,
    })
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String, EmError> {
        let doc = Document {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            dims: self.model.dims,
            target_feature: self.target_feature.clone(),
            config: self.config.clone(),
            scaler: self.scaler.clone(),
            data_span: self.data_span,
            params: flatten(&self.model),
            adam: self.adam.as_ref().map(|a| FlatAdam {
                t: a.t,
                m: flatten(&a.m),
                v: flatten(&a.v),
            }),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self, EmError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let format = value.get("format").and_then(|v| v.as_str());
        let version = value.get("version").and_then(|v| v.as_u64());
        if format != Some(CHECKPOINT_FORMAT) || version != Some(CHECKPOINT_VERSION as u64) {
            return Err(EmError::VersionMismatch(format!(
                "found format {format:?} version {version:?}, expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}"
            )));
        }
        let doc: Document = serde_json::from_value(value)?;
        let dims = doc.dims;
        let model = unflatten(doc.params, dims)?;
        let adam = doc
            .adam
            .map(|a| -> Result<AdamState, EmError> {
                Ok(AdamState {
                    t: a.t,
                    m: unflatten(a.m, dims)?,
                    v: unflatten(a.v, dims)?,
                })
            })
            .transpose()?;
        if let Some(sc) = &doc.scaler {
            if sc.features.len() != dims.features {
                return Err(EmError::DimMismatch(format!(
                    "scaler has {} features, model {}",
                    sc.features.len(),
                    dims.features
                )));
            }
        }
        Ok(Checkpoint {
            model,
            adam,
            config: doc.config,
            target_feature: doc.target_feature,
            scaler: doc.scaler,
            data_span: doc.data_span,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), EmError> {
    std::fs::write(path, ckpt.to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, EmError> {
    Checkpoint::from_json(&std::fs::read_to_string(path)?)
}
