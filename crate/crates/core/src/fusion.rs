//! Confidence-region fusion: take the expert forecast where historical
//! variability is low and fall back to a conservative forecast elsewhere.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("no standard deviations supplied")]
    EmptyStds,
    #[error("length mismatch: em {em}, fallback {fallback}, std {std}")]
    LengthMismatch { em: usize, fallback: usize, std: usize },
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionPolicy {
    /// Elementwise switch between expert and fallback.
    Hard,
    /// Blend with weight exp(−std/τ) on the expert forecast.
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Threshold {
    /// Fixed τ in mm.
    Absolute { tau: f64 },
    /// τ is the q-th quantile (linear interpolation) of the supplied stds.
    Quantile { q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub policy: FusionPolicy,
    pub threshold: Threshold,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            policy: FusionPolicy::Hard,
            threshold: Threshold::Quantile { q: 0.5 },
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        match self.threshold {
            Threshold::Absolute { tau } if tau.is_nan() || tau <= 0.0 => {
                Err(FusionError::InvalidConfig(format!("tau must be positive, got {tau}")))
            }
            Threshold::Quantile { q } if !(q > 0.0 && q < 1.0) => Err(FusionError::InvalidConfig(format!(
                "quantile must be in (0, 1), got {q}"
            ))),
            _ => Ok(()),
        }
    }
}

/// One fused step, as recorded in run outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionStep {
    pub step: usize,
    pub em: f64,
    pub fallback: f64,
    pub std: f64,
    pub tau: f64,
    /// Weight on the expert forecast (0 or 1 under the hard policy).
    pub weight: f64,
    pub fused: f64,
}

pub fn resolve_threshold(stds: &[f64], cfg: &FusionConfig) -> Result<f64, FusionError> {
    if stds.is_empty() {
        return Err(FusionError::EmptyStds);
    }
    Ok(match cfg.threshold {
        Threshold::Absolute { tau } => tau,
        Threshold::Quantile { q } => {
            let mut sorted = stds.to_vec();
            sorted.sort_by(f64::total_cmp);
            let pos = q * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    })
}

/// Fuses with an explicit τ, returning the per-step record.
pub fn fuse_with_tau(
    em: &[f64],
    fallback: &[f64],
    stds: &[f64],
    tau: f64,
    policy: FusionPolicy,
) -> Result<Vec<FusionStep>, FusionError> {
    if em.len() != fallback.len() || em.len() != stds.len() {
        return Err(FusionError::LengthMismatch {
            em: em.len(),
            fallback: fallback.len(),
            std: stds.len(),
        });
    }
    Ok((0..em.len())
        .map(|i| {
            let (weight, blended) = match policy {
                FusionPolicy::Hard => {
                    if stds[i] <= tau {
                        (1.0, em[i])
                    } else {
                        (0.0, fallback[i])
                    }
                }
                FusionPolicy::Soft => {
                    let w = (-stds[i] / tau).exp();
                    (w, w * em[i] + (1.0 - w) * fallback[i])
                }
            };
            FusionStep {
                step: i + 1,
                em: em[i],
                fallback: fallback[i],
                std: stds[i],
                tau,
                weight,
                fused: blended.max(0.0),
            }
        })
        .collect())
}

/// Elementwise fusion of expert and fallback forecasts gated by per-step stds.
pub fn fuse(em: &[f64], fallback: &[f64], stds: &[f64], cfg: &FusionConfig) -> Result<Vec<FusionStep>, FusionError> {
    cfg.validate()?;
    let tau = resolve_threshold(stds, cfg)?;
    fuse_with_tau(em, fallback, stds, tau, cfg.policy)
}

pub fn fused_values(steps: &[FusionStep]) -> Vec<f64> {
    steps.iter().map(|s| s.fused).collect()
}
