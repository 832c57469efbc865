//! Rainfall forecasting experiments: station data ingestion, an LSTM expert
//! model, climatology baselines, an LLM prompting harness, uncertainty-gated
//! fusion and verification metrics.

pub mod calendar;
pub mod climatology;
pub mod em;
pub mod fusion;
pub mod ingest;
pub mod llm;
pub mod metrics;
pub mod runner;
pub mod series;
pub mod synthetic;

pub use calendar::Frequency;
pub use climatology::{build_climatology, Climatology, ClimatologyError};
pub use em::{EmError, EmModel, TrainConfig};
pub use fusion::{FusionConfig, FusionError, FusionPolicy, FusionStep, Threshold};
pub use ingest::{CitySeries, IngestError};
pub use llm::{LlmBackendConfig, LlmError, PromptKind, PromptSpec};
pub use metrics::{MetricError, MetricReport};
pub use runner::{run_experiment, ExperimentConfig, ReportBundle, RunnerError, Scale, Source};
pub use series::{Scaler, SeriesError, TimeSeries, WindowedDataset};
