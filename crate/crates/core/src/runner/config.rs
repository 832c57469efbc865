//! Experiment configuration, loaded from TOML or JSON.

use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::RunnerError;
use crate::calendar::{days_in_month, Frequency};
use crate::climatology::DEFAULT_WINDOW_YEARS;
use crate::em::TrainConfig;
use crate::fusion::{FusionConfig, FusionPolicy, Threshold};
use crate::ingest::CsvSchema;
use crate::llm::{LlmBackendConfig, PromptKind};
use crate::series::DEFAULT_MIN_VALID_FRACTION;
use crate::synthetic::SyntheticSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Daily, 15 steps.
    Short,
    /// Monthly, 12 steps.
    Long,
}

impl Scale {
    pub fn frequency(self) -> Frequency {
        match self {
            Scale::Short => Frequency::Daily,
            Scale::Long => Frequency::Monthly,
        }
    }

    pub fn horizon(self) -> usize {
        match self {
            Scale::Short => 15,
            Scale::Long => 12,
        }
    }

    /// Stamps of the forecast period immediately following `as_of`.
    pub fn period(self, as_of: NaiveDate) -> Vec<NaiveDate> {
        let first = self.frequency().normalize(as_of + Duration::days(1));
        (0..self.horizon())
            .map(|k| self.frequency().advance(first, k))
            .collect()
    }
}

/// A forecast source compared in the report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Source {
    Em,
    Baseline,
    Exp(PromptKind),
    Fusion,
}

impl Source {
    pub fn key(self) -> String {
        match self {
            Source::Em => "em".into(),
            Source::Baseline => "baseline".into(),
            Source::Exp(k) => k.key().into(),
            Source::Fusion => "fusion".into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Some(Source::Em),
            "baseline" => Some(Source::Baseline),
            "fusion" => Some(Source::Fusion),
            other => PromptKind::parse(other).map(Source::Exp),
        }
    }
}

impl TryFrom<String> for Source {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        Source::parse(&s).ok_or_else(|| format!("unknown source {s:?}"))
    }
}

impl From<Source> for String {
    fn from(s: Source) -> String {
        s.key()
    }
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CityData {
    Ghcn {
        path: PathBuf,
        station: String,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
    },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityConfig {
    pub name: String,
    #[serde(flatten)]
    pub data: CityData,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexTables {
    pub nino34: Option<PathBuf>,
    pub pdo: Option<PathBuf>,
    pub nao: Option<PathBuf>,
    /// Values treated as missing; defaults to the usual table sentinels.
    pub sentinels: Option<Vec<f64>>,
}

/// Fusion settings plus the forecast used where the expert is not trusted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionSettings {
    pub policy: FusionPolicy,
    pub threshold: Threshold,
    /// `baseline` or one of the LLM sources (`exp1`..`exp5`).
    pub fallback: Source,
}

impl Default for FusionSettings {
    fn default() -> Self {
        let c = FusionConfig::default();
        Self {
            policy: c.policy,
            threshold: c.threshold,
            fallback: Source::Baseline,
        }
    }
}

impl FusionSettings {
    pub fn config(&self) -> FusionConfig {
        FusionConfig {
            policy: self.policy,
            threshold: self.threshold,
        }
    }
}

fn default_run_name() -> String {
    "run".into()
}
fn default_as_of() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 9, 30).expect("valid date")
}
fn default_sources() -> Vec<Source> {
    vec![
        Source::Em,
        Source::Baseline,
        Source::Exp(PromptKind::Exp1),
        Source::Exp(PromptKind::Exp2),
    ]
}
fn default_seed() -> u64 {
    42
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_window_years() -> u32 {
    DEFAULT_WINDOW_YEARS
}
fn default_input_len() -> usize {
    60
}
fn default_train_frac() -> f64 {
    0.8
}
fn default_min_valid() -> f64 {
    DEFAULT_MIN_VALID_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_run_name")]
    pub run_name: String,
    pub scale: Scale,
    #[serde(default = "default_as_of")]
    pub as_of: NaiveDate,
    #[serde(default = "default_sources")]
    pub sources: Vec<Source>,
    pub cities: Vec<CityConfig>,
    #[serde(default)]
    pub backend: LlmBackendConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub fusion: FusionSettings,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// `city,date,prcp` file of observed rainfall for the forecast period.
    #[serde(default)]
    pub observations: Option<PathBuf>,
    /// Take observations from each city's own data after `as_of`.
    #[serde(default)]
    pub observations_from_source: bool,
    #[serde(default)]
    pub indices: IndexTables,
    /// Directory of `<city-slug>-<target>.json` checkpoints used instead of training.
    #[serde(default)]
    pub checkpoints: Option<PathBuf>,
    #[serde(default = "default_window_years")]
    pub window_years: u32,
    #[serde(default = "default_input_len")]
    pub input_len: usize,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default = "default_min_valid")]
    pub min_valid_fraction: f64,
    /// Cross-city correlations on pooled series in addition to per-city means.
    #[serde(default)]
    pub pooled_metrics: bool,
}

impl ExperimentConfig {
    /// Parses TOML or JSON by extension and resolves relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunnerError::io(path, e))?;
        let mut cfg = Self::parse(&text, path.extension().and_then(|e| e.to_str()).unwrap_or("toml"))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str, format: &str) -> Result<Self, RunnerError> {
        if format.eq_ignore_ascii_case("json") {
            serde_json::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))
        }
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for c in &mut self.cities {
            match &mut c.data {
                CityData::Ghcn { path, .. } | CityData::Csv { path, .. } => fix(path),
                CityData::Synthetic(_) => {}
            }
        }
        for p in [
            &mut self.observations,
            &mut self.checkpoints,
            &mut self.indices.nino34,
            &mut self.indices.pdo,
            &mut self.indices.nao,
            &mut self.backend.fixtures,
            &mut self.backend.record_to,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |m: String| Err(RunnerError::Config(m));
        if self.cities.is_empty() {
            return bad("no cities configured".into());
        }
        let mut names: Vec<&str> = self.cities.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| slug(w[0]) == slug(w[1])) {
            return bad(format!("cities {:?} and {:?} map to the same file name", w[0], w[1]));
        }
        if self.sources.is_empty() {
            return bad("no sources selected".into());
        }
        if self.scale == Scale::Long && self.as_of.day() != days_in_month(self.as_of.year(), self.as_of.month()) {
            return bad(format!("long scale needs as_of at a month end, got {}", self.as_of));
        }
        if !(self.train_frac > 0.0 && self.train_frac <= 1.0) {
            return bad(format!("train_frac must be in (0, 1], got {}", self.train_frac));
        }
        if self.input_len == 0 || self.window_years == 0 {
            return bad("input_len and window_years must be positive".into());
        }
        if self.sources.contains(&Source::Fusion) && !matches!(self.fusion.fallback, Source::Baseline | Source::Exp(_))
        {
            return bad("fusion fallback must be baseline or an LLM source".into());
        }
        self.fusion
            .config()
            .validate()
            .map_err(|e| RunnerError::Config(e.to_string()))?;
        self.backend
            .validate()
            .map_err(|e| RunnerError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn wants(&self, s: Source) -> bool {
        self.sources.contains(&s)
    }

    pub fn llm_kinds(&self) -> Vec<PromptKind> {
        let mut kinds: Vec<PromptKind> = self
            .sources
            .iter()
            .filter_map(|s| match s {
                Source::Exp(k) => Some(*k),
                _ => None,
            })
            .collect();
        if self.wants(Source::Fusion) {
            if let Source::Exp(k) = self.fusion.fallback {
                kinds.push(k);
            }
        }
        kinds.sort();
        kinds.dedup();
        kinds
    }
}

/// File-name form of a city name: lowercase alphanumerics joined by `-`.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}
