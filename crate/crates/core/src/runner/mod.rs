//! End-to-end experiment execution: per-city ingest, expert model, climatology,
//! LLM prompts, fusion and scoring, with every intermediate written to a run
//! directory.

mod config;
mod report;

pub use config::{slug, CityConfig, CityData, ExperimentConfig, FusionSettings, IndexTables, Scale, Source};
pub use report::{
    city_chart_svg, emit_report, load_bundle, load_observations, metrics_csv, metrics_json, parse_observations,
    report_files, BaselineCorrelation, CityResult, Failure, Manifest, MetricRow, Observations, PromptRecord,
    ReportBundle, SummaryRow,
};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::NaiveDate;
use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use crate::calendar::{first_of_month, Frequency};
use crate::climatology::build_climatology;
use crate::em::{self, init_model, load_checkpoint, predict, Checkpoint};
use crate::fusion::{fuse, fused_values, FusionStep};
use crate::ingest::{
    build_city_series, load_csv_series, parse_index_table, read_ghcn_file, CitySeries, IndexName, TeleconnectionSeries,
    DEFAULT_INDEX_SENTINELS,
};
use crate::llm::{
    self, prompt_hash, render_prompt, Backend, BackendMode, Payload, PromptKind, PromptSpec, QueryContext,
};
use crate::series::{
    aggregate_monthly, default_features, prepare_supervised, transform, TimeSeries, FEATURE_PRCP, FEATURE_TMAX,
    FEATURE_TMIN,
};
use crate::synthetic::daily_city;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RunnerError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RunnerError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Serialized writer for one run directory; remembers what it wrote.
struct RunWriter {
    root: PathBuf,
    written: Mutex<Vec<String>>,
}

impl RunWriter {
    fn write(&self, rel: &str, contents: &str) -> Result<(), RunnerError> {
        let mut written = self.written.lock().unwrap_or_else(|e| e.into_inner());
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| RunnerError::io(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| RunnerError::io(&path, e))?;
        written.push(rel.to_string());
        Ok(())
    }
}

pub struct RunOutcome {
    pub bundle: ReportBundle,
    pub run_dir: PathBuf,
}

impl RunOutcome {
    pub fn has_failures(&self) -> bool {
        !self.bundle.failures.is_empty()
    }
}

struct Shared<'a> {
    cfg: &'a ExperimentConfig,
    period: Vec<NaiveDate>,
    backend: Option<Backend>,
    observations: Option<Observations>,
    indices: BTreeMap<IndexName, TeleconnectionSeries>,
    writer: RunWriter,
}

struct CityRun {
    result: CityResult,
    failures: Vec<Failure>,
    prompts: Vec<PromptRecord>,
}

fn fresh_run_dir(cfg: &ExperimentConfig) -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = cfg.output_dir.join(format!("{}-{stamp}", slug(&cfg.run_name)));
    let mut dir = base.clone();
    let mut k = 2;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{k}", base.display()));
        k += 1;
    }
    dir
}

fn load_indices(cfg: &ExperimentConfig) -> Result<BTreeMap<IndexName, TeleconnectionSeries>, RunnerError> {
    let mut out = BTreeMap::new();
    if !cfg.llm_kinds().contains(&PromptKind::Exp4) {
        return Ok(out);
    }
    let sentinels = cfg
        .indices
        .sentinels
        .clone()
        .unwrap_or(DEFAULT_INDEX_SENTINELS.to_vec());
    for (name, path) in [
        (IndexName::Nino34, &cfg.indices.nino34),
        (IndexName::Pdo, &cfg.indices.pdo),
        (IndexName::Nao, &cfg.indices.nao),
    ] {
        let path = path
            .as_ref()
            .ok_or_else(|| RunnerError::Config(format!("exp4 needs an index table for {name}")))?;
        let text = std::fs::read_to_string(path).map_err(|e| RunnerError::io(path, e))?;
        let table = parse_index_table(&text, name, &sentinels)
            .map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))?;
        out.insert(name, table);
    }
    Ok(out)
}

/// Runs every configured city and source, writes artifacts under a fresh
/// timestamped directory (or `run_dir` when given) and returns the scored bundle.
pub fn run_experiment(cfg: &ExperimentConfig, run_dir: Option<&Path>) -> Result<RunOutcome, RunnerError> {
    cfg.validate()?;
    let root = run_dir.map(Path::to_path_buf).unwrap_or_else(|| fresh_run_dir(cfg));
    std::fs::create_dir_all(&root).map_err(|e| RunnerError::io(&root, e))?;

    let backend = if cfg.llm_kinds().is_empty() {
        None
    } else {
        Some(Backend::new(cfg.backend.clone()).map_err(|e| RunnerError::Config(e.to_string()))?)
    };
    let observations = cfg
        .observations
        .as_ref()
        .map(|p| load_observations(p, cfg.scale.frequency()))
        .transpose()?;
    let shared = Shared {
        cfg,
        period: cfg.scale.period(cfg.as_of),
        backend,
        observations,
        indices: load_indices(cfg)?,
        writer: RunWriter {
            root: root.clone(),
            written: Mutex::new(Vec::new()),
        },
    };

    let mut runs: Vec<CityRun> = cfg.cities.par_iter().map(|c| run_city(&shared, c)).collect();
    runs.sort_by(|a, b| a.result.city.cmp(&b.result.city));

    let mut artifacts = shared.writer.written.into_inner().unwrap_or_else(|e| e.into_inner());
    artifacts.sort();
    let mut failures = Vec::new();
    let mut prompts = Vec::new();
    let mut cities = Vec::new();
    for r in runs {
        failures.extend(r.failures);
        prompts.extend(r.prompts);
        cities.push(r.result);
    }
    let mut bundle = ReportBundle {
        run_name: cfg.run_name.clone(),
        scale: cfg.scale,
        as_of: cfg.as_of,
        period: shared.period.iter().map(|d| cfg.scale.frequency().label(*d)).collect(),
        cities,
        metrics: Vec::new(),
        summary: Vec::new(),
        baseline_correlation: Vec::new(),
        failures,
        manifest: Manifest {
            software: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            units: units(),
            artifacts,
            prompts,
            notes: run_notes(cfg),
        },
    };
    bundle.score(cfg.pooled_metrics);
    emit_report(&bundle, &root)?;

    let mut manifest = serde_json::to_value(&bundle.manifest).expect("serializable");
    manifest["created_at"] = serde_json::Value::String(chrono::Utc::now().to_rfc3339());
    let path = root.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("serializable"))
        .map_err(|e| RunnerError::io(&path, e))?;

    Ok(RunOutcome { bundle, run_dir: root })
}

fn units() -> BTreeMap<String, String> {
    [
        ("prcp", "mm"),
        ("tmin", "degC"),
        ("tmax", "degC"),
        ("climatology_std", "mm"),
        ("nino34", "degC anomaly"),
        ("pdo", "index"),
        ("nao", "index"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

fn run_notes(cfg: &ExperimentConfig) -> Vec<String> {
    let year = chrono::Datelike::year(&cfg.as_of);
    let mut notes = vec![format!(
        "climatology: mean and sample (n-1) std over {}-{}",
        year - cfg.window_years as i32,
        year - 1
    )];
    if cfg.scale == Scale::Long {
        notes.push(format!(
            "monthly prcp is the sum of present days scaled to the month length; months under {:.0}% present are masked",
            cfg.min_valid_fraction * 100.0
        ));
    }
    let kinds = cfg.llm_kinds();
    if cfg.scale == Scale::Long && !kinds.is_empty() {
        notes.push("monthly prompts carry 12 values per payload block and a monthly period".into());
    }
    if kinds.contains(&PromptKind::Exp4) {
        notes.push("the exp4 template does not name a city, so every city receives the same prompt".into());
        if cfg.scale == Scale::Short {
            notes.push("daily exp4 payloads repeat each month's index value for its days".into());
        }
    }
    if cfg.backend.mode == BackendMode::Http {
        notes.push(format!(
            "live endpoint at temperature {}; replies are not guaranteed to repeat",
            cfg.backend.temperature
        ));
    }
    notes
}

fn load_city(data: &CityData, name: &str, as_of: NaiveDate) -> Result<(CitySeries, usize), String> {
    match data {
        CityData::Ghcn { path, station } => {
            let records = read_ghcn_file(path).map_err(|e| e.to_string())?;
            let mine: Vec<_> = records
                .iter()
                .filter(|r| r.station_id.trim() == station.trim())
                .collect();
            let first = mine
                .iter()
                .map(|r| (r.year, r.month))
                .min()
                .ok_or_else(|| format!("station {station} not found in {}", path.display()))?;
            let last = mine.iter().map(|r| (r.year, r.month)).max().expect("nonempty");
            let start = NaiveDate::from_ymd_opt(first.0, first.1, 1).ok_or("bad first month")?;
            let last_month = NaiveDate::from_ymd_opt(last.0, last.1, 1).ok_or("bad last month")?;
            let end = Frequency::Monthly
                .advance(last_month, 1)
                .pred_opt()
                .expect("valid date")
                .max(as_of);
            let (s, v) = build_city_series(&records, name, station, start, end).map_err(|e| e.to_string())?;
            Ok((s, v.len()))
        }
        CityData::Csv { path, schema } => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let (s, v) = load_csv_series(&text, name, schema).map_err(|e| e.to_string())?;
            Ok((s, v.len()))
        }
        CityData::Synthetic(spec) => Ok((daily_city(spec, name), 0)),
    }
}

fn series_for(scale: Scale, city: &CitySeries, min_valid: f64) -> TimeSeries {
    match scale {
        Scale::Short => TimeSeries::daily(city),
        Scale::Long => aggregate_monthly(city, min_valid),
    }
}

fn stamp_csv(frequency: Frequency, period: &[NaiveDate], header: &str, values: &[f64]) -> String {
    let mut out = format!("stamp,{header}\n");
    for (d, v) in period.iter().zip(values) {
        out.push_str(&format!("{},{v}\n", frequency.label(*d)));
    }
    out
}

fn fusion_csv(steps: &[FusionStep]) -> String {
    let mut out = String::from("step,em,fallback,std,tau,weight,fused\n");
    for s in steps {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.step, s.em, s.fallback, s.std, s.tau, s.weight, s.fused
        ));
    }
    out
}

/// History of one city up to `as_of` at the configured scale, plus the number
/// of values masked during ingestion.
pub fn city_history(cfg: &ExperimentConfig, city: &CityConfig) -> Result<(TimeSeries, usize), String> {
    let (full, masked) = load_city(&city.data, &city.name, cfg.as_of)?;
    let hist = full.truncated_after(cfg.as_of);
    if hist.is_empty() {
        return Err(format!("no data on or before {}", cfg.as_of));
    }
    Ok((
        series_for(cfg.scale, &hist, cfg.min_valid_fraction).truncated_after(cfg.as_of),
        masked,
    ))
}

/// Fits the expert model for `target` on `ts` with the configured training
/// settings and seed.
pub fn fit_expert(
    cfg: &ExperimentConfig,
    ts: &TimeSeries,
    target: &str,
) -> Result<(Checkpoint, Vec<em::EpochRecord>), String> {
    let horizon = cfg.scale.horizon();
    let features = default_features();
    let names: Vec<&str> = features.iter().map(String::as_str).collect();
    let ts = ts.select(&names).map_err(|e| e.to_string())?;
    let data = prepare_supervised(&ts, cfg.input_len, horizon, target, cfg.train_frac).map_err(|e| e.to_string())?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;
    let model = init_model(features.len(), train_cfg.hidden, horizon, cfg.seed);
    let outcome = em::train(model, &data.train, &data.val, &train_cfg).map_err(|e| e.to_string())?;
    let ckpt = Checkpoint {
        model: outcome.model,
        adam: Some(outcome.adam),
        config: train_cfg,
        target_feature: target.to_string(),
        scaler: Some(data.scaler),
        data_span: Some(data.train_span),
    };
    Ok((ckpt, outcome.history))
}

/// Forecast of the period following the last stamp of `ts`, from its latest
/// `input_len` steps.
pub fn forecast_latest(ckpt: &Checkpoint, ts: &TimeSeries, input_len: usize) -> Result<Vec<f64>, String> {
    let scaler = ckpt.scaler.as_ref().ok_or("checkpoint has no scaler")?;
    let names: Vec<&str> = scaler.features.iter().map(String::as_str).collect();
    let ts = ts.select(&names).map_err(|e| e.to_string())?;
    if ts.len() < input_len {
        return Err(format!("{} steps of history, input window needs {input_len}", ts.len()));
    }
    let scaled = transform(scaler, &ts).map_err(|e| e.to_string())?;
    let offset = ts.len() - input_len;
    let mut window = Array2::zeros((input_len, names.len()));
    for (t, row) in scaled.rows[offset..].iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            window[[t, j]] = v.ok_or_else(|| {
                format!(
                    "latest input window has a missing {} at {}",
                    names[j],
                    ts.frequency.label(ts.stamp(offset + t))
                )
            })?;
        }
    }
    predict(&ckpt.model, window.view(), scaler, &ckpt.target_feature).map_err(|e| e.to_string())
}

/// Trains (or loads) the expert model for `target` and forecasts the period
/// from the latest input window.
fn em_forecast(sh: &Shared, ts: &TimeSeries, target: &str, city_slug: &str) -> Result<Vec<f64>, String> {
    let cfg = sh.cfg;
    let horizon = cfg.scale.horizon();
    let n_features = default_features().len();
    let supplied = cfg
        .checkpoints
        .as_ref()
        .map(|d| d.join(format!("{city_slug}-{target}.json")))
        .filter(|p| p.exists());
    let ckpt = if let Some(path) = supplied {
        let ck = load_checkpoint(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        if ck.target_feature != target || ck.model.dims.horizon != horizon || ck.model.dims.features != n_features {
            return Err(format!(
                "{} does not match target {target} and horizon {horizon}",
                path.display()
            ));
        }
        ck
    } else {
        let (ck, history) = fit_expert(cfg, ts, target)?;
        sh.writer
            .write(
                &format!("checkpoints/{city_slug}-{target}-history.csv"),
                &em::history_csv(&history),
            )
            .map_err(|e| e.to_string())?;
        ck
    };
    sh.writer
        .write(
            &format!("checkpoints/{city_slug}-{target}.json"),
            &ckpt.to_json().map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;

    let last = ts.end().ok_or("empty series")?;
    let expected_last = cfg.scale.frequency().normalize(cfg.as_of);
    if last != expected_last {
        return Err(format!("data ends at {last}, not at {expected_last}"));
    }
    forecast_latest(&ckpt, ts, cfg.input_len)
}

fn run_city(sh: &Shared, city: &CityConfig) -> CityRun {
    let cfg = sh.cfg;
    let frequency = cfg.scale.frequency();
    let city_slug = slug(&city.name);
    let mut run = CityRun {
        result: CityResult {
            city: city.name.clone(),
            data_span: None,
            observed: None,
            forecasts: BTreeMap::new(),
            climatology_std: None,
            fusion_steps: None,
            llm_attempts: BTreeMap::new(),
            notes: Vec::new(),
        },
        failures: Vec::new(),
        prompts: Vec::new(),
    };
    let fail = |run: &mut CityRun, source: &str, error: String| {
        log::error!("{} / {source}: {error}", city.name);
        run.failures.push(Failure {
            city: city.name.clone(),
            source: source.to_string(),
            error,
        });
    };

    let (full, masked) = match load_city(&city.data, &city.name, cfg.as_of) {
        Ok(x) => x,
        Err(e) => {
            fail(&mut run, "ingest", e);
            return run;
        }
    };
    if masked > 0 {
        run.result
            .notes
            .push(format!("{masked} values masked by consistency checks"));
    }
    let hist = full.truncated_after(cfg.as_of);
    if hist.is_empty() {
        fail(&mut run, "ingest", format!("no data on or before {}", cfg.as_of));
        return run;
    }
    run.result.data_span = Some((hist.start, hist.end()));
    let ts = series_for(cfg.scale, &hist, cfg.min_valid_fraction).truncated_after(cfg.as_of);

    run.result.observed = if let Some(obs) = &sh.observations {
        obs.get(&city.name)
            .and_then(|m| sh.period.iter().map(|d| m.get(d).copied()).collect())
    } else if cfg.observations_from_source {
        let all = series_for(cfg.scale, &full, cfg.min_valid_fraction);
        all.column(FEATURE_PRCP).ok().and_then(|col| {
            sh.period
                .iter()
                .map(|d| all.index_of(*d).and_then(|i| col[i]))
                .collect()
        })
    } else {
        None
    };
    if run.result.observed.is_none() && (sh.observations.is_some() || cfg.observations_from_source) {
        run.result
            .notes
            .push("observations do not cover the whole period".into());
    }

    let mut baseline = None;
    let mut stds = None;
    match build_climatology(&ts, FEATURE_PRCP, cfg.as_of, cfg.window_years) {
        Ok(clim) => {
            if let Err(e) = sh.writer.write(&format!("climatology/{city_slug}.csv"), &clim.to_csv()) {
                fail(&mut run, "baseline", e.to_string());
            }
            match (clim.baseline_forecast(&sh.period), clim.std_for(&sh.period)) {
                (Ok(b), Ok(s)) => {
                    baseline = Some(b);
                    stds = Some(s);
                }
                (Err(e), _) | (_, Err(e)) => fail(&mut run, "baseline", e.to_string()),
            }
        }
        Err(e) => fail(&mut run, "baseline", e.to_string()),
    }
    if cfg.wants(Source::Baseline) {
        if let Some(b) = &baseline {
            run.result.forecasts.insert("baseline".into(), b.clone());
        }
    }
    run.result.climatology_std = stds.clone();

    let kinds = cfg.llm_kinds();
    let needs_em = cfg.wants(Source::Em)
        || cfg.wants(Source::Fusion)
        || kinds.contains(&PromptKind::Exp2)
        || kinds.contains(&PromptKind::Exp5Std);
    let mut em_prcp = None;
    if needs_em {
        match em_forecast(sh, &ts, FEATURE_PRCP, &city_slug) {
            Ok(f) => em_prcp = Some(f),
            Err(e) => fail(&mut run, "em", e),
        }
    }
    if cfg.wants(Source::Em) {
        if let Some(f) = &em_prcp {
            run.result.forecasts.insert("em".into(), f.clone());
        }
    }

    let mut llm_out: BTreeMap<PromptKind, Vec<f64>> = BTreeMap::new();
    for kind in kinds {
        let source = kind.key();
        let payload = match build_payload(sh, kind, &ts, &city_slug, em_prcp.as_deref(), stds.as_deref()) {
            Ok(p) => p,
            Err(e) => {
                fail(&mut run, source, e);
                continue;
            }
        };
        let spec = PromptSpec {
            kind,
            city: city.name.clone(),
            frequency,
            period: sh.period.clone(),
            payload,
        };
        match query_llm(sh, &spec, &city_slug, baseline.as_deref(), &mut run.prompts) {
            Ok(parsed) => {
                run.result.llm_attempts.insert(source.into(), parsed.attempts);
                llm_out.insert(kind, parsed.values);
            }
            Err(e) => fail(&mut run, source, e),
        }
    }
    for (kind, values) in &llm_out {
        if cfg.wants(Source::Exp(*kind)) {
            run.result.forecasts.insert(kind.key().into(), values.clone());
        }
    }

    if cfg.wants(Source::Fusion) {
        let fallback = match cfg.fusion.fallback {
            Source::Exp(k) => llm_out.get(&k).cloned(),
            _ => baseline.clone(),
        };
        match (&em_prcp, &fallback, &stds) {
            (Some(em), Some(fb), Some(s)) => match fuse(em, fb, s, &cfg.fusion.config()) {
                Ok(steps) => {
                    if let Err(e) = sh
                        .writer
                        .write(&format!("forecasts/{city_slug}-fusion-steps.csv"), &fusion_csv(&steps))
                    {
                        fail(&mut run, "fusion", e.to_string());
                    }
                    run.result.forecasts.insert("fusion".into(), fused_values(&steps));
                    run.result.fusion_steps = Some(steps);
                }
                Err(e) => fail(&mut run, "fusion", e.to_string()),
            },
            _ => fail(
                &mut run,
                "fusion",
                format!("needs em, {} and climatology std", cfg.fusion.fallback),
            ),
        }
    }

    let writes: Vec<(String, String)> = run
        .result
        .forecasts
        .iter()
        .map(|(source, values)| {
            (
                format!("forecasts/{city_slug}-{source}.csv"),
                stamp_csv(frequency, &sh.period, "prcp_mm", values),
            )
        })
        .collect();
    for (rel, text) in writes {
        if let Err(e) = sh.writer.write(&rel, &text) {
            fail(&mut run, "report", e.to_string());
        }
    }
    run
}

fn build_payload(
    sh: &Shared,
    kind: PromptKind,
    ts: &TimeSeries,
    city_slug: &str,
    em_prcp: Option<&[f64]>,
    stds: Option<&[f64]>,
) -> Result<Payload, String> {
    let need = |v: Option<&[f64]>, what: &str| v.map(<[f64]>::to_vec).ok_or_else(|| format!("no {what} available"));
    let mut p = Payload::default();
    match kind {
        PromptKind::Exp1 => {}
        PromptKind::Exp2 => p.rainfall = Some(need(em_prcp, "em rainfall forecast")?),
        PromptKind::Exp5Std => {
            p.rainfall = Some(need(em_prcp, "em rainfall forecast")?);
            p.std = Some(need(stds, "climatology std")?);
        }
        PromptKind::Exp3 => {
            p.tmin = Some(em_forecast(sh, ts, FEATURE_TMIN, city_slug).map_err(|e| format!("tmin em: {e}"))?);
            p.tmax = Some(em_forecast(sh, ts, FEATURE_TMAX, city_slug).map_err(|e| format!("tmax em: {e}"))?);
        }
        PromptKind::Exp4 => {
            let series = |name: IndexName| -> Result<Vec<f64>, String> {
                let table = sh.indices.get(&name).ok_or_else(|| format!("no {name} table"))?;
                sh.period
                    .iter()
                    .map(|d| {
                        table
                            .value_at(first_of_month(*d))
                            .ok_or_else(|| format!("{name} table has no value for {}", d.format("%Y-%m")))
                    })
                    .collect()
            };
            p.nino34 = Some(series(IndexName::Nino34)?);
            p.pdo = Some(series(IndexName::Pdo)?);
            p.nao = Some(series(IndexName::Nao)?);
        }
    }
    Ok(p)
}

fn query_llm(
    sh: &Shared,
    spec: &PromptSpec,
    city_slug: &str,
    baseline: Option<&[f64]>,
    records: &mut Vec<PromptRecord>,
) -> Result<llm::ParsedForecast, String> {
    let backend = sh
        .backend
        .as_ref()
        .expect("backend built when LLM sources are requested");
    let source = spec.kind.key();
    let prompt = render_prompt(spec).map_err(|e| e.to_string())?;
    let ctx = QueryContext {
        baseline,
        rainfall_payload: match spec.kind {
            PromptKind::Exp2 | PromptKind::Exp5Std => spec.payload.rainfall.as_deref(),
            _ => None,
        },
    };
    let mut io_error = None;
    let result = llm::forecast(backend, &prompt, sh.period.len(), &ctx, &mut |attempt, text, reply| {
        let prompt_file = format!("prompts/{city_slug}-{source}-{attempt}.txt");
        let reply_file = format!("replies/{city_slug}-{source}-{attempt}.txt");
        let res = sh
            .writer
            .write(&prompt_file, text)
            .and_then(|_| sh.writer.write(&reply_file, reply));
        records.push(PromptRecord {
            city: spec.city.clone(),
            source: source.to_string(),
            attempt,
            prompt_hash: prompt_hash(text),
            prompt_file,
            reply_file,
        });
        res.map_err(|e| {
            let msg = e.to_string();
            io_error = Some(msg.clone());
            std::io::Error::other(msg)
        })
    });
    if result.is_err() && !records.iter().any(|r| r.city == spec.city && r.source == source) {
        // Keep the rendered prompt for audit even when the backend never answered.
        let _ = sh.writer.write(&format!("prompts/{city_slug}-{source}-1.txt"), &prompt);
    }
    if let Some(e) = io_error {
        return Err(e);
    }
    result.map_err(|e| e.to_string())
}
