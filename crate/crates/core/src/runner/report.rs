//! Report bundle, observation files, metric tables and SVG charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::config::{slug, ExperimentConfig, Scale};
use super::RunnerError;
use crate::calendar::{parse_stamp, Frequency};
use crate::fusion::FusionStep;
use crate::metrics::{summarize, summarize_pooled, MetricReport, MetricSummary};

/// Observed rainfall per city, keyed by normalized stamp.
pub type Observations = BTreeMap<String, BTreeMap<NaiveDate, f64>>;

/// Reads a `city,date,prcp` CSV. Dates are `YYYY-MM-DD` or `YYYY-MM` and are
/// normalized to `frequency`.
pub fn load_observations(path: &Path, frequency: Frequency) -> Result<Observations, RunnerError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunnerError::io(path, e))?;
    parse_observations(&text, frequency)
}

pub fn parse_observations(text: &str, frequency: Frequency) -> Result<Observations, RunnerError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| RunnerError::Config(e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| RunnerError::Config(format!("observations file has no {name} column")))
    };
    let (c_city, c_date, c_prcp) = (col("city")?, col("date")?, col("prcp")?);
    let mut out = Observations::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| RunnerError::Config(e.to_string()))?;
        let bad = || RunnerError::Config(format!("observations row {}: unreadable", i + 2));
        let date = parse_stamp(&row[c_date]).ok_or_else(bad)?;
        let value: f64 = row[c_prcp].parse().map_err(|_| bad())?;
        out.entry(row[c_city].to_string())
            .or_default()
            .insert(frequency.normalize(date), value);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub city: String,
    pub source: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityResult {
    pub city: String,
    /// First and last day of ingested data on or before `as_of`.
    pub data_span: Option<(NaiveDate, NaiveDate)>,
    pub observed: Option<Vec<f64>>,
    /// Source key to forecast, mm per period step.
    pub forecasts: BTreeMap<String, Vec<f64>>,
    /// Historical per-step std used as the uncertainty signal.
    pub climatology_std: Option<Vec<f64>>,
    pub fusion_steps: Option<Vec<FusionStep>>,
    /// Source key to number of LLM queries spent.
    pub llm_attempts: BTreeMap<String, u32>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub city: String,
    pub source: String,
    pub rmse: f64,
    pub pearson: Option<f64>,
    pub nse: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub source: String,
    #[serde(flatten)]
    pub summary: MetricSummary,
    pub pooled: Option<MetricReport>,
}

/// Diagnostic: correlation of each source's forecast with the climatology baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCorrelation {
    pub city: String,
    pub source: String,
    pub pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub city: String,
    pub source: String,
    pub attempt: u32,
    pub prompt_hash: String,
    pub prompt_file: String,
    pub reply_file: String,
}

/// Run description without wall-clock data, so identical runs produce identical bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub units: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
    pub prompts: Vec<PromptRecord>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub run_name: String,
    pub scale: Scale,
    pub as_of: NaiveDate,
    pub period: Vec<String>,
    pub cities: Vec<CityResult>,
    pub metrics: Vec<MetricRow>,
    pub summary: Vec<SummaryRow>,
    pub baseline_correlation: Vec<BaselineCorrelation>,
    pub failures: Vec<Failure>,
    pub manifest: Manifest,
}

impl ReportBundle {
    pub fn city(&self, name: &str) -> Option<&CityResult> {
        self.cities.iter().find(|c| c.city == name)
    }

    pub fn forecast(&self, city: &str, source: &str) -> Option<&[f64]> {
        self.city(city)?.forecasts.get(source).map(Vec::as_slice)
    }

    /// Recomputes metrics, summaries and the baseline-correlation diagnostic
    /// from the stored forecasts and observations.
    pub fn score(&mut self, pooled: bool) {
        self.metrics.clear();
        self.baseline_correlation.clear();
        for c in &self.cities {
            let baseline = c.forecasts.get("baseline");
            for (source, forecast) in &c.forecasts {
                if let Some(obs) = &c.observed {
                    if let Ok(r) = MetricReport::compute(forecast, obs) {
                        self.metrics.push(MetricRow {
                            city: c.city.clone(),
                            source: source.clone(),
                            rmse: r.rmse,
                            pearson: r.pearson,
                            nse: r.nse,
                            n: r.n,
                        });
                    }
                }
                if let Some(b) = baseline {
                    if source != "baseline" {
                        self.baseline_correlation.push(BaselineCorrelation {
                            city: c.city.clone(),
                            source: source.clone(),
                            pearson: crate::metrics::pearson(forecast, b).ok().flatten(),
                        });
                    }
                }
            }
        }
        let mut by_source: BTreeMap<String, BTreeMap<String, MetricReport>> = BTreeMap::new();
        for m in &self.metrics {
            by_source.entry(m.source.clone()).or_default().insert(
                m.city.clone(),
                MetricReport {
                    rmse: m.rmse,
                    pearson: m.pearson,
                    nse: m.nse,
                    n: m.n,
                },
            );
        }
        self.summary = by_source
            .iter()
            .filter_map(|(source, per_city)| {
                let summary = summarize(per_city)?;
                let pooled = pooled
                    .then(|| {
                        let pairs: Vec<(&[f64], &[f64])> = self
                            .cities
                            .iter()
                            .filter(|c| per_city.contains_key(&c.city))
                            .filter_map(|c| Some((c.forecasts.get(source)?.as_slice(), c.observed.as_deref()?)))
                            .collect();
                        summarize_pooled(&pairs).ok()
                    })
                    .flatten();
                Some(SummaryRow {
                    source: source.clone(),
                    summary,
                    pooled,
                })
            })
            .collect();
    }

    /// Fills observed vectors from an observation table. Cities without a value
    /// for every period stamp keep `None`.
    pub fn attach_observations(&mut self, obs: &Observations) -> Result<(), RunnerError> {
        let period: Vec<NaiveDate> = self
            .period
            .iter()
            .map(|s| parse_stamp(s).ok_or_else(|| RunnerError::Config(format!("bad period stamp {s}"))))
            .collect::<Result<_, _>>()?;
        for c in &mut self.cities {
            c.observed = obs
                .get(&c.city)
                .and_then(|m| period.iter().map(|d| m.get(d).copied()).collect::<Option<Vec<f64>>>());
        }
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(bundle: &ReportBundle) -> String {
    let mut out = String::from("city,source,rmse,pearson,nse,n\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    for m in &bundle.metrics {
        w.write_record([
            m.city.as_str(),
            &m.source,
            &m.rmse.to_string(),
            &opt(m.pearson),
            &opt(m.nse),
            &m.n.to_string(),
        ])
        .expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"));
    out
}

#[derive(Serialize)]
struct MetricsJson<'a> {
    rows: &'a [MetricRow],
    summary: &'a [SummaryRow],
    baseline_correlation: &'a [BaselineCorrelation],
}

pub fn metrics_json(bundle: &ReportBundle) -> String {
    serde_json::to_string_pretty(&MetricsJson {
        rows: &bundle.metrics,
        summary: &bundle.summary,
        baseline_correlation: &bundle.baseline_correlation,
    })
    .expect("serializable")
}

const PALETTE: [&str; 10] = [
    "#000000", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf",
];

/// One line chart per city: observed (when present) and every forecast source.
pub fn city_chart_svg(bundle: &ReportBundle, city: &CityResult) -> String {
    let (w, h, left, right, top, bottom) = (720.0, 360.0, 60.0, 150.0, 30.0, 40.0);
    let mut series: Vec<(&str, &[f64])> = Vec::new();
    if let Some(o) = &city.observed {
        series.push(("observed", o));
    }
    series.extend(city.forecasts.iter().map(|(k, v)| (k.as_str(), v.as_slice())));
    let n = bundle.period.len().max(2);
    let y_max = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.05;
    let x = |i: usize| left + (w - left - right) * i as f64 / (n - 1) as f64;
    let y = |v: f64| top + (h - top - bottom) * (1.0 - v / y_max);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="20" font-family="sans-serif" font-size="14">{} rainfall (mm)</text>"#,
        escape(&city.city)
    );
    let _ = writeln!(
        svg,
        r##"<path d="M{left} {top} V{:.2} H{:.2}" stroke="#444" fill="none"/>"##,
        h - bottom,
        w - right
    );
    for frac in [0.0, 0.5, 1.0] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{:.1}</text>"#,
            left - 4.0,
            y(y_max * frac) + 3.0,
            y_max * frac
        );
    }
    for (i, label) in [(0, bundle.period.first()), (n - 1, bundle.period.last())] {
        if let Some(label) = label {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{label}</text>"#,
                x(i),
                h - bottom + 14.0
            );
        }
    }
    for (k, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{:.2},{:.2}", x(i), y(*v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-source="{name}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.join(" ")
        );
        let ly = top + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="{color}">{name}</text>"#,
            w - right + 10.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Every file `emit_report` writes, as (path relative to the run directory, contents).
pub fn report_files(bundle: &ReportBundle) -> Vec<(String, String)> {
    let mut files = vec![
        ("metrics.csv".to_string(), metrics_csv(bundle)),
        ("metrics.json".to_string(), metrics_json(bundle)),
        (
            "bundle.json".to_string(),
            serde_json::to_string_pretty(bundle).expect("serializable"),
        ),
    ];
    for c in &bundle.cities {
        files.push((format!("charts/{}.svg", slug(&c.city)), city_chart_svg(bundle, c)));
    }
    files
}

/// Writes metrics tables, charts and the bundle itself into `run_dir`.
pub fn emit_report(bundle: &ReportBundle, run_dir: &Path) -> Result<(), RunnerError> {
    for (rel, contents) in report_files(bundle) {
        let path = run_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| RunnerError::io(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| RunnerError::io(&path, e))?;
    }
    Ok(())
}

pub fn load_bundle(run_dir: &Path) -> Result<ReportBundle, RunnerError> {
    let path = run_dir.join("bundle.json");
    let text = std::fs::read_to_string(&path).map_err(|e| RunnerError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))
}
