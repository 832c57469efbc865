use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use climcast::calendar::Frequency;
use climcast::climatology::build_climatology;
use climcast::em::{history_csv, save_checkpoint};
use climcast::ingest::{build_city_series, load_csv_series, read_ghcn_file, CitySeries, CsvSchema};
use climcast::llm::{render_prompt, Payload, PromptKind, PromptSpec};
use climcast::runner::{
    city_history, emit_report, fit_expert, load_bundle, load_observations, run_experiment, CityConfig,
    ExperimentConfig, RunnerError, Scale,
};

#[derive(Parser)]
#[command(
    name = "climcast",
    version,
    about = "Rainfall forecast experiments with an LSTM expert, climatology and LLM prompts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a station file and write a cleaned daily CSV.
    Ingest(IngestArgs),
    /// Fit an expert model for one city and write its checkpoint and history.
    Train(TrainArgs),
    /// Export the climatology (mean, std, support) of one city.
    Climatology(CityArgs),
    /// Render a prompt to stdout without querying any backend.
    Prompt(PromptArgs),
    /// Run a full experiment.
    Run(RunArgs),
    /// Score the forecasts of a run directory against an observations file.
    Evaluate(EvaluateArgs),
    /// Rewrite metrics, charts and bundle of a run directory from its bundle.
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// GHCN-daily `.dly` file.
    #[arg(long, conflicts_with = "csv", requires = "station")]
    ghcn: Option<PathBuf>,
    /// Station identifier inside the GHCN file.
    #[arg(long)]
    station: Option<String>,
    /// Daily CSV with date,tmin,tmax,prcp columns.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    city: String,
    /// First day kept (GHCN only; defaults to the first record).
    #[arg(long)]
    start: Option<NaiveDate>,
    /// Last day kept (GHCN only; defaults to the last record).
    #[arg(long)]
    end: Option<NaiveDate>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CityArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    city: String,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    city: CityArgs,
    /// Feature to forecast: prcp, tmin or tmax.
    #[arg(long, default_value = "prcp")]
    target: String,
}

#[derive(Args)]
struct PromptArgs {
    /// exp1, exp2, exp3, exp4 or exp5.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    city: String,
    /// short (15 days) or long (12 months).
    #[arg(long, default_value = "short")]
    scale: String,
    #[arg(long, default_value = "2023-09-30")]
    as_of: NaiveDate,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    rainfall: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    std: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    tmin: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    tmax: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    nino34: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pdo: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    nao: Option<Vec<f64>>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Write into this directory instead of a new timestamped one.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    run: PathBuf,
    /// CSV with city,date,prcp columns.
    #[arg(long)]
    observations: PathBuf,
    /// Also compute metrics on the pooled series of all cities.
    #[arg(long)]
    pooled: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    run: PathBuf,
}

enum Failure {
    /// Bad arguments or configuration: exit 2.
    Usage(String),
    /// Runtime failure: exit 1.
    Runtime(String),
}

impl From<RunnerError> for Failure {
    fn from(e: RunnerError) -> Self {
        match e {
            RunnerError::Config(_) => Failure::Usage(e.to_string()),
            RunnerError::Io { .. } => Failure::Runtime(e.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| runtime(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn series_csv(s: &CitySeries) -> String {
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("date,tmin,tmax,prcp\n");
    for (i, d) in s.dates().enumerate() {
        out.push_str(&format!(
            "{d},{},{},{}\n",
            cell(s.tmin[i]),
            cell(s.tmax[i]),
            cell(s.prcp[i])
        ));
    }
    out
}

fn ingest(a: IngestArgs) -> Result<bool, Failure> {
    let (series, violations) = if let (Some(path), Some(station)) = (&a.ghcn, &a.station) {
        let records = read_ghcn_file(path).map_err(runtime)?;
        let mine: Vec<_> = records
            .iter()
            .filter(|r| r.station_id.trim() == station.trim())
            .collect();
        let first = mine.iter().map(|r| (r.year, r.month)).min();
        let last = mine.iter().map(|r| (r.year, r.month)).max();
        let (Some(first), Some(last)) = (first, last) else {
            return Err(Failure::Usage(format!(
                "station {station} not found in {}",
                path.display()
            )));
        };
        let start = a
            .start
            .unwrap_or_else(|| NaiveDate::from_ymd_opt(first.0, first.1, 1).expect("valid month"));
        let end = a.end.unwrap_or_else(|| {
            let m = NaiveDate::from_ymd_opt(last.0, last.1, 1).expect("valid month");
            Frequency::Monthly.advance(m, 1).pred_opt().expect("valid date")
        });
        build_city_series(&records, &a.city, station, start, end).map_err(runtime)?
    } else if let Some(path) = &a.csv {
        let text = std::fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        load_csv_series(&text, &a.city, &CsvSchema::default()).map_err(runtime)?
    } else {
        return Err(Failure::Usage("one of --ghcn or --csv is required".into()));
    };
    for v in &violations {
        log::warn!("{}: {}", v.date, v.detail);
    }
    write_output(Some(&a.out), &series_csv(&series))?;
    eprintln!(
        "{}: {} days {}..{}, {} values masked",
        a.city,
        series.len(),
        series.start,
        series.end(),
        violations.len()
    );
    Ok(true)
}

fn city_config(cfg: &ExperimentConfig, name: &str) -> Result<CityConfig, Failure> {
    cfg.cities
        .iter()
        .find(|c| c.name == name)
        .cloned()
        .ok_or_else(|| Failure::Usage(format!("city {name:?} is not in the config")))
}

fn train(a: TrainArgs) -> Result<bool, Failure> {
    let cfg = ExperimentConfig::load(&a.city.config)?;
    let city = city_config(&cfg, &a.city.city)?;
    if !["prcp", "tmin", "tmax"].contains(&a.target.as_str()) {
        return Err(Failure::Usage(format!("unknown target {}", a.target)));
    }
    let (ts, _) = city_history(&cfg, &city).map_err(runtime)?;
    let (ckpt, history) = fit_expert(&cfg, &ts, &a.target).map_err(runtime)?;
    let out = a
        .city
        .out
        .unwrap_or_else(|| PathBuf::from(format!("{}-{}.json", climcast::runner::slug(&city.name), a.target)));
    save_checkpoint(&ckpt, &out).map_err(runtime)?;
    let hist_path = out.with_extension("history.csv");
    std::fs::write(&hist_path, history_csv(&history)).map_err(|e| runtime(format!("{}: {e}", hist_path.display())))?;
    if let Some(best) = history
        .iter()
        .filter_map(|r| r.val_mse.map(|v| (r.epoch, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
    {
        eprintln!("best validation mse {:.6} at epoch {}", best.1, best.0);
    }
    eprintln!("wrote {} and {}", out.display(), hist_path.display());
    Ok(true)
}

fn climatology(a: CityArgs) -> Result<bool, Failure> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let city = city_config(&cfg, &a.city)?;
    let (ts, _) = city_history(&cfg, &city).map_err(runtime)?;
    let clim = build_climatology(&ts, "prcp", cfg.as_of, cfg.window_years).map_err(runtime)?;
    write_output(a.out.as_deref(), &clim.to_csv())?;
    Ok(true)
}

fn prompt(a: PromptArgs) -> Result<bool, Failure> {
    let kind = PromptKind::parse(&a.kind).ok_or_else(|| Failure::Usage(format!("unknown prompt kind {}", a.kind)))?;
    let scale = match a.scale.as_str() {
        "short" => Scale::Short,
        "long" => Scale::Long,
        other => return Err(Failure::Usage(format!("unknown scale {other}"))),
    };
    let spec = PromptSpec {
        kind,
        city: a.city,
        frequency: scale.frequency(),
        period: scale.period(a.as_of),
        payload: Payload {
            rainfall: a.rainfall,
            tmin: a.tmin,
            tmax: a.tmax,
            nino34: a.nino34,
            pdo: a.pdo,
            nao: a.nao,
            std: a.std,
        },
    };
    let text = render_prompt(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
    print!("{text}");
    Ok(true)
}

fn run(a: RunArgs) -> Result<bool, Failure> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let outcome = run_experiment(&cfg, a.run_dir.as_deref())?;
    for f in &outcome.bundle.failures {
        eprintln!("failed: {} / {}: {}", f.city, f.source, f.error);
    }
    for s in &outcome.bundle.summary {
        eprintln!(
            "{:<9} cities {} rmse {:.4} pearson {} nse {}",
            s.source,
            s.summary.cities,
            s.summary.rmse,
            s.summary
                .pearson
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "-".into()),
            s.summary.nse.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
        );
    }
    println!("{}", outcome.run_dir.display());
    Ok(!outcome.has_failures())
}

fn evaluate(a: EvaluateArgs) -> Result<bool, Failure> {
    let mut bundle = load_bundle(&a.run)?;
    let obs = load_observations(&a.observations, bundle.scale.frequency())?;
    bundle.attach_observations(&obs)?;
    bundle.score(a.pooled);
    emit_report(&bundle, &a.run)?;
    print!("{}", climcast::runner::metrics_csv(&bundle));
    Ok(bundle.failures.is_empty())
}

fn report(a: ReportArgs) -> Result<bool, Failure> {
    let bundle = load_bundle(&a.run)?;
    emit_report(&bundle, &a.run)?;
    Ok(bundle.failures.is_empty())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train(a),
        Command::Climatology(a) => climatology(a),
        Command::Prompt(a) => prompt(a),
        Command::Run(a) => run(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
