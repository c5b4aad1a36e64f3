//! Operator-facing command suite: replay, synthesis, data-quality
//! validation, walk-forward evaluation, feature selection, and the parallel
//! streaming run, with a TOML config file underneath every command.
//!
//! Precedence is command-line flag over config file over built-in default.
//! Exit codes: 0 success, 2 input error, 3 insufficient data, 4 config
//! error. The driver itself is single-threaded; parallel work happens in
//! the runtime it delegates to.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{NaiveDateTime, TimeDelta};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::evaluation::{
    enumerate_combinations, error_report, median_across_households, score_combo, walk_forward,
    weekly_stability, CellId, ComboScore, EvalError, ForecastRecord, WalkForwardConfig,
};
use crate::features::{FeatureCombination, FeatureId};
use crate::ingest::{
    assess_all_days, read_lived_files, select_evaluation_range, HouseholdRoster, IngestError,
    SensorReading, TS_FORMAT,
};
use crate::models::{HyperParams, ModelFamily, ModelSpec};
use crate::pipeline::{PipelineConfig, SinkKind};
use crate::replay::{generate_synthetic, EventFeed, EventSource, FeedItem, SyntheticProfile};
use crate::runtime::{run as runtime_run, RunOutcome, RuntimeError};
use crate::windowing::MicroWindowSpec;

/// Command failure with its exit-code class.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or unusable input data. Exit code 2.
    Input(String),
    /// The data cannot support the requested computation. Exit code 3.
    InsufficientData(String),
    /// Invalid flags, config keys, or parameter values. Exit code 4.
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::InsufficientData(_) => 3,
            CliError::Config(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input: {m}"),
            CliError::InsufficientData(m) => write!(f, "insufficient data: {m}"),
            CliError::Config(m) => write!(f, "config: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::InsufficientData { .. } => CliError::InsufficientData(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::PoolTooSmall { .. } | EvalError::Model(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::InsufficientData(other.to_string()),
        }
    }
}

impl From<RuntimeError> for CliError {
    fn from(e: RuntimeError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "loadcast",
    version,
    about = "Streaming short-term household load forecasting over smart-plug data"
)]
pub struct Cli {
    /// TOML config file; command-line flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for every stochastic component
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Model hyperparameter override; repeatable
    #[arg(long = "hp", global = true, value_name = "KEY=VALUE")]
    pub hp: Vec<String>,

    /// Report directory (for synth: the output CSV file)
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay one household's readings to stdout, batch or live-paced
    Replay(ReplayArgs),
    /// Generate a synthetic household log in the 9-column CSV format
    Synth(SynthArgs),
    /// Assess per-household day quality: total, skipped, and used days
    Validate(ValidateArgs),
    /// Walk-forward error evaluation across models, feature sets, horizons
    Evaluate(EvaluateArgs),
    /// Rank feature combinations by cross-household Score
    FeatureSelect(FeatureSelectArgs),
    /// Stream households through parallel per-household pipelines
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReplayMode {
    Batch,
    Paced,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Input CSV files, plain or gzip
    #[arg(long, num_args = 1.., value_name = "FILE")]
    pub input: Vec<PathBuf>,

    /// Household to replay
    #[arg(long)]
    pub house: u32,

    /// Emit as fast as possible or on the recorded timeline
    #[arg(long, value_enum, default_value = "batch")]
    pub mode: ReplayMode,

    /// Time compression factor for paced mode
    #[arg(long, default_value_t = 3600.0)]
    pub speedup: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON profile: one household object or a list of them
    #[arg(long, value_name = "FILE")]
    pub profile: PathBuf,

    /// Days of data to generate
    #[arg(long, default_value_t = 15)]
    pub days: i64,

    /// First timestamp, `YYYY-MM-DD HH:MM:SS`
    #[arg(long, default_value = "2014-01-06 00:00:00")]
    pub start: String,

    /// Seconds between successive readings of one device
    #[arg(long, default_value_t = 2)]
    pub sample_secs: i64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Input CSV files, plain or gzip
    #[arg(long, num_args = 1.., value_name = "FILE")]
    pub input: Vec<PathBuf>,

    /// Longest tolerated silence of any device within a day, minutes
    #[arg(long)]
    pub max_gap_min: Option<i64>,

    /// Usable days required for a household to pass
    #[arg(long)]
    pub min_days: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Input CSV files, plain or gzip
    #[arg(long, num_args = 1.., value_name = "FILE")]
    pub input: Vec<PathBuf>,

    /// Households to evaluate; all observed by default
    #[arg(long, value_delimiter = ',')]
    pub houses: Option<Vec<u32>>,

    /// Model families to compare
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,

    /// Feature combination (preset or comma list); repeatable
    #[arg(long = "features", value_name = "COMBO")]
    pub features: Vec<String>,

    /// Horizons in minutes
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<i64>>,

    /// Predictions per full retrain
    #[arg(long)]
    pub retrain_every: Option<usize>,

    /// Sliding history window length, days
    #[arg(long)]
    pub history_days: Option<i64>,

    /// Prediction grid increment, minutes
    #[arg(long)]
    pub increment_min: Option<i64>,

    /// Feature base window length, minutes
    #[arg(long)]
    pub base_min: Option<i64>,
}

#[derive(Debug, Args)]
pub struct FeatureSelectArgs {
    /// Input CSV files, plain or gzip
    #[arg(long, num_args = 1.., value_name = "FILE")]
    pub input: Vec<PathBuf>,

    /// Candidate feature names, comma-separated
    #[arg(long)]
    pub pool: Option<String>,

    /// Combination size
    #[arg(long)]
    pub k: Option<usize>,

    /// Households to score over; needs at least 2
    #[arg(long, value_delimiter = ',')]
    pub households: Option<Vec<u32>>,

    /// Model family carrying the comparison
    #[arg(long)]
    pub model: Option<String>,

    /// Horizon in minutes
    #[arg(long)]
    pub horizon: Option<i64>,

    /// Predictions per full retrain
    #[arg(long)]
    pub retrain_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// CSV logs and/or JSON synthetic profiles
    #[arg(long, num_args = 1.., value_name = "FILE")]
    pub input: Vec<PathBuf>,

    /// `all` or a comma-separated household id list
    #[arg(long, default_value = "all")]
    pub houses: String,

    /// Worker threads for the per-household pipelines
    #[arg(long)]
    pub parallelism: Option<usize>,

    /// Model family for every pipeline
    #[arg(long)]
    pub model: Option<String>,

    /// Feature combination, preset or comma list
    #[arg(long = "features", value_name = "COMBO")]
    pub features: Option<String>,

    /// Horizon in minutes
    #[arg(long)]
    pub horizon: Option<i64>,

    /// Sliding history window length, days
    #[arg(long)]
    pub history_days: Option<i64>,

    /// Prediction grid increment, minutes
    #[arg(long)]
    pub increment_min: Option<i64>,

    /// Feature base window length, minutes
    #[arg(long)]
    pub base_min: Option<i64>,

    /// Predictions per full retrain
    #[arg(long)]
    pub retrain_every: Option<usize>,

    /// Replay pacing; omit for batch speed
    #[arg(long)]
    pub speedup: Option<f64>,

    /// Path stem for the latency report; writes `<stem>.json` + `<stem>.csv`
    #[arg(long, value_name = "STEM")]
    pub latency_report: Option<PathBuf>,

    /// Days to generate from each JSON profile input
    #[arg(long)]
    pub days: Option<i64>,

    /// Sampling period for generated profile inputs, seconds
    #[arg(long, default_value_t = 2)]
    pub sample_secs: i64,

    /// Collect forecasts internally and emit per-household error reports
    #[arg(long)]
    pub analytics: bool,
}

/// Declarative counterpart of the flags, one section per concern. Unknown
/// keys are rejected so typos cannot silently fall back to defaults.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub input: InputSection,
    pub window: WindowSection,
    pub features: FeaturesSection,
    pub model: ModelSection,
    pub quality: QualitySection,
    pub evaluate: EvaluateSection,
    pub runtime: RuntimeSection,
    pub select: SelectSection,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    pub paths: Vec<PathBuf>,
    pub houses: Option<Vec<u32>>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    pub history_days: Option<i64>,
    pub increment_min: Option<i64>,
    pub base_min: Option<i64>,
    pub horizon_min: Option<i64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub combination: Option<String>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub family: Option<String>,
    pub hyperparams: BTreeMap<String, toml::Value>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualitySection {
    pub max_gap_min: Option<i64>,
    pub min_days: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub horizons_min: Option<Vec<i64>>,
    pub models: Option<Vec<String>>,
    pub combinations: Option<Vec<String>>,
    pub retrain_every: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeSection {
    pub parallelism: Option<usize>,
    pub speedup: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSection {
    pub pool: Option<String>,
    pub k: Option<usize>,
    pub households: Option<Vec<u32>>,
}

/// Process entry point: parse, execute, translate failures to exit codes.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(4);
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Dispatch one parsed invocation, writing primary output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    let ctx = Context { config, seed: cli.seed, hp: cli.hp, out_path: cli.out };
    match cli.command {
        Command::Replay(args) => cmd_replay(&ctx, &args, out),
        Command::Synth(args) => cmd_synth(&ctx, &args, out),
        Command::Validate(args) => cmd_validate(&ctx, &args, out),
        Command::Evaluate(args) => cmd_evaluate(&ctx, &args, out),
        Command::FeatureSelect(args) => cmd_feature_select(&ctx, &args, out),
        Command::Run(args) => cmd_run(&ctx, &args, out),
    }
}

/// Everything global that commands resolve against.
struct Context {
    config: RunConfig,
    seed: Option<u64>,
    hp: Vec<String>,
    out_path: Option<PathBuf>,
}

impl Context {
    fn output_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self
            .out_path
            .clone()
            .or_else(|| self.config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }

    fn input_paths(&self, flag: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
        let paths =
            if flag.is_empty() { self.config.input.paths.clone() } else { flag.to_vec() };
        if paths.is_empty() {
            return Err(CliError::Config("no input files given (flag or [input] paths)".into()));
        }
        Ok(paths)
    }

    fn window(
        &self,
        history_days: Option<i64>,
        increment_min: Option<i64>,
        base_min: Option<i64>,
        horizon_min: Option<i64>,
    ) -> Result<(TimeDelta, MicroWindowSpec), CliError> {
        let w = &self.config.window;
        let history = history_days.or(w.history_days).unwrap_or(14);
        let increment = increment_min.or(w.increment_min).unwrap_or(15);
        let base = base_min.or(w.base_min).unwrap_or(60);
        let horizon = horizon_min.or(w.horizon_min).unwrap_or(60);
        for (name, v) in
            [("history_days", history), ("increment_min", increment), ("base_min", base), ("horizon_min", horizon)]
        {
            if v < 1 {
                return Err(CliError::Config(format!("{name} must be at least 1, got {v}")));
            }
        }
        if TimeDelta::days(history) < TimeDelta::minutes(base + horizon) {
            return Err(CliError::Config(format!(
                "history of {history} d cannot cover base {base} min + horizon {horizon} min"
            )));
        }
        Ok((TimeDelta::days(history), MicroWindowSpec::from_minutes(increment, base, horizon)))
    }

    fn combo(&self, flag: Option<&str>) -> Result<FeatureCombination, CliError> {
        let text = flag
            .map(str::to_string)
            .or_else(|| self.config.features.combination.clone())
            .unwrap_or_else(|| "complex".into());
        FeatureCombination::parse(&text).map_err(config_err)
    }

    /// Hyperparameters resolve config table first, the global seed next,
    /// and explicit `--hp` pairs last, so a `--hp seed=` wins over `--seed`.
    fn model(&self, flag: Option<&str>, default: ModelFamily) -> Result<ModelSpec, CliError> {
        let family: ModelFamily = match flag.or(self.config.model.family.as_deref()) {
            Some(s) => s.parse().map_err(config_err)?,
            None => default,
        };
        let mut hp = HyperParams::default();
        for (key, value) in &self.config.model.hyperparams {
            hp.set(key, &toml_scalar(key, value)?).map_err(config_err)?;
        }
        if let Some(seed) = self.seed {
            hp.seed = seed;
        }
        for pair in &self.hp {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                CliError::Config(format!("--hp takes KEY=VALUE, got {pair:?}"))
            })?;
            hp.set(key.trim(), value.trim()).map_err(config_err)?;
        }
        Ok(ModelSpec { family, hyperparams: hp })
    }

    fn retrain_every(&self, flag: Option<usize>) -> Result<usize, CliError> {
        let v = flag.or(self.config.evaluate.retrain_every).unwrap_or(96);
        if v == 0 {
            return Err(CliError::Config("retrain_every must be at least 1".into()));
        }
        Ok(v)
    }
}

fn toml_scalar(key: &str, value: &toml::Value) -> Result<String, CliError> {
    match value {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        other => Err(CliError::Config(format!(
            "hyperparameter {key} must be a scalar, got {other}"
        ))),
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn out_write(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Input(format!("cannot write output: {e}")))
}

// --- replay ---------------------------------------------------------------

fn cmd_replay(ctx: &Context, args: &ReplayArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let paths = ctx.input_paths(&args.input)?;
    let summary = read_lived_files(&paths)?;
    let readings = summary.load_readings(args.house);
    if readings.is_empty() {
        return Err(CliError::InsufficientData(format!(
            "household {} has no LOAD readings in the given inputs",
            args.house
        )));
    }
    let mut source = match args.mode {
        ReplayMode::Batch => EventSource::batch(readings.to_vec()),
        ReplayMode::Paced => {
            EventSource::paced(readings.to_vec(), args.speedup).map_err(config_err)?
        }
    };
    let started = std::time::Instant::now();
    let mut emitted = 0u64;
    loop {
        match source.next_event().map_err(|e| CliError::Input(e.to_string()))? {
            FeedItem::Event(r) => {
                out_write(out, &r.to_csv_record())?;
                out_write(out, "\n")?;
                emitted += 1;
            }
            FeedItem::Pending => continue,
            FeedItem::EndOfStream => break,
        }
    }
    eprintln!(
        "replayed {emitted} readings of household {} in {:.2}s",
        args.house,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

// --- synth ----------------------------------------------------------------

/// A profile file holds one household or a list of households.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ProfileFile {
    Many(Vec<SyntheticProfile>),
    One(SyntheticProfile),
}

fn cmd_synth(ctx: &Context, args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let out_file = ctx
        .out_path
        .clone()
        .ok_or_else(|| CliError::Config("synth requires --out <csv path>".into()))?;
    let text = fs::read_to_string(&args.profile)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", args.profile.display())))?;
    let profiles = match serde_json::from_str::<ProfileFile>(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.profile.display())))?
    {
        ProfileFile::Many(v) => v,
        ProfileFile::One(p) => vec![p],
    };
    if args.days < 1 {
        return Err(CliError::Config(format!("--days must be at least 1, got {}", args.days)));
    }
    if args.sample_secs < 1 {
        return Err(CliError::Config(format!(
            "--sample-secs must be at least 1, got {}",
            args.sample_secs
        )));
    }
    let start = NaiveDateTime::parse_from_str(&args.start, TS_FORMAT)
        .map_err(|e| CliError::Config(format!("bad --start {:?}: {e}", args.start)))?;

    let mut log: Vec<SensorReading> = Vec::new();
    for (idx, mut profile) in profiles.into_iter().enumerate() {
        if let Some(seed) = ctx.seed {
            profile.seed = seed.wrapping_add(idx as u64);
        }
        let readings = generate_synthetic(
            &profile,
            start,
            TimeDelta::days(args.days),
            TimeDelta::seconds(args.sample_secs),
        )
        .map_err(config_err)?;
        log.extend(readings);
    }
    log.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.sensor_id.cmp(&b.sensor_id)));

    let mut body = String::with_capacity(log.len() * 64);
    body.push_str("TS,Type,Value,Unit,Houseid,Mac,Sensor_id,Year,Month\n");
    for r in &log {
        body.push_str(&r.to_csv_record());
        body.push('\n');
    }
    if out_file.extension().is_some_and(|e| e == "gz") {
        let file = fs::File::create(&out_file)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", out_file.display())))?;
        let mut enc = flate2::write::GzEncoder::new(file, flate2::Compression::default());
        enc.write_all(body.as_bytes())
            .and_then(|()| enc.finish().map(|_| ()))
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", out_file.display())))?;
    } else {
        write_file(&out_file, &body)?;
    }
    out_write(out, &format!("wrote {} readings to {}\n", log.len(), out_file.display()))?;
    Ok(())
}

// --- validate ---------------------------------------------------------------

fn cmd_validate(ctx: &Context, args: &ValidateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let paths = ctx.input_paths(&args.input)?;
    let max_gap_min = args.max_gap_min.or(ctx.config.quality.max_gap_min).unwrap_or(60);
    let min_days = args.min_days.or(ctx.config.quality.min_days).unwrap_or(14);
    if max_gap_min < 1 {
        return Err(CliError::Config(format!("max_gap_min must be at least 1, got {max_gap_min}")));
    }
    if min_days < 1 {
        return Err(CliError::Config("min_days must be at least 1".into()));
    }
    let max_gap = TimeDelta::minutes(max_gap_min);

    let summary = read_lived_files(&paths)?;
    let houses = summary.households();
    if houses.is_empty() {
        return Err(CliError::InsufficientData("inputs hold no LOAD readings".into()));
    }

    let dir = ctx.output_dir()?;
    let mut table = String::from("id,total,skipped,used\n");
    let mut days_csv = String::from("house_id,date,usable,reason\n");
    out_write(
        out,
        &format!("{:>6} {:>7} {:>9} {:>6}  verdict\n", "id", "total", "skipped", "used"),
    )?;
    for house in houses {
        let readings = summary.load_readings(house);
        let roster = HouseholdRoster::from_readings(house, readings.iter())?;
        let verdicts = assess_all_days(readings, &roster, max_gap);
        for v in &verdicts {
            days_csv.push_str(&format!("{house},{},{},{}\n", v.date, v.usable, v.reason));
        }
        let (total, skipped, used, verdict) = match select_evaluation_range(&verdicts, min_days) {
            Ok(range) => (range.total, range.skipped, range.used, "OK".to_string()),
            Err(e) => {
                let used = verdicts.iter().filter(|v| v.usable).count();
                (verdicts.len(), verdicts.len() - used, used, e.to_string())
            }
        };
        table.push_str(&format!("{house},{total},{skipped},{used}\n"));
        out_write(
            out,
            &format!("{house:>6} {total:>7} {skipped:>9} {used:>6}  {verdict}\n"),
        )?;
    }
    write_file(&dir.join("validate.csv"), &table)?;
    write_file(&dir.join("validate_days.csv"), &days_csv)?;
    Ok(())
}

// --- evaluate ---------------------------------------------------------------

#[derive(Debug, Serialize)]
struct CellSummary {
    model: String,
    combo: String,
    horizon_min: i64,
    metric: &'static str,
    median: f64,
    households: usize,
}

#[derive(Debug, Serialize)]
struct StabilitySummary {
    model: String,
    combo: String,
    horizon_min: i64,
    mean_weekly_mape_stddev: f64,
    per_household: Vec<(u32, f64)>,
}

#[derive(Debug, Serialize)]
struct SkippedCell {
    house_id: u32,
    model: String,
    combo: String,
    horizon_min: i64,
    reason: String,
}

#[derive(Debug, Serialize)]
struct EvaluateSummary {
    cells: Vec<CellSummary>,
    stability: Vec<StabilitySummary>,
    skipped: Vec<SkippedCell>,
}

fn cmd_evaluate(ctx: &Context, args: &EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let paths = ctx.input_paths(&args.input)?;

    // resolve and validate the whole grid before touching any data
    let model_names: Vec<String> = args
        .models
        .clone()
        .or_else(|| ctx.config.evaluate.models.clone())
        .unwrap_or_else(|| vec!["persistence".into()]);
    let models: Vec<ModelSpec> = model_names
        .iter()
        .map(|name| ctx.model(Some(name), ModelFamily::Persistence))
        .collect::<Result<_, _>>()?;
    let combo_texts: Vec<String> = if args.features.is_empty() {
        ctx.config
            .evaluate
            .combinations
            .clone()
            .unwrap_or_else(|| vec!["complex".into()])
    } else {
        args.features.clone()
    };
    let combos: Vec<FeatureCombination> = combo_texts
        .iter()
        .map(|t| FeatureCombination::parse(t).map_err(config_err))
        .collect::<Result<_, _>>()?;
    let horizons: Vec<i64> = args
        .horizons
        .clone()
        .or_else(|| ctx.config.evaluate.horizons_min.clone())
        .or_else(|| ctx.config.window.horizon_min.map(|h| vec![h]))
        .unwrap_or_else(|| vec![60]);
    let retrain_every = ctx.retrain_every(args.retrain_every)?;
    let mut window_specs = Vec::with_capacity(horizons.len());
    let mut history_span = TimeDelta::days(14);
    for &h in &horizons {
        let (span, spec) =
            ctx.window(args.history_days, args.increment_min, args.base_min, Some(h))?;
        history_span = span;
        window_specs.push(spec);
    }

    let summary = read_lived_files(&paths)?;
    let available = summary.households();
    let houses: Vec<u32> = match args.houses.clone().or_else(|| ctx.config.input.houses.clone()) {
        Some(filter) => available.into_iter().filter(|h| filter.contains(h)).collect(),
        None => available,
    };
    if houses.is_empty() {
        return Err(CliError::InsufficientData(
            "no household matches the inputs and the --houses filter".into(),
        ));
    }

    let mut cells_csv = String::from("house_id,model,combo,horizon,metric,value,n\n");
    let mut traces_csv =
        String::from("house_id,model,combo,horizon_min,t_predict,forecast_kwh,actual_kwh\n");
    let mut stability_csv =
        String::from("model,combo,horizon_min,house_id,weekly_mape_stddev\n");
    let mut medians: Vec<(CellId, f64)> = Vec::new();
    let mut stability = Vec::new();
    let mut skipped = Vec::new();

    for model in &models {
        for combo in &combos {
            for (h_idx, &horizon) in horizons.iter().enumerate() {
                let mut cell_records: Vec<ForecastRecord> = Vec::new();
                for &house in &houses {
                    let readings = summary.load_readings(house);
                    let roster = HouseholdRoster::from_readings(house, readings.iter())?;
                    let wf_config = WalkForwardConfig {
                        history_span,
                        window_spec: window_specs[h_idx],
                        combo: combo.clone(),
                        model: *model,
                        retrain_every,
                    };
                    let cell = || SkippedCell {
                        house_id: house,
                        model: model.family.name().into(),
                        combo: combo.to_string(),
                        horizon_min: horizon,
                        reason: String::new(),
                    };
                    let records = match walk_forward(readings, &roster, &wf_config) {
                        Ok(output) => output.records,
                        Err(e) => {
                            skipped.push(SkippedCell { reason: e.to_string(), ..cell() });
                            continue;
                        }
                    };
                    let report = match error_report(&records) {
                        Ok(r) => r,
                        Err(e) => {
                            skipped.push(SkippedCell { reason: e.to_string(), ..cell() });
                            continue;
                        }
                    };
                    let id = |metric: &str| {
                        format!("{house},{},{combo},{horizon},{metric}", model.family.name())
                    };
                    cells_csv.push_str(&format!("{},{:.6},{}\n", id("mape"), report.mape, report.n));
                    cells_csv
                        .push_str(&format!("{},{:.6},{}\n", id("nrmse"), report.nrmse, report.n));
                    medians.push((
                        CellId {
                            model: model.family.name().into(),
                            combo: combo.to_string(),
                            horizon_min: horizon,
                        },
                        report.mape,
                    ));
                    for r in &records {
                        let actual = r
                            .actual_kwh
                            .map(|a| format!("{a:.6}"))
                            .unwrap_or_default();
                        traces_csv.push_str(&format!(
                            "{house},{},{combo},{horizon},{},{:.6},{actual}\n",
                            model.family.name(),
                            r.t_predict.format(TS_FORMAT),
                            r.forecast_kwh,
                        ));
                    }
                    cell_records.extend(records);
                }
                if let Ok(report) = weekly_stability(&cell_records) {
                    for (house, stddev) in &report.per_household {
                        stability_csv.push_str(&format!(
                            "{},{combo},{horizon},{house},{stddev:.6}\n",
                            model.family.name(),
                        ));
                    }
                    stability.push(StabilitySummary {
                        model: model.family.name().into(),
                        combo: combo.to_string(),
                        horizon_min: horizon,
                        mean_weekly_mape_stddev: report.mean_stddev,
                        per_household: report.per_household,
                    });
                }
            }
        }
    }

    let cells: Vec<CellSummary> = median_across_households(&medians)
        .into_iter()
        .map(|(cell, median, households)| CellSummary {
            model: cell.model,
            combo: cell.combo,
            horizon_min: cell.horizon_min,
            metric: "mape",
            median,
            households,
        })
        .collect();
    if cells.is_empty() {
        return Err(CliError::InsufficientData(
            "no household produced a single resolved forecast".into(),
        ));
    }

    out_write(out, &format!("{:<12} {:<28} {:>8} {:>12} {:>6}\n", "model", "combo", "horizon", "median MAPE", "houses"))?;
    for c in &cells {
        out_write(
            out,
            &format!(
                "{:<12} {:<28} {:>8} {:>12.2} {:>6}\n",
                c.model, c.combo, c.horizon_min, c.median, c.households
            ),
        )?;
    }
    for s in &skipped {
        out_write(
            out,
            &format!(
                "skipped house {} {} {} h{}: {}\n",
                s.house_id, s.model, s.combo, s.horizon_min, s.reason
            ),
        )?;
    }

    let dir = ctx.output_dir()?;
    write_file(&dir.join("evaluate_cells.csv"), &cells_csv)?;
    write_file(&dir.join("evaluate_traces.csv"), &traces_csv)?;
    write_file(&dir.join("evaluate_stability.csv"), &stability_csv)?;
    let summary_json = serde_json::to_string_pretty(&EvaluateSummary { cells, stability, skipped })
        .expect("summary serializes");
    write_file(&dir.join("evaluate_summary.json"), &summary_json)?;
    Ok(())
}

// --- feature-select ---------------------------------------------------------

fn cmd_feature_select(
    ctx: &Context,
    args: &FeatureSelectArgs,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let paths = ctx.input_paths(&args.input)?;
    let pool_text = args
        .pool
        .clone()
        .or_else(|| ctx.config.select.pool.clone())
        .ok_or_else(|| CliError::Config("feature-select needs --pool or [select] pool".into()))?;
    let pool: Vec<FeatureId> = pool_text
        .split(',')
        .map(|name| FeatureId::parse(name.trim()).map_err(config_err))
        .collect::<Result<_, _>>()?;
    let k = args.k.or(ctx.config.select.k).unwrap_or(6);
    if k == 0 {
        return Err(CliError::Config("k must be at least 1".into()));
    }
    // feature sets only matter to models that consume them, so the
    // benchmark family is not a useful default here
    let model = ctx.model(args.model.as_deref(), ModelFamily::TreeReg)?;
    let retrain_every = ctx.retrain_every(args.retrain_every)?;
    let (history_span, window_spec) = ctx.window(None, None, None, args.horizon)?;
    let combos = enumerate_combinations(&pool, k)?;

    let summary = read_lived_files(&paths)?;
    let available = summary.households();
    let houses: Vec<u32> =
        match args.households.clone().or_else(|| ctx.config.select.households.clone()) {
            Some(filter) => available.into_iter().filter(|h| filter.contains(h)).collect(),
            None => available,
        };
    if houses.len() < 2 {
        return Err(CliError::InsufficientData(format!(
            "scoring needs at least 2 households, found {}",
            houses.len()
        )));
    }

    let mut scores: Vec<ComboScore> = Vec::with_capacity(combos.len());
    for combo in combos {
        let mut mapes = Vec::with_capacity(houses.len());
        for &house in &houses {
            let readings = summary.load_readings(house);
            let roster = HouseholdRoster::from_readings(house, readings.iter())?;
            let wf_config = WalkForwardConfig {
                history_span,
                window_spec,
                combo: combo.clone(),
                model,
                retrain_every,
            };
            let output = walk_forward(readings, &roster, &wf_config)?;
            let report = error_report(&output.records)?;
            mapes.push(report.mape);
        }
        scores.push(score_combo(combo, &mapes)?);
    }
    scores.sort_by(|a, b| a.score.total_cmp(&b.score));

    let mut csv = String::from("feature_combination,stddev,mape,score\n");
    out_write(
        out,
        &format!("{:<40} {:>8} {:>8} {:>8}\n", "feature combination", "stddev", "mape", "score"),
    )?;
    for s in &scores {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            s.combo, s.stddev, s.avg_mape, s.score
        ));
        out_write(
            out,
            &format!(
                "{:<40} {:>8.2} {:>8.2} {:>8.2}\n",
                s.combo.to_string(),
                s.stddev,
                s.avg_mape,
                s.score
            ),
        )?;
    }
    let dir = ctx.output_dir()?;
    write_file(&dir.join("feature_select.csv"), &csv)?;
    Ok(())
}

// --- run ----------------------------------------------------------------

#[derive(Debug, Serialize)]
struct LatencyJson<'a> {
    wall_us: f64,
    predictions_per_sec: f64,
    global: &'a Option<crate::runtime::LatencySummary>,
    model_share: &'a Option<crate::runtime::LatencySummary>,
    per_household: &'a BTreeMap<u32, crate::runtime::LatencySummary>,
    histogram: &'a [crate::runtime::HistogramBin],
}

fn parse_houses(text: &str) -> Result<Option<Vec<u32>>, CliError> {
    let trimmed = text.trim();
    if trimmed.eq_ignore_ascii_case("all") {
        return Ok(None);
    }
    let ids = trimmed
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<u32>()
                .map_err(|_| CliError::Config(format!("bad household id {part:?}")))
        })
        .collect::<Result<Vec<u32>, _>>()?;
    Ok(Some(ids))
}

fn cmd_run(ctx: &Context, args: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let paths = ctx.input_paths(&args.input)?;
    let houses_filter = parse_houses(&args.houses)?;
    let model = ctx.model(args.model.as_deref(), ModelFamily::Persistence)?;
    let combo = ctx.combo(args.features.as_deref())?;
    let retrain_every = ctx.retrain_every(args.retrain_every)?;
    let (history_span, window_spec) =
        ctx.window(args.history_days, args.increment_min, args.base_min, args.horizon)?;
    let speedup = args.speedup.or(ctx.config.runtime.speedup);
    if let Some(s) = speedup {
        if !(s > 0.0) {
            return Err(CliError::Config(format!("speedup must be positive, got {s}")));
        }
    }
    let parallelism = args.parallelism.or(ctx.config.runtime.parallelism).unwrap_or(1);
    // analytics sinks absorb forecasts, leaving no latency samples to report
    if args.analytics && args.latency_report.is_some() {
        return Err(CliError::Config(
            "--latency-report needs emitted forecasts; drop --analytics".into(),
        ));
    }

    // CSV logs and synthetic profiles merge into one per-household corpus
    let (profile_paths, csv_paths): (Vec<PathBuf>, Vec<PathBuf>) =
        paths.into_iter().partition(|p| p.extension().is_some_and(|e| e == "json"));
    let mut per_house: BTreeMap<u32, Vec<SensorReading>> = BTreeMap::new();
    if !csv_paths.is_empty() {
        let summary = read_lived_files(&csv_paths)?;
        per_house = summary.per_household;
    }
    for path in &profile_paths {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let profiles = match serde_json::from_str::<ProfileFile>(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        {
            ProfileFile::Many(v) => v,
            ProfileFile::One(p) => vec![p],
        };
        let days = args.days.unwrap_or(15);
        if days < 1 {
            return Err(CliError::Config(format!("--days must be at least 1, got {days}")));
        }
        if args.sample_secs < 1 {
            return Err(CliError::Config(format!(
                "--sample-secs must be at least 1, got {}",
                args.sample_secs
            )));
        }
        let start = NaiveDateTime::parse_from_str("2014-01-06 00:00:00", TS_FORMAT)
            .expect("literal timestamp");
        for mut profile in profiles {
            if let Some(seed) = ctx.seed {
                profile.seed = seed.wrapping_add(profile.house_id as u64);
            }
            let readings = generate_synthetic(
                &profile,
                start,
                TimeDelta::days(days),
                TimeDelta::seconds(args.sample_secs),
            )
            .map_err(config_err)?;
            let bucket = per_house.entry(profile.house_id).or_default();
            bucket.extend(readings);
            bucket.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.sensor_id.cmp(&b.sensor_id)));
        }
    }
    if let Some(filter) = &houses_filter {
        per_house.retain(|house, _| filter.contains(house));
    }
    if per_house.is_empty() {
        return Err(CliError::InsufficientData(
            "no household matches the inputs and the --houses filter".into(),
        ));
    }

    let mut sources = Vec::with_capacity(per_house.len());
    let mut configs = Vec::with_capacity(per_house.len());
    for (&house, readings) in &per_house {
        let roster = HouseholdRoster::from_readings(house, readings.iter())?;
        sources.push(match speedup {
            Some(s) => EventSource::paced(readings.clone(), s).map_err(config_err)?,
            None => EventSource::batch(readings.clone()),
        });
        let mut config = PipelineConfig::new(roster, combo.clone(), model);
        config.history_span = history_span;
        config.window_spec = window_spec;
        config.retrain_every = retrain_every;
        config.sink =
            if args.analytics { SinkKind::ErrorAnalytics } else { SinkKind::ForecastEmit };
        configs.push(config);
    }

    let n_houses = per_house.len();
    let outcome = runtime_run(sources, configs, parallelism)?;
    write_run_reports(ctx, args, &outcome)?;

    out_write(
        out,
        &format!(
            "{} households, {} forecasts, {} reports, {} readings routed, {} dropped\n",
            n_houses,
            outcome.forecasts.len(),
            outcome.reports.len(),
            outcome.router.routed,
            outcome.router.dropped_unknown,
        ),
    )?;
    if let Some(global) = &outcome.latency.global {
        out_write(
            out,
            &format!(
                "latency: median {:.0} us, p95 {:.0} us, {:.1} predictions/s\n",
                global.median_us, global.p95_us, outcome.latency.predictions_per_sec
            ),
        )?;
    }
    for (house, message) in &outcome.panics {
        out_write(out, &format!("household {house} pipeline failed: {message}\n"))?;
    }
    Ok(())
}

fn write_run_reports(ctx: &Context, args: &RunArgs, outcome: &RunOutcome) -> Result<(), CliError> {
    let dir = ctx.output_dir()?;

    let mut forecasts = outcome.forecasts.clone();
    forecasts.sort_by(|a, b| (a.house_id, a.t_predict).cmp(&(b.house_id, b.t_predict)));
    let mut forecasts_csv = String::from("house_id,horizon_min,t_predict,forecast_kwh\n");
    for f in &forecasts {
        forecasts_csv.push_str(&format!(
            "{},{},{},{:.6}\n",
            f.house_id,
            f.horizon_min,
            f.t_predict.format(TS_FORMAT),
            f.forecast_kwh
        ));
    }
    write_file(&dir.join("run_forecasts.csv"), &forecasts_csv)?;

    if !outcome.reports.is_empty() {
        let mut reports = outcome.reports.clone();
        reports.sort_by_key(|r| r.house_id);
        let mut csv = String::from("house_id,horizon_min,mape,nrmse,n,zero_actual_count\n");
        for r in &reports {
            csv.push_str(&format!(
                "{},{},{:.6},{:.6},{},{}\n",
                r.house_id, r.horizon_min, r.mape, r.nrmse, r.n, r.zero_actual_count
            ));
        }
        write_file(&dir.join("run_reports.csv"), &csv)?;
    }

    let stem = args.latency_report.clone().unwrap_or_else(|| dir.join("latency"));
    let latency = &outcome.latency;
    let json = serde_json::to_string_pretty(&LatencyJson {
        wall_us: latency.wall.as_secs_f64() * 1e6,
        predictions_per_sec: latency.predictions_per_sec,
        global: &latency.global,
        model_share: &latency.model_share,
        per_household: &latency.per_household,
        histogram: &latency.histogram,
    })
    .expect("latency report serializes");
    write_file(&stem.with_extension("json"), &json)?;

    let mut samples_csv = String::from("house_id,total_us,model_us\n");
    for s in &latency.samples {
        samples_csv.push_str(&format!(
            "{},{:.3},{:.3}\n",
            s.house_id,
            s.total.as_secs_f64() * 1e6,
            s.model.as_secs_f64() * 1e6
        ));
    }
    write_file(&stem.with_extension("csv"), &samples_csv)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::square_wave_household;
    use std::sync::atomic::{AtomicU64, Ordering};

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, TS_FORMAT).unwrap()
    }

    const T0: &str = "2014-01-06 00:00:00";

    /// Run the CLI as the binary would, capturing primary output.
    fn invoke(argv: &[&str]) -> Result<String, CliError> {
        let cli = Cli::try_parse_from(argv).expect("argv parses");
        let mut buf = Vec::new();
        execute(cli, &mut buf)?;
        Ok(String::from_utf8(buf).expect("utf8 output"))
    }

    fn scratch_dir() -> PathBuf {
        static NEXT: AtomicU64 = AtomicU64::new(0);
        let dir = std::env::temp_dir().join(format!(
            "loadcast-cli-{}-{}",
            std::process::id(),
            NEXT.fetch_add(1, Ordering::Relaxed)
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn write_wave_csv(
        dir: &Path,
        name: &str,
        house: u32,
        days: i64,
        extra_min: i64,
        drop: Option<(&str, &str)>,
    ) -> PathBuf {
        let readings = square_wave_household(
            house,
            &[(60.0, 240.0), (20.0, 20.0)],
            TimeDelta::minutes(120),
            ts(T0),
            TimeDelta::days(days) + TimeDelta::minutes(extra_min),
            TimeDelta::seconds(120),
        );
        let mut body = String::from("TS,Type,Value,Unit,Houseid,Mac,Sensor_id,Year,Month\n");
        for r in &readings {
            if let Some((from, to)) = drop {
                if r.ts >= ts(from) && r.ts < ts(to) {
                    continue;
                }
            }
            body.push_str(&r.to_csv_record());
            body.push('\n');
        }
        let path = dir.join(name);
        fs::write(&path, body).unwrap();
        path
    }

    fn profile_json(dir: &Path, house: u32) -> PathBuf {
        let text = format!(
            r#"{{"house_id": {house}, "devices": [
                {{"base_watts": 40.0, "on_watts": 400.0, "on_probability": 0.3, "slot_minutes": 60}},
                {{"base_watts": 5.0, "on_watts": 120.0, "on_probability": 0.5, "slot_minutes": 30}}
            ], "noise_stddev": 3.0, "seed": 7}}"#
        );
        let path = dir.join(format!("profile_{house}.json"));
        fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn synth_then_validate_round_trip() {
        let dir = scratch_dir();
        let profile = profile_json(&dir, 3);
        let csv = dir.join("synthetic.csv");
        let synth_out = invoke(&[
            "loadcast",
            "synth",
            "--profile",
            profile.to_str().unwrap(),
            "--days",
            "3",
            "--sample-secs",
            "30",
            "--out",
            csv.to_str().unwrap(),
        ])
        .unwrap();
        assert!(synth_out.contains("wrote"));

        let report_dir = dir.join("reports");
        let table = invoke(&[
            "loadcast",
            "validate",
            "--input",
            csv.to_str().unwrap(),
            "--min-days",
            "2",
            "--out",
            report_dir.to_str().unwrap(),
        ])
        .unwrap();
        assert!(table.contains("OK"), "{table}");

        let written = fs::read_to_string(report_dir.join("validate.csv")).unwrap();
        let mut lines = written.lines();
        assert_eq!(lines.next(), Some("id,total,skipped,used"));
        assert_eq!(lines.next(), Some("3,3,0,3"), "clean log keeps every day");
    }

    #[test]
    fn validate_flags_an_outage_day() {
        let dir = scratch_dir();
        // a 3 h silence on the middle day exceeds the 60 min default gap
        let csv = write_wave_csv(
            &dir,
            "outage.csv",
            5,
            3,
            0,
            Some(("2014-01-07 10:00:00", "2014-01-07 13:00:00")),
        );
        let report_dir = dir.join("reports");
        invoke(&[
            "loadcast",
            "validate",
            "--input",
            csv.to_str().unwrap(),
            "--min-days",
            "2",
            "--out",
            report_dir.to_str().unwrap(),
        ])
        .unwrap();
        let written = fs::read_to_string(report_dir.join("validate.csv")).unwrap();
        assert!(written.contains("5,3,1,2"), "{written}");
        let days = fs::read_to_string(report_dir.join("validate_days.csv")).unwrap();
        assert!(days.contains("5,2014-01-07,false,GAP_EXCEEDED"), "{days}");
    }

    #[test]
    fn synth_writes_gzip_when_asked() {
        let dir = scratch_dir();
        let profile = profile_json(&dir, 8);
        let gz = dir.join("synthetic.csv.gz");
        invoke(&[
            "loadcast",
            "synth",
            "--profile",
            profile.to_str().unwrap(),
            "--days",
            "2",
            "--sample-secs",
            "60",
            "--out",
            gz.to_str().unwrap(),
        ])
        .unwrap();
        let report_dir = dir.join("reports");
        let table = invoke(&[
            "loadcast",
            "validate",
            "--input",
            gz.to_str().unwrap(),
            "--min-days",
            "1",
            "--out",
            report_dir.to_str().unwrap(),
        ])
        .unwrap();
        assert!(table.contains("OK"), "{table}");
    }

    #[test]
    fn evaluate_writes_tables_and_summary() {
        let dir = scratch_dir();
        let csv = write_wave_csv(&dir, "wave.csv", 9, 15, 0, None);
        let report_dir = dir.join("reports");
        let table = invoke(&[
            "loadcast",
            "evaluate",
            "--input",
            csv.to_str().unwrap(),
            "--models",
            "persistence",
            "--features",
            "minimal",
            "--horizons",
            "60",
            "--retrain-every",
            "96",
            "--out",
            report_dir.to_str().unwrap(),
        ])
        .unwrap();
        assert!(table.contains("persistence"), "{table}");

        let cells = fs::read_to_string(report_dir.join("evaluate_cells.csv")).unwrap();
        let mut lines = cells.lines();
        assert_eq!(lines.next(), Some("house_id,model,combo,horizon,metric,value,n"));
        assert!(cells.contains("9,persistence,summed-wday,60,mape,"), "{cells}");
        assert!(cells.contains(",nrmse,"), "{cells}");

        let traces = fs::read_to_string(report_dir.join("evaluate_traces.csv")).unwrap();
        assert!(traces.lines().count() > 1, "traces hold the forecast series");

        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(report_dir.join("evaluate_summary.json")).unwrap())
                .unwrap();
        assert_eq!(summary["cells"][0]["model"], "persistence");
        assert_eq!(summary["cells"][0]["households"], 1);
    }

    #[test]
    fn evaluate_with_unmatched_house_filter_is_insufficient_data() {
        let dir = scratch_dir();
        let csv = write_wave_csv(&dir, "wave.csv", 9, 15, 0, None);
        let err = invoke(&[
            "loadcast",
            "evaluate",
            "--input",
            csv.to_str().unwrap(),
            "--houses",
            "42",
            "--out",
            dir.join("reports").to_str().unwrap(),
        ])
        .unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
    }

    #[test]
    fn feature_select_ranks_scores_ascending() {
        let dir = scratch_dir();
        let a = write_wave_csv(&dir, "house1.csv", 1, 15, 0, None);
        let b = write_wave_csv(&dir, "house2.csv", 2, 15, 0, None);
        let report_dir = dir.join("reports");
        invoke(&[
            "loadcast",
            "feature-select",
            "--input",
            a.to_str().unwrap(),
            b.to_str().unwrap(),
            "--pool",
            "summed,wday,hour",
            "--k",
            "2",
            "--model",
            "persistence",
            "--out",
            report_dir.to_str().unwrap(),
        ])
        .unwrap();
        let csv = fs::read_to_string(report_dir.join("feature_select.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("feature_combination,stddev,mape,score"));
        let scores: Vec<f64> =
            lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(scores.len(), 3, "C(3,2) combinations");
        for pair in scores.windows(2) {
            assert!(pair[0] <= pair[1], "ranking not ascending: {scores:?}");
        }
    }

    #[test]
    fn run_reports_are_deterministic_across_invocations() {
        let dir = scratch_dir();
        let a = write_wave_csv(&dir, "house1.csv", 1, 14, 120, None);
        let b = write_wave_csv(&dir, "house2.csv", 2, 14, 120, None);
        let run_once = |report_dir: &Path| {
            invoke(&[
                "loadcast",
                "run",
                "--input",
                a.to_str().unwrap(),
                b.to_str().unwrap(),
                "--parallelism",
                "2",
                "--features",
                "minimal",
                "--out",
                report_dir.to_str().unwrap(),
            ])
            .unwrap();
            fs::read_to_string(report_dir.join("run_forecasts.csv")).unwrap()
        };
        let first = run_once(&dir.join("r1"));
        let second = run_once(&dir.join("r2"));
        assert_eq!(first, second);
        assert!(first.lines().count() > 1, "forecasts were emitted");

        let latency: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(dir.join("r1").join("latency.json")).unwrap(),
        )
        .unwrap();
        assert!(latency["predictions_per_sec"].as_f64().unwrap() > 0.0);
        let samples = fs::read_to_string(dir.join("r1").join("latency.csv")).unwrap();
        assert_eq!(samples.lines().next(), Some("house_id,total_us,model_us"));
        assert_eq!(samples.lines().count(), first.lines().count(), "one sample per forecast");
    }

    #[test]
    fn run_accepts_synthetic_profile_inputs() {
        let dir = scratch_dir();
        let profile = profile_json(&dir, 11);
        let report_dir = dir.join("reports");
        let text = invoke(&[
            "loadcast",
            "run",
            "--input",
            profile.to_str().unwrap(),
            "--days",
            "15",
            "--sample-secs",
            "60",
            "--features",
            "minimal",
            "--out",
            report_dir.to_str().unwrap(),
        ])
        .unwrap();
        assert!(text.contains("1 households"), "{text}");
        let forecasts = fs::read_to_string(report_dir.join("run_forecasts.csv")).unwrap();
        assert!(forecasts.lines().count() > 1, "profile input produced forecasts");
        assert!(forecasts.lines().skip(1).all(|l| l.starts_with("11,")), "{forecasts}");
    }

    #[test]
    fn config_file_governs_defaults_and_flags_win() {
        let dir = scratch_dir();
        let csv = write_wave_csv(&dir, "wave.csv", 9, 15, 0, None);
        let config = dir.join("run.toml");
        fs::write(
            &config,
            format!(
                r#"
output_dir = "{}"

[input]
paths = ["{}"]

[window]
horizon_min = 30

[evaluate]
models = ["persistence"]
combinations = ["minimal"]
retrain_every = 96
"#,
                dir.join("from_config").display(),
                csv.display()
            ),
        )
        .unwrap();

        invoke(&["loadcast", "evaluate", "--config", config.to_str().unwrap()]).unwrap();
        let cells =
            fs::read_to_string(dir.join("from_config").join("evaluate_cells.csv")).unwrap();
        assert!(cells.contains(",30,mape,"), "config horizon governs: {cells}");

        let flag_dir = dir.join("from_flag");
        invoke(&[
            "loadcast",
            "evaluate",
            "--config",
            config.to_str().unwrap(),
            "--horizons",
            "60",
            "--out",
            flag_dir.to_str().unwrap(),
        ])
        .unwrap();
        let cells = fs::read_to_string(flag_dir.join("evaluate_cells.csv")).unwrap();
        assert!(cells.contains(",60,mape,"), "flag overrides config: {cells}");
        assert!(!cells.contains(",30,mape,"), "{cells}");
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = scratch_dir();
        let config = dir.join("bad.toml");
        fs::write(&config, "[window]\nbogus = 1\n").unwrap();
        let err = invoke(&[
            "loadcast",
            "validate",
            "--config",
            config.to_str().unwrap(),
            "--input",
            "unused.csv",
        ])
        .unwrap_err();
        assert_eq!(err.exit_code(), 4, "{err}");
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        let dir = scratch_dir();
        let csv = write_wave_csv(&dir, "wave.csv", 9, 15, 0, None);

        let missing = invoke(&[
            "loadcast",
            "validate",
            "--input",
            dir.join("no_such_file.csv").to_str().unwrap(),
        ])
        .unwrap_err();
        assert_eq!(missing.exit_code(), 2, "{missing}");

        let bad_model = invoke(&[
            "loadcast",
            "evaluate",
            "--input",
            csv.to_str().unwrap(),
            "--models",
            "oracle",
        ])
        .unwrap_err();
        assert_eq!(bad_model.exit_code(), 4, "{bad_model}");

        let bad_hp = invoke(&[
            "loadcast",
            "run",
            "--input",
            csv.to_str().unwrap(),
            "--model",
            "gnb-cls",
            "--hp",
            "kmeans_k=0",
        ])
        .unwrap_err();
        assert_eq!(bad_hp.exit_code(), 4, "{bad_hp}");

        let bad_features = invoke(&[
            "loadcast",
            "run",
            "--input",
            csv.to_str().unwrap(),
            "--features",
            "telepathy",
        ])
        .unwrap_err();
        assert_eq!(bad_features.exit_code(), 4, "{bad_features}");

        let absorbed = invoke(&[
            "loadcast",
            "run",
            "--input",
            csv.to_str().unwrap(),
            "--analytics",
            "--latency-report",
            dir.join("lat").to_str().unwrap(),
        ])
        .unwrap_err();
        assert_eq!(absorbed.exit_code(), 4, "{absorbed}");
        assert!(absorbed.to_string().contains("--analytics"), "{absorbed}");
    }

    #[test]
    fn replay_emits_every_reading_of_the_household() {
        let dir = scratch_dir();
        let csv = write_wave_csv(&dir, "wave.csv", 9, 1, 0, None);
        let batch = invoke(&[
            "loadcast",
            "replay",
            "--input",
            csv.to_str().unwrap(),
            "--house",
            "9",
        ])
        .unwrap();
        // two devices at 120 s cadence over one day
        assert_eq!(batch.lines().count(), 2 * 24 * 30);

        let paced = invoke(&[
            "loadcast",
            "replay",
            "--input",
            csv.to_str().unwrap(),
            "--house",
            "9",
            "--mode",
            "paced",
            "--speedup",
            "10000000",
        ])
        .unwrap();
        assert_eq!(batch, paced, "pacing changes timing, never content");
    }
}
