//! The `cdm-lstm` command line.
//!
//! Relative input paths that do not exist are also looked up under the
//! directory named by `CDM_LSTM_DATA_DIR`.

mod rollout_file;

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{
    clean_with_report, group_events, load_kelvins, parse_kelvins_csv, split_train_test, CdmRecord,
    Dataset, FeatureSchema, ParseOptions,
};
use crate::error::{Error, Result};
use crate::evaluation::{compare, comparison_table, evaluate_model, persistence_baseline, EvalReport};
use crate::gradcheck::{gradcheck, GradcheckConfig};
use crate::inference::{predict_next, rollout, summarize, summary_table, Model};
use crate::training::fit_with_observer;

pub use rollout_file::RolloutFile;

pub const DATA_DIR_ENV: &str = "CDM_LSTM_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "cdm-lstm", version, about = "Forecast conjunction data messages with an LSTM")]
pub struct Cli {
    /// Worker threads. Computation is single-threaded, so every value gives
    /// the same bits.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a Kelvins-format CSV into a dataset file.
    Preprocess(PreprocessArgs),
    /// Train a model on a dataset file.
    Train(TrainArgs),
    /// Score a checkpoint and the persistence baseline on held-out events.
    Evaluate(EvaluateArgs),
    /// Sample the next CDM of an event.
    Predict(PredictArgs),
    /// Roll an event forward until time of closest approach.
    Rollout(RolloutArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Write per-feature prediction bands from a rollout file.
    ExportPlot(ExportPlotArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Schema file; the built-in Kelvins schema when omitted.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip and report malformed rows instead of failing.
    #[arg(long)]
    pub skip_bad_rows: bool,
    #[arg(long, default_value_t = 2)]
    pub min_len: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// History table path; defaults to `<out>.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override any config key, e.g. `--set lr=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Monte Carlo samples per prediction; repeat or comma-separate to
    /// score several settings.
    #[arg(long, value_delimiter = ',', default_values_t = [50])]
    pub samples: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report directory.
    #[arg(long, default_value = "eval")]
    pub out: PathBuf,
    /// Score every event instead of the checkpoint's test split.
    #[arg(long)]
    pub all_events: bool,
}

#[derive(Debug, Args)]
pub struct EventArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV with the schema's columns; rows of one event.
    #[arg(long)]
    pub event: PathBuf,
    /// Pick this event when the file holds several.
    #[arg(long)]
    pub event_id: Option<String>,
    /// Use only the first K CDMs as the observed prefix.
    #[arg(long)]
    pub prefix_len: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub event: EventArgs,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[command(flatten)]
    pub event: EventArgs,
    #[arg(long, default_value_t = crate::inference::DEFAULT_MAX_STEPS)]
    pub max_steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Check seeds `seed..seed + seeds`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Scale one analytic gradient tensor by 1.1 (negative control).
    #[arg(long, hide = true)]
    pub corrupt: bool,
}

#[derive(Debug, Args)]
pub struct ExportPlotArgs {
    #[arg(long)]
    pub rollout: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Resolves a path to read, falling back to the data directory.
pub fn resolve_input(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let path = resolve_input(path);
    File::open(&path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(&resolve_input(path))
}

impl Cli {
    /// Runs the command, writing results to `out`. Diagnostics go through
    /// `log` and the returned error.
    pub fn run(self, out: &mut dyn Write) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::invalid("--threads must be at least 1"));
        }
        if self.threads > 1 {
            log::info!("--threads {}: computation runs on one thread", self.threads);
        }
        match self.command {
            Command::Preprocess(a) => cmd_preprocess(&a, out),
            Command::Train(a) => cmd_train(&a, out),
            Command::Evaluate(a) => cmd_evaluate(&a, out),
            Command::Predict(a) => cmd_predict(&a, out),
            Command::Rollout(a) => cmd_rollout(&a, out),
            Command::Gradcheck(a) => cmd_gradcheck(&a, out),
            Command::ExportPlot(a) => cmd_export_plot(&a, out),
        }
    }
}

pub fn cmd_preprocess(args: &PreprocessArgs, out: &mut dyn Write) -> Result<()> {
    let schema = match &args.schema {
        Some(p) => FeatureSchema::load(&resolve_input(p))?,
        None => FeatureSchema::kelvins(),
    };
    let (dataset, report) = load_kelvins(open(&args.input)?, &schema, args.skip_bad_rows, args.min_len)?;
    for issue in &report.skipped_rows {
        log::warn!("skipped line {}: {}", issue.line, issue.message);
    }
    dataset.save(&args.out)?;
    let c = &report.clean;
    writeln!(out, "records_in = {}", c.records_in)?;
    writeln!(out, "skipped_rows = {}", report.skipped_rows.len())?;
    writeln!(out, "dropped_missing = {}", c.dropped_missing)?;
    writeln!(out, "dropped_sigma = {}", c.dropped_sigma)?;
    writeln!(out, "records_kept = {}", c.kept)?;
    writeln!(out, "events = {}", report.events)?;
    writeln!(out, "events_min_len = {}", report.events_kept)?;
    writeln!(out, "cdms_in_kept_events = {}", report.cdms_kept)?;
    Ok(())
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => RunConfig::load(&resolve_input(p))?,
        None => RunConfig::default(),
    };
    if let Some(e) = args.epochs {
        config.train.epochs = e;
    }
    if let Some(s) = args.seed {
        config.train.seed = s;
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        config.set(k.trim(), v.trim())?;
    }
    let data = Dataset::load(&resolve_input(&args.data))?;
    let net = config.train.net_config(data.schema.width());
    net.validate()?;
    write!(out, "{}", config.to_text())?;
    writeln!(out, "input_dim = {}", net.input_dim)?;
    writeln!(out, "param_count = {}", net.param_count())?;

    let split = split_train_test(data.events, config.test_fraction, config.split_seed)?;
    writeln!(out, "train_events = {}", split.train.len())?;
    writeln!(out, "test_events = {}", split.test.len())?;

    let checkpoint = |params: &crate::net::StackedLstmParams, stats: &crate::NormStats, epoch| {
        Ok::<_, Error>(Checkpoint {
            model: Model::new(data.schema.clone(), stats.clone(), params.clone())?,
            seed: config.train.seed,
            epoch,
            split_seed: config.split_seed,
            test_fraction: config.test_fraction,
        })
    };
    let mut last_stats = None;
    let result = fit_with_observer(&split, &data.schema, &config.train, |snap| {
        last_stats = Some(snap.stats.clone());
        checkpoint(snap.params, snap.stats, snap.epoch)?.save(&args.out)?;
        log::info!("epoch {}: checkpoint written to {}", snap.epoch, args.out.display());
        Ok(())
    });
    let outcome = match result {
        Ok(o) => o,
        Err(Error::Diverged { epoch, loss, last_good }) => {
            let stats = match last_stats {
                Some(s) => s,
                None => crate::preprocess::fit_normalizer(&split.train, &data.schema)?,
            };
            let path = args.out.with_extension("last_good");
            checkpoint(&last_good, &stats, epoch.saturating_sub(1))?.save(&path)?;
            log::error!("last finite parameters saved to {}", path.display());
            return Err(Error::Diverged { epoch, loss, last_good });
        }
        Err(e) => return Err(e),
    };
    let history_path = args
        .history
        .clone()
        .unwrap_or_else(|| args.out.with_extension("history.csv"));
    write_file(&history_path, &outcome.history.to_table())?;
    let losses = outcome.history.losses();
    writeln!(out, "final_loss = {}", losses[losses.len() - 1])?;
    writeln!(out, "checkpoint = {}", args.out.display())?;
    writeln!(out, "history = {}", history_path.display())?;
    Ok(())
}

fn report_name(report: &EvalReport) -> String {
    if report.n_samples == 0 {
        "baseline".into()
    } else {
        format!("model_n{}", report.n_samples)
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let data = Dataset::load(&resolve_input(&args.data))?;
    if data.schema != ck.model.schema {
        return Err(Error::Schema("dataset schema differs from the checkpoint's".into()));
    }
    let events = if args.all_events || ck.test_fraction == 0.0 {
        data.events
    } else {
        split_train_test(data.events, ck.test_fraction, ck.split_seed)?.test
    };
    let mut reports = vec![persistence_baseline(&events, &ck.model.stats)?];
    for &n in &args.samples {
        reports.push(evaluate_model(&ck.model, &events, n, args.seed)?);
    }
    std::fs::create_dir_all(&args.out)?;
    for r in &reports {
        let name = report_name(r);
        write_file(&args.out.join(format!("{name}.txt")), &r.summary_text())?;
        write_file(
            &args.out.join(format!("{name}_features.csv")),
            &r.per_feature_table(&ck.model.schema),
        )?;
    }
    let table = comparison_table(&compare(&reports)?);
    write_file(&args.out.join("comparison.csv"), &table)?;
    write!(out, "{table}")?;
    Ok(())
}

/// Reads one event from a CSV in the dataset's column layout. Every row must
/// be complete.
pub fn read_event_csv(path: &Path, schema: &FeatureSchema, event_id: Option<&str>) -> Result<Vec<CdmRecord>> {
    let opts = ParseOptions {
        id_column: schema.event_id_column().to_string(),
        skip_bad_rows: false,
    };
    let parsed = parse_kelvins_csv(open(path)?, &opts)?;
    let (records, report) = clean_with_report(&parsed.records, schema)?;
    if report.kept != report.records_in {
        return Err(Error::Format(format!(
            "{}: {} of {} rows have missing or out-of-range values",
            path.display(),
            report.records_in - report.kept,
            report.records_in
        )));
    }
    let mut events = group_events(records);
    let event = match event_id {
        Some(id) => events
            .into_iter()
            .find(|e| e.event_id == id)
            .ok_or_else(|| Error::invalid(format!("no event {id:?} in {}", path.display())))?,
        None if events.len() == 1 => events.remove(0),
        None => {
            return Err(Error::invalid(format!(
                "{} holds {} events; pick one with --event-id",
                path.display(),
                events.len()
            )))
        }
    };
    Ok(event.cdms)
}

fn load_prefix(args: &EventArgs, schema: &FeatureSchema) -> Result<Vec<CdmRecord>> {
    let mut cdms = read_event_csv(&args.event, schema, args.event_id.as_deref())?;
    if let Some(k) = args.prefix_len {
        if k == 0 || k > cdms.len() {
            return Err(Error::invalid(format!(
                "--prefix-len {k} outside 1..={}",
                cdms.len()
            )));
        }
        cdms.truncate(k);
    }
    Ok(cdms)
}

pub fn cmd_predict(args: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let ck = load_checkpoint(&args.event.checkpoint)?;
    let model = &ck.model;
    let prefix = load_prefix(&args.event, &model.schema)?;
    let dist = predict_next(model, &prefix, args.event.samples, args.event.seed)?;
    let table = summary_table(&summarize(&dist, &model.schema), &dist.quantile_levels);
    match &args.out {
        Some(p) => write_file(p, &table),
        None => Ok(write!(out, "{table}")?),
    }
}

pub fn cmd_rollout(args: &RolloutArgs, out: &mut dyn Write) -> Result<()> {
    let ck = load_checkpoint(&args.event.checkpoint)?;
    let model = &ck.model;
    let prefix = load_prefix(&args.event, &model.schema)?;
    let result = rollout(model, &prefix, args.event.samples, args.max_steps, args.event.seed)?;
    RolloutFile::new(&model.schema, &model.stats, &result, args.max_steps, args.event.seed).save(&args.out)?;
    let reached = result
        .trajectories
        .iter()
        .filter(|t| t.termination == crate::inference::Termination::TcaReached)
        .count();
    writeln!(out, "prefix_len = {}", prefix.len())?;
    writeln!(out, "steps = {}", result.steps.len())?;
    writeln!(out, "tca_reached = {reached}/{}", result.trajectories.len())?;
    writeln!(out, "termination = {}", result.termination().as_str())?;
    Ok(())
}

pub fn cmd_gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    if args.seeds == 0 {
        return Err(Error::invalid("--seeds must be at least 1"));
    }
    let mut all_passed = true;
    let mut worst = 0.0f64;
    for seed in args.seed..args.seed + args.seeds {
        let cfg = GradcheckConfig {
            seed,
            corrupt: args.corrupt,
            ..Default::default()
        };
        let r = gradcheck(&cfg)?;
        writeln!(
            out,
            "seed {seed}: {} parameters, max relative error {:e} in {} ({})",
            r.checked,
            r.max_rel_error,
            r.worst_tensor,
            if r.passed { "pass" } else { "FAIL" }
        )?;
        all_passed &= r.passed;
        worst = worst.max(r.max_rel_error);
    }
    let tolerance = GradcheckConfig::default().tolerance;
    if all_passed {
        writeln!(out, "PASS: max relative error {worst:e} < {tolerance:e}")?;
        Ok(())
    } else {
        writeln!(out, "FAIL: max relative error {worst:e} >= {tolerance:e}")?;
        Err(Error::invalid(format!(
            "gradient check failed (max relative error {worst:e})"
        )))
    }
}

pub fn cmd_export_plot(args: &ExportPlotArgs, out: &mut dyn Write) -> Result<()> {
    let file = RolloutFile::load(&resolve_input(&args.rollout))?;
    std::fs::create_dir_all(&args.out)?;
    let tables = file.band_tables()?;
    for (feature, table) in &tables {
        let path = args.out.join(format!("{feature}.csv"));
        write_file(&path, table)?;
        writeln!(out, "{}", path.display())?;
    }
    Ok(())
}
