//! The `feast` command line: `train`, `eval`, `synth` and `sweep`.
//!
//! Run settings come from an optional flat JSON file (`--config`) whose
//! keys match the kebab-case flags; flags override the file. Each output
//! directory receives `config.json`, a complete echo of the settings that
//! can be passed back as `--config`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    make_synthetic, sidecar_path, CsvSchema, DatasetTable, FeatureStats, SplitPart, SplitSpec,
    SynthSpec,
};
use crate::error::{Error, Result};
use crate::fairness::{MetricsReport, MetricsSummary, RegularizerKind};
use crate::meta::{evaluate, KeyParams, StepLog, TrainConfig, TrainState, Variant};

pub const EXIT_OK: u8 = 0;
pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::OutputExists(_) => EXIT_CONFIG,
        Error::Schema(_)
        | Error::Validation(_)
        | Error::SamplingInfeasible(_)
        | Error::Csv(_) => EXIT_DATA,
        Error::TrainingDiverged { .. } | Error::AdaptationDiverged { .. } => EXIT_DIVERGED,
        _ => EXIT_OTHER,
    }
}

#[derive(Debug, Parser)]
#[command(name = "feast", version, about = "Fair few-shot meta-learning with auxiliary sets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Meta-train a model and write a checkpoint.
    Train(TrainArgs),
    /// Meta-test a trained run.
    Eval(EvalArgs),
    /// Generate a synthetic biased dataset.
    Synth(SynthArgs),
    /// Train and evaluate over a grid of settings.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Write into an existing output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Continue from a checkpoint directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub settings: ConfigLayer,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Output directory of a `train` run.
    #[arg(long)]
    pub run: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Meta-test seed (defaults to the run's seed).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub test_tasks: Option<usize>,
    #[arg(long)]
    pub eval_split: Option<SplitPart>,
    /// Dataset path, if it moved since training.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// CSV path to write; the manifest goes next to it as `<stem>.synth.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    /// JSON file with generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub n_subsets: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub p_sensitive: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, value_delimiter = ',')]
    pub gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub aux_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub k_shots: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<Variant>,
    /// Run cells concurrently.
    #[arg(long)]
    pub parallel: bool,
    #[command(flatten)]
    pub settings: ConfigLayer,
}

/// One layer of run settings. Every key is optional; layers merge with
/// later layers winning.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConfigLayer {
    /// Dataset CSV.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Label column.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Sensitive-attribute column.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitive: Option<String>,
    /// Subset (task-group) column.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<String>,
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_hot: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ignore: Option<Vec<String>>,
    #[arg(long, action = ArgAction::Set)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitive_as_feature: Option<bool>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
    /// Subset names for meta-training (otherwise a seeded random split).
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_subsets: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_subsets: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_subsets: Option<Vec<String>>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_split: Option<SplitPart>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_shot: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_size: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta_steps: Option<u64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_tasks: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_size: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dict_capacity: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularizer: Option<RegularizerKind>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_params: Option<KeyParams>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence_threshold: Option<f64>,
    /// Save a checkpoint every this many meta-steps.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<u64>,
}

macro_rules! merge_fields {
    ($base:ident, $over:ident; $($f:ident),* $(,)?) => {
        ConfigLayer { $($f: $over.$f.or($base.$f)),* }
    };
}

impl ConfigLayer {
    /// `over` wins wherever it sets a key.
    pub fn merge(self, over: ConfigLayer) -> ConfigLayer {
        let base = self;
        merge_fields!(base, over;
            data, label, sensitive, subset, one_hot, ignore, sensitive_as_feature,
            split_seed, train_subsets, val_subsets, test_subsets, eval_split,
            alpha, beta1, beta2, tau, gamma, lambda, k_shot, aux_size, meta_steps,
            test_tasks, query_size, dict_capacity, weight_decay, seed, variant,
            regularizer, key_params, divergence_threshold, checkpoint_every)
    }

    /// Parses a JSON layer. Unknown keys and type errors name the key.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?;
        let map = value
            .as_object()
            .ok_or_else(|| Error::config("<file>", "config must be a JSON object"))?;
        for (k, v) in map {
            let single = serde_json::Value::Object([(k.clone(), v.clone())].into_iter().collect());
            if let Err(e) = serde_json::from_value::<ConfigLayer>(single) {
                let msg = e.to_string();
                let detail = if msg.starts_with("unknown field") {
                    "unknown key".to_string()
                } else {
                    msg
                };
                return Err(Error::config(k.clone(), detail));
            }
        }
        serde_json::from_value(value).map_err(|e| Error::config("<file>", e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// How meta-train / validation / meta-test subsets are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitChoice {
    Random { seed: u64 },
    Named { train: Vec<String>, val: Vec<String>, test: Vec<String> },
}

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub schema: CsvSchema,
    pub split: SplitChoice,
    pub eval_split: SplitPart,
    pub train: TrainConfig,
    pub checkpoint_every: Option<u64>,
}

/// Reads the optional file layer, applies `flags` over it, and fills
/// defaults.
pub fn parse_config(file: Option<&Path>, flags: ConfigLayer) -> Result<RunConfig> {
    let base = match file {
        Some(p) => ConfigLayer::from_file(p)?,
        None => ConfigLayer::default(),
    };
    resolve(base.merge(flags))
}

/// Fills defaults and validates a merged layer.
pub fn resolve(l: ConfigLayer) -> Result<RunConfig> {
    let data = l
        .data
        .ok_or_else(|| Error::config("data", "a dataset path is required"))?;
    let k_shot = l.k_shot.unwrap_or(5);
    let mut t = TrainConfig::new(k_shot);
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = l.$f { t.$f = v; } )* };
    }
    set!(alpha, beta1, beta2, tau, gamma, lambda, aux_size, meta_steps, test_tasks, query_size,
         dict_capacity, weight_decay, seed, variant, regularizer, key_params, divergence_threshold);
    t.validate()?;

    let split = match (l.train_subsets, l.val_subsets, l.test_subsets) {
        (None, None, None) => SplitChoice::Random {
            seed: l.split_seed.unwrap_or(t.seed),
        },
        (Some(train), val, Some(test)) => SplitChoice::Named {
            train,
            val: val.unwrap_or_default(),
            test,
        },
        _ => {
            return Err(Error::config(
                "train-subsets",
                "give both train-subsets and test-subsets, or neither",
            ))
        }
    };
    if l.checkpoint_every == Some(0) {
        return Err(Error::config("checkpoint-every", "must be >= 1"));
    }
    let mut schema = CsvSchema::new(
        l.label.as_deref().unwrap_or("y"),
        l.sensitive.as_deref().unwrap_or("a"),
        l.subset.as_deref().unwrap_or("subset"),
    );
    schema.one_hot = l.one_hot.unwrap_or_default();
    schema.ignore = l.ignore.unwrap_or_default();
    schema.sensitive_as_feature = l.sensitive_as_feature.unwrap_or(true);
    Ok(RunConfig {
        data,
        schema,
        split,
        eval_split: l.eval_split.unwrap_or(SplitPart::Test),
        train: t,
        checkpoint_every: l.checkpoint_every,
    })
}

impl RunConfig {
    /// A layer that sets every key, for echoing into output directories.
    pub fn to_layer(&self) -> ConfigLayer {
        let t = &self.train;
        let (split_seed, train_subsets, val_subsets, test_subsets) = match &self.split {
            SplitChoice::Random { seed } => (Some(*seed), None, None, None),
            SplitChoice::Named { train, val, test } => {
                (None, Some(train.clone()), Some(val.clone()), Some(test.clone()))
            }
        };
        ConfigLayer {
            data: Some(self.data.clone()),
            label: Some(self.schema.label.clone()),
            sensitive: Some(self.schema.sensitive.clone()),
            subset: Some(self.schema.subset.clone()),
            one_hot: Some(self.schema.one_hot.clone()),
            ignore: Some(self.schema.ignore.clone()),
            sensitive_as_feature: Some(self.schema.sensitive_as_feature),
            split_seed,
            train_subsets,
            val_subsets,
            test_subsets,
            eval_split: Some(self.eval_split),
            alpha: Some(t.alpha),
            beta1: Some(t.beta1),
            beta2: Some(t.beta2),
            tau: Some(t.tau),
            gamma: Some(t.gamma),
            lambda: Some(t.lambda),
            k_shot: Some(t.k_shot),
            aux_size: Some(t.aux_size),
            meta_steps: Some(t.meta_steps),
            test_tasks: Some(t.test_tasks),
            query_size: Some(t.query_size),
            dict_capacity: Some(t.dict_capacity),
            weight_decay: Some(t.weight_decay),
            seed: Some(t.seed),
            variant: Some(t.variant),
            regularizer: Some(t.regularizer),
            key_params: Some(t.key_params),
            divergence_threshold: Some(t.divergence_threshold),
            checkpoint_every: self.checkpoint_every,
        }
    }
}

/// Provenance of a training run, stored as `run.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunInfo {
    pub seed: u64,
    pub data: PathBuf,
    pub data_sha256: String,
    pub split: SplitSpec,
    pub feature_stats: FeatureStats,
    pub feature_names: Vec<String>,
    pub dropped_rows: usize,
}

/// `summary.json` of an evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub variant: Variant,
    pub seed: u64,
    pub eval_split: SplitPart,
    pub data_sha256: String,
    pub metrics: MetricsSummary,
    pub config: TrainConfig,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn prepare_out(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && !force {
        return Err(Error::OutputExists(dir.to_path_buf()));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn resolve_split(table: &DatasetTable, choice: &SplitChoice) -> Result<SplitSpec> {
    let spec = match choice {
        SplitChoice::Random { seed } => SplitSpec::default_for(table.n_subsets(), *seed)?,
        SplitChoice::Named { train, val, test } => {
            let ids = |key: &str, names: &[String]| -> Result<Vec<usize>> {
                names
                    .iter()
                    .map(|n| {
                        table
                            .subset_index(n)
                            .ok_or_else(|| Error::config(key, format!("no subset named `{n}`")))
                    })
                    .collect()
            };
            SplitSpec {
                train: ids("train-subsets", train)?,
                val: ids("val-subsets", val)?,
                test: ids("test-subsets", test)?,
                seed: 0,
            }
        }
    };
    spec.validate(table.n_subsets())?;
    Ok(spec)
}

/// Loads and standardizes the dataset (statistics fit on the training
/// subsets) and records its provenance.
pub fn load_data(rc: &RunConfig) -> Result<(DatasetTable, RunInfo)> {
    let bytes = fs::read(&rc.data).map_err(|e| {
        Error::Schema(format!("cannot read dataset {}: {e}", rc.data.display()))
    })?;
    let mut table = DatasetTable::read_csv(bytes.as_slice(), &rc.schema)?;
    let split = resolve_split(&table, &rc.split)?;
    let feature_stats = table.standardize(&split.train)?;
    let info = RunInfo {
        seed: rc.train.seed,
        data: rc.data.clone(),
        data_sha256: sha256_hex(&bytes),
        split,
        feature_stats,
        feature_names: table.feature_names().to_vec(),
        dropped_rows: table.dropped_rows(),
    };
    Ok((table, info))
}

fn write_history(path: &Path, history: &[StepLog]) -> Result<()> {
    let mut text = String::new();
    for log in history {
        text.push_str(&serde_json::to_string(log)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Trains (or resumes) into `out`: `config.json`, `run.json`,
/// `history.jsonl` and `checkpoint/`. A diverged run still saves its last
/// good checkpoint.
pub fn cmd_train(rc: &RunConfig, out: &Path, force: bool, resume: Option<&Path>) -> Result<TrainState> {
    train_into(rc, out, force, resume).map(|(state, _, _)| state)
}

fn train_into(
    rc: &RunConfig,
    out: &Path,
    force: bool,
    resume: Option<&Path>,
) -> Result<(TrainState, DatasetTable, RunInfo)> {
    prepare_out(out, force)?;
    let (table, info) = load_data(rc)?;
    let train_ids = info.split.train.clone();
    let mut state = match resume {
        Some(dir) => {
            let mut s = TrainState::load(dir)?;
            if s.classifier.config.n_features != table.n_features() {
                return Err(Error::Checkpoint(format!(
                    "checkpoint expects {} features, dataset has {}",
                    s.classifier.config.n_features,
                    table.n_features()
                )));
            }
            s.config.meta_steps = rc.train.meta_steps;
            s
        }
        None => TrainState::new(rc.train.clone(), &table, &train_ids)?,
    };
    let echo = RunConfig {
        train: state.config.clone(),
        ..rc.clone()
    };
    write_json(&out.join("config.json"), &echo.to_layer())?;
    write_json(&out.join("run.json"), &info)?;

    let ckpt = out.join("checkpoint");
    let until = state.config.meta_steps;
    let result = match rc.checkpoint_every {
        Some(every) => {
            let mut r = Ok(());
            while state.step < until && r.is_ok() {
                let next = ((state.step / every) + 1) * every;
                r = state.run(&table, &train_ids, next.min(until), |_| {});
                if r.is_ok() {
                    state.save(&ckpt)?;
                }
            }
            r
        }
        None => state.run(&table, &train_ids, until, |_| {}),
    };
    state.save(&ckpt)?;
    write_history(&out.join("history.jsonl"), &state.history)?;
    result.map(|()| (state, table, info))
}

/// Evaluates a finished `train` directory into `out`: `tasks.jsonl`,
/// `summary.json`, `config.json`.
pub fn cmd_eval(args: &EvalArgs) -> Result<EvalSummary> {
    let mut layer = ConfigLayer::from_file(&args.run.join("config.json"))?;
    if let Some(d) = &args.data {
        layer.data = Some(d.clone());
    }
    let mut rc = resolve(layer)?;
    let info: RunInfo = serde_json::from_slice(&fs::read(args.run.join("run.json"))?)?;
    let mut state = TrainState::load(args.run.join("checkpoint"))?;
    if let Some(s) = args.seed {
        rc.train.seed = s;
    }
    if let Some(n) = args.test_tasks {
        rc.train.test_tasks = n;
    }
    if let Some(p) = args.eval_split {
        rc.eval_split = p;
    }
    state.config.seed = rc.train.seed;
    state.config.test_tasks = rc.train.test_tasks;
    prepare_out(&args.output.out, args.output.force)?;
    let (table, loaded) = load_data(&rc)?;
    if loaded.data_sha256 != info.data_sha256 {
        return Err(Error::Validation(format!(
            "dataset hash {} differs from the training run's {}",
            loaded.data_sha256, info.data_sha256
        )));
    }
    evaluate_into(&state, &table, &info, &rc, &args.output.out)
}

fn evaluate_into(
    state: &TrainState,
    table: &DatasetTable,
    info: &RunInfo,
    rc: &RunConfig,
    out: &Path,
) -> Result<EvalSummary> {
    let report: MetricsReport = evaluate(state, table, info.split.part(rc.eval_split))?;
    report.write_jsonl(out.join("tasks.jsonl"))?;
    let summary = EvalSummary {
        variant: state.config.variant,
        seed: state.config.seed,
        eval_split: rc.eval_split,
        data_sha256: info.data_sha256.clone(),
        metrics: report.summary(),
        config: state.config.clone(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("config.json"), &rc.to_layer())?;
    Ok(summary)
}

/// Writes a synthetic CSV and its `.synth.json` manifest.
pub fn cmd_synth(args: &SynthArgs) -> Result<SynthSpec> {
    let mut spec = match &args.config {
        Some(p) => serde_json::from_slice::<SynthSpec>(&fs::read(p)?)
            .map_err(|e| Error::config("config", e.to_string()))?,
        None => SynthSpec::default(),
    };
    if let Some(v) = args.n_samples {
        spec.n_samples = v;
    }
    if let Some(v) = args.n_subsets {
        spec.n_subsets = v;
    }
    if let Some(v) = args.delta {
        spec.delta = v;
    }
    if let Some(v) = args.p_sensitive {
        spec.p_sensitive = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    spec.validate()
        .map_err(|e| Error::config("synth", e.to_string()))?;
    if args.out.exists() && !args.force {
        return Err(Error::OutputExists(args.out.clone()));
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    make_synthetic(&spec)?.write(&args.out)?;
    Ok(spec)
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: Variant,
    pub gamma: f64,
    pub aux_size: usize,
    pub k_shot: usize,
    pub mean_dp: f64,
    pub mean_eo: f64,
    pub mean_acc: f64,
}

/// Trains and evaluates every cell of the grid into its own subdirectory
/// and writes `sweep.csv`, one row per cell in grid order.
pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>> {
    let base = match &args.config {
        Some(p) => ConfigLayer::from_file(p)?,
        None => ConfigLayer::default(),
    }
    .merge(args.settings.clone());
    let base_rc = resolve(base.clone())?;
    let variants = if args.variants.is_empty() { vec![base_rc.train.variant] } else { args.variants.clone() };
    let gammas = if args.gammas.is_empty() { vec![base_rc.train.gamma] } else { args.gammas.clone() };
    let k_shots = if args.k_shots.is_empty() { vec![base_rc.train.k_shot] } else { args.k_shots.clone() };
    let aux_sizes: Vec<Option<usize>> = if args.aux_sizes.is_empty() {
        vec![base.aux_size]
    } else {
        args.aux_sizes.iter().copied().map(Some).collect()
    };

    let mut cells = Vec::new();
    for &variant in &variants {
        for &gamma in &gammas {
            for &aux in &aux_sizes {
                for &k in &k_shots {
                    let mut layer = base.clone();
                    layer.variant = Some(variant);
                    layer.gamma = Some(gamma);
                    layer.k_shot = Some(k);
                    layer.aux_size = Some(aux.unwrap_or(2 * k));
                    cells.push(resolve(layer)?);
                }
            }
        }
    }
    prepare_out(&args.output.out, args.output.force)?;
    let run_cell = |rc: &RunConfig| -> Result<SweepRow> {
        let t = &rc.train;
        let dir = args.output.out.join(format!(
            "{}_gamma{}_aux{}_k{}",
            t.variant, t.gamma, t.aux_size, t.k_shot
        ));
        let (state, table, info) = train_into(rc, &dir, args.output.force, None)?;
        let s = evaluate_into(&state, &table, &info, rc, &dir)?;
        Ok(SweepRow {
            variant: t.variant,
            gamma: t.gamma,
            aux_size: t.aux_size,
            k_shot: t.k_shot,
            mean_dp: s.metrics.dp.mean,
            mean_eo: s.metrics.eo.mean,
            mean_acc: s.metrics.acc.mean,
        })
    };
    let rows = if args.parallel {
        cells.par_iter().map(run_cell).collect::<Result<Vec<_>>>()?
    } else {
        cells.iter().map(run_cell).collect::<Result<Vec<_>>>()?
    };
    let mut w = csv::Writer::from_path(args.output.out.join("sweep.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    write_json(&args.output.out.join("config.json"), &base_rc.to_layer())?;
    Ok(rows)
}

/// Parses `args` and runs the chosen subcommand.
pub fn run_with<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::config("arguments", e.to_string()))?;
    dispatch(cli)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let rc = parse_config(a.config.as_deref(), a.settings)?;
            let state = cmd_train(&rc, &a.output.out, a.output.force, a.resume.as_deref())?;
            println!(
                "trained {} for {} steps -> {}",
                state.config.variant,
                state.step,
                a.output.out.join("checkpoint").display()
            );
        }
        Command::Eval(a) => {
            let s = cmd_eval(&a)?;
            println!(
                "{} tasks: dp {:.4} ± {:.4}, eo {:.4} ± {:.4}, acc {:.4} ± {:.4} ({} partial)",
                s.metrics.tasks,
                s.metrics.dp.mean,
                s.metrics.dp.std,
                s.metrics.eo.mean,
                s.metrics.eo.std,
                s.metrics.acc.mean,
                s.metrics.acc.std,
                s.metrics.partial_tasks
            );
        }
        Command::Synth(a) => {
            let spec = cmd_synth(&a)?;
            println!(
                "wrote {} rows in {} subsets to {}",
                spec.n_samples,
                spec.n_subsets,
                a.out.display()
            );
            println!("manifest: {}", sidecar_path(&a.out).display());
        }
        Command::Sweep(a) => {
            let rows = cmd_sweep(&a)?;
            println!("{} cells -> {}", rows.len(), a.output.out.join("sweep.csv").display());
        }
    }
    Ok(())
}

/// Entry point for the binary. Help and version requests exit 0.
pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
