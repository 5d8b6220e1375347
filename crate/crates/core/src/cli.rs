//! Reproducible command runs. Every command serializes its inputs to
//! `run_config.json` before doing any work and finishes by writing
//! `manifest.json`, which lists every artifact with its SHA-256.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffcore::{sigmoid, Activation};
use crate::error::{Error, Result};
use crate::extgnan::{Architecture, DeltaMode};
use crate::interpret::{
    contributions_csv, explain, noise_robustness, pca_perturbation_curve, reliability_csv, NoiseKind, NoiseSpec,
};
use crate::signal_graphs::{
    dataset_to_json, ingest_csv, mask_dataset, read_dataset, signal_widths, summarize, CsvSchema, DeltaPolicy,
    FeatureGrouping, GraphSet, GroupingConfig, NormConfig, NormStats, SubsetPartition,
};
use crate::superman::{Ablation, Link, ModelCheckpoint, ModelConfig, SupermanModel};
use crate::synth::{feature_xor_dataset, feature_xor_groupings, feature_xor_partition, set_xor_dataset};
use crate::synth::{set_xor_groupings, set_xor_partition, SynthSpec};
use crate::training::{
    accuracy, evaluate, predict_logits, reliability_bins, split_dataset, train, Metrics, MetricsReport, TrainConfig,
    Trainer,
};
use crate::treemetric::{four_point_check, reconstruct_path, DistanceMatrix, Tolerance};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "SUPERMAN_OUT";

const RELIABILITY_BINS: usize = 10;

// ---------------------------------------------------------------------------
// Run configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// One dataset JSON, split by `RunConfig::split`.
    Path(PathBuf),
    /// Pre-split dataset JSON files.
    Splits { train: PathBuf, val: PathBuf, test: PathBuf },
    /// Generated on the fly, then split by `RunConfig::split`.
    Synthetic(SynthSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOptions {
    pub delta_mode: DeltaMode,
    pub output_bias: bool,
    pub time_scale: f64,
    pub activation: Activation,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { delta_mode: DeltaMode::Masked, output_bias: true, time_scale: 1.0, activation: Activation::Relu }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

/// Everything a training run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    /// Partition, feature groups and delta policy; defaults to one subset per
    /// signal type with all features in one group.
    #[serde(default)]
    pub grouping: Option<GroupingConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub model: ModelOptions,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub normalize: NormConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub deterministic: bool,
}

impl RunConfig {
    pub fn new(dataset: DatasetSource) -> Self {
        Self {
            dataset,
            grouping: None,
            train: TrainConfig::default(),
            model: ModelOptions::default(),
            ablation: Ablation::None,
            seeds: default_seeds(),
            normalize: NormConfig::default(),
            split: SplitConfig::default(),
            deterministic: false,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seed list is empty".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seed list contains duplicates".into()));
        }
        if !(self.model.time_scale.is_finite() && self.model.time_scale > 0.0) {
            return Err(Error::InvalidConfig("time_scale must be positive".into()));
        }
        if let Some(g) = &self.grouping {
            g.policy()?;
        }
        self.train.validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            arch: Architecture {
                hidden: self.train.hidden,
                layers: self.train.layers,
                activation: self.model.activation,
                dropout: self.train.dropout,
            },
            delta_mode: self.model.delta_mode,
            ablation: self.ablation,
            output_bias: self.model.output_bias,
            time_scale: self.model.time_scale,
            link: Link::Sigmoid,
        }
    }
}

/// Masked, normalized splits plus the structures a model is built from.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Vec<GraphSet>,
    pub val: Vec<GraphSet>,
    pub test: Vec<GraphSet>,
    pub partition: SubsetPartition,
    pub groupings: BTreeMap<String, FeatureGrouping>,
    pub policy: DeltaPolicy,
    pub norm: Option<NormStats>,
}

pub fn prepare_data(config: &RunConfig) -> Result<PreparedData> {
    let split = |data: Vec<GraphSet>| split_dataset(&data, config.split.train, config.split.val, config.split.seed);
    let (mut tr, mut va, mut te) = match &config.dataset {
        DatasetSource::Path(p) => split(read_dataset(p)?)?,
        DatasetSource::Splits { train, val, test } => (read_dataset(train)?, read_dataset(val)?, read_dataset(test)?),
        DatasetSource::Synthetic(spec) => split(spec.generate()?.samples)?,
    };
    let policy = match &config.grouping {
        Some(g) => g.policy()?,
        None => DeltaPolicy::Full,
    };
    for part in [&mut tr, &mut va, &mut te] {
        mask_dataset(part, policy)?;
    }
    let norm =
        (config.normalize.features || config.normalize.timestamps).then(|| NormStats::fit(&tr, config.normalize));
    if let Some(n) = &norm {
        for part in [&mut tr, &mut va, &mut te] {
            n.apply(part)?;
        }
    }
    let all: Vec<GraphSet> = tr.iter().chain(&va).chain(&te).cloned().collect();
    let widths = signal_widths(&all)?;
    let (partition, groupings) = match &config.grouping {
        Some(g) => (g.partition()?, g.groupings(&widths)?),
        None => {
            let names: Vec<&String> = widths.keys().collect();
            let groupings = widths.iter().map(|(s, &w)| (s.clone(), FeatureGrouping::joint(w))).collect();
            (SubsetPartition::singletons(&names)?, groupings)
        }
    };
    Ok(PreparedData { train: tr, val: va, test: te, partition, groupings, policy, norm })
}

/// One trained seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub checkpoint: ModelCheckpoint,
    pub history: crate::training::TrainHistory,
    pub test: Metrics,
}

pub fn train_seed(data: &PreparedData, config: &RunConfig, seed: u64) -> Result<SeedRun> {
    let model = SupermanModel::build(data.partition.clone(), &data.groupings, &config.model_config(), seed)?;
    let tc = TrainConfig { seed, ..config.train.clone() };
    let (model, history) = train(model, &data.train, &data.val, &tc)?;
    let test = evaluate(&model, &data.test)?;
    let mut checkpoint = ModelCheckpoint::new(model, data.norm.clone());
    checkpoint.delta_policy = data.policy;
    Ok(SeedRun { seed, checkpoint, history, test })
}

// ---------------------------------------------------------------------------
// Output directory and manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub deterministic: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == name)
    }
}

/// `explicit`, else `$SUPERMAN_OUT/<command>`, else `superman_out/<command>`.
pub fn resolve_out(explicit: Option<&Path>, command: &str) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("superman_out"), PathBuf::from).join(command),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

struct OutDir {
    root: PathBuf,
    command: String,
    config_sha256: String,
    seeds: Vec<u64>,
    deterministic: bool,
    warnings: Vec<String>,
    artifacts: Vec<Artifact>,
}

impl OutDir {
    /// Creates the directory and writes `run_config.json`.
    fn start<C: Serialize>(root: &Path, command: &str, config: &C) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        let config_json = serde_json::to_string_pretty(config)?;
        let mut out = Self {
            root: root.to_path_buf(),
            command: command.to_string(),
            config_sha256: sha256_hex(config_json.as_bytes()),
            seeds: Vec::new(),
            deterministic: false,
            warnings: Vec::new(),
            artifacts: Vec::new(),
        };
        out.write("run_config.json", config_json.as_bytes())?;
        Ok(out)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.root.join(name), bytes)?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(Artifact { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn finish(self) -> Result<Manifest> {
        let manifest = Manifest {
            command: self.command,
            config_sha256: self.config_sha256,
            seeds: self.seeds,
            deterministic: self.deterministic,
            warnings: self.warnings,
            artifacts: self.artifacts,
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        std::fs::write(self.root.join("manifest.json"), s)?;
        Ok(manifest)
    }
}

fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    ModelCheckpoint::from_json(&std::fs::read_to_string(path)?)
}

/// Reads a dataset and applies the checkpoint's delta policy and, unless
/// `skip_norm`, its normalization.
fn load_eval_data(path: &Path, ck: &ModelCheckpoint, skip_norm: bool) -> Result<Vec<GraphSet>> {
    let mut data = read_dataset(path)?;
    if data.is_empty() {
        return Err(Error::Schema(format!("dataset {} is empty", path.display())));
    }
    mask_dataset(&mut data, ck.delta_policy)?;
    if let (Some(n), false) = (&ck.norm, skip_norm) {
        n.apply(&mut data)?;
    }
    Ok(data)
}

// ---------------------------------------------------------------------------
// Commands

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct IngestArgs {
    /// Long-format CSV with entity_id, signal_type, timestamp, value columns.
    #[arg(long)]
    pub csv: PathBuf,
    /// JSON CsvSchema; defaults accept any signal type.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<Manifest> {
    let schema: CsvSchema = match &args.schema {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::InvalidConfig(format!("schema {}: {e}", p.display())))?,
        None => CsvSchema::default(),
    };
    let mut out = OutDir::start(&resolve_out(args.out.as_deref(), "ingest"), "ingest", &(args, &schema))?;
    let data = ingest_csv(&args.csv, &schema)?;
    out.write("dataset.json", dataset_to_json(&data)?.as_bytes())?;
    out.write_json("summary.json", &summarize(&data))?;
    out.finish()
}

/// Trains every seed of `config` and writes checkpoints, histories, the test
/// split and mean/std test metrics.
pub fn cmd_train(config: &RunConfig, out_dir: &Path) -> Result<(Manifest, MetricsReport)> {
    config.validate()?;
    let mut out = OutDir::start(out_dir, "train", config)?;
    out.seeds = config.seeds.clone();
    out.deterministic = config.deterministic;
    out.warnings = config.train.outside_search_space();
    let data = prepare_data(config)?;
    let mut per_seed = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let run = train_seed(&data, config, seed)?;
        out.write(&format!("checkpoint_seed{seed}.json"), run.checkpoint.to_json()?.as_bytes())?;
        out.write(&format!("history_seed{seed}.csv"), run.history.to_csv().as_bytes())?;
        per_seed.push(run.test);
    }
    let report = MetricsReport::from_runs(config.seeds.clone(), per_seed)?;
    out.write_json("metrics.json", &report)?;
    out.write("test_raw.json", dataset_to_json(&raw_test_split(config)?)?.as_bytes())?;
    Ok((out.finish()?, report))
}

/// The test split before masking and normalization, the form `eval`,
/// `explain` and `robustness` expect.
fn raw_test_split(config: &RunConfig) -> Result<Vec<GraphSet>> {
    let split = |data: Vec<GraphSet>| split_dataset(&data, config.split.train, config.split.val, config.split.seed);
    Ok(match &config.dataset {
        DatasetSource::Path(p) => split(read_dataset(p)?)?.2,
        DatasetSource::Splits { test, .. } => read_dataset(test)?,
        DatasetSource::Synthetic(spec) => split(spec.generate()?.samples)?.2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset JSON in raw (unnormalized) units.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub positives: usize,
    pub metrics: Metrics,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(Manifest, EvalReport)> {
    let mut out = OutDir::start(&resolve_out(args.out.as_deref(), "eval"), "eval", args)?;
    let ck = load_checkpoint(&args.checkpoint)?;
    let data = load_eval_data(&args.dataset, &ck, false)?;
    let labels: Vec<u8> = data.iter().map(|s| s.label).collect();
    let logits = predict_logits(&ck.model, &data)?;
    let metrics = Metrics::compute(&logits, &labels)?;
    let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let bins = reliability_bins(&probs, &labels, RELIABILITY_BINS)?;
    let report = EvalReport { samples: data.len(), positives: labels.iter().map(|&l| l as usize).sum(), metrics };
    out.write_json("metrics.json", &report)?;
    out.write("reliability.csv", reliability_csv(&bins)?.as_bytes())?;
    Ok((out.finish()?, report))
}

fn default_levels() -> Vec<f64> {
    (0..=8).map(|i| -2.0 + 0.5 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Subset names to perturb along their principal component; all when empty.
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
    /// Shift magnitudes along the principal component.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = default_levels())]
    pub levels: Vec<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn cmd_explain(args: &ExplainArgs) -> Result<Manifest> {
    let mut out = OutDir::start(&resolve_out(args.out.as_deref(), "explain"), "explain", args)?;
    let ck = load_checkpoint(&args.checkpoint)?;
    let data = load_eval_data(&args.dataset, &ck, false)?;
    let model = &ck.model;
    let names: Vec<String> = (0..model.partition().len()).map(|i| model.partition().subset_name(i)).collect();
    let targets: Vec<usize> = if args.targets.is_empty() {
        (0..names.len()).collect()
    } else {
        args.targets
            .iter()
            .map(|t| {
                names.iter().position(|n| n == t).ok_or_else(|| Error::InvalidConfig(format!("unknown subset `{t}`")))
            })
            .collect::<Result<_>>()?
    };
    let reports = data.iter().map(|s| explain(model, s)).collect::<Result<Vec<_>>>()?;
    out.write_json("contributions.json", &reports)?;
    out.write("contributions.csv", contributions_csv(&reports)?.as_bytes())?;
    for idx in targets {
        match pca_perturbation_curve(model, &data, idx, &args.levels) {
            Ok(curve) => out.write(&format!("pca_{}.csv", file_safe(&names[idx])), curve.to_csv()?.as_bytes())?,
            Err(Error::DegenerateDirection(m)) => out.warnings.push(format!("no PCA curve for `{}`: {m}", names[idx])),
            Err(e) => return Err(e),
        }
    }
    out.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct RobustnessArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_parser = parse_noise_kind)]
    pub kind: NoiseKind,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5])]
    pub levels: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0, 1, 2, 3, 4])]
    pub seeds: Vec<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

fn parse_noise_kind(s: &str) -> std::result::Result<NoiseKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn cmd_robustness(args: &RobustnessArgs) -> Result<Manifest> {
    let mut out = OutDir::start(&resolve_out(args.out.as_deref(), "robustness"), "robustness", args)?;
    out.seeds = args.seeds.clone();
    if args.levels.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::InvalidConfig("noise levels must be finite and nonnegative".into()));
    }
    let ck = load_checkpoint(&args.checkpoint)?;
    let data = load_eval_data(&args.dataset, &ck, true)?;
    let spec = NoiseSpec { kind: args.kind, levels: args.levels.clone() };
    let table = noise_robustness(&ck.model, &data, &spec, &args.seeds, ck.norm.as_ref())?;
    let stem = format!("robustness_{}", serde_json::to_value(args.kind)?.as_str().unwrap_or("noise"));
    out.write(&format!("{stem}.csv"), table.to_csv()?.as_bytes())?;
    out.write_json(&format!("{stem}.json"), &table)?;
    out.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TreeMode {
    Check,
    Reconstruct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct TreemetricArgs {
    /// Square CSV distance matrix, optionally with a label header row.
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, value_enum)]
    pub mode: TreeMode,
    /// Absolute tolerance; the default is relative 1e-6.
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeVerdict {
    pub mode: TreeMode,
    pub points: usize,
    pub four_point: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<[usize; 4]>,
    /// Reconstruct mode: the recovered path reproduces the input matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roundtrip_ok: Option<bool>,
}

pub fn cmd_treemetric(args: &TreemetricArgs) -> Result<(Manifest, TreeVerdict)> {
    let mut out = OutDir::start(&resolve_out(args.out.as_deref(), "treemetric"), "treemetric", args)?;
    let tol = match args.abs_tol {
        Some(t) if t.is_finite() && t >= 0.0 => Tolerance::Absolute(t),
        Some(t) => return Err(Error::InvalidConfig(format!("tolerance {t} must be nonnegative"))),
        None => Tolerance::INGESTED,
    };
    let d = DistanceMatrix::read_csv(std::fs::File::open(&args.matrix)?, tol)?;
    let fp = four_point_check(&d, tol);
    let mut verdict = TreeVerdict {
        mode: args.mode,
        points: d.len(),
        four_point: fp.holds,
        violation: fp.violation,
        roundtrip_ok: None,
    };
    if args.mode == TreeMode::Reconstruct {
        let mut path = reconstruct_path(&d, tol)?;
        if let Some(labels) = d.labels() {
            path.labels = Some(path.order.iter().map(|&i| labels[i].clone()).collect());
        }
        let rebuilt = path.distance_matrix();
        let n = d.len();
        let ok = (0..n).all(|i| (0..n).all(|j| tol.close(rebuilt.get(i, j), d.get(i, j))));
        verdict.roundtrip_ok = Some(ok);
        out.write("path.json", path.to_json()?.as_bytes())?;
    }
    out.write_json("verdict.json", &verdict)?;
    Ok((out.finish()?, verdict))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum XorTask {
    /// XOR of two features inside one signal.
    Feature,
    /// XOR of the presence of two signals.
    Set,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct XorBenchArgs {
    #[arg(long, value_enum)]
    pub task: XorTask,
    /// Only the grouped (true) or only the singleton (false) configuration;
    /// both when omitted.
    #[arg(long)]
    pub grouped: Option<bool>,
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, default_value_t = 2000)]
    pub max_steps: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XorTrial {
    pub task: XorTask,
    pub configuration: String,
    pub seed: u64,
    /// Steps until 4/4 accuracy, if reached.
    pub solved_at: Option<usize>,
    pub best_accuracy: f64,
    pub final_accuracy: f64,
}

const XOR_CHECK_EVERY: usize = 25;
const XOR_HIDDEN: usize = 32;

pub fn xor_configuration_name(task: XorTask, grouped: bool) -> &'static str {
    match (task, grouped) {
        (XorTask::Feature, true) => "grouped",
        (XorTask::Set, true) => "paired",
        (_, false) => "singleton",
    }
}

/// Full-batch training on the four truth-table rows, checking accuracy every
/// few steps and stopping early at 4/4.
pub fn xor_trial(task: XorTask, grouped: bool, seed: u64, max_steps: usize) -> Result<XorTrial> {
    let (data, partition, groupings) = match task {
        XorTask::Feature => (feature_xor_dataset(1), feature_xor_partition(), feature_xor_groupings(grouped)),
        XorTask::Set => (set_xor_dataset(1), set_xor_partition(grouped), set_xor_groupings()),
    };
    // Set task: each graph encodes to its feature and only f, g learn.
    let ablation = if task == XorTask::Set { Ablation::Identity } else { Ablation::None };
    let config = ModelConfig {
        arch: Architecture { hidden: XOR_HIDDEN, layers: 3, activation: Activation::Relu, dropout: 0.0 },
        ablation,
        ..ModelConfig::default()
    };
    let model = SupermanModel::build(partition, &groupings, &config, seed)?;
    let labels: Vec<u8> = data.iter().map(|s| s.label).collect();
    let refs: Vec<&GraphSet> = data.iter().collect();
    let mut trainer = Trainer::new(model, 1e-2, 0.0, seed);
    let acc = |m: &SupermanModel| -> Result<f64> {
        let probs: Vec<f64> = predict_logits(m, &data)?.into_iter().map(sigmoid).collect();
        accuracy(&probs, &labels, 0.5)
    };
    let mut best = acc(trainer.model())?;
    let (mut last, mut solved_at) = (best, None);
    for step in 1..=max_steps {
        trainer.step(&refs)?;
        if step % XOR_CHECK_EVERY == 0 || step == max_steps {
            last = acc(trainer.model())?;
            best = best.max(last);
            if last == 1.0 {
                solved_at = Some(step);
                break;
            }
        }
    }
    Ok(XorTrial {
        task,
        configuration: xor_configuration_name(task, grouped).to_string(),
        seed,
        solved_at,
        best_accuracy: best,
        final_accuracy: last,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XorSummary {
    pub configuration: String,
    pub seeds: usize,
    pub solved: usize,
    pub max_best_accuracy: f64,
    pub mean_best_accuracy: f64,
}

pub fn cmd_xor_bench(args: &XorBenchArgs) -> Result<(Manifest, Vec<XorSummary>, Vec<XorTrial>)> {
    if args.seeds == 0 {
        return Err(Error::InvalidConfig("xor bench needs at least one seed".into()));
    }
    let mut out = OutDir::start(&resolve_out(args.out.as_deref(), "xor_bench"), "xor_bench", args)?;
    out.seeds = (0..args.seeds).collect();
    out.deterministic = true;
    let configs: Vec<bool> = match args.grouped {
        Some(g) => vec![g],
        None => vec![true, false],
    };
    let mut trials = Vec::new();
    let mut summaries = Vec::new();
    for grouped in configs {
        let rows =
            (0..args.seeds).map(|s| xor_trial(args.task, grouped, s, args.max_steps)).collect::<Result<Vec<_>>>()?;
        let best: Vec<f64> = rows.iter().map(|r| r.best_accuracy).collect();
        summaries.push(XorSummary {
            configuration: xor_configuration_name(args.task, grouped).to_string(),
            seeds: rows.len(),
            solved: rows.iter().filter(|r| r.solved_at.is_some()).count(),
            max_best_accuracy: best.iter().copied().fold(0.0, f64::max),
            mean_best_accuracy: best.iter().sum::<f64>() / best.len() as f64,
        });
        trials.extend(rows);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["task", "configuration", "seed", "solved_at", "best_accuracy", "final_accuracy"])?;
    for t in &trials {
        w.write_record([
            format!("{:?}", t.task).to_lowercase(),
            t.configuration.clone(),
            t.seed.to_string(),
            t.solved_at.map_or(String::new(), |s| s.to_string()),
            t.best_accuracy.to_string(),
            t.final_accuracy.to_string(),
        ])?;
    }
    out.write("xor_trials.csv", &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &summaries {
        w.serialize(s)?;
    }
    out.write("xor_summary.csv", &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    Ok((out.finish()?, summaries, trials))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub auprc_mean: f64,
    pub auprc_std: f64,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    /// `100 * (auprc(none) - auprc(variant))`.
    pub auprc_drop_points: f64,
}

/// Trains `config` once per variant (the full model is always included as
/// the reference) and tabulates mean test AUPRC and its drop.
pub fn cmd_ablate(config: &RunConfig, variants: &[Ablation], out_dir: &Path) -> Result<(Manifest, Vec<AblationRow>)> {
    config.validate()?;
    if variants.is_empty() {
        return Err(Error::InvalidConfig("no ablation variants given".into()));
    }
    let mut list = vec![Ablation::None];
    list.extend(variants.iter().copied().filter(|&v| v != Ablation::None));
    list.dedup();
    let mut out = OutDir::start(out_dir, "ablate", &(config, &list))?;
    out.seeds = config.seeds.clone();
    out.deterministic = config.deterministic;
    out.warnings = config.train.outside_search_space();
    let data = prepare_data(config)?;
    let mut reports = Vec::new();
    for &variant in &list {
        let cfg = RunConfig { ablation: variant, ..config.clone() };
        let runs =
            config.seeds.iter().map(|&s| train_seed(&data, &cfg, s).map(|r| r.test)).collect::<Result<Vec<_>>>()?;
        reports.push((variant, MetricsReport::from_runs(config.seeds.clone(), runs)?));
    }
    let reference = reports[0].1.mean.auprc;
    let rows: Vec<AblationRow> = reports
        .iter()
        .map(|(v, r)| AblationRow {
            variant: v.name().to_string(),
            auprc_mean: r.mean.auprc,
            auprc_std: r.std.auprc,
            auroc_mean: r.mean.auroc,
            auroc_std: r.std.auroc,
            auprc_drop_points: 100.0 * (reference - r.mean.auprc),
        })
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    out.write("ablation.csv", &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    let per_variant: BTreeMap<&str, &MetricsReport> = reports.iter().map(|(v, r)| (v.name(), r)).collect();
    out.write_json("ablation.json", &per_variant)?;
    Ok((out.finish()?, rows))
}

// ---------------------------------------------------------------------------
// Argument parsing

#[derive(Debug, Parser)]
#[command(name = "superman", version, about = "Interpretable additive models over sets of signal graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// RunConfig JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_parser = parse_ablation)]
    pub ablation: Option<Ablation>,
    /// Overrides the config's seed list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut config = RunConfig::from_path(&self.config)?;
        if let Some(a) = self.ablation {
            config.ablation = a;
        }
        if let Some(s) = &self.seeds {
            config.seeds = s.clone();
        }
        config.deterministic |= self.deterministic;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Variants to compare against the full model.
    #[arg(long, value_delimiter = ',', value_parser = parse_ablation, default_values_t = Ablation::ALL.to_vec())]
    pub variants: Vec<Ablation>,
}

fn parse_ablation(s: &str) -> std::result::Result<Ablation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Long-format CSV to dataset JSON plus a summary.
    Ingest(IngestArgs),
    /// Train one model per seed and report test metrics.
    Train(TrainArgs),
    /// Metrics, ECE and reliability diagram data for a checkpoint.
    Eval(EvalArgs),
    /// Exact contributions and PCA perturbation curves.
    Explain(ExplainArgs),
    /// Metric change under injected test-time noise.
    Robustness(RobustnessArgs),
    /// Four-point check or path reconstruction of a distance matrix.
    Treemetric(TreemetricArgs),
    /// Feature- and set-XOR separation benchmarks.
    XorBench(XorBenchArgs),
    /// Ablation table against the full model.
    Ablate(AblateArgs),
}

/// Runs a parsed command and returns its manifest.
pub fn run(cli: Cli) -> Result<Manifest> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Train(a) => cmd_train(&a.resolve()?, &resolve_out(a.out.as_deref(), "train")).map(|r| r.0),
        Command::Eval(a) => cmd_eval(&a).map(|r| r.0),
        Command::Explain(a) => cmd_explain(&a),
        Command::Robustness(a) => cmd_robustness(&a),
        Command::Treemetric(a) => cmd_treemetric(&a).map(|r| r.0),
        Command::XorBench(a) => cmd_xor_bench(&a).map(|r| r.0),
        Command::Ablate(a) => {
            cmd_ablate(&a.train.resolve()?, &a.variants, &resolve_out(a.train.out.as_deref(), "ablate")).map(|r| r.0)
        }
    }
}
