//! The `s2vt` command line: argument parsing, config loading and the
//! subcommand pipelines.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, load_corpus, read_captions, read_features, read_splits, subsample_frames, write_captions,
    tokenize, write_corpus, Corpus, FeatureEntry, RawCorpus, Split, SyntheticConfig,
};
use crate::decoding::{fused_decode, greedy_decode, tune_alpha, DecodeConfig, FusionExample};
use crate::error::S2vtError;
use crate::eval::{caption_stats, corpus_stats, evaluate, CorpusStats, MeteorParams};
use crate::gradcheck::{check_random, CheckProblem};
use crate::model::{load_checkpoint, save_checkpoint, ModelDims, S2VTModel};
use crate::numerics::{Rng, Vector};
use crate::training::{train_with_log, OptimizerKind, TrainConfig};

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Failure of a command, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] S2vtError),
    /// A check or run that completed but did not succeed.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) if e.is_validation() => 2,
            _ => 1,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Sizes that are not fixed by the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelDims::default();
        ModelSection {
            embed_dim: d.embed_dim,
            hidden_dim: d.hidden_dim,
        }
    }
}

/// Everything a command may need, read from a TOML file and then
/// overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds both synthesis and training when set.
    pub seed: Option<u64>,
    pub min_count: usize,
    /// Keep every `frame_stride`-th frame.
    pub frame_stride: usize,
    pub features: Option<PathBuf>,
    pub features_b: Option<PathBuf>,
    pub captions: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub train_captions: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_b: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub synthetic: SyntheticConfig,
    pub meteor: MeteorParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            min_count: 1,
            frame_stride: 1,
            features: None,
            features_b: None,
            captions: None,
            references: None,
            train_captions: None,
            split: None,
            checkpoint: None,
            checkpoint_b: None,
            out: None,
            log: None,
            model: ModelSection::default(),
            train: TrainConfig::default(),
            decode: DecodeConfig::default(),
            synthetic: SyntheticConfig::default(),
            meteor: MeteorParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, S2vtError> {
        toml::from_str(text).map_err(|e| S2vtError::InvalidArgument(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_to_string(path)?;
        Ok(Self::from_toml(&text)?)
    }

    pub fn validate(&self) -> Result<(), S2vtError> {
        if self.min_count == 0 {
            return Err(S2vtError::InvalidArgument("min_count must be at least 1".into()));
        }
        if self.frame_stride == 0 {
            return Err(S2vtError::InvalidArgument("frame_stride must be at least 1".into()));
        }
        if self.model.embed_dim == 0 || self.model.hidden_dim == 0 {
            return Err(S2vtError::InvalidArgument("model dimensions must be positive".into()));
        }
        self.train.validate()?;
        self.decode.validate()?;
        self.synthetic.validate()?;
        self.meteor.validate()
    }

    fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.train.seed = s;
            self.synthetic.seed = s;
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "s2vt", version, about = "Video captioning with a stacked two-layer LSTM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an order-sensitive synthetic corpus.
    Synth(SynthArgs),
    /// Train a model on the train split and write a checkpoint.
    Train(TrainArgs),
    /// Greedy-decode captions for a feature file.
    Caption(CaptionArgs),
    /// Decode with two models whose word distributions are mixed.
    Fuse(FuseArgs),
    /// Score captions against references.
    Evaluate(EvaluateArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Corpus statistics.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path (a directory for `synth`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Emit JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub captions: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub frame_stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub event_types: Option<usize>,
    /// Inclusive range, e.g. `2 4`.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    pub events_per_video: Option<Vec<usize>>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    pub frames_per_event: Option<Vec<usize>>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub noise_std: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Start from this checkpoint instead of a fresh model.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Also append the per-epoch log to this file.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Dropout rate; the bare flag means 0.5.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.5")]
    pub dropout: Option<f64>,
    /// Gradient-norm clip; 0 disables clipping.
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Present frames in a random order during training.
    #[arg(long)]
    pub shuffle_frames: bool,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Only decode videos of this split (needs `--split`).
    #[arg(long)]
    pub subset: Option<Split>,
}

#[derive(Debug, Args)]
pub struct CaptionArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint_b: Option<PathBuf>,
    /// Features for the second model; defaults to `--features`.
    #[arg(long)]
    pub features_b: Option<PathBuf>,
    /// Weight of the first model's distribution.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Pick alpha on the validation split (needs `--captions` and `--split`).
    #[arg(long)]
    pub tune: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Hypothesis captions.
    #[arg(long)]
    pub captions: Option<PathBuf>,
    #[arg(long)]
    pub references: Option<PathBuf>,
    /// Training captions for the novelty histogram.
    #[arg(long)]
    pub train_captions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of consecutive seeds to check.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long)]
    pub frame_dim: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub target_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
}

/// Parses `args` (program name first), runs the command and maps the
/// outcome to an exit code, printing a one-line diagnostic on failure.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Caption(a) => cmd_caption(&a),
        Command::Fuse(a) => cmd_fuse(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Stats(a) => cmd_stats(&a),
    }
}

fn base_config(common: &CommonArgs) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_seed(common.seed);
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn apply_data(cfg: &mut RunConfig, data: &DataArgs) {
    override_path(&mut cfg.features, &data.features);
    override_path(&mut cfg.captions, &data.captions);
    override_path(&mut cfg.split, &data.split);
    if let Some(s) = data.frame_stride {
        cfg.frame_stride = s;
    }
}

fn override_path(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if let Some(p) = flag {
        *slot = Some(p.clone());
    }
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| S2vtError::InvalidArgument(format!("missing --{flag}")).into())
}

/// Fails early, naming the path, when an input file is absent.
fn require_file<'a>(path: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    let p = require(path, flag)?;
    if !p.is_file() {
        return Err(io::Error::new(io::ErrorKind::NotFound, format!("{}: no such file (--{flag})", p.display())).into());
    }
    Ok(p)
}

fn optional_file<'a>(path: &'a Option<PathBuf>, flag: &str) -> CliResult<Option<&'a Path>> {
    match path {
        Some(_) => require_file(path, flag).map(Some),
        None => Ok(None),
    }
}

fn read_to_string(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

/// Writes to `--out` when given, otherwise to stdout.
fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn stride_frames(frames: Vec<Vector>, stride: usize) -> CliResult<Vec<Vector>> {
    if stride == 1 {
        return Ok(frames);
    }
    Ok(subsample_frames(&frames, stride)?)
}

fn load_raw(cfg: &RunConfig) -> CliResult<RawCorpus> {
    let features = require_file(&cfg.features, "features")?;
    let captions = require_file(&cfg.captions, "captions")?;
    let split = optional_file(&cfg.split, "split")?;
    let mut raw = load_corpus(features, captions, split)?;
    if cfg.frame_stride > 1 {
        for s in raw.train.iter_mut().chain(&mut raw.val).chain(&mut raw.test) {
            s.frames = subsample_frames(&s.frames, cfg.frame_stride)?;
        }
    }
    Ok(raw)
}

/// Feature entries to decode, optionally restricted to one split.
fn decode_inputs(features: &Path, split: Option<&Path>, subset: Option<Split>, stride: usize) -> CliResult<Vec<FeatureEntry>> {
    let entries = read_features(features)?;
    let keep = match (subset, split) {
        (Some(want), Some(path)) => Some((want, read_splits(path)?)),
        (Some(_), None) => return Err(S2vtError::InvalidArgument("--subset needs --split".into()).into()),
        _ => None,
    };
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        if let Some((want, map)) = &keep {
            if map.get(&e.id) != Some(want) {
                continue;
            }
        }
        out.push(FeatureEntry {
            frames: stride_frames(e.frames, stride)?,
            id: e.id,
        });
    }
    Ok(out)
}

fn captions_text(rows: &[(String, String)]) -> String {
    let mut s = String::new();
    for (id, c) in rows {
        let _ = writeln!(s, "{id}\t{c}");
    }
    s
}

fn write_rows(out: Option<&Path>, rows: &[(String, String)]) -> CliResult<()> {
    match out {
        Some(p) => Ok(write_captions(p, rows)?),
        None => emit(None, &captions_text(rows)),
    }
}

fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let mut cfg = base_config(&a.common)?;
    let s = &mut cfg.synthetic;
    if let Some(n) = a.samples {
        s.n_samples = n;
    }
    if let Some(n) = a.event_types {
        s.n_event_types = n;
    }
    if let Some(r) = &a.events_per_video {
        s.events_per_video = (r[0], r[1]);
    }
    if let Some(r) = &a.frames_per_event {
        s.frames_per_event = (r[0], r[1]);
    }
    if let Some(f) = a.feature_dim {
        s.feature_dim = f;
    }
    if let Some(n) = a.noise_std {
        s.noise_std = n;
    }
    cfg.validate()?;
    let dir = require(&cfg.out, "out")?;

    let (corpus, manifest) = generate_synthetic(&cfg.synthetic)?;
    write_corpus(dir, &corpus)?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(dir.join("manifest.json"), &json)?;
    if a.common.json {
        emit(None, &json)
    } else {
        emit(
            None,
            &format!(
                "wrote {} samples ({} train, {} val, {} test) to {}\n",
                manifest.samples,
                manifest.train,
                manifest.val,
                manifest.test,
                dir.display()
            ),
        )
    }
}

fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let mut cfg = base_config(&a.common)?;
    apply_data(&mut cfg, &a.data);
    override_path(&mut cfg.checkpoint, &a.checkpoint);
    override_path(&mut cfg.log, &a.log);
    let t = &mut cfg.train;
    if let Some(name) = &a.optimizer {
        let kind = match name.as_str() {
            "sgd" => OptimizerKind::Sgd,
            "adam" => OptimizerKind::Adam,
            other => return Err(S2vtError::InvalidArgument(format!("unknown optimizer {other:?}")).into()),
        };
        if kind != t.optimizer && a.learning_rate.is_none() {
            t.learning_rate = kind.default_learning_rate();
        }
        t.optimizer = kind;
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.dropout {
        t.dropout = (v > 0.0).then_some(v);
    }
    if let Some(v) = a.clip_norm {
        t.clip_norm = (v != 0.0).then_some(v);
    }
    if a.shuffle_frames {
        t.shuffle_frames = true;
    }
    if let Some(v) = a.hidden_dim {
        cfg.model.hidden_dim = v;
    }
    if let Some(v) = a.embed_dim {
        cfg.model.embed_dim = v;
    }
    if let Some(v) = a.min_count {
        cfg.min_count = v;
    }
    cfg.validate()?;
    let out = require(&cfg.out, "out")?.to_path_buf();
    let init = optional_file(&cfg.checkpoint, "checkpoint")?;

    let raw = load_raw(&cfg)?;
    let (corpus, mut model): (Corpus, S2VTModel) = match init {
        Some(path) => {
            let model = load_checkpoint(path)?;
            (raw.into_corpus_with(model.vocab.clone())?, model)
        }
        None => {
            let corpus = raw.into_corpus(cfg.min_count)?;
            let frame_dim = corpus
                .train
                .first()
                .and_then(|s| s.frames.first())
                .map(Vec::len)
                .ok_or_else(|| S2vtError::InvalidArgument("no training samples".into()))?;
            let dims = ModelDims {
                frame_dim,
                embed_dim: cfg.model.embed_dim,
                hidden_dim: cfg.model.hidden_dim,
            };
            let mut rng = Rng::new(cfg.train.seed).fork();
            let model = S2VTModel::new(dims, corpus.vocab.clone(), &mut rng)?;
            (corpus, model)
        }
    };

    let mut log_file = match &cfg.log {
        Some(p) => Some(fs::File::create(p)?),
        None => None,
    };
    let mut log_err: Option<io::Error> = None;
    let mut stdout = io::stdout();
    train_with_log(&mut model, &corpus.train, &cfg.train, |stats| {
        let line = stats.log_line();
        let _ = writeln!(stdout, "{line}");
        if let Some(f) = log_file.as_mut() {
            if let Err(e) = writeln!(f, "{line}") {
                log_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    save_checkpoint(&model, &out)?;
    Ok(())
}

fn decode_limits(cfg: &mut RunConfig, d: &DecodeArgs) {
    if let Some(m) = d.max_len {
        cfg.decode.max_len = m;
    }
}

fn cmd_caption(a: &CaptionArgs) -> CliResult<()> {
    let mut cfg = base_config(&a.common)?;
    apply_data(&mut cfg, &a.data);
    override_path(&mut cfg.checkpoint, &a.checkpoint);
    decode_limits(&mut cfg, &a.decode);
    cfg.validate()?;
    let ckpt = require_file(&cfg.checkpoint, "checkpoint")?;
    let features = require_file(&cfg.features, "features")?;
    let split = optional_file(&cfg.split, "split")?;

    let model = load_checkpoint(ckpt)?;
    let inputs = decode_inputs(features, split, a.decode.subset, cfg.frame_stride)?;
    let mut rows = Vec::with_capacity(inputs.len());
    for e in inputs {
        let ids = greedy_decode(&model, &e.frames, &cfg.decode)?;
        rows.push((e.id, model.vocab.render(&ids)));
    }
    write_rows(cfg.out.as_deref(), &rows)
}

fn cmd_fuse(a: &FuseArgs) -> CliResult<()> {
    let mut cfg = base_config(&a.common)?;
    apply_data(&mut cfg, &a.data);
    override_path(&mut cfg.checkpoint, &a.checkpoint);
    override_path(&mut cfg.checkpoint_b, &a.checkpoint_b);
    override_path(&mut cfg.features_b, &a.features_b);
    decode_limits(&mut cfg, &a.decode);
    if let Some(alpha) = a.alpha {
        cfg.decode.alpha = alpha;
    }
    cfg.validate()?;
    let ckpt_a = require_file(&cfg.checkpoint, "checkpoint")?;
    let ckpt_b = require_file(&cfg.checkpoint_b, "checkpoint-b")?;
    let features_a = require_file(&cfg.features, "features")?;
    let features_b = match &cfg.features_b {
        Some(_) => require_file(&cfg.features_b, "features-b")?,
        None => features_a,
    };
    let split = optional_file(&cfg.split, "split")?;
    if a.tune {
        require_file(&cfg.captions, "captions")?;
        require(&cfg.split, "split")?;
    }

    let model_a = load_checkpoint(ckpt_a)?;
    let model_b = load_checkpoint(ckpt_b)?;
    if model_a.vocab != model_b.vocab {
        return Err(S2vtError::VocabularyMismatch("the two checkpoints have different vocabularies".into()).into());
    }
    let stride = cfg.frame_stride;
    let all_a = decode_inputs(features_a, None, None, stride)?;
    let all_b = decode_inputs(features_b, None, None, stride)?;
    let by_id_b: std::collections::HashMap<&str, &Vec<Vector>> =
        all_b.iter().map(|e| (e.id.as_str(), &e.frames)).collect();
    let frames_b = |id: &str| -> CliResult<Vec<Vector>> {
        by_id_b
            .get(id)
            .map(|f| (*f).clone())
            .ok_or_else(|| S2vtError::InvalidArgument(format!("no second-stream features for sample {id:?}")).into())
    };

    let mut decode = cfg.decode;
    if a.tune {
        let splits = read_splits(require(&cfg.split, "split")?)?;
        let mut refs: std::collections::BTreeMap<String, Vec<Vec<String>>> = Default::default();
        for (id, c) in read_captions(require(&cfg.captions, "captions")?)? {
            if splits.get(&id) == Some(&Split::Val) {
                refs.entry(id).or_default().push(tokenize(&c));
            }
        }
        let mut examples = Vec::new();
        for e in &all_a {
            if let Some(r) = refs.get(&e.id) {
                examples.push(FusionExample {
                    frames_a: e.frames.clone(),
                    frames_b: frames_b(&e.id)?,
                    references: r.clone(),
                });
            }
        }
        let (best, grid) = tune_alpha(&model_a, &model_b, &examples, &decode, &cfg.meteor)?;
        for (alpha, score) in grid {
            eprintln!("alpha {alpha:.1}\tmeteor {score:.6}");
        }
        decode.alpha = best;
    }

    let keep = match (a.decode.subset, split) {
        (Some(want), Some(path)) => Some((want, read_splits(path)?)),
        (Some(_), None) => return Err(S2vtError::InvalidArgument("--subset needs --split".into()).into()),
        _ => None,
    };
    let mut rows = Vec::new();
    for e in &all_a {
        if let Some((want, map)) = &keep {
            if map.get(&e.id) != Some(want) {
                continue;
            }
        }
        let ids = fused_decode(&model_a, &model_b, &e.frames, &frames_b(&e.id)?, &decode)?;
        rows.push((e.id.clone(), model_a.vocab.render(&ids)));
    }
    write_rows(cfg.out.as_deref(), &rows)
}

fn cmd_evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let mut cfg = base_config(&a.common)?;
    override_path(&mut cfg.captions, &a.captions);
    override_path(&mut cfg.references, &a.references);
    override_path(&mut cfg.train_captions, &a.train_captions);
    cfg.validate()?;
    let hyps = require_file(&cfg.captions, "captions")?;
    let refs = require_file(&cfg.references, "references")?;
    let train = optional_file(&cfg.train_captions, "train-captions")?;

    let hyps = read_captions(hyps)?;
    let refs = read_captions(refs)?;
    let train: Option<Vec<String>> = match train {
        Some(p) => Some(read_captions(p)?.into_iter().map(|(_, c)| c).collect()),
        None => None,
    };
    let report = evaluate(&hyps, &refs, train.as_deref(), &cfg.meteor)?;
    let text = if a.common.json {
        report.to_json() + "\n"
    } else {
        report.to_text()
    };
    emit(cfg.out.as_deref(), &text)
}

fn cmd_gradcheck(a: &GradcheckArgs) -> CliResult<()> {
    let cfg = base_config(&a.common)?;
    let mut p = CheckProblem::default();
    let set = |slot: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut p.dims.frame_dim, a.frame_dim);
    set(&mut p.dims.embed_dim, a.embed_dim);
    set(&mut p.dims.hidden_dim, a.hidden_dim);
    set(&mut p.vocab_size, a.vocab_size);
    set(&mut p.n_frames, a.frames);
    set(&mut p.target_len, a.target_len);
    p.dims.validate()?;
    if p.vocab_size <= 4 || p.n_frames == 0 || p.target_len == 0 || a.seeds == 0 {
        return Err(S2vtError::InvalidArgument(
            "gradcheck needs vocab_size > 4 and positive frames, target_len and seeds".into(),
        )
        .into());
    }
    let first = cfg.seed.unwrap_or(0);

    #[derive(Serialize)]
    struct Row {
        seed: u64,
        block: String,
        entries: usize,
        max_rel_error: f64,
        pass: bool,
    }
    let mut rows = Vec::new();
    for seed in first..first + a.seeds {
        for b in check_random(&p, seed)? {
            rows.push(Row {
                seed,
                pass: b.max_rel_error < GRADCHECK_TOLERANCE,
                block: b.name,
                entries: b.entries,
                max_rel_error: b.max_rel_error,
            });
        }
    }
    let text = if a.common.json {
        serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n"
    } else {
        let mut s = String::from("seed\tblock\tentries\tmax_rel_error\tstatus\n");
        for r in &rows {
            let status = if r.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{}\t{}\t{}\t{:.3e}\t{status}", r.seed, r.block, r.entries, r.max_rel_error);
        }
        s
    };
    emit(cfg.out.as_deref(), &text)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} parameter block checks exceeded {GRADCHECK_TOLERANCE:e}")));
    }
    Ok(())
}

fn stats_text(s: &CorpusStats) -> String {
    let mut out = format!(
        "sentences\t{}\ntokens\t{}\nvocab\t{}\nsamples\t{}\n",
        s.sentences, s.tokens, s.vocab, s.samples
    );
    if let Some(m) = s.mean_frames {
        let _ = writeln!(out, "mean_frames\t{m:.6}");
    }
    out
}

fn cmd_stats(a: &StatsArgs) -> CliResult<()> {
    let mut cfg = base_config(&a.common)?;
    apply_data(&mut cfg, &a.data);
    cfg.validate()?;
    let stats = if cfg.features.is_some() {
        corpus_stats(&load_raw(&cfg)?.into_corpus(cfg.min_count)?)?
    } else {
        let captions = read_captions(require_file(&cfg.captions, "captions")?)?;
        caption_stats(&captions)?
    };
    let text = if a.common.json {
        serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n"
    } else {
        stats_text(&stats)
    };
    emit(cfg.out.as_deref(), &text)
}
