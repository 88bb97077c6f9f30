//! The `sememe` command line.
//!
//! A run directory collects everything one training run produces:
//!
//! ```text
//! config.cfg          resolved configuration (tune-threshold rewrites `threshold`)
//! sememes.txt         inventory the checkpoint was trained against
//! encoder.ckpt.json   pre-trained encoder (pretrain)
//! pretrain.json       pre-training losses (pretrain)
//! model.ckpt.json     best-validation checkpoint (train)
//! manifest.json       per-epoch metrics, hashes of every input (train)
//! threshold.json      tuned threshold and its validation F1 (tune-threshold)
//! eval-<split>/       reports and plots (evaluate)
//! analysis-<split>/   breakdown tables and plots (analyze)
//! ablation.*          ablation matrix (ablate)
//! ```

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curation::{curate_corpus, CuratedImages, CurationConfig, Gamma, Provenance, CURATED_FILE, REPORT_FILE};
use crate::dataset::{
    generate_fixture, write_file, Corpus, DatasetSplit, EmbeddingStore, FixtureParams, SememeInventory, SplitName,
    SynsetRecord, WordSememeLexicon, CORPUS_FILE, EXTERNAL_FILE, IMAGES_FILE, LEXICON_FILE, SEMEMES_FILE, SPLIT_FILE,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    bar_chart_svg, breakdown_by_sememe_count, breakdown_by_sememe_frequency, evaluate, run_ablations, threshold_f1,
    tune_threshold, AblationVariant, EvalConfig, EvalReport, F1Mode,
};
use crate::model::{select_sememes, SememeModel};
use crate::training::{
    build_image_sets, pretrain_mcsp, run_training, score_synsets, train_spbs, EncoderCheckpoint, ImageSets,
    ImageVariant, TrainConfig,
};

pub const CONFIG_FILE: &str = "config.cfg";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MODEL_FILE: &str = "model.ckpt.json";
pub const ENCODER_FILE: &str = "encoder.ckpt.json";
pub const PRETRAIN_FILE: &str = "pretrain.json";
pub const THRESHOLD_FILE: &str = "threshold.json";

#[derive(Debug, Parser)]
#[command(name = "sememe", version, about = "Multilingual, multimodal sememe prediction")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus directory.
    Fixture(FixtureArgs),
    /// Filter outlier images and merge external ones.
    Curate(CurateArgs),
    /// Masked sememe pre-training of the text encoder.
    Pretrain(RunArgs),
    /// Supervised training; writes the best-validation checkpoint.
    Train(TrainArgs),
    /// Pick the decision threshold on the validation split.
    TuneThreshold(EvalArgs),
    /// Score a split and write reports and plots.
    Evaluate(EvalArgs),
    /// Predict sememe labels for synset records.
    Predict(PredictArgs),
    /// Train every variant of an ablation matrix.
    Ablate(AblateArgs),
    /// Breakdown tables and plots from an evaluation report.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Learning rates and batch size for the from-scratch tiny encoder.
    Desk,
    /// Defaults matching a pretrained encoder.
    Paper,
}

macro_rules! config_flags {
    (flags { $($bf:ident = $bk:literal),* $(,)? } values { $($vf:ident = $vk:literal),* $(,)? }) => {
        /// One flag per configuration key. Flags win over the config file.
        #[derive(Debug, Clone, Args)]
        pub struct ConfigFlags {
            /// Key = value configuration file.
            #[arg(long)]
            pub config: Option<PathBuf>,
            #[arg(long, value_enum, default_value = "desk")]
            pub preset: Preset,
            $(
                #[arg(long, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true", help = concat!("config key `", $bk, "`"))]
                pub $bf: Option<String>,
            )*
            $(
                #[arg(long, value_name = "VALUE", help = concat!("config key `", $vk, "`"))]
                pub $vf: Option<String>,
            )*
        }

        impl ConfigFlags {
            fn overrides(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $( if let Some(v) = &self.$bf { out.push(($bk, v.as_str())); } )*
                $( if let Some(v) = &self.$vf { out.push(($vk, v.as_str())); } )*
                out
            }
        }
    };
}

config_flags! {
    flags {
        freeze_encoder = "freeze_encoder",
        freeze_projection = "freeze_projection",
        freeze_classifier = "freeze_classifier",
        mcsp = "mcsp",
        mcsp_resample = "mcsp_resample",
        no_synonym = "no_synonym",
        no_gloss = "no_gloss",
        no_image = "no_image",
        null_image = "null_image",
    }
    values {
        seed = "seed",
        epochs = "epochs",
        batch_size = "batch_size",
        encoder_lr = "encoder_lr",
        classifier_lr = "classifier_lr",
        grad_clip = "grad_clip",
        mcsp_epochs = "mcsp_epochs",
        mask_rate = "mask_rate",
        image_variant = "image_variant",
        language_order = "language_order",
        threshold = "threshold",
        encoder_kind = "encoder_kind",
        hidden = "hidden",
        layers = "layers",
        heads = "heads",
        ffn = "ffn",
        max_len = "max_len",
        min_count = "min_count",
    }
}

impl ConfigFlags {
    /// Preset, then config file, then flags.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match self.preset {
            Preset::Desk => TrainConfig::desk(),
            Preset::Paper => TrainConfig::default(),
        };
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text)?;
        }
        for (k, v) in self.overrides() {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub synsets: Option<usize>,
    #[arg(long)]
    pub sememes: Option<usize>,
    /// Comma-separated language codes.
    #[arg(long, value_delimiter = ',')]
    pub languages: Option<Vec<String>>,
    #[arg(long)]
    pub images_per_synset: Option<usize>,
    #[arg(long)]
    pub outlier_fraction: Option<f64>,
    #[arg(long)]
    pub image_dim: Option<usize>,
    #[arg(long)]
    pub gloss_signal: Option<f64>,
    #[arg(long)]
    pub image_signal: Option<f64>,
    #[arg(long)]
    pub external_fraction: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CurationFlags {
    /// Expected outlier fraction.
    #[arg(long, default_value_t = 0.1)]
    pub nu: f64,
    /// Smallest image set that is filtered.
    #[arg(long, default_value_t = 5)]
    pub min_size: usize,
    /// `scale`, `feature-scale` or a positive number.
    #[arg(long, default_value = "scale")]
    pub gamma: String,
    /// Skip external augmentation.
    #[arg(long)]
    pub no_external: bool,
}

impl CurationFlags {
    fn resolve(&self) -> Result<CurationConfig> {
        let gamma = match self.gamma.as_str() {
            "scale" => Gamma::Scale,
            "feature-scale" => Gamma::FeatureScale,
            other => match other.parse::<f64>() {
                Ok(g) if g > 0.0 => Gamma::Fixed(g),
                _ => return Err(Error::Config(format!("invalid gamma {other:?}"))),
            },
        };
        let cfg = CurationConfig {
            nu: self.nu,
            gamma,
            min_size: self.min_size,
            external: !self.no_external,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CurateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub curation: CurationFlags,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub run: PathBuf,
    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub base: RunArgs,
    /// Pre-trained encoder; skips in-run pre-training.
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Curated image file from `curate`.
    #[arg(long)]
    pub curated: Option<PathBuf>,
    #[command(flatten)]
    pub curation: CurationFlags,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Corpus directory; defaults to the one recorded in the run manifest.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// Overrides the run's threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value = "instance")]
    pub f1_mode: String,
    /// Output directory; defaults to `<run>/eval-<split>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Synset records, one JSON object per line.
    #[arg(long)]
    pub synset_file: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Image embedding store for the records' image ids.
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub external: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AblationSet {
    Components,
    Images,
    Languages,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub base: RunArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "components")]
    pub set: Vec<AblationSet>,
    #[command(flatten)]
    pub curation: CurationFlags,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Report to analyze; defaults to `<run>/eval-<split>/report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Fixture(a) => fixture(&a),
        Command::Curate(a) => curate(&a),
        Command::Pretrain(a) => pretrain(&a),
        Command::Train(a) => train(&a),
        Command::TuneThreshold(a) => tune(&a),
        Command::Evaluate(a) => evaluate_run(&a),
        Command::Predict(a) => predict(&a),
        Command::Ablate(a) => ablate(&a),
        Command::Analyze(a) => analyze(&a),
    }
}

/// Stdout writes that tolerate a closed pipe.
macro_rules! say {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! echo {
    ($($t:tt)*) => {{
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

/// A corpus directory with its optional companions.
struct Inputs {
    dir: PathBuf,
    corpus: Corpus,
    lexicon: Option<WordSememeLexicon>,
    images: Option<EmbeddingStore>,
    external: Option<EmbeddingStore>,
}

impl Inputs {
    fn load(dir: &Path) -> Result<Self> {
        let corpus = Corpus::load(dir)?;
        let lexicon_path = dir.join(LEXICON_FILE);
        let lexicon = if lexicon_path.exists() {
            Some(WordSememeLexicon::load(&lexicon_path, &corpus.inventory)?)
        } else {
            None
        };
        let store = |name: &str| {
            let path = dir.join(name);
            path.exists().then(|| EmbeddingStore::load(&path)).transpose()
        };
        Ok(Inputs {
            dir: dir.to_path_buf(),
            images: store(IMAGES_FILE)?,
            external: store(EXTERNAL_FILE)?,
            lexicon,
            corpus,
        })
    }

    fn image_dim(&self) -> usize {
        self.images.as_ref().map_or(1, EmbeddingStore::dim)
    }

    /// Hashes of every input file, plus the corpus location.
    fn hashes(&self) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        out.insert("corpus_dir".into(), self.dir.display().to_string());
        for name in [CORPUS_FILE, SEMEMES_FILE, SPLIT_FILE, LEXICON_FILE] {
            let path = self.dir.join(name);
            if path.exists() {
                out.insert(name.into(), file_hash(&path)?);
            }
        }
        if let Some(s) = &self.images {
            out.insert(IMAGES_FILE.into(), s.content_hash());
        }
        if let Some(s) = &self.external {
            out.insert(EXTERNAL_FILE.into(), s.content_hash());
        }
        Ok(out)
    }

    fn image_sets(&self, cfg: &TrainConfig, curated: Option<&CuratedImages>, curation: &CurationConfig) -> Result<ImageSets> {
        let variant = cfg.effective_images();
        match (curated, &self.images) {
            (Some(c), Some(images)) if matches!(variant, ImageVariant::Filtered | ImageVariant::FilteredExternal) => {
                let mut sets = ImageSets::new();
                for s in &self.corpus.synsets {
                    let mut set = c.embedding_set(&s.id, images, self.external.as_ref());
                    if variant == ImageVariant::Filtered {
                        set.items.retain(|i| i.provenance == Provenance::Corpus);
                    }
                    if !set.is_empty() {
                        sets.insert(s.id.clone(), set);
                    }
                }
                Ok(sets)
            }
            _ => build_image_sets(&self.corpus, self.images.as_ref(), self.external.as_ref(), variant, curation),
        }
    }
}

fn fixture(a: &FixtureArgs) -> Result<()> {
    let mut p = FixtureParams::default();
    macro_rules! take {
        ($($f:ident),*) => { $( if let Some(v) = a.$f.clone() { p.$f = v; } )* };
    }
    take!(synsets, sememes, languages, images_per_synset, outlier_fraction, image_dim, gloss_signal, image_signal, external_fraction);
    let fx = generate_fixture(a.seed, &p)?;
    create_dir(&a.out)?;
    fx.save(&a.out)?;
    say!("wrote {} synsets, {} sememes, {} images ({} planted outliers) to {}",
        fx.corpus.len(),
        fx.corpus.inventory.len(),
        fx.images.len(),
        fx.manifest.outlier_count(),
        a.out.display()
    );
    Ok(())
}

fn curate(a: &CurateArgs) -> Result<()> {
    let cfg = a.curation.resolve()?;
    let inputs = Inputs::load(&a.corpus)?;
    let images = inputs
        .images
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{} has no {IMAGES_FILE}", a.corpus.display())))?;
    let curated = curate_corpus(&inputs.corpus, images, inputs.external.as_ref(), &cfg)?;
    create_dir(&a.out)?;
    curated.save(&a.out)?;
    say!("curated {} synsets: removed {}, added {} ({}, {})",
        curated.records.len(),
        curated.total_removed(),
        curated.total_added(),
        a.out.join(CURATED_FILE).display(),
        a.out.join(REPORT_FILE).display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PretrainRecord {
    config_hash: String,
    seed: u64,
    epoch_losses: Vec<f64>,
    masked_instances: usize,
    inputs: BTreeMap<String, String>,
}

fn start_run(run: &Path, cfg: &TrainConfig, inventory: &SememeInventory) -> Result<()> {
    create_dir(run)?;
    write_file(&run.join(CONFIG_FILE), cfg.to_text().as_bytes())?;
    let mut labels = String::new();
    for s in inventory.sememes() {
        labels.push_str(&s.label);
        labels.push('\n');
    }
    write_file(&run.join(SEMEMES_FILE), labels.as_bytes())
}

fn pretrain(a: &RunArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let inputs = Inputs::load(&a.corpus)?;
    let lexicon = inputs
        .lexicon
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{} has no {LEXICON_FILE}", a.corpus.display())))?;
    start_run(&a.run, &cfg, &inputs.corpus.inventory)?;
    let out = pretrain_mcsp(&inputs.corpus, lexicon, &cfg)?;
    out.checkpoint.save(&a.run.join(ENCODER_FILE))?;
    let record = PretrainRecord {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        epoch_losses: out.epoch_losses.clone(),
        masked_instances: out.masked_instances,
        inputs: inputs.hashes()?,
    };
    write_file(&a.run.join(PRETRAIN_FILE), to_json(&record).as_bytes())?;
    say!("pre-trained on {} masked instances; final loss {:.4}",
        out.masked_instances,
        out.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let cfg = a.base.config.resolve()?;
    let curation = a.curation.resolve()?;
    let inputs = Inputs::load(&a.base.corpus)?;
    let curated = a.curated.as_deref().map(CuratedImages::load).transpose()?;
    let images = inputs.image_sets(&cfg, curated.as_ref(), &curation)?;
    let store_hash = inputs.images.as_ref().map(EmbeddingStore::content_hash);
    start_run(&a.base.run, &cfg, &inputs.corpus.inventory)?;

    let mut hashes = inputs.hashes()?;
    let mut out = match &a.encoder {
        Some(path) => {
            hashes.insert("encoder".into(), file_hash(path)?);
            let ckpt = EncoderCheckpoint::load(path)?;
            train_spbs(&inputs.corpus, Some(&ckpt), &images, inputs.image_dim(), &cfg)?
        }
        None => run_training(&inputs.corpus, inputs.lexicon.as_ref(), &images, inputs.image_dim(), &cfg)?,
    };
    if let Some(path) = &a.curated {
        hashes.insert("curated".into(), file_hash(path)?);
        hashes.insert("curated_path".into(), path.display().to_string());
    }
    if store_hash != inputs.images.as_ref().map(EmbeddingStore::content_hash) {
        return Err(Error::Contract("image embedding store changed during training".into()));
    }
    out.manifest.inputs = hashes;
    out.manifest.checkpoint = Some(MODEL_FILE.into());
    out.model.save(&a.base.run.join(MODEL_FILE), &inputs.corpus.inventory)?;
    out.manifest.save(&a.base.run.join(MANIFEST_FILE))?;
    let fmt = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{x:.4}"));
    say!("best epoch {} valid MAP {} test MAP {} ({})",
        out.manifest.best_epoch,
        fmt(out.manifest.best_valid_map),
        fmt(out.manifest.test_map),
        a.base.run.display()
    );
    Ok(())
}

/// A trained run loaded back from its directory.
struct LoadedRun {
    cfg: TrainConfig,
    inputs: Inputs,
    model: SememeModel,
    images: ImageSets,
}

fn load_run(run: &Path, corpus: Option<&Path>) -> Result<LoadedRun> {
    let cfg = TrainConfig::load(&run.join(CONFIG_FILE))?;
    let manifest = crate::training::RunManifest::load(&run.join(MANIFEST_FILE))?;
    let corpus_dir = match corpus {
        Some(c) => c.to_path_buf(),
        None => PathBuf::from(
            manifest
                .inputs
                .get("corpus_dir")
                .ok_or_else(|| Error::Config("run manifest records no corpus; pass --corpus".into()))?,
        ),
    };
    let inputs = Inputs::load(&corpus_dir)?;
    let curated = manifest
        .inputs
        .get("curated_path")
        .map(|p| CuratedImages::load(Path::new(p)))
        .transpose()?;
    let images = inputs.image_sets(&cfg, curated.as_ref(), &CurationConfig::default())?;
    let model = SememeModel::load(&run.join(MODEL_FILE), &inputs.corpus.inventory)?;
    Ok(LoadedRun {
        cfg,
        inputs,
        model,
        images,
    })
}

fn scored_split(r: &LoadedRun, split: SplitName) -> Result<Vec<crate::evaluation::ScoredSynset>> {
    let synsets = r.inputs.corpus.split_synsets(split);
    if synsets.is_empty() {
        return Err(Error::Config(format!("the {split:?} split is empty")));
    }
    score_synsets(&r.model, &synsets, &r.images, &r.cfg)
}

#[derive(Debug, Serialize, Deserialize)]
struct ThresholdRecord {
    threshold: f64,
    valid_f1: f64,
    f1_mode: F1Mode,
}

fn tune(a: &EvalArgs) -> Result<()> {
    let split: SplitName = a.split.as_deref().unwrap_or("valid").parse()?;
    let mode: F1Mode = a.f1_mode.parse()?;
    let r = load_run(&a.run, a.corpus.as_deref())?;
    let scored = scored_split(&r, split)?;
    let grid = EvalConfig::default().grid;
    let delta = tune_threshold(&scored, &grid, mode)?;
    let record = ThresholdRecord {
        threshold: delta,
        valid_f1: threshold_f1(&scored, delta, mode),
        f1_mode: mode,
    };
    let mut cfg = r.cfg;
    cfg.threshold = delta;
    write_file(&a.run.join(CONFIG_FILE), cfg.to_text().as_bytes())?;
    write_file(&a.run.join(THRESHOLD_FILE), to_json(&record).as_bytes())?;
    say!("threshold {delta:.2} (F1 {:.4} on {split:?})", record.valid_f1);
    Ok(())
}

fn evaluate_run(a: &EvalArgs) -> Result<()> {
    let split_name = a.split.as_deref().unwrap_or("test");
    let split: SplitName = split_name.parse()?;
    let r = load_run(&a.run, a.corpus.as_deref())?;
    let cfg = EvalConfig {
        threshold: a.threshold.unwrap_or(r.cfg.threshold),
        f1_mode: a.f1_mode.parse()?,
        ..Default::default()
    };
    let scored = scored_split(&r, split)?;
    let report = evaluate(&scored, &r.inputs.corpus.inventory, &cfg)?;
    let out = a.out.clone().unwrap_or_else(|| a.run.join(format!("eval-{split_name}")));
    report.write_all(&out, &r.inputs.corpus.inventory, &cfg)?;
    echo!("{}", report.summary_tsv());
    Ok(())
}

#[derive(Debug, Serialize)]
struct PredictionLine<'a> {
    id: &'a str,
    sememes: Vec<String>,
    scores: Vec<f64>,
}

fn predict(a: &PredictArgs) -> Result<()> {
    let cfg = TrainConfig::load(&a.run.join(CONFIG_FILE))?;
    let labels = read(&a.run.join(SEMEMES_FILE))?;
    let inventory = SememeInventory::new(labels.lines().map(str::trim).filter(|l| !l.is_empty()))?;
    let model = SememeModel::load(&a.run.join(MODEL_FILE), &inventory)?;
    let threshold = a.threshold.unwrap_or(cfg.threshold);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold must lie in (0, 1), got {threshold}")));
    }

    let file = a.synset_file.display().to_string();
    let mut synsets = Vec::new();
    for (n, line) in read(&a.synset_file)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        synsets.push(SynsetRecord::parse(line, &file, n + 1)?.into_synset(&inventory, &file, n + 1)?);
    }
    let split = DatasetSplit {
        train: synsets.iter().map(|s| s.id.clone()).collect(),
        ..Default::default()
    };
    let corpus = Corpus::new(synsets, inventory, split)?;
    let images = a.images.as_deref().map(EmbeddingStore::load).transpose()?;
    let external = a.external.as_deref().map(EmbeddingStore::load).transpose()?;
    let sets = build_image_sets(&corpus, images.as_ref(), external.as_ref(), cfg.effective_images(), &CurationConfig::default())?;
    let all: Vec<_> = corpus.synsets.iter().collect();
    let scored = score_synsets(&model, &all, &sets, &cfg)?;

    let mut out = String::new();
    for s in &scored {
        let line = PredictionLine {
            id: &s.id,
            sememes: corpus.inventory.labels_of(&select_sememes(&s.scores, threshold)),
            scores: s.scores.0.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("serializable"));
        out.push('\n');
    }
    match &a.out {
        Some(path) => write_file(path, out.as_bytes()),
        None => std::io::stdout()
            .write_all(out.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let cfg = a.base.config.resolve()?;
    let curation = a.curation.resolve()?;
    let inputs = Inputs::load(&a.base.corpus)?;
    let mut variants = Vec::new();
    let mut push = |v: Vec<AblationVariant>| {
        for x in v {
            if !variants.contains(&x) {
                variants.push(x);
            }
        }
    };
    for set in &a.set {
        match set {
            AblationSet::Components => push(AblationVariant::components()),
            AblationSet::Images => push(AblationVariant::image_sets()),
            AblationSet::Languages => push(AblationVariant::language_combinations(&cfg.language_order)),
            AblationSet::All => {
                push(AblationVariant::components());
                push(AblationVariant::image_sets());
                push(AblationVariant::language_combinations(&cfg.language_order));
            }
        }
    }
    start_run(&a.base.run, &cfg, &inputs.corpus.inventory)?;
    let report = run_ablations(
        &cfg,
        &inputs.corpus,
        inputs.lexicon.as_ref(),
        inputs.images.as_ref(),
        inputs.external.as_ref(),
        &curation,
        &variants,
    )?;
    write_file(&a.base.run.join("ablation.tsv"), report.to_tsv().as_bytes())?;
    write_file(&a.base.run.join("ablation.json"), to_json(&report).as_bytes())?;
    let names: Vec<&str> = report.rows.iter().map(|r| r.variant.as_str()).collect();
    let test: Vec<f64> = report.rows.iter().map(|r| r.test_map.unwrap_or(0.0)).collect();
    let valid: Vec<f64> = report.rows.iter().map(|r| r.valid_map.unwrap_or(0.0)).collect();
    let svg = bar_chart_svg("Ablations", &names, &[("valid MAP", &valid), ("test MAP", &test)]);
    write_file(&a.base.run.join("ablation.svg"), svg.as_bytes())?;
    echo!("{}", report.to_tsv());
    Ok(())
}

fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let path = a
        .report
        .clone()
        .unwrap_or_else(|| a.run.join(format!("eval-{}", a.split)).join("report.json"));
    let text = read(&path)?;
    let report: EvalReport =
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.line(), "report", e))?;
    let cfg = EvalConfig::default();
    let out = a.out.clone().unwrap_or_else(|| a.run.join(format!("analysis-{}", a.split)));
    create_dir(&out)?;

    let count = breakdown_by_sememe_count(&report, &cfg.count_bins);
    let freq = breakdown_by_sememe_frequency(&report, &cfg.frequency_bins);
    for (name, table) in [("by_count", &count), ("by_frequency", &freq)] {
        write_file(&out.join(format!("{name}.tsv")), table.to_tsv().as_bytes())?;
        write_file(&out.join(format!("{name}.svg")), table.to_svg().as_bytes())?;
    }

    let total = report.records.len().max(1) as f64;
    let mut errors = String::from("category\tcount\tfraction\n");
    let mut names = Vec::new();
    let mut fractions = Vec::new();
    for (cat, n) in &report.errors {
        let name = format!("{cat:?}").to_lowercase();
        let _ = writeln!(errors, "{name}\t{n}\t{:.4}", *n as f64 / total);
        fractions.push(*n as f64 / total);
        names.push(name);
    }
    let labels: Vec<&str> = names.iter().map(String::as_str).collect();
    write_file(&out.join("errors.tsv"), errors.as_bytes())?;
    write_file(
        &out.join("errors.svg"),
        bar_chart_svg("Error categories", &labels, &[("fraction", &fractions)]).as_bytes(),
    )?;
    echo!("{}\n{}\n{}", count.to_tsv(), freq.to_tsv(), errors);
    Ok(())
}
