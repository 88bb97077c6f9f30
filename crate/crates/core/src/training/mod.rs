//! Masked-sememe pre-training followed by supervised sememe prediction.

mod config;
mod optim;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, ParamGroup, ParamStore};
use crate::curation::{filter_outliers, merge_external_images, CurationConfig, ImageEmbeddingSet};
use crate::dataset::{write_file, Corpus, EmbeddingStore, SplitName, Synset, WordSememeLexicon};
use crate::encoders::{embed_images, EncoderConfig, TextEncoder, Vocabulary};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalConfig, ScoredSynset};
use crate::model::{image_matrix, multi_hot, Example, MaskedExample, ModelConfig, SememeModel};
use crate::sequencing::{apply_mcsp_mask, build_multilingual_sequence, MultilingualSequence, SegmentOptions, LANG_SEP};
pub use config::{ImageVariant, TrainConfig, LEARNING_RATE_GRID_CLASSIFIER, LEARNING_RATE_GRID_ENCODER};
pub use optim::Adam;

/// Image sets keyed by synset id; synsets without an entry have no images.
pub type ImageSets = BTreeMap<String, ImageEmbeddingSet>;

fn mix(a: u64, b: u64, c: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ c.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Resolves the image sets for `variant`, curating on the fly where needed.
pub fn build_image_sets(
    corpus: &Corpus,
    images: Option<&EmbeddingStore>,
    external: Option<&EmbeddingStore>,
    variant: ImageVariant,
    curation: &CurationConfig,
) -> Result<ImageSets> {
    let Some(images) = images else {
        if variant != ImageVariant::None {
            log::warn!("no image store supplied; training without images");
        }
        return Ok(ImageSets::new());
    };
    if variant == ImageVariant::None {
        return Ok(ImageSets::new());
    }
    let sets: Vec<(String, ImageEmbeddingSet)> = corpus
        .synsets
        .par_iter()
        .map(|s| {
            let raw = embed_images(&s.id, &s.images, images, false)?;
            let set = match variant {
                ImageVariant::None | ImageVariant::All => raw,
                ImageVariant::Filtered => filter_outliers(&raw, curation)?,
                ImageVariant::FilteredExternal => {
                    let filtered = filter_outliers(&raw, curation)?;
                    match external {
                        Some(ext) => merge_external_images(&filtered, s, ext),
                        None => filtered,
                    }
                }
            };
            Ok((s.id.clone(), set))
        })
        .collect::<Result<_>>()?;
    Ok(sets.into_iter().filter(|(_, s)| !s.is_empty()).collect())
}

fn sequence_for(synset: &Synset, order: &[String], opts: SegmentOptions) -> Result<MultilingualSequence> {
    match build_multilingual_sequence(synset, order, opts) {
        Err(Error::EmptySequence(_)) => Ok(MultilingualSequence {
            text: format!("{LANG_SEP} {LANG_SEP}"),
            spans: Vec::new(),
        }),
        other => other,
    }
}

/// Word vocabulary over the training split's full (unablated) sequences.
pub fn build_vocabulary(corpus: &Corpus, order: &[String], min_count: usize) -> Result<Vocabulary> {
    let texts: Vec<String> = corpus
        .split_synsets(SplitName::Train)
        .iter()
        .map(|s| sequence_for(s, order, SegmentOptions::default()).map(|q| q.text))
        .collect::<Result<_>>()?;
    Ok(Vocabulary::build(texts.iter().map(String::as_str), min_count))
}

pub fn prepare_examples(model: &SememeModel, synsets: &[&Synset], images: &ImageSets, cfg: &TrainConfig) -> Result<Vec<Example>> {
    let opts = cfg.segment_options();
    let n = model.config.num_sememes;
    synsets
        .par_iter()
        .map(|s| {
            let seq = sequence_for(s, &cfg.language_order, opts)?;
            let set = if model.config.use_images { images.get(&s.id) } else { None };
            Ok(Example {
                input: model.encoder.prepare(&seq),
                images: image_matrix(set, model.config.image_dim),
                target: multi_hot(&[&s.gold_sememes], n),
            })
        })
        .collect()
}

pub fn score_examples(model: &SememeModel, synsets: &[&Synset], examples: &[Example]) -> Vec<ScoredSynset> {
    synsets
        .par_iter()
        .zip(examples)
        .map(|(s, ex)| ScoredSynset {
            id: s.id.clone(),
            pos: s.pos,
            gold: s.gold_sememes.clone(),
            scores: model.predict_input(&ex.input, &ex.images).scores,
        })
        .collect()
}

pub fn score_synsets(model: &SememeModel, synsets: &[&Synset], images: &ImageSets, cfg: &TrainConfig) -> Result<Vec<ScoredSynset>> {
    let examples = prepare_examples(model, synsets, images, cfg)?;
    Ok(score_examples(model, synsets, &examples))
}

/// Encoder weights and vocabulary produced by pre-training.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderCheckpoint {
    pub config: EncoderConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    pub inventory_fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct EncoderFile {
    format: String,
    version: u32,
    config: EncoderConfig,
    vocab: Vocabulary,
    inventory_fingerprint: String,
    params: serde_json::Value,
}

const ENCODER_FORMAT: &str = "sememe-predict-encoder";

impl EncoderCheckpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&EncoderFile {
            format: ENCODER_FORMAT.into(),
            version: 1,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            inventory_fingerprint: self.inventory_fingerprint.clone(),
            params: self.params.to_json(),
        })
        .expect("encoder checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: EncoderFile =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("unreadable encoder checkpoint: {e}")))?;
        if f.format != ENCODER_FORMAT || f.version != 1 {
            return Err(Error::Checkpoint(format!("unsupported encoder checkpoint {} v{}", f.format, f.version)));
        }
        let mut vocab = f.vocab;
        vocab.reindex();
        Ok(EncoderCheckpoint {
            config: f.config,
            vocab,
            params: ParamStore::from_json(f.params)?,
            inventory_fingerprint: f.inventory_fingerprint,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub checkpoint: EncoderCheckpoint,
    pub epoch_losses: Vec<f64>,
    pub masked_instances: usize,
}

fn learning_rates(cfg: &TrainConfig, group: ParamGroup) -> Option<f64> {
    match group {
        ParamGroup::Encoder => (!cfg.freeze_encoder).then_some(cfg.encoder_lr),
        ParamGroup::Projection => (!cfg.freeze_projection).then_some(cfg.classifier_lr),
        ParamGroup::Classifier => (!cfg.freeze_classifier).then_some(cfg.classifier_lr),
        ParamGroup::McspHead => Some(cfg.classifier_lr),
    }
}

/// Batches of similar token length, in a seeded random order.
fn length_batches(lengths: &[usize], batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut keyed: Vec<(usize, u64, usize)> = lengths.iter().enumerate().map(|(i, &l)| (l, rng.random(), i)).collect();
    keyed.sort_unstable();
    let mut batches: Vec<Vec<usize>> = keyed.chunks(batch_size).map(|c| c.iter().map(|k| k.2).collect()).collect();
    batches.shuffle(rng);
    batches
}

/// Mean loss over `batch`, after one optimizer update on its summed gradients.
fn train_batch<T: Sync>(
    model: &mut SememeModel,
    adam: &mut Adam,
    cfg: &TrainConfig,
    items: &[T],
    batch: &[usize],
    step: impl Fn(&SememeModel, &T) -> Result<(f64, Gradients)> + Sync,
) -> Result<f64> {
    let results: Vec<(f64, Gradients)> = {
        let m = &*model;
        batch.par_iter().map(|&i| step(m, &items[i])).collect::<Result<_>>()?
    };
    let mut grads = Gradients::zeros_like(&model.params);
    let mut loss = 0.0;
    for (l, g) in &results {
        loss += l;
        grads.merge(g);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    if cfg.grad_clip > 0.0 {
        let norm = grads.global_norm();
        if norm > cfg.grad_clip {
            grads.scale(cfg.grad_clip / norm);
        }
    }
    adam.step(&mut model.params, &grads, |g| learning_rates(cfg, g));
    Ok(loss / n)
}

fn masked_examples(
    model: &SememeModel,
    seqs: &[MultilingualSequence],
    lexicon: &WordSememeLexicon,
    cfg: &TrainConfig,
    round: u64,
) -> Result<Vec<MaskedExample>> {
    let n = model.config.num_sememes;
    let out: Vec<Option<MaskedExample>> = seqs
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            let masked = apply_mcsp_mask(seq, lexicon, cfg.mask_rate, mix(cfg.seed, round, i as u64))?;
            let input = model.encoder.prepare(&masked);
            let (positions, targets): (Vec<usize>, Vec<_>) = masked
                .targets
                .iter()
                .filter_map(|t| input.position_of(t.offset).map(|p| (p, &t.sememes)))
                .unzip();
            Ok((!positions.is_empty()).then(|| MaskedExample {
                input,
                targets: multi_hot(&targets, n),
                positions,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(out.into_iter().flatten().collect())
}

/// Pre-trains the encoder with a throwaway head on masked gloss words of
/// the training split.
pub fn pretrain_mcsp(corpus: &Corpus, lexicon: &WordSememeLexicon, cfg: &TrainConfig) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if lexicon.is_empty() {
        return Err(Error::Config("pre-training needs a nonempty word-sememe lexicon".into()));
    }
    let vocab = build_vocabulary(corpus, &cfg.language_order, cfg.encoder.min_count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x4D43_5350, 0));
    let mc = ModelConfig {
        encoder: cfg.encoder.clone(),
        image_dim: 1,
        num_sememes: corpus.inventory.len(),
        use_images: false,
        null_image: false,
    };
    let mut model = SememeModel::new(mc, vocab, &mut rng)?;
    model.attach_mcsp_head(&mut rng);
    let train = corpus.split_synsets(SplitName::Train);
    let seqs: Vec<MultilingualSequence> = train
        .iter()
        .map(|s| sequence_for(s, &cfg.language_order, cfg.segment_options()))
        .collect::<Result<_>>()?;

    let mut examples = masked_examples(&model, &seqs, lexicon, cfg, 0)?;
    if examples.is_empty() {
        return Err(Error::Config(
            "no maskable instances: no English or Chinese gloss word of the training split is in the lexicon".into(),
        ));
    }
    let masked_instances = examples.len();
    let mut adam = Adam::default();
    let mut epoch_losses = Vec::with_capacity(cfg.mcsp_epochs);
    for epoch in 0..cfg.mcsp_epochs {
        if cfg.mcsp_resample && epoch > 0 {
            examples = masked_examples(&model, &seqs, lexicon, cfg, epoch as u64)?;
        }
        let lengths: Vec<usize> = examples.iter().map(|e| e.input.token_ids.len()).collect();
        let mut order_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x5052_4554, epoch as u64));
        let batches = length_batches(&lengths, cfg.batch_size, &mut order_rng);
        let mut total = 0.0;
        for batch in &batches {
            total += batch.len() as f64
                * train_batch(&mut model, &mut adam, cfg, &examples, batch, |m, ex| m.mcsp_step(ex))?;
        }
        let mean = total / examples.len() as f64;
        log::info!("pre-training epoch {}: loss {mean:.5}", epoch + 1);
        epoch_losses.push(mean);
    }
    model.discard_mcsp_head();
    Ok(PretrainOutcome {
        checkpoint: EncoderCheckpoint {
            config: cfg.encoder.clone(),
            vocab: model.vocabulary().clone(),
            params: model.params.subset(ParamGroup::Encoder),
            inventory_fingerprint: corpus.inventory.fingerprint(),
        },
        epoch_losses,
        masked_instances,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_map: Option<f64>,
    pub valid_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: String,
    pub config_hash: String,
    pub seed: u64,
    pub pretrain_losses: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_map: Option<f64>,
    pub test_map: Option<f64>,
    pub test_f1: Option<f64>,
    pub checkpoint: Option<String>,
    pub inputs: BTreeMap<String, String>,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), 1, "manifest", e))
    }

    pub fn valid_maps(&self) -> Vec<f64> {
        self.epochs.iter().filter_map(|e| e.valid_map).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SememeModel,
    pub manifest: RunManifest,
}

fn split_map(model: &SememeModel, corpus: &Corpus, synsets: &[&Synset], examples: &[Example], threshold: f64) -> Result<Option<(f64, f64)>> {
    if synsets.is_empty() {
        return Ok(None);
    }
    let scored = score_examples(model, synsets, examples);
    let cfg = EvalConfig {
        threshold,
        ..Default::default()
    };
    let r = evaluate(&scored, &corpus.inventory, &cfg)?;
    Ok((r.overall.count > 0).then_some((r.overall.map, r.overall.f1)))
}

/// Supervised training; keeps the parameters of the best validation epoch.
pub fn train_spbs(
    corpus: &Corpus,
    encoder: Option<&EncoderCheckpoint>,
    images: &ImageSets,
    image_dim: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let use_images = cfg.effective_images() != ImageVariant::None;
    let vocab = match encoder {
        Some(ckpt) => {
            if ckpt.inventory_fingerprint != corpus.inventory.fingerprint() {
                return Err(Error::Checkpoint(
                    "encoder checkpoint was pre-trained against a different sememe inventory".into(),
                ));
            }
            if ckpt.config != cfg.encoder {
                return Err(Error::Checkpoint("encoder checkpoint has a different encoder configuration".into()));
            }
            ckpt.vocab.clone()
        }
        None => build_vocabulary(corpus, &cfg.language_order, cfg.encoder.min_count)?,
    };
    let mc = ModelConfig {
        encoder: cfg.encoder.clone(),
        image_dim: if use_images { image_dim } else { image_dim.max(1) },
        num_sememes: corpus.inventory.len(),
        use_images,
        null_image: cfg.null_image,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = SememeModel::new(mc, vocab, &mut rng)?;
    if let Some(ckpt) = encoder {
        model.load_encoder_from(&ckpt.params)?;
    }

    let train = corpus.split_synsets(SplitName::Train);
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let valid = corpus.split_synsets(SplitName::Valid);
    let train_ex = prepare_examples(&model, &train, images, cfg)?;
    let valid_ex = prepare_examples(&model, &valid, images, cfg)?;
    let lengths: Vec<usize> = train_ex.iter().map(|e| e.input.token_ids.len()).collect();

    let mut adam = Adam::default();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for epoch in 1..=cfg.epochs {
        let mut order_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x5350_4253, epoch as u64));
        let mut total = 0.0;
        for batch in length_batches(&lengths, cfg.batch_size, &mut order_rng) {
            total += batch.len() as f64
                * train_batch(&mut model, &mut adam, cfg, &train_ex, &batch, |m, ex| Ok(m.spbs_step(ex)))?;
        }
        let train_loss = total / train_ex.len() as f64;
        let valid_metrics = split_map(&model, corpus, &valid, &valid_ex, cfg.threshold)?;
        log::info!(
            "epoch {epoch}: loss {train_loss:.5}, valid MAP {}",
            valid_metrics.map_or("n/a".into(), |m| format!("{:.4}", m.0))
        );
        let score = valid_metrics.map_or(f64::NEG_INFINITY, |m| m.0);
        if best.as_ref().is_none_or(|b| score > b.0 || valid_metrics.is_none()) {
            best = Some((score, epoch, model.params.clone()));
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            valid_map: valid_metrics.map(|m| m.0),
            valid_f1: valid_metrics.map(|m| m.1),
        });
    }
    let (best_score, best_epoch, params) = best.expect("at least one epoch");
    model.params = params;

    let test = corpus.split_synsets(SplitName::Test);
    let test_ex = prepare_examples(&model, &test, images, cfg)?;
    let test_metrics = split_map(&model, corpus, &test, &test_ex, cfg.threshold)?;
    let manifest = RunManifest {
        config: cfg.to_text(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        pretrain_losses: Vec::new(),
        epochs,
        best_epoch,
        best_valid_map: best_score.is_finite().then_some(best_score),
        test_map: test_metrics.map(|m| m.0),
        test_f1: test_metrics.map(|m| m.1),
        checkpoint: None,
        inputs: BTreeMap::new(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome { model, manifest })
}

/// Optional pre-training (unless `mcsp` is off or glosses are ablated), then
/// supervised training.
pub fn run_training(
    corpus: &Corpus,
    lexicon: Option<&WordSememeLexicon>,
    images: &ImageSets,
    image_dim: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let started = Instant::now();
    let pre = if cfg.mcsp && cfg.no_gloss {
        log::warn!("pre-training masks gloss words; skipped because glosses are ablated");
        None
    } else if cfg.mcsp {
        let lexicon = lexicon.ok_or_else(|| Error::Config("pre-training is on but no lexicon was supplied".into()))?;
        Some(pretrain_mcsp(corpus, lexicon, cfg)?)
    } else {
        None
    };
    let mut out = train_spbs(corpus, pre.as_ref().map(|p| &p.checkpoint), images, image_dim, cfg)?;
    if let Some(p) = pre {
        out.manifest.pretrain_losses = p.epoch_losses;
    }
    out.manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_fixture, FixtureParams};

    fn small_fixture() -> crate::dataset::Fixture {
        let p = FixtureParams {
            synsets: 60,
            sememes: 6,
            images_per_synset: 4,
            image_dim: 6,
            ..Default::default()
        };
        generate_fixture(2, &p).unwrap()
    }

    fn fast() -> TrainConfig {
        let mut cfg = TrainConfig::desk();
        cfg.epochs = 2;
        cfg.mcsp_epochs = 2;
        cfg.encoder = EncoderConfig {
            hidden: 8,
            layers: 1,
            heads: 2,
            ffn: 16,
            max_len: 64,
            ..Default::default()
        };
        cfg
    }

    #[test]
    fn batches_cover_every_index_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lengths = [5, 3, 9, 3, 7, 1, 2];
        let mut all: Vec<usize> = length_batches(&lengths, 3, &mut rng).concat();
        all.sort();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn frozen_groups_are_bit_identical() {
        let f = small_fixture();
        let mut cfg = fast();
        cfg.mcsp = false;
        cfg.freeze_encoder = true;
        cfg.epochs = 1;
        let sets = build_image_sets(&f.corpus, Some(&f.images), None, ImageVariant::All, &CurationConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let vocab = build_vocabulary(&f.corpus, &cfg.language_order, 1).unwrap();
        let mc = ModelConfig {
            encoder: cfg.encoder.clone(),
            image_dim: 6,
            num_sememes: 6,
            use_images: true,
            null_image: false,
        };
        let fresh = SememeModel::new(mc, vocab, &mut rng).unwrap();
        let out = train_spbs(&f.corpus, None, &sets, 6, &cfg).unwrap();
        let before = fresh.params.subset(ParamGroup::Encoder);
        let after = out.model.params.subset(ParamGroup::Encoder);
        for ((_, a), (_, b)) in before.iter().zip(after.iter()) {
            assert!(a.value.iter().zip(b.value.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_ne!(fresh.params.subset(ParamGroup::Classifier), out.model.params.subset(ParamGroup::Classifier));
    }

    #[test]
    fn zero_mask_rate_is_a_config_error() {
        let f = small_fixture();
        let mut cfg = fast();
        cfg.mask_rate = 0.0;
        assert!(matches!(pretrain_mcsp(&f.corpus, &f.lexicon, &cfg), Err(Error::Config(_))));
        let empty = WordSememeLexicon::new();
        assert!(matches!(pretrain_mcsp(&f.corpus, &empty, &fast()), Err(Error::Config(_))));
    }

    #[test]
    fn pretrained_encoder_carries_over() {
        let f = small_fixture();
        let cfg = fast();
        let pre = pretrain_mcsp(&f.corpus, &f.lexicon, &cfg).unwrap();
        assert_eq!(pre.epoch_losses.len(), 2);
        assert!(pre.checkpoint.params.iter().all(|(_, p)| p.group == ParamGroup::Encoder));
        let back = EncoderCheckpoint::from_json(&pre.checkpoint.to_json()).unwrap();
        assert_eq!(back, pre.checkpoint);

        let mut other = f.corpus.clone();
        other.inventory = crate::dataset::SememeInventory::new(["x", "y", "z", "w", "v", "u"]).unwrap();
        assert!(matches!(
            train_spbs(&other, Some(&pre.checkpoint), &ImageSets::new(), 6, &cfg),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn manifest_records_every_epoch() {
        let f = small_fixture();
        let mut cfg = fast();
        cfg.no_image = true;
        let out = run_training(&f.corpus, Some(&f.lexicon), &ImageSets::new(), 6, &cfg).unwrap();
        let m = &out.manifest;
        assert_eq!(m.epochs.len(), 2);
        assert_eq!(m.pretrain_losses.len(), 2);
        assert!(m.best_epoch >= 1 && m.best_epoch <= 2);
        assert_eq!(m.best_valid_map, m.epochs[m.best_epoch - 1].valid_map);
        assert!(!out.model.config.use_images);
        let back: RunManifest = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(&back, m);
    }
}
