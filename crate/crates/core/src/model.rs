//! The scoring core: image projection, attention over a synset's images,
//! the sigmoid multi-label classifier, the two training losses, thresholded
//! selection, and checkpoints.

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{self, Gradients, Graph, ParamGroup, ParamId, ParamStore, Var, PROB_EPS};
use crate::curation::ImageEmbeddingSet;
use crate::dataset::{write_file, SememeId, SememeInventory, SememeSet};
use crate::encoders::{EncodedInput, EncoderConfig, TextEncoder, TextRepresentation, TinyEncoder, Vocabulary};
use crate::error::{Error, Result};
use crate::sequencing::SequenceText;

pub const CHECKPOINT_FORMAT: &str = "sememe-predict-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Softmax attention weights over a synset's images.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights(pub Vec<f64>);

/// The attention-pooled image vector `b_i` (zero when there are no images).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRepresentation(pub Vec<f64>);

/// Per-sememe probabilities, indexed by sememe id.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionScores(pub Vec<f64>);

impl PredictionScores {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, s: SememeId) -> f64 {
        self.0[s.0]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `α = softmax(b_t · e_j)`, `b_i = Σ α_j e_j`.
pub fn attend_images(b_t: &TextRepresentation, projected: &[Vec<f64>]) -> Result<(ImageRepresentation, AttentionWeights)> {
    let d = b_t.0.len();
    if projected.is_empty() {
        return Ok((ImageRepresentation(vec![0.0; d]), AttentionWeights(Vec::new())));
    }
    if let Some(bad) = projected.iter().find(|e| e.len() != d) {
        return Err(Error::Contract(format!(
            "projected image has dimension {}, text representation {d}",
            bad.len()
        )));
    }
    let logits: Vec<f64> = projected.iter().map(|e| dot(&b_t.0, e)).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    let alpha: Vec<f64> = exp.iter().map(|e| e / total).collect();
    let mut b_i = vec![0.0; d];
    for (a, e) in alpha.iter().zip(projected) {
        for (acc, v) in b_i.iter_mut().zip(e) {
            *acc += a * v;
        }
    }
    Ok((ImageRepresentation(b_i), AttentionWeights(alpha)))
}

/// `p = σ(W [b_t; b_i] + μ)` with `W` of shape `|S| × 2d_t`.
pub fn predict_scores(
    b_t: &TextRepresentation,
    b_i: &ImageRepresentation,
    weight: &Array2<f64>,
    bias: &[f64],
) -> Result<PredictionScores> {
    let x: Vec<f64> = b_t.0.iter().chain(&b_i.0).copied().collect();
    if weight.ncols() != x.len() || weight.nrows() != bias.len() {
        return Err(Error::Contract(format!(
            "classifier is {:?} with {} biases, input has length {}",
            weight.dim(),
            bias.len(),
            x.len()
        )));
    }
    if x.iter().chain(bias).any(|v| !v.is_finite()) {
        return Err(Error::Contract("non-finite classifier input".into()));
    }
    let p = weight
        .rows()
        .into_iter()
        .zip(bias)
        .map(|(row, mu)| autodiff::sigmoid(row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + mu))
        .collect();
    Ok(PredictionScores(p))
}

/// Multi-label cross-entropy normalised by the inventory size.
pub fn spbs_loss(p: &PredictionScores, gold: &SememeSet, inventory_size: usize) -> Result<f64> {
    if p.len() != inventory_size || inventory_size == 0 {
        return Err(Error::Contract(format!("{} scores for an inventory of {inventory_size}", p.len())));
    }
    if let Some(bad) = gold.iter().find(|s| s.0 >= inventory_size) {
        return Err(Error::Contract(format!("gold sememe {bad} outside inventory")));
    }
    let mut total = 0.0;
    for (k, &pk) in p.0.iter().enumerate() {
        let pk = pk.clamp(PROB_EPS, 1.0 - PROB_EPS);
        total += if gold.contains(&SememeId(k)) { pk.ln() } else { (1.0 - pk).ln() };
    }
    Ok(-total / inventory_size as f64)
}

/// Mean over masks of the per-mask cross-entropy under the pre-training head.
pub fn mcsp_loss(
    mask_states: &[Vec<f64>],
    targets: &[SememeSet],
    head_weight: &Array2<f64>,
    head_bias: &[f64],
    inventory_size: usize,
) -> Result<f64> {
    if mask_states.is_empty() || mask_states.len() != targets.len() {
        return Err(Error::Contract(format!(
            "{} mask states for {} targets",
            mask_states.len(),
            targets.len()
        )));
    }
    if head_weight.dim() != (inventory_size, mask_states[0].len()) || head_bias.len() != inventory_size {
        return Err(Error::Contract("pre-training head shape mismatch".into()));
    }
    let mut total = 0.0;
    for (h, gold) in mask_states.iter().zip(targets) {
        if gold.is_empty() {
            return Err(Error::Contract("mask target without sememes".into()));
        }
        let p = head_weight
            .rows()
            .into_iter()
            .zip(head_bias)
            .map(|(row, b)| autodiff::sigmoid(row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>() + b))
            .collect();
        total += spbs_loss(&PredictionScores(p), gold, inventory_size)?;
    }
    Ok(total / mask_states.len() as f64)
}

/// `{s : p_s > δ}`.
pub fn select_sememes(p: &PredictionScores, threshold: f64) -> SememeSet {
    p.0.iter()
        .enumerate()
        .filter(|(_, &v)| v > threshold)
        .map(|(k, _)| SememeId(k))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub image_dim: usize,
    pub num_sememes: usize,
    /// When false, `b_i` is always zero and images are ignored.
    pub use_images: bool,
    /// Learned `b_i` for synsets without images, instead of the zero vector.
    pub null_image: bool,
}

impl ModelConfig {
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Head {
    weight: ParamId,
    bias: ParamId,
}

/// One prepared training or evaluation instance.
#[derive(Debug, Clone)]
pub struct Example {
    pub input: EncodedInput,
    /// `m × d_img` raw image embeddings.
    pub images: Array2<f64>,
    /// `1 × |S|` multi-hot gold row.
    pub target: Array2<f64>,
}

/// One masked pre-training instance.
#[derive(Debug, Clone)]
pub struct MaskedExample {
    pub input: EncodedInput,
    pub positions: Vec<usize>,
    /// `k × |S|` multi-hot rows, one per mask.
    pub targets: Array2<f64>,
}

pub fn multi_hot(sets: &[&SememeSet], size: usize) -> Array2<f64> {
    let mut out = Array2::zeros((sets.len(), size));
    for (r, set) in sets.iter().enumerate() {
        for s in set.iter() {
            out[[r, s.0]] = 1.0;
        }
    }
    out
}

pub fn image_matrix(set: Option<&ImageEmbeddingSet>, dim: usize) -> Array2<f64> {
    let items = set.map_or(&[][..], |s| &s.items[..]);
    let mut out = Array2::zeros((items.len(), dim));
    for (r, item) in items.iter().enumerate() {
        for (c, v) in item.embedding.iter().enumerate().take(dim) {
            out[[r, c]] = *v;
        }
    }
    out
}

/// Scores plus the attention that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: PredictionScores,
    pub attention: AttentionWeights,
}

#[derive(Debug, Clone)]
pub struct SememeModel {
    pub config: ModelConfig,
    pub encoder: TinyEncoder,
    pub params: ParamStore,
    projection: Head,
    classifier: Head,
    null_image: Option<ParamId>,
    mcsp: Option<Head>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    config_hash: String,
    inventory_fingerprint: String,
    vocab: Vocabulary,
    params: serde_json::Value,
}

impl SememeModel {
    pub fn new(config: ModelConfig, vocab: Vocabulary, rng: &mut impl Rng) -> Result<Self> {
        if config.num_sememes == 0 {
            return Err(Error::Config("sememe inventory is empty".into()));
        }
        if config.use_images && config.image_dim == 0 {
            return Err(Error::Config("image dimension must be positive".into()));
        }
        let mut params = ParamStore::new();
        let encoder = TinyEncoder::init(config.encoder.clone(), vocab, &mut params, rng)?;
        let d = config.encoder.hidden;
        let img = config.image_dim.max(1);
        let projection = Head {
            weight: params.add_normal("projection.weight", ParamGroup::Projection, (img, d), 1.0 / (img as f64).sqrt(), rng),
            bias: params.add("projection.bias", ParamGroup::Projection, Array2::zeros((1, d))),
        };
        let null_image = config
            .null_image
            .then(|| params.add("projection.null_image", ParamGroup::Projection, Array2::zeros((1, d))));
        let classifier = Head {
            weight: params.add_normal(
                "classifier.weight",
                ParamGroup::Classifier,
                (config.num_sememes, 2 * d),
                1.0 / (2.0 * d as f64).sqrt(),
                rng,
            ),
            bias: params.add("classifier.bias", ParamGroup::Classifier, Array2::zeros((1, config.num_sememes))),
        };
        Ok(SememeModel {
            config,
            encoder,
            params,
            projection,
            classifier,
            null_image,
            mcsp: None,
        })
    }

    fn bind(config: ModelConfig, vocab: Vocabulary, params: ParamStore) -> Result<Self> {
        let encoder = TinyEncoder::bind(config.encoder.clone(), vocab, &params)?;
        let d = config.encoder.hidden;
        let expect = |name: &str, shape: (usize, usize)| -> Result<ParamId> {
            let id = params.require(name)?;
            if params.value(id).dim() != shape {
                return Err(Error::Checkpoint(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    params.value(id).dim()
                )));
            }
            Ok(id)
        };
        let projection = Head {
            weight: expect("projection.weight", (config.image_dim.max(1), d))?,
            bias: expect("projection.bias", (1, d))?,
        };
        let null_image = if config.null_image { Some(expect("projection.null_image", (1, d))?) } else { None };
        let classifier = Head {
            weight: expect("classifier.weight", (config.num_sememes, 2 * d))?,
            bias: expect("classifier.bias", (1, config.num_sememes))?,
        };
        Ok(SememeModel {
            config,
            encoder,
            params,
            projection,
            classifier,
            null_image,
            mcsp: None,
        })
    }

    pub fn hidden(&self) -> usize {
        self.config.encoder.hidden
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        self.encoder.vocab()
    }

    /// Adds the masked-sememe pre-training head (idempotent).
    pub fn attach_mcsp_head(&mut self, rng: &mut impl Rng) {
        if self.mcsp.is_some() {
            return;
        }
        let d = self.hidden();
        let s = self.config.num_sememes;
        self.mcsp = Some(Head {
            weight: self
                .params
                .add_normal("mcsp.weight", ParamGroup::McspHead, (s, d), 1.0 / (d as f64).sqrt(), rng),
            bias: self.params.add("mcsp.bias", ParamGroup::McspHead, Array2::zeros((1, s))),
        });
    }

    /// Drops the pre-training head; only the encoder carries over.
    pub fn discard_mcsp_head(&mut self) {
        if self.mcsp.take().is_some() {
            let mut kept = ParamStore::new();
            for (_, p) in self.params.iter().filter(|(_, p)| p.group != ParamGroup::McspHead) {
                kept.add(p.name.clone(), p.group, p.value.clone());
            }
            let rebound = Self::bind(self.config.clone(), self.encoder.vocab().clone(), kept).expect("same layout");
            *self = rebound;
        }
    }

    pub fn has_mcsp_head(&self) -> bool {
        self.mcsp.is_some()
    }

    /// Copies encoder parameters from `other` by name.
    pub fn load_encoder_from(&mut self, other: &ParamStore) -> Result<()> {
        let sub = other.subset(ParamGroup::Encoder);
        for (_, p) in sub.iter() {
            let id = self
                .params
                .id(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("encoder parameter {} unknown to this model", p.name)))?;
            if self.params.value(id).dim() != p.value.dim() {
                return Err(Error::Checkpoint(format!("encoder parameter {} has a different shape", p.name)));
            }
            *self.params.value_mut(id) = p.value.clone();
        }
        Ok(())
    }

    pub fn classifier_weight(&self) -> &Array2<f64> {
        self.params.value(self.classifier.weight)
    }

    pub fn classifier_bias(&self) -> Vec<f64> {
        self.params.value(self.classifier.bias).row(0).to_vec()
    }

    pub fn projection_weight(&self) -> &Array2<f64> {
        self.params.value(self.projection.weight)
    }

    pub fn projection_bias(&self) -> Vec<f64> {
        self.params.value(self.projection.bias).row(0).to_vec()
    }

    /// Builds the logits (`1 × |S|`) graph for one instance.
    pub fn logits(&self, g: &mut Graph, input: &EncodedInput, images: &Array2<f64>) -> (Var, Option<Var>) {
        let states = self.encoder.forward(g, input);
        let b_t = g.select_rows(states, &[0]);
        let (b_i, alpha) = if self.config.use_images && images.nrows() > 0 {
            let raw = g.constant(images.clone());
            let e = g.linear(raw, self.projection.weight, self.projection.bias);
            let att = g.matmul_t(b_t, e);
            let alpha = g.softmax_rows(att);
            (g.matmul(alpha, e), Some(alpha))
        } else if let (true, Some(null)) = (self.config.use_images, self.null_image) {
            (g.param(null), None)
        } else {
            (g.constant(Array2::zeros((1, self.hidden()))), None)
        };
        let x = g.concat_cols(&[b_t, b_i]);
        let w = g.param(self.classifier.weight);
        let mu = g.param(self.classifier.bias);
        let z = g.matmul_t(x, w);
        (g.add_row(z, mu), alpha)
    }

    /// Loss and parameter gradients for one instance.
    pub fn spbs_step(&self, ex: &Example) -> (f64, Gradients) {
        let mut g = Graph::new(&self.params);
        let (z, _) = self.logits(&mut g, &ex.input, &ex.images);
        let loss = g.sigmoid_bce(z, &ex.target);
        (g.value(loss)[[0, 0]], g.backward(loss))
    }

    /// Pre-training loss and gradients for one masked instance.
    pub fn mcsp_step(&self, ex: &MaskedExample) -> Result<(f64, Gradients)> {
        let head = self
            .mcsp
            .ok_or_else(|| Error::Contract("pre-training head is not attached".into()))?;
        if ex.positions.is_empty() {
            return Err(Error::Contract("masked instance without targets".into()));
        }
        let mut g = Graph::new(&self.params);
        let states = self.encoder.forward(&mut g, &ex.input);
        let h = g.select_rows(states, &ex.positions);
        let w = g.param(head.weight);
        let b = g.param(head.bias);
        let z = g.matmul_t(h, w);
        let z = g.add_row(z, b);
        let loss = g.sigmoid_bce(z, &ex.targets);
        Ok((g.value(loss)[[0, 0]], g.backward(loss)))
    }

    pub fn mcsp_head(&self) -> Option<(&Array2<f64>, Vec<f64>)> {
        self.mcsp
            .map(|h| (self.params.value(h.weight), self.params.value(h.bias).row(0).to_vec()))
    }

    pub fn predict_input(&self, input: &EncodedInput, images: &Array2<f64>) -> Prediction {
        let mut g = Graph::new(&self.params);
        let (z, alpha) = self.logits(&mut g, input, images);
        let scores = g.value(z).iter().map(|&v| autodiff::sigmoid(v)).collect();
        let attention = alpha.map_or_else(Vec::new, |a| g.value(a).iter().copied().collect());
        Prediction {
            scores: PredictionScores(scores),
            attention: AttentionWeights(attention),
        }
    }

    pub fn predict(&self, seq: &dyn SequenceText, images: Option<&ImageEmbeddingSet>) -> Result<Prediction> {
        let input = self.encoder.prepare(seq);
        if input.token_ids.is_empty() {
            return Err(Error::Contract("cannot score an empty sequence".into()));
        }
        let m = image_matrix(images, self.config.image_dim);
        if let Some(set) = images {
            if set.dim().is_some_and(|d| d != self.config.image_dim) && self.config.use_images {
                return Err(Error::Contract(format!(
                    "image embeddings have dimension {}, model expects {}",
                    set.dim().unwrap_or(0),
                    self.config.image_dim
                )));
            }
        }
        Ok(self.predict_input(&input, &m))
    }

    pub fn to_json(&self, inventory: &SememeInventory) -> String {
        let mut params = ParamStore::new();
        for (_, p) in self.params.iter().filter(|(_, p)| p.group != ParamGroup::McspHead) {
            params.add(p.name.clone(), p.group, p.value.clone());
        }
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config_hash: self.config.hash(),
            config: self.config.clone(),
            inventory_fingerprint: inventory.fingerprint(),
            vocab: self.encoder.vocab().clone(),
            params: params.to_json(),
        };
        serde_json::to_string(&file).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str, inventory: &SememeInventory) -> Result<Self> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                file.format, file.version
            )));
        }
        if file.config.hash() != file.config_hash {
            return Err(Error::Checkpoint("configuration hash does not match its contents".into()));
        }
        if file.inventory_fingerprint != inventory.fingerprint() || file.config.num_sememes != inventory.len() {
            return Err(Error::Checkpoint(
                "checkpoint was trained against a different sememe inventory".into(),
            ));
        }
        let mut vocab = file.vocab;
        vocab.reindex();
        let params = ParamStore::from_json(file.params)?;
        Self::bind(file.config, vocab, params)
    }

    pub fn save(&self, path: &Path, inventory: &SememeInventory) -> Result<()> {
        write_file(path, self.to_json(inventory).as_bytes())
    }

    pub fn load(path: &Path, inventory: &SememeInventory) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, inventory)
    }
}
