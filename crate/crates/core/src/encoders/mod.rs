//! Text encoders and image-embedding providers.

mod images;
mod tiny;
mod tokenizer;

use std::ops::Range;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::sequencing::SequenceText;

pub use images::{embed_images, ImageEmbeddingProvider, EXTERNAL_IMAGE_SIZE, CORPUS_IMAGE_SIZE};
pub use tiny::TinyEncoder;
pub use tokenizer::{tokenize, Token, Vocabulary, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Word-level transformer trained from scratch.
    TinyTrainable,
    /// A pretrained cross-lingual masked language model.
    PretrainedAdapter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Hidden size `d_t`.
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    /// Token budget, including separators.
    pub max_len: usize,
    /// Vocabulary policy: minimum training-text count for a word to get an id.
    pub min_count: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::TinyTrainable,
            hidden: 32,
            layers: 2,
            heads: 2,
            ffn: 64,
            max_len: 128,
            min_count: 1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("encoder hidden size must be positive".into()));
        }
        if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "encoder hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if self.max_len < 2 {
            return Err(Error::Config("encoder max_len must be at least 2".into()));
        }
        if self.ffn == 0 {
            return Err(Error::Config("encoder ffn size must be positive".into()));
        }
        Ok(())
    }
}

/// Token ids ready for the encoder, with their byte spans in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInput {
    pub token_ids: Vec<usize>,
    pub offsets: Vec<Range<usize>>,
    /// Number of trailing language segments dropped to fit the budget.
    pub dropped_segments: usize,
    /// Whether tokens of the last kept segment were cut.
    pub cut_last_segment: bool,
}

impl EncodedInput {
    pub fn truncated(&self) -> bool {
        self.dropped_segments > 0 || self.cut_last_segment
    }

    /// Index of the token starting exactly at byte `offset`.
    pub fn position_of(&self, offset: usize) -> Option<usize> {
        self.offsets.binary_search_by_key(&offset, |r| r.start).ok()
    }
}

/// Shared contract of text encoders.
pub trait TextEncoder: Send + Sync {
    fn config(&self) -> &EncoderConfig;

    fn vocabulary(&self) -> &Vocabulary;

    /// Token hidden states, `n_tokens × d_t`.
    fn forward(&self, g: &mut Graph, input: &EncodedInput) -> Var;

    fn hidden_size(&self) -> usize {
        self.config().hidden
    }

    /// Tokenizes and fits the sequence into the token budget: whole trailing
    /// language segments go first, then the tail of the last segment, whose
    /// closing separator is always kept.
    fn prepare(&self, seq: &dyn SequenceText) -> EncodedInput {
        let max = self.config().max_len;
        let mut tokens = tokenize(seq.text());
        let mut dropped_segments = 0;
        let mut cut_last_segment = false;
        if tokens.len() > max {
            let spans = seq.spans();
            let segment_of = |t: &Token| spans.iter().position(|s| s.segment.contains(&t.span.start));
            let mut keep = spans.len();
            let count_within = |k: usize| tokens.iter().filter(|t| segment_of(t).is_some_and(|s| s < k)).count();
            while keep > 1 && count_within(keep) > max {
                keep -= 1;
            }
            dropped_segments = spans.len() - keep;
            tokens.retain(|t| segment_of(t).is_some_and(|s| s < keep));
            if tokens.len() > max {
                let closing = tokens.pop().expect("nonempty");
                tokens.truncate(max - 1);
                tokens.push(closing);
                cut_last_segment = true;
            }
            log::warn!(
                "sequence of {} bytes truncated to {} tokens ({} segment(s) dropped)",
                seq.text().len(),
                tokens.len(),
                dropped_segments
            );
        }
        let vocab = self.vocabulary();
        EncodedInput {
            token_ids: tokens.iter().map(|t| vocab.id(&t.text)).collect(),
            offsets: tokens.into_iter().map(|t| t.span).collect(),
            dropped_segments,
            cut_last_segment,
        }
    }
}

/// The synset text representation `b_t`: the first token's hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct TextRepresentation(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct TokenHiddenStates {
    pub states: Array2<f64>,
    pub input: EncodedInput,
}

impl TokenHiddenStates {
    pub fn first(&self) -> TextRepresentation {
        TextRepresentation(self.states.row(0).to_vec())
    }

    /// The hidden state of the token starting at byte `offset`.
    pub fn at_offset(&self, offset: usize) -> Option<Vec<f64>> {
        self.input.position_of(offset).map(|i| self.states.row(i).to_vec())
    }
}

/// Inference-mode encoding with fixed parameters.
pub fn encode_text(
    encoder: &dyn TextEncoder,
    store: &ParamStore,
    seq: &dyn SequenceText,
) -> Result<(TextRepresentation, TokenHiddenStates)> {
    let input = encoder.prepare(seq);
    if input.token_ids.is_empty() {
        return Err(Error::Contract("cannot encode an empty sequence".into()));
    }
    let mut g = Graph::new(store);
    let out = encoder.forward(&mut g, &input);
    let states = g.value(out).clone();
    if states.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("encoder produced non-finite states".into()));
    }
    let hidden = TokenHiddenStates { states, input };
    Ok((hidden.first(), hidden))
}

/// Constructs the encoder named by `config`, registering fresh parameters.
pub fn build_encoder(
    config: EncoderConfig,
    vocab: Vocabulary,
    store: &mut ParamStore,
    rng: &mut impl rand::Rng,
) -> Result<TinyEncoder> {
    match config.kind {
        EncoderKind::TinyTrainable => TinyEncoder::init(config, vocab, store, rng),
        EncoderKind::PretrainedAdapter => Err(Error::Unsupported(
            "pretrained cross-lingual encoder weights are not bundled with this build; \
             implement `TextEncoder` over your checkpoint or use kind = tiny-trainable"
                .into(),
        )),
    }
}
