use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoders::{EncoderConfig, EncoderKind};
use crate::error::{Error, Result};
use crate::sequencing::SegmentOptions;

/// Which images a run trains and evaluates with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageVariant {
    None,
    All,
    Filtered,
    FilteredExternal,
}

impl ImageVariant {
    pub const ALL: [ImageVariant; 4] = [ImageVariant::None, ImageVariant::All, ImageVariant::Filtered, ImageVariant::FilteredExternal];

    pub fn as_str(self) -> &'static str {
        match self {
            ImageVariant::None => "none",
            ImageVariant::All => "all",
            ImageVariant::Filtered => "filtered",
            ImageVariant::FilteredExternal => "filtered_external",
        }
    }
}

impl FromStr for ImageVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ImageVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown image variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub encoder_lr: f64,
    /// Shared by the classifier, the image projection and the pre-training head.
    pub classifier_lr: f64,
    pub freeze_encoder: bool,
    pub freeze_projection: bool,
    pub freeze_classifier: bool,
    pub grad_clip: f64,
    pub mcsp: bool,
    pub mcsp_epochs: usize,
    pub mask_rate: f64,
    /// Draw fresh masks every pre-training epoch instead of once.
    pub mcsp_resample: bool,
    pub no_synonym: bool,
    pub no_gloss: bool,
    pub no_image: bool,
    pub image_variant: ImageVariant,
    pub null_image: bool,
    pub language_order: Vec<String>,
    pub threshold: f64,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 1,
            epochs: 20,
            batch_size: 16,
            encoder_lr: 1e-5,
            classifier_lr: 1e-3,
            freeze_encoder: false,
            freeze_projection: false,
            freeze_classifier: false,
            grad_clip: 5.0,
            mcsp: true,
            mcsp_epochs: 5,
            mask_rate: 0.15,
            mcsp_resample: false,
            no_synonym: false,
            no_gloss: false,
            no_image: false,
            image_variant: ImageVariant::FilteredExternal,
            null_image: false,
            language_order: crate::dataset::DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            threshold: 0.42,
            encoder: EncoderConfig::default(),
        }
    }
}

pub const LEARNING_RATE_GRID_ENCODER: [f64; 5] = [1e-6, 5e-6, 1e-5, 5e-5, 1e-4];
pub const LEARNING_RATE_GRID_CLASSIFIER: [f64; 5] = [1e-4, 5e-4, 1e-3, 5e-3, 1e-2];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl TrainConfig {
    /// Settings that train a from-scratch encoder at fixture scale.
    pub fn desk() -> Self {
        TrainConfig {
            encoder_lr: 1e-3,
            classifier_lr: 1e-2,
            batch_size: 4,
            ..Default::default()
        }
    }

    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "epochs",
        "batch_size",
        "encoder_lr",
        "classifier_lr",
        "freeze_encoder",
        "freeze_projection",
        "freeze_classifier",
        "grad_clip",
        "mcsp",
        "mcsp_epochs",
        "mask_rate",
        "mcsp_resample",
        "no_synonym",
        "no_gloss",
        "no_image",
        "image_variant",
        "null_image",
        "language_order",
        "threshold",
        "encoder_kind",
        "hidden",
        "layers",
        "heads",
        "ffn",
        "max_len",
        "min_count",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "seed" => self.seed = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "encoder_lr" => self.encoder_lr = parse(key, value)?,
            "classifier_lr" => self.classifier_lr = parse(key, value)?,
            "freeze_encoder" => self.freeze_encoder = parse_bool(key, value)?,
            "freeze_projection" => self.freeze_projection = parse_bool(key, value)?,
            "freeze_classifier" => self.freeze_classifier = parse_bool(key, value)?,
            "grad_clip" => self.grad_clip = parse(key, value)?,
            "mcsp" => self.mcsp = parse_bool(key, value)?,
            "mcsp_epochs" => self.mcsp_epochs = parse(key, value)?,
            "mask_rate" => self.mask_rate = parse(key, value)?,
            "mcsp_resample" => self.mcsp_resample = parse_bool(key, value)?,
            "no_synonym" => self.no_synonym = parse_bool(key, value)?,
            "no_gloss" => self.no_gloss = parse_bool(key, value)?,
            "no_image" => self.no_image = parse_bool(key, value)?,
            "image_variant" => self.image_variant = value.parse()?,
            "null_image" => self.null_image = parse_bool(key, value)?,
            "language_order" => {
                self.language_order = value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            }
            "threshold" => self.threshold = parse(key, value)?,
            "encoder_kind" => {
                self.encoder.kind = match value {
                    "tiny-trainable" => EncoderKind::TinyTrainable,
                    "pretrained-adapter" => EncoderKind::PretrainedAdapter,
                    _ => return Err(Error::Config(format!("unknown encoder kind {value:?}"))),
                }
            }
            "hidden" => self.encoder.hidden = parse(key, value)?,
            "layers" => self.encoder.layers = parse(key, value)?,
            "heads" => self.encoder.heads = parse(key, value)?,
            "ffn" => self.encoder.ffn = parse(key, value)?,
            "max_len" => self.encoder.max_len = parse(key, value)?,
            "min_count" => self.encoder.min_count = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            self.set(k.trim(), v).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let e = &self.encoder;
        let kind = match e.kind {
            EncoderKind::TinyTrainable => "tiny-trainable",
            EncoderKind::PretrainedAdapter => "pretrained-adapter",
        };
        let mut out = String::new();
        let pairs: [(&str, String); 27] = [
            ("seed", self.seed.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("encoder_lr", self.encoder_lr.to_string()),
            ("classifier_lr", self.classifier_lr.to_string()),
            ("freeze_encoder", self.freeze_encoder.to_string()),
            ("freeze_projection", self.freeze_projection.to_string()),
            ("freeze_classifier", self.freeze_classifier.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("mcsp", self.mcsp.to_string()),
            ("mcsp_epochs", self.mcsp_epochs.to_string()),
            ("mask_rate", self.mask_rate.to_string()),
            ("mcsp_resample", self.mcsp_resample.to_string()),
            ("no_synonym", self.no_synonym.to_string()),
            ("no_gloss", self.no_gloss.to_string()),
            ("no_image", self.no_image.to_string()),
            ("image_variant", self.image_variant.as_str().to_string()),
            ("null_image", self.null_image.to_string()),
            ("language_order", self.language_order.join(",")),
            ("threshold", self.threshold.to_string()),
            ("encoder_kind", kind.to_string()),
            ("hidden", e.hidden.to_string()),
            ("layers", e.layers.to_string()),
            ("heads", e.heads.to_string()),
            ("ffn", e.ffn.to_string()),
            ("max_len", e.max_len.to_string()),
            ("min_count", e.min_count.to_string()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.encoder_lr > 0.0 && self.classifier_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if self.mcsp && self.mcsp_epochs == 0 {
            return Err(Error::Config("mcsp_epochs must be at least 1 when pre-training".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        if self.language_order.is_empty() {
            return Err(Error::Config("language_order is empty".into()));
        }
        if self.grad_clip < 0.0 {
            return Err(Error::Config("grad_clip must be non-negative".into()));
        }
        self.encoder.validate()
    }

    pub fn segment_options(&self) -> SegmentOptions {
        SegmentOptions {
            drop_synonyms: self.no_synonym,
            drop_gloss: self.no_gloss,
        }
    }

    /// The image set actually used, after the `no_image` ablation.
    pub fn effective_images(&self) -> ImageVariant {
        if self.no_image {
            ImageVariant::None
        } else {
            self.image_variant
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_covers_every_key() {
        let mut cfg = TrainConfig::desk();
        cfg.seed = 9;
        cfg.language_order = vec!["zh".into(), "en".into()];
        cfg.image_variant = ImageVariant::Filtered;
        cfg.encoder.hidden = 16;
        let text = cfg.to_text();
        assert_eq!(TrainConfig::from_text(&text).unwrap(), cfg);
        let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(keys, TrainConfig::KEYS);
    }

    #[test]
    fn comments_overrides_and_errors() {
        let cfg = TrainConfig::from_text("# c\nepochs = 3 # trailing\n\nno_gloss = yes\n").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert!(cfg.no_gloss);
        assert!(TrainConfig::from_text("epochs = 0").is_err());
        assert!(TrainConfig::from_text("colour = red").is_err());
        assert!(TrainConfig::from_text("epochs 3").is_err());
        assert!(TrainConfig::from_text("encoder_lr = -1").is_err());
    }

    #[test]
    fn defaults_sit_in_the_grids() {
        let cfg = TrainConfig::default();
        assert!(LEARNING_RATE_GRID_ENCODER.contains(&cfg.encoder_lr));
        assert!(LEARNING_RATE_GRID_CLASSIFIER.contains(&cfg.classifier_lr));
    }
}
