use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::curation::CurationConfig;
use crate::dataset::{Corpus, EmbeddingStore, WordSememeLexicon};
use crate::error::Result;
use crate::training::{build_image_sets, run_training, ImageSets, ImageVariant, TrainConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationVariant {
    Full,
    NoSynonym,
    NoGloss,
    NoImage,
    NoMcsp,
    Images(ImageVariant),
    Languages(Vec<String>),
}

impl AblationVariant {
    pub fn name(&self) -> String {
        match self {
            AblationVariant::Full => "full".into(),
            AblationVariant::NoSynonym => "-synonym".into(),
            AblationVariant::NoGloss => "-gloss".into(),
            AblationVariant::NoImage => "-image".into(),
            AblationVariant::NoMcsp => "-mcsp".into(),
            AblationVariant::Images(v) => format!("images={}", v.as_str()),
            AblationVariant::Languages(l) => format!("languages={}", l.join("+")),
        }
    }

    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            AblationVariant::Full => {}
            AblationVariant::NoSynonym => cfg.no_synonym = true,
            AblationVariant::NoGloss => cfg.no_gloss = true,
            AblationVariant::NoImage => cfg.no_image = true,
            AblationVariant::NoMcsp => cfg.mcsp = false,
            AblationVariant::Images(v) => {
                cfg.no_image = false;
                cfg.image_variant = *v;
            }
            AblationVariant::Languages(l) => cfg.language_order = l.clone(),
        }
        cfg
    }

    /// The component ablations.
    pub fn components() -> Vec<AblationVariant> {
        vec![
            AblationVariant::Full,
            AblationVariant::NoSynonym,
            AblationVariant::NoGloss,
            AblationVariant::NoImage,
            AblationVariant::NoMcsp,
        ]
    }

    pub fn image_sets() -> Vec<AblationVariant> {
        ImageVariant::ALL.into_iter().map(AblationVariant::Images).collect()
    }

    /// Every nonempty language subset, in the order of `languages`.
    pub fn language_combinations(languages: &[String]) -> Vec<AblationVariant> {
        (1..1u32 << languages.len())
            .map(|mask| {
                AblationVariant::Languages(
                    languages
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask & (1 << i) != 0)
                        .map(|(_, l)| l.clone())
                        .collect(),
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub best_epoch: usize,
    pub valid_map: Option<f64>,
    pub test_map: Option<f64>,
    pub test_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn to_tsv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        let mut out = String::from("variant\tbest_epoch\tvalid_map\ttest_map\ttest_f1\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.variant,
                r.best_epoch,
                fmt(r.valid_map),
                fmt(r.test_map),
                fmt(r.test_f1)
            );
        }
        out
    }
}

/// Trains and evaluates each variant with the base seed.
pub fn run_ablations(
    base: &TrainConfig,
    corpus: &Corpus,
    lexicon: Option<&WordSememeLexicon>,
    images: Option<&EmbeddingStore>,
    external: Option<&EmbeddingStore>,
    curation: &CurationConfig,
    variants: &[AblationVariant],
) -> Result<AblationReport> {
    let image_dim = images.map_or(1, EmbeddingStore::dim);
    let mut cache: BTreeMap<&'static str, ImageSets> = BTreeMap::new();
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let cfg = v.apply(base);
        let which = cfg.effective_images();
        if !cache.contains_key(which.as_str()) {
            cache.insert(which.as_str(), build_image_sets(corpus, images, external, which, curation)?);
        }
        log::info!("ablation {}", v.name());
        let out = run_training(corpus, lexicon, &cache[which.as_str()], image_dim, &cfg)?;
        rows.push(AblationRow {
            variant: v.name(),
            best_epoch: out.manifest.best_epoch,
            valid_map: out.manifest.best_valid_map,
            test_map: out.manifest.test_map,
            test_f1: out.manifest.test_f1,
        });
    }
    Ok(AblationReport { seed: base.seed, rows })
}
