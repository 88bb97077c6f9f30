//! Per-synset image curation: outlier removal, then external augmentation.

pub mod ocsvm;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{write_file, Corpus, EmbeddingStore, ImageId, Synset};
use crate::encoders::{embed_images, ImageEmbeddingProvider};
use crate::error::{Error, Result};
pub use ocsvm::{Gamma, OneClassSvm};

pub const CURATED_FILE: &str = "curated.jsonl";
pub const REPORT_FILE: &str = "curation_report.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Corpus,
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageItem {
    pub id: ImageId,
    pub embedding: Vec<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageEmbeddingSet {
    pub synset_id: String,
    pub items: Vec<ImageItem>,
    /// Set once corpus images have been screened; a screened set is not
    /// refitted, so filtering is idempotent.
    pub filtered: bool,
}

impl ImageEmbeddingSet {
    pub fn new(synset_id: impl Into<String>, items: Vec<ImageItem>) -> Self {
        ImageEmbeddingSet {
            synset_id: synset_id.into(),
            items,
            filtered: false,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> Vec<ImageId> {
        self.items.iter().map(|i| i.id.clone()).collect()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.items.iter().filter(|i| i.provenance == provenance).count()
    }

    pub fn dim(&self) -> Option<usize> {
        self.items.first().map(|i| i.embedding.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationConfig {
    pub nu: f64,
    pub gamma: Gamma,
    pub min_size: usize,
    pub external: bool,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            nu: 0.1,
            gamma: Gamma::Scale,
            min_size: 5,
            external: true,
            tolerance: 1e-6,
            max_iter: 100_000,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::Config(format!("nu must lie in (0, 1), got {}", self.nu)));
        }
        if let Gamma::Fixed(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("gamma must be positive, got {g}")));
            }
        }
        if self.min_size == 0 {
            return Err(Error::Config("min_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Removes corpus images the one-class SVM places at or beyond its boundary,
/// at most `round(nu * n)` of them.
/// External images are kept and take no part in the fit.
pub fn filter_outliers(set: &ImageEmbeddingSet, config: &CurationConfig) -> Result<ImageEmbeddingSet> {
    config.validate()?;
    if set.filtered {
        return Ok(set.clone());
    }
    let corpus: Vec<usize> = (0..set.items.len())
        .filter(|&i| set.items[i].provenance == Provenance::Corpus)
        .collect();
    let mut out = set.clone();
    out.filtered = true;
    if corpus.len() < config.min_size {
        return Ok(out);
    }
    let points: Vec<Vec<f64>> = corpus.iter().map(|&i| set.items[i].embedding.clone()).collect();
    let Some(svm) = OneClassSvm::fit(&points, config.nu, config.gamma, config.tolerance, config.max_iter) else {
        log::warn!("synset {}: degenerate image set (all embeddings identical), left unfiltered", set.synset_id);
        return Ok(out);
    };
    // Margin support vectors score zero up to solver tolerance, so the sign of
    // the decision value alone is noise. Candidates on or outside the boundary
    // are ranked by their score without their own kernel term and at most
    // round(nu * n) of them are dropped, always keeping one image.
    let edge = 10.0 * config.tolerance;
    let held_out = svm.self_excluded_scores();
    let mut candidates: Vec<usize> = (0..corpus.len()).filter(|&k| svm.training_scores[k] <= edge).collect();
    candidates.sort_by(|&a, &b| held_out[a].total_cmp(&held_out[b]).then(a.cmp(&b)));
    let budget = ((config.nu * corpus.len() as f64).round() as usize).min(corpus.len() - 1);
    candidates.truncate(budget);
    let drop: BTreeSet<usize> = candidates.into_iter().map(|k| corpus[k]).collect();
    out.items = set
        .items
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, item)| item.clone())
        .collect();
    Ok(out)
}

/// Appends the external images aligned to `synset.external_key`. Synsets
/// without a key, or keys absent from the store, are returned unchanged.
pub fn merge_external_images(set: &ImageEmbeddingSet, synset: &Synset, external: &EmbeddingStore) -> ImageEmbeddingSet {
    let mut out = set.clone();
    let Some(key) = &synset.external_key else {
        return out;
    };
    let present: BTreeSet<ImageId> = set.ids().into_iter().collect();
    for (id, v) in external.by_key(key) {
        if !present.contains(id) {
            out.items.push(ImageItem {
                id: id.clone(),
                embedding: v.to_vec(),
                provenance: Provenance::External,
            });
        }
    }
    out
}

/// One curated synset: the surviving image ids and what changed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedRecord {
    pub synset: String,
    pub images: Vec<ImageId>,
    pub provenance: Vec<Provenance>,
    pub removed: Vec<ImageId>,
    pub added: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CuratedImages {
    pub records: BTreeMap<String, CuratedRecord>,
}

impl CuratedImages {
    pub fn get(&self, synset: &str) -> Option<&CuratedRecord> {
        self.records.get(synset)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.records.values() {
            out.push_str(&serde_json::to_string(r).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn parse_jsonl(text: &str, file: &str) -> Result<Self> {
        let mut records = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: CuratedRecord = serde_json::from_str(line).map_err(|e| Error::parse(file, n + 1, "record", e))?;
            if r.images.len() != r.provenance.len() {
                return Err(Error::validation(file, n + 1, "images and provenance differ in length"));
            }
            records.insert(r.synset.clone(), r);
        }
        Ok(CuratedImages { records })
    }

    pub fn report_tsv(&self) -> String {
        let mut out = String::from("synset\tcorpus_kept\tremoved\tadded\ttotal\n");
        for r in self.records.values() {
            let kept = r.provenance.iter().filter(|p| **p == Provenance::Corpus).count();
            let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", r.synset, kept, r.removed.len(), r.added, r.images.len());
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(CURATED_FILE), self.to_jsonl().as_bytes())?;
        write_file(&dir.join(REPORT_FILE), self.report_tsv().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_jsonl(&text, &path.display().to_string())
    }

    pub fn total_removed(&self) -> usize {
        self.records.values().map(|r| r.removed.len()).sum()
    }

    pub fn total_added(&self) -> usize {
        self.records.values().map(|r| r.added).sum()
    }

    /// Rebuilds embedding sets from stored ids.
    pub fn embedding_set(&self, synset: &str, images: &EmbeddingStore, external: Option<&EmbeddingStore>) -> ImageEmbeddingSet {
        let mut set = ImageEmbeddingSet::new(synset, Vec::new());
        set.filtered = true;
        if let Some(r) = self.records.get(synset) {
            for (id, prov) in r.images.iter().zip(&r.provenance) {
                let store = match prov {
                    Provenance::Corpus => Some(images),
                    Provenance::External => external,
                };
                if let Some(v) = store.and_then(|s| s.get(id)) {
                    set.items.push(ImageItem {
                        id: id.clone(),
                        embedding: v.to_vec(),
                        provenance: *prov,
                    });
                }
            }
        }
        set
    }
}

/// Curates every synset of the corpus: filter corpus images, then merge
/// external ones. Synsets are processed in parallel; output order is by id.
pub fn curate_corpus(
    corpus: &Corpus,
    images: &EmbeddingStore,
    external: Option<&EmbeddingStore>,
    config: &CurationConfig,
) -> Result<CuratedImages> {
    config.validate()?;
    let records: Vec<CuratedRecord> = corpus
        .synsets
        .par_iter()
        .map(|synset| {
            let set = embed_images(&synset.id, &synset.images, images as &dyn ImageEmbeddingProvider, false)?;
            let filtered = filter_outliers(&set, config)?;
            let kept: BTreeSet<&ImageId> = filtered.items.iter().map(|i| &i.id).collect();
            let removed = set.items.iter().filter(|i| !kept.contains(&i.id)).map(|i| i.id.clone()).collect();
            let merged = match external {
                Some(ext) if config.external => merge_external_images(&filtered, synset, ext),
                _ => filtered.clone(),
            };
            Ok(CuratedRecord {
                synset: synset.id.clone(),
                images: merged.ids(),
                provenance: merged.items.iter().map(|i| i.provenance).collect(),
                removed,
                added: merged.count(Provenance::External) - filtered.count(Provenance::External),
            })
        })
        .collect::<Result<_>>()?;
    Ok(CuratedImages {
        records: records.into_iter().map(|r| (r.synset.clone(), r)).collect(),
    })
}
