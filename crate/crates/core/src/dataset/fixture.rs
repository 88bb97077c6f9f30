//! Deterministic synthetic corpora for desk-scale experiments.
//!
//! Label signal is planted in two places, each with its own strength knob:
//!
//! * glosses: every gold sememe has one indicative token per language, which
//!   appears in that language's gloss with probability `gloss_signal`; the
//!   rest of the gloss is distractor words drawn from a shared pool;
//! * images: every sememe owns a cluster centre scaled by `image_signal`; an
//!   inlier image is a noisy sample around the centre of one of the synset's
//!   gold sememes, and a planted outlier is a sample from a much wider shell.
//!
//! Synonyms are random pseudo-words and carry no label signal.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    Corpus, DatasetSplit, EmbeddingStore, ImageId, MonolingualEntry, PartOfSpeech, SememeId, SememeInventory,
    Synset, WordSememeLexicon, EXTERNAL_FILE, IMAGES_FILE, LEXICON_FILE,
};
use crate::error::{Error, Result};

pub const FIXTURE_MANIFEST_FILE: &str = "fixture_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureParams {
    pub synsets: usize,
    pub sememes: usize,
    pub languages: Vec<String>,
    /// Expected number of gold sememes per synset before the non-empty guarantee.
    pub mean_sememes: f64,
    /// Zipf exponent of the sememe popularity curve.
    pub zipf: f64,
    pub images_per_synset: usize,
    /// Fraction of synsets that carry images at all.
    pub image_fraction: f64,
    /// Fraction of each image set that is a planted outlier (rounded).
    pub outlier_fraction: f64,
    pub image_dim: usize,
    pub image_signal: f64,
    pub image_noise: f64,
    pub outlier_scale: f64,
    pub gloss_signal: f64,
    pub distractors: usize,
    /// Probability that a non-English gloss is missing.
    pub gloss_missing_rate: f64,
    /// Fraction of image-bearing synsets that get an external alignment key.
    pub external_fraction: f64,
    pub external_images: usize,
    pub valid_fraction: f64,
    pub test_fraction: f64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        FixtureParams {
            synsets: 500,
            sememes: 30,
            languages: super::DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            mean_sememes: 2.5,
            zipf: 0.8,
            images_per_synset: 8,
            image_fraction: 1.0,
            outlier_fraction: 0.1,
            image_dim: 32,
            image_signal: 3.0,
            image_noise: 1.0,
            outlier_scale: 8.0,
            gloss_signal: 1.0,
            distractors: 4,
            gloss_missing_rate: 0.1,
            external_fraction: 0.25,
            external_images: 3,
            valid_fraction: 0.1,
            test_fraction: 0.1,
        }
    }
}

impl FixtureParams {
    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("fixture: {m}")));
        if self.sememes == 0 {
            return bad("at least one sememe is required");
        }
        if self.synsets == 0 {
            return bad("at least one synset is required");
        }
        if self.languages.is_empty() {
            return bad("at least one language is required");
        }
        if self.image_dim == 0 {
            return bad("image_dim must be positive");
        }
        if !(self.mean_sememes > 0.0) {
            return bad("mean_sememes must be positive");
        }
        for (name, v) in [
            ("image_fraction", self.image_fraction),
            ("outlier_fraction", self.outlier_fraction),
            ("gloss_signal", self.gloss_signal),
            ("gloss_missing_rate", self.gloss_missing_rate),
            ("external_fraction", self.external_fraction),
            ("valid_fraction", self.valid_fraction),
            ("test_fraction", self.test_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("fixture: {name} must lie in [0, 1], got {v}")));
            }
        }
        if self.valid_fraction + self.test_fraction >= 1.0 {
            return bad("valid_fraction + test_fraction must leave a training split");
        }
        Ok(())
    }

    /// Independent per-sememe inclusion probability before the non-empty guarantee.
    pub fn inclusion_probabilities(&self) -> Vec<f64> {
        let weights = self.popularity();
        let total: f64 = weights.iter().sum();
        weights
            .iter()
            .map(|w| (self.mean_sememes * w / total).min(0.9))
            .collect()
    }

    fn popularity(&self) -> Vec<f64> {
        (0..self.sememes).map(|k| 1.0 / ((k + 1) as f64).powf(self.zipf)).collect()
    }

    /// Exact marginal probability that a synset carries sememe `k`.
    ///
    /// Sememes are included independently; an empty draw is replaced by a
    /// single sememe chosen proportionally to popularity.
    pub fn expected_marginals(&self) -> Vec<f64> {
        let q = self.inclusion_probabilities();
        let p_empty: f64 = q.iter().map(|qk| 1.0 - qk).product();
        let w = self.popularity();
        let total: f64 = w.iter().sum();
        q.iter().zip(&w).map(|(qk, wk)| qk + p_empty * wk / total).collect()
    }
}

/// Bookkeeping the generator records about what it planted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub seed: u64,
    pub params: FixtureParams,
    /// Planted outlier ids per synset.
    pub outliers: BTreeMap<String, Vec<String>>,
    /// Indicative token per (sememe label, language).
    pub indicative_tokens: BTreeMap<String, BTreeMap<String, String>>,
}

impl FixtureManifest {
    pub fn outlier_count(&self) -> usize {
        self.outliers.values().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub corpus: Corpus,
    pub lexicon: WordSememeLexicon,
    pub images: EmbeddingStore,
    pub external: EmbeddingStore,
    pub manifest: FixtureManifest,
}

impl Fixture {
    /// Writes every fixture artifact into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.corpus.save(dir)?;
        super::write_file(&dir.join(LEXICON_FILE), self.lexicon.to_tsv(&self.corpus.inventory).as_bytes())?;
        self.images.save(dir.join(IMAGES_FILE))?;
        self.external.save(dir.join(EXTERNAL_FILE))?;
        let manifest = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        super::write_file(&dir.join(FIXTURE_MANIFEST_FILE), &manifest)
    }

    pub fn load_manifest(dir: impl AsRef<Path>) -> Result<FixtureManifest> {
        let path = dir.as_ref().join(FIXTURE_MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(FIXTURE_MANIFEST_FILE, e.line(), "manifest", e))
    }
}

const CONSONANTS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
// Indicative and distractor Chinese words draw from disjoint character pools so
// longest-match segmentation cannot confuse the two.
const ZH_SIGNAL_CHARS: &str = "山水火木金土日月星云风雨雷电花草鸟鱼虫兽石玉心手口目耳足身头门车舟刀弓";
const ZH_FILLER_CHARS: &str = "之以于而其所者也乃则为与及或亦且又但若如因故即皆各每此彼";

struct WordFactory {
    used: BTreeSet<String>,
}

impl WordFactory {
    fn latin(&mut self, rng: &mut ChaCha8Rng, syllables: usize, suffix: &str) -> String {
        loop {
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(CONSONANTS[rng.random_range(0..CONSONANTS.len())]);
                w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
            }
            w.push_str(suffix);
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn han(&mut self, rng: &mut ChaCha8Rng, pool: &[char]) -> String {
        loop {
            let w: String = (0..2).map(|_| pool[rng.random_range(0..pool.len())]).collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn is_han_language(lang: &str) -> bool {
    matches!(lang, "zh" | "ja")
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Generates a fixture corpus. Identical `(seed, params)` yield identical output.
pub fn generate_fixture(seed: u64, params: &FixtureParams) -> Result<Fixture> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = WordFactory { used: BTreeSet::new() };
    let signal_pool: Vec<char> = ZH_SIGNAL_CHARS.chars().collect();
    let filler_pool: Vec<char> = ZH_FILLER_CHARS.chars().collect();

    let labels: Vec<String> = (0..params.sememes).map(|k| format!("sem{k:02}")).collect();
    let inventory = SememeInventory::new(labels.clone())?;

    // Per-(language, sememe) indicative tokens.
    let mut indicative: Vec<BTreeMap<String, String>> = vec![BTreeMap::new(); params.sememes];
    for lang in &params.languages {
        for slot in indicative.iter_mut() {
            let w = if is_han_language(lang) {
                words.han(&mut rng, &signal_pool)
            } else {
                words.latin(&mut rng, 3, if lang == "fr" { "e" } else { "" })
            };
            slot.insert(lang.clone(), w);
        }
    }
    let mut lexicon = WordSememeLexicon::new();
    for (k, toks) in indicative.iter().enumerate() {
        for (lang, w) in toks {
            if super::lexicon::LEXICON_LANGUAGES.contains(&lang.as_str()) {
                lexicon.insert(w, lang, [SememeId(k)])?;
            }
        }
    }

    let mut distractors: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    let mut synonym_pool: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for lang in &params.languages {
        let han = is_han_language(lang);
        let d = (0..60)
            .map(|_| if han { words.han(&mut rng, &filler_pool) } else { words.latin(&mut rng, 2, "") })
            .collect();
        distractors.insert(lang.as_str(), d);
        let s = (0..params.synsets.clamp(50, 300))
            .map(|_| if han { words.han(&mut rng, &filler_pool) } else { words.latin(&mut rng, 2, "n") })
            .collect();
        synonym_pool.insert(lang.as_str(), s);
    }

    let centres: Vec<Vec<f64>> = (0..params.sememes)
        .map(|_| gaussian(&mut rng, params.image_dim, params.image_signal))
        .collect();

    let q = params.inclusion_probabilities();
    let popularity = params.popularity();
    let pop_total: f64 = popularity.iter().sum();

    let mut images = EmbeddingStore::new(params.image_dim);
    let mut external = EmbeddingStore::new(params.image_dim);
    let mut outliers = BTreeMap::new();
    let mut synsets = Vec::with_capacity(params.synsets);

    for i in 0..params.synsets {
        let id = format!("syn{i:05}");
        let mut gold = BTreeSet::new();
        for (k, qk) in q.iter().enumerate() {
            if rng.random::<f64>() < *qk {
                gold.insert(SememeId(k));
            }
        }
        if gold.is_empty() {
            let mut u = rng.random::<f64>() * pop_total;
            let mut pick = params.sememes - 1;
            for (k, w) in popularity.iter().enumerate() {
                if u < *w {
                    pick = k;
                    break;
                }
                u -= w;
            }
            gold.insert(SememeId(pick));
        }
        let gold_list: Vec<SememeId> = gold.iter().copied().collect();

        let pos = match rng.random::<f64>() {
            u if u < 0.67 => PartOfSpeech::Noun,
            u if u < 0.81 => PartOfSpeech::Verb,
            u if u < 0.97 => PartOfSpeech::Adj,
            _ => PartOfSpeech::Adv,
        };

        let mut entries = BTreeMap::new();
        for (li, lang) in params.languages.iter().enumerate() {
            let han = is_han_language(lang);
            let pool = &synonym_pool[lang.as_str()];
            let n_syn = rng.random_range(1..=3);
            let synonyms: Vec<String> = (0..n_syn).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect();
            let has_gloss = li == 0 || rng.random::<f64>() >= params.gloss_missing_rate;
            let gloss = has_gloss.then(|| {
                let mut toks: Vec<String> = gold_list
                    .iter()
                    .filter(|_| rng.random::<f64>() < params.gloss_signal)
                    .map(|s| indicative[s.0][lang].clone())
                    .collect();
                let d = &distractors[lang.as_str()];
                for _ in 0..params.distractors {
                    toks.push(d[rng.random_range(0..d.len())].clone());
                }
                toks.shuffle(&mut rng);
                if han {
                    toks.concat()
                } else {
                    let mut text = toks.join(" ");
                    if let Some(first) = text.get(0..1) {
                        text.replace_range(0..1, &first.to_uppercase());
                    }
                    text
                }
            });
            entries.insert(lang.clone(), MonolingualEntry { synonyms, gloss });
        }

        let mut image_ids = Vec::new();
        let mut external_key = None;
        if params.images_per_synset > 0 && rng.random::<f64>() < params.image_fraction {
            let n = params.images_per_synset;
            let n_out = (params.outlier_fraction * n as f64).round() as usize;
            let mut planted = Vec::new();
            for j in 0..n {
                let img_id = format!("{id}/img{j}");
                let v = if j >= n - n_out {
                    planted.push(img_id.clone());
                    gaussian(&mut rng, params.image_dim, params.outlier_scale)
                } else {
                    let k = gold_list[rng.random_range(0..gold_list.len())];
                    let noise = gaussian(&mut rng, params.image_dim, params.image_noise);
                    centres[k.0].iter().zip(noise).map(|(c, e)| c + e).collect()
                };
                let v: Vec<f64> = v.into_iter().map(round6).collect();
                image_ids.push(images.push(&img_id, &v)?);
            }
            if !planted.is_empty() {
                outliers.insert(id.clone(), planted);
            }
            if rng.random::<f64>() < params.external_fraction {
                let key = format!("ext:{id}");
                for _ in 0..params.external_images {
                    let k = gold_list[rng.random_range(0..gold_list.len())];
                    let noise = gaussian(&mut rng, params.image_dim, 0.5 * params.image_noise);
                    let v: Vec<f64> = centres[k.0].iter().zip(noise).map(|(c, e)| round6(c + e)).collect();
                    external.push(&key, &v)?;
                }
                external_key = Some(key);
            }
        }
        // Planted outliers sit at the tail; shuffle so position carries no signal.
        image_ids.shuffle(&mut rng);

        synsets.push(Synset {
            id,
            pos,
            entries,
            gold_sememes: gold,
            images: image_ids,
            external_key,
        });
    }

    let mut order: Vec<usize> = (0..synsets.len()).collect();
    order.shuffle(&mut rng);
    let n_valid = (params.valid_fraction * synsets.len() as f64).round() as usize;
    let n_test = (params.test_fraction * synsets.len() as f64).round() as usize;
    let n_train = synsets.len() - n_valid - n_test;
    let ids = |r: &[usize]| -> Vec<String> {
        let mut v: Vec<String> = r.iter().map(|&i| synsets[i].id.clone()).collect();
        v.sort();
        v
    };
    let split = DatasetSplit {
        train: ids(&order[..n_train]),
        valid: ids(&order[n_train..n_train + n_valid]),
        test: ids(&order[n_train + n_valid..]),
    };

    let indicative_tokens = indicative
        .into_iter()
        .enumerate()
        .map(|(k, m)| (labels[k].clone(), m))
        .collect();
    let manifest = FixtureManifest {
        seed,
        params: params.clone(),
        outliers,
        indicative_tokens,
    };
    Ok(Fixture {
        corpus: Corpus::new(synsets, inventory, split)?,
        lexicon,
        images,
        external,
        manifest,
    })
}

/// A single image bag with known planted outliers.
#[derive(Debug, Clone)]
pub struct PlantedSet {
    pub ids: Vec<ImageId>,
    pub vectors: Vec<Vec<f64>>,
    pub outliers: BTreeSet<ImageId>,
}

/// Draws `inliers` points from one unit-variance Gaussian cluster and
/// `outliers` points on a shell `distance` standard deviations from its centre.
pub fn planted_outlier_set(seed: u64, inliers: usize, outliers: usize, dim: usize, distance: f64) -> PlantedSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre = gaussian(&mut rng, dim, 3.0);
    let mut items = Vec::with_capacity(inliers + outliers);
    for j in 0..inliers {
        let noise = gaussian(&mut rng, dim, 1.0);
        items.push((ImageId(format!("in{j}")), centre.iter().zip(noise).map(|(c, e)| c + e).collect(), false));
    }
    for j in 0..outliers {
        let dir = gaussian(&mut rng, dim, 1.0);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let v = centre.iter().zip(&dir).map(|(c, d)| c + distance * d / norm).collect();
        items.push((ImageId(format!("out{j}")), v, true));
    }
    items.shuffle(&mut rng);
    PlantedSet {
        outliers: items.iter().filter(|(_, _, o)| *o).map(|(id, _, _)| id.clone()).collect(),
        ids: items.iter().map(|(id, _, _)| id.clone()).collect(),
        vectors: items.into_iter().map(|(_, v, _)| v).collect(),
    }
}
