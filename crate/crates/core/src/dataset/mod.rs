//! Corpus schema, loading and validation.
//!
//! A corpus directory holds:
//!
//! ```text
//! corpus.jsonl    one synset record per line
//! sememes.txt     the sememe inventory, one label per line (optional)
//! split.json      {"train": [...], "valid": [...], "test": [...]} (optional)
//! lexicon.tsv     word <TAB> language <TAB> comma-joined sememe labels (optional)
//! images.emb      corpus image embeddings (optional)
//! external.emb    external image embeddings keyed by alignment key (optional)
//! ```
//!
//! When `sememes.txt` is absent the inventory is the sorted set of labels seen
//! in the corpus. When `split.json` is absent every synset is in the training split.

mod fixture;
mod lexicon;
mod record;
mod store;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use fixture::{generate_fixture, planted_outlier_set, Fixture, FixtureManifest, FixtureParams, PlantedSet};
pub use lexicon::WordSememeLexicon;
pub use record::SynsetRecord;
pub use store::{EmbeddingStore, ImageId};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const SEMEMES_FILE: &str = "sememes.txt";
pub const SPLIT_FILE: &str = "split.json";
pub const LEXICON_FILE: &str = "lexicon.tsv";
pub const IMAGES_FILE: &str = "images.emb";
pub const EXTERNAL_FILE: &str = "external.emb";

pub const DEFAULT_LANGUAGES: [&str; 3] = ["en", "fr", "zh"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SememeId(pub usize);

impl fmt::Display for SememeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

pub type SememeSet = BTreeSet<SememeId>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sememe {
    pub id: SememeId,
    pub label: String,
}

/// The sememe label space with per-sememe training frequencies.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SememeInventory {
    sememes: Vec<Sememe>,
    by_label: HashMap<String, SememeId>,
    frequency: Vec<usize>,
}

impl SememeInventory {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut inv = SememeInventory::default();
        for (i, label) in labels.into_iter().enumerate() {
            let label = label.into();
            if label.is_empty() {
                return Err(Error::Config(format!("sememe {i} has an empty label")));
            }
            let id = SememeId(i);
            if inv.by_label.insert(label.clone(), id).is_some() {
                return Err(Error::Config(format!("duplicate sememe label {label:?}")));
            }
            inv.sememes.push(Sememe { id, label });
        }
        inv.frequency = vec![0; inv.sememes.len()];
        Ok(inv)
    }

    pub fn len(&self) -> usize {
        self.sememes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sememes.is_empty()
    }

    pub fn sememes(&self) -> &[Sememe] {
        &self.sememes
    }

    pub fn label(&self, id: SememeId) -> &str {
        &self.sememes[id.0].label
    }

    pub fn id(&self, label: &str) -> Option<SememeId> {
        self.by_label.get(label).copied()
    }

    pub fn contains(&self, id: SememeId) -> bool {
        id.0 < self.sememes.len()
    }

    pub fn frequency(&self, id: SememeId) -> usize {
        self.frequency[id.0]
    }

    pub fn frequencies(&self) -> &[usize] {
        &self.frequency
    }

    /// Replaces the frequency table with counts over `train`.
    pub fn recount<'a>(&mut self, train: impl IntoIterator<Item = &'a Synset>) {
        self.frequency = vec![0; self.sememes.len()];
        for synset in train {
            for s in &synset.gold_sememes {
                self.frequency[s.0] += 1;
            }
        }
    }

    /// SHA-256 over the ordered label list; frequencies do not participate.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for s in &self.sememes {
            hasher.update(s.label.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }

    pub fn labels_of(&self, set: &SememeSet) -> Vec<String> {
        set.iter().map(|&s| self.label(s).to_string()).collect()
    }
}

/// Builds an inventory over `labels` whose frequencies count `train`.
pub fn build_inventory<'a, I, S>(labels: I, train: impl IntoIterator<Item = &'a Synset>) -> Result<SememeInventory>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mut inv = SememeInventory::new(labels)?;
    inv.recount(train);
    Ok(inv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartOfSpeech {
    Noun,
    Verb,
    Adj,
    Adv,
}

impl PartOfSpeech {
    pub const ALL: [PartOfSpeech; 4] = [
        PartOfSpeech::Noun,
        PartOfSpeech::Verb,
        PartOfSpeech::Adj,
        PartOfSpeech::Adv,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PartOfSpeech::Noun => "noun",
            PartOfSpeech::Verb => "verb",
            PartOfSpeech::Adj => "adj",
            PartOfSpeech::Adv => "adv",
        }
    }
}

impl fmt::Display for PartOfSpeech {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonolingualEntry {
    pub synonyms: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gloss: Option<String>,
}

impl MonolingualEntry {
    pub fn new<S: Into<String>>(synonyms: impl IntoIterator<Item = S>, gloss: Option<&str>) -> Self {
        MonolingualEntry {
            synonyms: synonyms.into_iter().map(Into::into).collect(),
            gloss: gloss.map(str::to_string),
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.synonyms.iter().any(|s| s.trim().is_empty()) {
            return Err("empty synonym".into());
        }
        if matches!(&self.gloss, Some(g) if g.trim().is_empty()) {
            return Err("gloss present but empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Synset {
    pub id: String,
    pub pos: PartOfSpeech,
    /// Keyed by language code.
    pub entries: BTreeMap<String, MonolingualEntry>,
    pub gold_sememes: SememeSet,
    pub images: Vec<ImageId>,
    pub external_key: Option<String>,
}

impl Synset {
    pub fn entry(&self, lang: &str) -> Option<&MonolingualEntry> {
        self.entries.get(lang)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for SplitName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "valid" | "validation" | "dev" => Ok(SplitName::Valid),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

impl DatasetSplit {
    pub fn ids(&self, name: SplitName) -> &[String] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Valid => &self.valid,
            SplitName::Test => &self.test,
        }
    }

    /// Checks pairwise disjointness and exact coverage of `corpus_ids`.
    pub fn validate<'a>(&self, corpus_ids: impl IntoIterator<Item = &'a str>) -> std::result::Result<(), String> {
        let mut seen: HashMap<&str, &str> = HashMap::new();
        for (name, ids) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            for id in ids {
                if let Some(prev) = seen.insert(id.as_str(), name) {
                    return Err(format!("synset {id} listed in both {prev} and {name}"));
                }
            }
        }
        let corpus: HashSet<&str> = corpus_ids.into_iter().collect();
        for id in seen.keys() {
            if !corpus.contains(id) {
                return Err(format!("split references unknown synset {id}"));
            }
        }
        if let Some(missing) = corpus.iter().find(|id| !seen.contains_key(*id)) {
            return Err(format!("synset {missing} is not assigned to any split"));
        }
        Ok(())
    }
}

/// A validated, immutable corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub synsets: Vec<Synset>,
    pub inventory: SememeInventory,
    pub split: DatasetSplit,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Validates the split and recomputes inventory frequencies over the train split.
    pub fn new(synsets: Vec<Synset>, mut inventory: SememeInventory, split: DatasetSplit) -> Result<Self> {
        let mut index = HashMap::with_capacity(synsets.len());
        for (i, s) in synsets.iter().enumerate() {
            if index.insert(s.id.clone(), i).is_some() {
                return Err(Error::validation(CORPUS_FILE, i + 1, format!("duplicate synset id {}", s.id)));
            }
            if let Some(bad) = s.gold_sememes.iter().find(|g| !inventory.contains(**g)) {
                return Err(Error::validation(CORPUS_FILE, i + 1, format!("sememe id {bad} outside inventory")));
            }
        }
        split
            .validate(synsets.iter().map(|s| s.id.as_str()))
            .map_err(|m| Error::validation(SPLIT_FILE, 1, m))?;
        inventory.recount(split.train.iter().map(|id| &synsets[index[id]]));
        Ok(Corpus {
            synsets,
            inventory,
            split,
            index,
        })
    }

    pub fn get(&self, id: &str) -> Option<&Synset> {
        self.index.get(id).map(|&i| &self.synsets[i])
    }

    pub fn split_synsets(&self, name: SplitName) -> Vec<&Synset> {
        self.split.ids(name).iter().map(|id| &self.synsets[self.index[id]]).collect()
    }

    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    /// Reads a corpus directory (see module docs).
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let sememes_path = dir.join(SEMEMES_FILE);
        let declared = if sememes_path.exists() {
            let text = fs::read_to_string(&sememes_path).map_err(|e| Error::io(&sememes_path, e))?;
            Some(SememeInventory::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))?)
        } else {
            None
        };

        let corpus_path = dir.join(CORPUS_FILE);
        let file = fs::File::open(&corpus_path).map_err(|e| Error::io(&corpus_path, e))?;
        let records = read_records(BufReader::new(file), CORPUS_FILE)?;

        let inventory = match declared {
            Some(inv) => inv,
            None => {
                let labels: BTreeSet<&str> =
                    records.iter().flat_map(|(_, r)| r.sememes.iter().map(String::as_str)).collect();
                SememeInventory::new(labels)?
            }
        };

        let mut synsets = Vec::with_capacity(records.len());
        for (line, rec) in records {
            synsets.push(rec.into_synset(&inventory, CORPUS_FILE, line)?);
        }

        let split_path = dir.join(SPLIT_FILE);
        let split = if split_path.exists() {
            let text = fs::read_to_string(&split_path).map_err(|e| Error::io(&split_path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::parse(SPLIT_FILE, e.line(), "split", e))?
        } else {
            DatasetSplit {
                train: synsets.iter().map(|s| s.id.clone()).collect(),
                ..Default::default()
            }
        };
        Corpus::new(synsets, inventory, split)
    }

    /// Writes `corpus.jsonl`, `sememes.txt` and `split.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut corpus = Vec::new();
        self.write_jsonl(&mut corpus).map_err(|e| Error::io(dir.join(CORPUS_FILE), e))?;
        write_file(&dir.join(CORPUS_FILE), &corpus)?;

        let mut labels = String::new();
        for s in self.inventory.sememes() {
            labels.push_str(&s.label);
            labels.push('\n');
        }
        write_file(&dir.join(SEMEMES_FILE), labels.as_bytes())?;

        let split = serde_json::to_vec_pretty(&self.split).expect("split serializes");
        write_file(&dir.join(SPLIT_FILE), &split)
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for s in &self.synsets {
            let rec = SynsetRecord::from_synset(s, &self.inventory);
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Parses JSON-lines synset records, skipping blank lines. Returned line numbers are 1-based.
pub fn read_records(reader: impl BufRead, file: &str) -> Result<Vec<(usize, SynsetRecord)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(file, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, SynsetRecord::parse(&line, file, i + 1)?));
    }
    Ok(out)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
