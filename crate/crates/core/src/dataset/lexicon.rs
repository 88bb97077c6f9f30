use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use super::{SememeInventory, SememeSet};
use crate::error::{Error, Result};

pub const LEXICON_LANGUAGES: [&str; 2] = ["en", "zh"];

/// Word-level sememe annotations, one collapsed set per (surface form, language).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordSememeLexicon {
    entries: BTreeMap<(String, String), SememeSet>,
}

impl WordSememeLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds senses for a word; repeated inserts union their sememes.
    pub fn insert(&mut self, word: &str, lang: &str, sememes: impl IntoIterator<Item = super::SememeId>) -> Result<()> {
        if !LEXICON_LANGUAGES.contains(&lang) {
            return Err(Error::Config(format!("lexicon language must be en or zh, got {lang:?}")));
        }
        let set: SememeSet = sememes.into_iter().collect();
        if set.is_empty() {
            return Err(Error::Config(format!("lexicon word {word:?} has no sememes")));
        }
        self.entries
            .entry((word.to_string(), lang.to_string()))
            .or_default()
            .extend(set);
        Ok(())
    }

    pub fn lookup(&self, word: &str, lang: &str) -> Option<&SememeSet> {
        let key = (word.to_string(), lang.to_string());
        self.entries.get(&key).or_else(|| {
            let lower = word.to_lowercase();
            if lower == word {
                None
            } else {
                self.entries.get(&(lower, lang.to_string()))
            }
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self, lang: &str) -> impl Iterator<Item = &str> {
        let lang = lang.to_string();
        self.entries
            .keys()
            .filter(move |(_, l)| *l == lang)
            .map(|(w, _)| w.as_str())
    }

    /// Longest key of `lang`, in chars.
    pub fn max_word_chars(&self, lang: &str) -> usize {
        self.words(lang).map(|w| w.chars().count()).max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &SememeSet)> {
        self.entries.iter().map(|((w, l), s)| (w.as_str(), l.as_str(), s))
    }

    pub fn parse(text: &str, inventory: &SememeInventory, file: &str) -> Result<Self> {
        let mut lex = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(file, line_no, "<row>", format!("expected 3 tab-separated columns, got {}", cols.len())));
            }
            let (word, lang, labels) = (cols[0], cols[1], cols[2]);
            if word.is_empty() {
                return Err(Error::parse(file, line_no, "word", "empty"));
            }
            let mut ids = BTreeSet::new();
            for label in labels.split(',').map(str::trim).filter(|l| !l.is_empty()) {
                ids.insert(
                    inventory
                        .id(label)
                        .ok_or_else(|| Error::validation(file, line_no, format!("unknown sememe label {label:?}")))?,
                );
            }
            lex.insert(word, lang, ids)
                .map_err(|e| Error::validation(file, line_no, e.to_string()))?;
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>, inventory: &SememeInventory) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, inventory, &path.display().to_string())
    }

    pub fn to_tsv(&self, inventory: &SememeInventory) -> String {
        let mut out = String::new();
        for ((word, lang), set) in &self.entries {
            out.push_str(word);
            out.push('\t');
            out.push_str(lang);
            out.push('\t');
            out.push_str(&inventory.labels_of(set).join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SememeId;

    #[test]
    fn polysemy_is_collapsed() {
        let inv = SememeInventory::new(["a", "b", "c"]).unwrap();
        let lex = WordSememeLexicon::parse("bank\ten\ta\nbank\ten\tb,c\n", &inv, "lex").unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(lex.lookup("bank", "en").unwrap().len(), 3);
        assert_eq!(lex.lookup("Bank", "en").unwrap().len(), 3);
        assert!(lex.lookup("bank", "zh").is_none());
    }

    #[test]
    fn rejects_other_languages_and_empty_sets() {
        let inv = SememeInventory::new(["a"]).unwrap();
        assert!(WordSememeLexicon::parse("mot\tfr\ta\n", &inv, "lex").is_err());
        assert!(WordSememeLexicon::parse("w\ten\t\n", &inv, "lex").is_err());
        assert!(WordSememeLexicon::parse("w\ten\tzz\n", &inv, "lex").is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let inv = SememeInventory::new(["a", "b"]).unwrap();
        let mut lex = WordSememeLexicon::new();
        lex.insert("丈夫", "zh", [SememeId(1)]).unwrap();
        lex.insert("man", "en", [SememeId(0), SememeId(1)]).unwrap();
        let back = WordSememeLexicon::parse(&lex.to_tsv(&inv), &inv, "lex").unwrap();
        assert_eq!(back, lex);
        assert_eq!(back.max_word_chars("zh"), 2);
    }
}
