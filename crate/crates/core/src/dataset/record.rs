use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{ImageId, MonolingualEntry, PartOfSpeech, SememeInventory, Synset};
use crate::error::{Error, Result};

/// The on-disk shape of one corpus line, with sememes as labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynsetRecord {
    pub id: String,
    pub pos: PartOfSpeech,
    pub entries: BTreeMap<String, MonolingualEntry>,
    pub sememes: Vec<String>,
    #[serde(default)]
    pub images: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_key: Option<String>,
}

fn field<T: DeserializeOwned>(obj: &Map<String, Value>, name: &str, file: &str, line: usize) -> Result<T> {
    let v = obj
        .get(name)
        .ok_or_else(|| Error::parse(file, line, name, "missing field"))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::parse(file, line, name, e))
}

fn optional<T: DeserializeOwned>(obj: &Map<String, Value>, name: &str, file: &str, line: usize) -> Result<Option<T>> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Error::parse(file, line, name, e)),
    }
}

impl SynsetRecord {
    /// Parses one JSON line, naming the offending field on failure.
    pub fn parse(text: &str, file: &str, line: usize) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::parse(file, line, "<record>", e))?;
        let Value::Object(obj) = value else {
            return Err(Error::parse(file, line, "<record>", "expected a JSON object"));
        };
        Ok(SynsetRecord {
            id: field(&obj, "id", file, line)?,
            pos: field(&obj, "pos", file, line)?,
            entries: field(&obj, "entries", file, line)?,
            sememes: optional(&obj, "sememes", file, line)?.unwrap_or_default(),
            images: optional(&obj, "images", file, line)?.unwrap_or_default(),
            external_key: optional(&obj, "external_key", file, line)?,
        })
    }

    pub fn into_synset(self, inventory: &SememeInventory, file: &str, line: usize) -> Result<Synset> {
        if self.id.is_empty() {
            return Err(Error::parse(file, line, "id", "empty id"));
        }
        if self.entries.is_empty() {
            return Err(Error::validation(file, line, format!("synset {} has no monolingual entry", self.id)));
        }
        for (lang, entry) in &self.entries {
            entry
                .check()
                .map_err(|m| Error::validation(file, line, format!("synset {} entry {lang}: {m}", self.id)))?;
        }
        let mut gold = super::SememeSet::new();
        for label in &self.sememes {
            let id = inventory
                .id(label)
                .ok_or_else(|| Error::validation(file, line, format!("unknown sememe label {label:?}")))?;
            gold.insert(id);
        }
        Ok(Synset {
            id: self.id,
            pos: self.pos,
            entries: self.entries,
            gold_sememes: gold,
            images: self.images.into_iter().map(ImageId).collect(),
            external_key: self.external_key,
        })
    }

    pub fn from_synset(s: &Synset, inventory: &SememeInventory) -> Self {
        SynsetRecord {
            id: s.id.clone(),
            pos: s.pos,
            entries: s.entries.clone(),
            sememes: inventory.labels_of(&s.gold_sememes),
            images: s.images.iter().map(|i| i.0.clone()).collect(),
            external_key: s.external_key.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv() -> SememeInventory {
        SememeInventory::new(["human", "family", "male"]).unwrap()
    }

    #[test]
    fn parses_full_record() {
        let line = r#"{"id":"bn:1n","pos":"noun","entries":{"en":{"synonyms":["husband","hubby"],"gloss":"A woman's partner in marriage"}},"sememes":["human","male","male"],"images":["i1"],"external_key":"n1"}"#;
        let s = SynsetRecord::parse(line, "c", 1).unwrap().into_synset(&inv(), "c", 1).unwrap();
        assert_eq!(s.gold_sememes.len(), 2);
        assert_eq!(s.images[0].0, "i1");
        assert_eq!(s.external_key.as_deref(), Some("n1"));
    }

    #[test]
    fn names_bad_field() {
        let line = r#"{"id":"x","pos":"pronoun","entries":{}}"#;
        match SynsetRecord::parse(line, "c", 7) {
            Err(Error::Parse { line: 7, field, .. }) => assert_eq!(field, "pos"),
            other => panic!("{other:?}"),
        }
        match SynsetRecord::parse(r#"{"pos":"noun","entries":{}}"#, "c", 2) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "id"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_label_is_validation_error() {
        let line = r#"{"id":"x","pos":"noun","entries":{"en":{"synonyms":["a"],"gloss":"b"}},"sememes":["ghost"]}"#;
        let err = SynsetRecord::parse(line, "c", 3).unwrap().into_synset(&inv(), "c", 3).unwrap_err();
        assert!(matches!(err, Error::Validation { line: 3, .. }), "{err}");
    }

    #[test]
    fn rejects_empty_entries_and_synonyms() {
        let no_entry = r#"{"id":"x","pos":"noun","entries":{}}"#;
        assert!(SynsetRecord::parse(no_entry, "c", 1).unwrap().into_synset(&inv(), "c", 1).is_err());
        let empty_syn = r#"{"id":"x","pos":"noun","entries":{"en":{"synonyms":[""],"gloss":"g"}}}"#;
        assert!(SynsetRecord::parse(empty_syn, "c", 1).unwrap().into_synset(&inv(), "c", 1).is_err());
        let empty_gloss = r#"{"id":"x","pos":"noun","entries":{"en":{"synonyms":["a"],"gloss":" "}}}"#;
        assert!(SynsetRecord::parse(empty_gloss, "c", 1).unwrap().into_synset(&inv(), "c", 1).is_err());
    }
}
