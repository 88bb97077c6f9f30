use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageId(pub String);

impl From<&str> for ImageId {
    fn from(s: &str) -> Self {
        ImageId(s.to_string())
    }
}

impl std::fmt::Display for ImageId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Precomputed, frozen image embeddings.
///
/// Text format: a `dim=<d>` header, then one `id v1 v2 ... vd` line per image.
/// For external stores the id is the alignment key, and a key may occur on
/// several lines (one per external image); lines are addressed as `key#n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<ImageId>,
    data: Vec<f64>,
    index: HashMap<ImageId, usize>,
    by_key: HashMap<String, Vec<usize>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
            by_key: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Appends a vector under `key`. The stored id is `key` for the first
    /// vector and `key#n` for the n-th repeat.
    pub fn push(&mut self, key: &str, vector: &[f64]) -> Result<ImageId> {
        if vector.len() != self.dim {
            return Err(Error::Contract(format!(
                "embedding for {key} has dimension {}, store expects {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("embedding for {key} is not finite")));
        }
        let slot = self.ids.len();
        let repeats = self.by_key.entry(key.to_string()).or_default();
        let id = if repeats.is_empty() {
            ImageId(key.to_string())
        } else {
            ImageId(format!("{key}#{}", repeats.len()))
        };
        repeats.push(slot);
        self.index.insert(id.clone(), slot);
        self.ids.push(id.clone());
        self.data.extend_from_slice(vector);
        Ok(id)
    }

    pub fn get(&self, id: &ImageId) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// All vectors stored under an alignment key, in file order.
    pub fn by_key(&self, key: &str) -> Vec<(&ImageId, &[f64])> {
        self.by_key
            .get(key)
            .map(|slots| slots.iter().map(|&i| (&self.ids[i], self.row(i))).collect())
            .unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ImageId, &[f64])> {
        self.ids.iter().enumerate().map(|(i, id)| (id, self.row(i)))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("dim={}\n", self.dim);
        for (i, id) in self.ids.iter().enumerate() {
            let key = id.0.split('#').next().unwrap_or(&id.0);
            out.push_str(key);
            for v in self.row(i) {
                write!(out, " {v}").expect("string write");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, header)) = lines.next() else {
            return Ok(EmbeddingStore::new(0));
        };
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| Error::parse(file, 1, "dim", format!("expected `dim=<d>` header, got {header:?}")))?;
        let mut store = EmbeddingStore::new(dim);
        let mut buf = Vec::with_capacity(dim);
        for (i, line) in lines {
            let mut parts = line.split_whitespace();
            let key = parts.next().expect("nonblank line");
            buf.clear();
            for tok in parts {
                buf.push(
                    tok.parse::<f64>()
                        .map_err(|e| Error::parse(file, i + 1, "vector", format!("{tok:?}: {e}")))?,
                );
            }
            store
                .push(key, &buf)
                .map_err(|e| Error::validation(file, i + 1, e.to_string()))?;
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        super::write_file(path.as_ref(), self.to_text().as_bytes())
    }

    /// SHA-256 of the canonical text serialization.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let mut s = EmbeddingStore::new(3);
        s.push("a", &[0.1, -2.5e-9, 1.0 / 3.0]).unwrap();
        s.push("k", &[1.0, 2.0, 3.0]).unwrap();
        s.push("k", &[4.0, 5.0, 6.0]).unwrap();
        let back = EmbeddingStore::parse(&s.to_text(), "t").unwrap();
        assert_eq!(back, s);
        assert_eq!(back.by_key("k").len(), 2);
        assert_eq!(back.get(&ImageId("k#1".into())).unwrap(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn rejects_wrong_dimension() {
        assert!(EmbeddingStore::parse("dim=2\na 1 2 3\n", "t").is_err());
        assert!(EmbeddingStore::parse("bogus\n", "t").is_err());
    }

    #[test]
    fn header_dim_1000() {
        let line: String = (0..1000).map(|i| format!(" {}", i as f64 * 0.5)).collect();
        let s = EmbeddingStore::parse(&format!("dim=1000\nimg{line}\n"), "t").unwrap();
        assert_eq!(s.get(&"img".into()).unwrap().len(), 1000);
    }
}
