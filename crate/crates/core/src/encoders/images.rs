use crate::curation::{ImageEmbeddingSet, ImageItem, Provenance};
use crate::dataset::{EmbeddingStore, ImageId};
use crate::error::{Error, Result};

/// Backbone input side length for corpus images.
pub const CORPUS_IMAGE_SIZE: u32 = 256;
/// Backbone input side length for externally aligned images.
pub const EXTERNAL_IMAGE_SIZE: u32 = 224;

/// Source of frozen image embeddings. Implementations must be pure lookups:
/// training never writes back through this trait.
pub trait ImageEmbeddingProvider: Sync {
    fn dim(&self) -> usize;
    fn embedding(&self, id: &ImageId) -> Option<Vec<f64>>;
}

impl ImageEmbeddingProvider for EmbeddingStore {
    fn dim(&self) -> usize {
        EmbeddingStore::dim(self)
    }

    fn embedding(&self, id: &ImageId) -> Option<Vec<f64>> {
        self.get(id).map(<[f64]>::to_vec)
    }
}

/// Looks up one embedding per id, preserving order. Unknown ids are skipped
/// with a warning, or rejected when `strict`.
pub fn embed_images(
    synset_id: &str,
    ids: &[ImageId],
    provider: &dyn ImageEmbeddingProvider,
    strict: bool,
) -> Result<ImageEmbeddingSet> {
    let mut items = Vec::with_capacity(ids.len());
    for id in ids {
        match provider.embedding(id) {
            Some(embedding) => items.push(ImageItem {
                id: id.clone(),
                embedding,
                provenance: Provenance::Corpus,
            }),
            None if strict => {
                return Err(Error::Validation {
                    file: "images".into(),
                    line: 0,
                    message: format!("synset {synset_id}: image {id} not found in the embedding store"),
                })
            }
            None => log::warn!("synset {synset_id}: image {id} not found, skipped"),
        }
    }
    Ok(ImageEmbeddingSet::new(synset_id, items))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_preserving_and_skipping() {
        let mut store = EmbeddingStore::new(2);
        store.push("a", &[1.0, 2.0]).unwrap();
        store.push("b", &[3.0, 4.0]).unwrap();
        let ids: Vec<ImageId> = ["b", "zz", "a"].iter().map(|s| ImageId::from(*s)).collect();
        let set = embed_images("s", &ids, &store, false).unwrap();
        assert_eq!(set.items.len(), 2);
        assert_eq!(set.items[0].embedding, [3.0, 4.0]);
        assert_eq!(set.items[1].id.0, "a");
        assert!(embed_images("s", &ids, &store, true).is_err());
        assert!(embed_images("s", &[], &store, true).unwrap().items.is_empty());
    }
}
