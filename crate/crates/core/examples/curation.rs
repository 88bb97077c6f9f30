//! Outlier filtering and external augmentation of image sets.

use sememe_predict::curation::{
    curate_corpus, filter_outliers, CurationConfig, ImageEmbeddingSet, ImageItem, Provenance,
};
use sememe_predict::dataset::{generate_fixture, planted_outlier_set, FixtureParams};

fn main() -> anyhow::Result<()> {
    let planted = planted_outlier_set(3, 40, 4, 16, 12.0);
    let items = planted
        .ids
        .iter()
        .zip(&planted.vectors)
        .map(|(id, v)| ImageItem {
            id: id.clone(),
            embedding: v.clone(),
            provenance: Provenance::Corpus,
        })
        .collect();
    let set = ImageEmbeddingSet::new("planted", items);
    let cfg = CurationConfig::default();
    let kept = filter_outliers(&set, &cfg)?;
    let kept_ids = kept.ids();
    let removed: Vec<_> = set.ids().into_iter().filter(|id| !kept_ids.contains(id)).collect();
    let hits = removed.iter().filter(|id| planted.outliers.contains(*id)).count();
    println!("removed {} images, {hits} of {} planted outliers", removed.len(), planted.outliers.len());

    let fx = generate_fixture(1, &FixtureParams { synsets: 100, sememes: 10, ..Default::default() })?;
    let curated = curate_corpus(&fx.corpus, &fx.images, Some(&fx.external), &cfg)?;
    let planted_total = fx.manifest.outlier_count();
    let caught: usize = curated
        .records
        .values()
        .map(|r| r.removed.iter().filter(|id| fx.manifest.outliers.get(&r.synset).is_some_and(|o| o.contains(&id.0))).count())
        .sum();
    println!(
        "fixture: removed {} ({caught} of {planted_total} planted), added {} external",
        curated.total_removed(),
        curated.total_added()
    );
    print!("{}", curated.report_tsv().lines().take(6).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
