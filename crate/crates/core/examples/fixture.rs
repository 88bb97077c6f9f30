//! Generate a synthetic corpus and write it to a directory.
//!
//! ```text
//! cargo run --example fixture -- /tmp/fixture
//! ```

use sememe_predict::dataset::{generate_fixture, Corpus, FixtureParams, SplitName};

fn main() -> anyhow::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "fixture".into());
    let params = FixtureParams {
        synsets: 200,
        sememes: 12,
        ..Default::default()
    };
    let fx = generate_fixture(1, &params)?;
    fx.save(&dir)?;

    let corpus = Corpus::load(&dir)?;
    assert_eq!(corpus, fx.corpus);
    println!(
        "{} synsets ({} train / {} valid / {} test), {} images, {} planted outliers",
        corpus.len(),
        corpus.split_synsets(SplitName::Train).len(),
        corpus.split_synsets(SplitName::Valid).len(),
        corpus.split_synsets(SplitName::Test).len(),
        fx.images.len(),
        fx.manifest.outlier_count()
    );
    println!("sememe\ttrain_frequency\texpected_marginal");
    for (s, p) in corpus.inventory.sememes().iter().zip(params.expected_marginals()) {
        println!("{}\t{}\t{:.3}", s.label, corpus.inventory.frequency(s.id), p);
    }

    let first = &corpus.synsets[0];
    println!("\nfirst synset {} gold {:?}", first.id, corpus.inventory.labels_of(&first.gold_sememes));
    for (lang, entry) in &first.entries {
        println!("  {lang}: {:?}", entry);
    }
    Ok(())
}
