//! Save a checkpoint, reload it, and predict sememes for one synset.

use sememe_predict::curation::CurationConfig;
use sememe_predict::dataset::{generate_fixture, FixtureParams, SplitName};
use sememe_predict::model::{select_sememes, SememeModel};
use sememe_predict::sequencing::build_multilingual_sequence;
use sememe_predict::training::{build_image_sets, run_training, TrainConfig};

fn main() -> anyhow::Result<()> {
    let fx = generate_fixture(1, &FixtureParams { synsets: 200, sememes: 12, ..Default::default() })?;
    let cfg = TrainConfig {
        epochs: 6,
        mcsp: false,
        ..TrainConfig::desk()
    };
    let images = build_image_sets(&fx.corpus, Some(&fx.images), Some(&fx.external), cfg.effective_images(), &CurationConfig::default())?;
    let trained = run_training(&fx.corpus, None, &images, fx.images.dim(), &cfg)?.model;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.ckpt.json");
    trained.save(&path, &fx.corpus.inventory)?;
    let model = SememeModel::load(&path, &fx.corpus.inventory)?;

    let inv = &fx.corpus.inventory;
    for synset in fx.corpus.split_synsets(SplitName::Test).into_iter().take(3) {
        let seq = build_multilingual_sequence(synset, &cfg.language_order, cfg.segment_options())?;
        let p = model.predict(&seq, images.get(&synset.id))?;
        let predicted = select_sememes(&p.scores, cfg.threshold);
        println!("{}", synset.id);
        println!("  gold      {:?}", inv.labels_of(&synset.gold_sememes));
        println!("  predicted {:?}", inv.labels_of(&predicted));
        let attention: Vec<String> = p.attention.0.iter().map(|a| format!("{a:.2}")).collect();
        println!("  attention [{}]", attention.join(", "));
    }
    Ok(())
}
