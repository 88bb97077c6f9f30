use sememe_predict::curation::CurationConfig;
use sememe_predict::dataset::{generate_fixture, FixtureParams, SememeInventory};
use sememe_predict::model::SememeModel;
use sememe_predict::training::{build_image_sets, score_synsets, train_spbs, TrainConfig};

#[test]
fn checkpoint_round_trip_reproduces_scores() -> anyhow::Result<()> {
    let fx = generate_fixture(4, &FixtureParams { synsets: 100, sememes: 10, ..Default::default() })?;
    let cfg = TrainConfig {
        epochs: 2,
        mcsp: false,
        ..TrainConfig::desk()
    };
    let images = build_image_sets(&fx.corpus, Some(&fx.images), Some(&fx.external), cfg.effective_images(), &CurationConfig::default())?;
    let model = train_spbs(&fx.corpus, None, &images, fx.images.dim(), &cfg)?.model;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("m.json");
    model.save(&path, &fx.corpus.inventory)?;
    let loaded = SememeModel::load(&path, &fx.corpus.inventory)?;

    let all: Vec<_> = fx.corpus.synsets.iter().collect();
    let a = score_synsets(&model, &all, &images, &cfg)?;
    let b = score_synsets(&loaded, &all, &images, &cfg)?;
    assert_eq!(a.len(), 100);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.scores, y.scores, "{}", x.id);
    }

    let other = SememeInventory::new((0..10).map(|k| format!("other{k}")))?;
    assert!(SememeModel::load(&path, &other).is_err());
    Ok(())
}
