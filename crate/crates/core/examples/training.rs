//! Pre-train and fine-tune the tiny-encoder model on a fixture.
//!
//! ```text
//! cargo run --release --example training
//! ```

use sememe_predict::curation::CurationConfig;
use sememe_predict::dataset::{generate_fixture, EmbeddingStore, FixtureParams};
use sememe_predict::training::{build_image_sets, run_training, TrainConfig};

fn main() -> anyhow::Result<()> {
    let fx = generate_fixture(
        1,
        &FixtureParams {
            synsets: 200,
            sememes: 12,
            ..Default::default()
        },
    )?;
    let cfg = TrainConfig {
        epochs: 8,
        mcsp_epochs: 2,
        ..TrainConfig::desk()
    };
    let images = build_image_sets(
        &fx.corpus,
        Some(&fx.images),
        Some(&fx.external),
        cfg.effective_images(),
        &CurationConfig::default(),
    )?;
    let before = fx.images.content_hash();
    let out = run_training(&fx.corpus, Some(&fx.lexicon), &images, fx.images.dim(), &cfg)?;
    assert_eq!(before, EmbeddingStore::content_hash(&fx.images));

    println!("pre-training losses {:?}", out.manifest.pretrain_losses);
    println!("epoch\ttrain_loss\tvalid_map");
    for e in &out.manifest.epochs {
        println!("{}\t{:.4}\t{:.4}", e.epoch, e.train_loss, e.valid_map.unwrap_or(f64::NAN));
    }
    println!(
        "best epoch {} test MAP {:.4} ({:.1}s, config {})",
        out.manifest.best_epoch,
        out.manifest.test_map.unwrap_or(f64::NAN),
        out.manifest.wall_clock_secs,
        &out.manifest.config_hash[..12]
    );
    Ok(())
}
