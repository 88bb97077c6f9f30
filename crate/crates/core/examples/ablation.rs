//! Component ablations on a fixture whose signal is planted in the glosses.
//!
//! ```text
//! cargo run --release --example ablation
//! ```

use sememe_predict::curation::CurationConfig;
use sememe_predict::dataset::{generate_fixture, FixtureParams};
use sememe_predict::evaluation::{run_ablations, AblationVariant};
use sememe_predict::training::TrainConfig;

fn main() -> anyhow::Result<()> {
    let fx = generate_fixture(
        1,
        &FixtureParams {
            synsets: 200,
            sememes: 12,
            image_signal: 0.0,
            ..Default::default()
        },
    )?;
    let cfg = TrainConfig {
        epochs: 6,
        mcsp_epochs: 2,
        ..TrainConfig::desk()
    };
    let variants = [
        AblationVariant::Full,
        AblationVariant::NoGloss,
        AblationVariant::NoImage,
        AblationVariant::NoMcsp,
    ];
    let report = run_ablations(
        &cfg,
        &fx.corpus,
        Some(&fx.lexicon),
        Some(&fx.images),
        Some(&fx.external),
        &CurationConfig::default(),
        &variants,
    )?;
    print!("{}", report.to_tsv());
    Ok(())
}
