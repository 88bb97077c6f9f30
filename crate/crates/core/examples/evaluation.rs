//! Threshold tuning, evaluation reports and breakdowns against a frequency baseline.
//!
//! ```text
//! cargo run --release --example evaluation -- /tmp/eval
//! ```

use sememe_predict::curation::CurationConfig;
use sememe_predict::dataset::{generate_fixture, FixtureParams, SplitName};
use sememe_predict::evaluation::{
    breakdown_by_sememe_count, evaluate, frequency_baseline, tune_threshold, EvalConfig,
};
use sememe_predict::training::{build_image_sets, run_training, score_synsets, TrainConfig};

fn main() -> anyhow::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "eval".into());
    let fx = generate_fixture(1, &FixtureParams { synsets: 200, sememes: 12, ..Default::default() })?;
    let cfg = TrainConfig {
        epochs: 8,
        mcsp: false,
        ..TrainConfig::desk()
    };
    let images = build_image_sets(&fx.corpus, Some(&fx.images), Some(&fx.external), cfg.effective_images(), &CurationConfig::default())?;
    let model = run_training(&fx.corpus, None, &images, fx.images.dim(), &cfg)?.model;

    let valid = fx.corpus.split_synsets(SplitName::Valid);
    let test = fx.corpus.split_synsets(SplitName::Test);
    let mut eval_cfg = EvalConfig::default();
    let valid_scores = score_synsets(&model, &valid, &images, &cfg)?;
    eval_cfg.threshold = tune_threshold(&valid_scores, &eval_cfg.grid, eval_cfg.f1_mode)?;
    println!("tuned threshold {:.2}", eval_cfg.threshold);

    let scored = score_synsets(&model, &test, &images, &cfg)?;
    let report = evaluate(&scored, &fx.corpus.inventory, &eval_cfg)?;
    let baseline = evaluate(&frequency_baseline(&fx.corpus.inventory, &test), &fx.corpus.inventory, &eval_cfg)?;
    println!("model    MAP {:.4} F1 {:.4}", report.overall.map, report.overall.f1);
    println!("baseline MAP {:.4} F1 {:.4}", baseline.overall.map, baseline.overall.f1);
    print!("{}", breakdown_by_sememe_count(&report, &eval_cfg.count_bins).to_tsv());
    println!("errors {:?}", report.errors);

    report.write_all(dir.as_ref(), &fx.corpus.inventory, &eval_cfg)?;
    println!("reports and plots in {dir}");
    Ok(())
}
