//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one status line.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sememe_predict::curation::{filter_outliers, CurationConfig, ImageEmbeddingSet, ImageItem, Provenance};
use sememe_predict::dataset::{
    generate_fixture, planted_outlier_set, Fixture, FixtureParams, MonolingualEntry, PartOfSpeech, SememeId,
    SememeInventory, SememeSet, SplitName, Synset,
};
use sememe_predict::encoders::{EncoderConfig, TextEncoder, TextRepresentation, Vocabulary};
use sememe_predict::evaluation::{
    average_precision, evaluate, f1_of_sets, frequency_baseline, run_ablations, tune_threshold, AblationVariant,
    EvalConfig, F1Mode, ScoredSynset,
};
use sememe_predict::model::{attend_images, multi_hot, spbs_loss, Example, ModelConfig, PredictionScores, SememeModel};
use sememe_predict::sequencing::{apply_mcsp_mask, build_multilingual_sequence, mcsp_candidates, SegmentOptions};
use sememe_predict::training::{build_image_sets, run_training, score_synsets, ImageSets, TrainConfig, TrainOutcome};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn set(ids: impl IntoIterator<Item = usize>) -> SememeSet {
    ids.into_iter().map(SememeId).collect()
}

fn languages() -> Vec<String> {
    ["en", "fr", "zh"].iter().map(|s| s.to_string()).collect()
}

// ---------------------------------------------------------------- 1

/// Rank of each sememe by direct counting: higher score first, smaller id on ties.
fn brute_ap(p: &[f64], gold: &SememeSet) -> f64 {
    let rank = |s: usize| 1 + (0..p.len()).filter(|&j| p[j] > p[s] || (p[j] == p[s] && j < s)).count();
    let mut total = 0.0;
    for g in gold {
        let r = rank(g.0);
        let hits = gold.iter().filter(|h| rank(h.0) <= r).count();
        total += hits as f64 / r as f64;
    }
    total / gold.len() as f64
}

fn brute_f1(p: &[f64], gold: &SememeSet, delta: f64) -> f64 {
    let pred: Vec<usize> = (0..p.len()).filter(|&j| p[j] > delta).collect();
    let tp = pred.iter().filter(|j| gold.contains(&SememeId(**j))).count() as f64;
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (pred.len() + gold.len()) as f64
    }
}

fn metric_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut scored = Vec::new();
    let mut brute_map = 0.0;
    let mut brute_f1_sum = 0.0;
    let size = 10;
    let inventory = SememeInventory::new((0..size).map(|k| format!("s{k}"))).unwrap();
    for i in 0..200 {
        let n = rng.random_range(1..=size);
        // Coarse scores force ties.
        let p: Vec<f64> = (0..size)
            .map(|j| if j < n { (rng.random_range(1..10) as f64) / 10.0 } else { 0.0 })
            .collect();
        let k = rng.random_range(1..=n);
        let mut gold = SememeSet::new();
        while gold.len() < k {
            gold.insert(SememeId(rng.random_range(0..n)));
        }
        let ap = average_precision(&PredictionScores(p.clone()), &gold).unwrap();
        let b = brute_ap(&p, &gold);
        worst = worst.max((ap - b).abs());
        let pred: SememeSet = (0..size).filter(|&j| p[j] > 0.42).map(SememeId).collect();
        worst = worst.max((f1_of_sets(&pred, &gold) - brute_f1(&p, &gold, 0.42)).abs());
        brute_map += b;
        brute_f1_sum += brute_f1(&p, &gold, 0.42);
        scored.push(ScoredSynset {
            id: format!("b{i}"),
            pos: PartOfSpeech::Noun,
            gold,
            scores: PredictionScores(p),
        });
    }
    let report = evaluate(&scored, &inventory, &EvalConfig::default()).unwrap();
    worst = worst.max((report.overall.map - brute_map / 200.0).abs());
    worst = worst.max((report.overall.f1 - brute_f1_sum / 200.0).abs());
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs < 10.0,
        format!("max |diff| {worst:.2e} (tol 1e-9) over 200 instances, {secs:.2}s (limit 10s)"),
    )
}

// ---------------------------------------------------------------- 2

fn grammar() -> Outcome {
    let synset = Synset {
        id: "husband".into(),
        pos: PartOfSpeech::Noun,
        entries: BTreeMap::from([
            ("en".to_string(), MonolingualEntry::new(["husband", "hubby"], Some("A woman's partner in marriage"))),
            (
                "fr".to_string(),
                MonolingualEntry::new(["mari", "époux", "marié"], Some("Partenaire masculin dans un mariage")),
            ),
        ]),
        gold_sememes: SememeSet::new(),
        images: vec![],
        external_key: None,
    };
    let expected = "[/s] husband | hubby : A woman's partner in marriage [/s] [/s] mari | époux | marié : Partenaire masculin dans un mariage [/s]";
    let got = build_multilingual_sequence(&synset, &languages(), SegmentOptions::default()).unwrap();
    let pass = got.text.as_bytes() == expected.as_bytes() && got.text.matches("[/s]").count() == 4;
    outcome(pass, format!("{:?}", got.text))
}

// ---------------------------------------------------------------- 3

fn attention() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = Vec::new();
    for case in 0..1000 {
        let d = rng.random_range(1..=8);
        let m = rng.random_range(0..=6);
        let b_t = TextRepresentation((0..d).map(|_| rng.random_range(-2.0..2.0)).collect());
        let imgs: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let (b_i, alpha) = attend_images(&b_t, &imgs).unwrap();
        if m == 0 {
            if b_i.0.iter().any(|v| *v != 0.0) || !alpha.0.is_empty() {
                failures.push(format!("case {case}: m = 0 gave nonzero b_i"));
            }
            continue;
        }
        let sum: f64 = alpha.0.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            failures.push(format!("case {case}: sum alpha = {sum}"));
        }
        if m == 1 && (alpha.0[0] - 1.0).abs() > 1e-12 {
            failures.push(format!("case {case}: singleton alpha = {}", alpha.0[0]));
        }
        let mut perm: Vec<usize> = (0..m).collect();
        perm.reverse();
        perm.rotate_left(rng.random_range(0..m));
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&j| imgs[j].clone()).collect();
        let (b_i2, alpha2) = attend_images(&b_t, &shuffled).unwrap();
        for (k, &j) in perm.iter().enumerate() {
            if (alpha2.0[k] - alpha.0[j]).abs() > 1e-9 {
                failures.push(format!("case {case}: alpha not permutation-equivariant"));
                break;
            }
        }
        if b_i.0.iter().zip(&b_i2.0).any(|(a, b)| (a - b).abs() > 1e-9) {
            failures.push(format!("case {case}: b_i changed under permutation"));
        }
    }
    let n = failures.len();
    outcome(
        n == 0,
        format!("1000 cases, {n} failures{}", failures.first().map_or(String::new(), |f| format!(" (first: {f})"))),
    )
}

// ---------------------------------------------------------------- 4

fn gradient_check() -> Outcome {
    let pool = ["ka", "lo", "mi", "nu", "so", "te", "vi", "ze"];
    let mut worst: f64 = 0.0;
    let mut worst_name = String::new();
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = if rng.random_bool(0.5) { 4 } else { 8 };
        let num_sememes = rng.random_range(2..=6);
        let image_dim = rng.random_range(2..=5);
        let config = ModelConfig {
            encoder: EncoderConfig {
                hidden,
                layers: rng.random_range(1..=2),
                heads: if rng.random_bool(0.5) { 1 } else { 2 },
                ffn: 2 * hidden,
                max_len: 32,
                ..Default::default()
            },
            image_dim,
            num_sememes,
            use_images: true,
            null_image: false,
        };
        let words: Vec<&str> = (0..rng.random_range(1..=3)).map(|_| pool[rng.random_range(0..pool.len())]).collect();
        let gloss: Vec<&str> = (0..rng.random_range(1..=4)).map(|_| pool[rng.random_range(0..pool.len())]).collect();
        let gloss = gloss.join(" ");
        let synset = Synset {
            id: "g".into(),
            pos: PartOfSpeech::Noun,
            entries: BTreeMap::from([("en".to_string(), MonolingualEntry::new(words, Some(&gloss)))]),
            gold_sememes: set((0..num_sememes).filter(|_| rng.random_bool(0.4))),
            images: vec![],
            external_key: None,
        };
        let seq = build_multilingual_sequence(&synset, &languages(), SegmentOptions::default()).unwrap();
        let vocab = Vocabulary::build([seq.text.as_str()], 1);
        let mut model = SememeModel::new(config, vocab, &mut rng).unwrap();
        let m = rng.random_range(0..=3);
        let images = Array2::from_shape_fn((m, image_dim), |_| rng.random_range(-1.5..1.5));
        let ex = Example {
            input: model.encoder.prepare(&seq),
            images,
            target: multi_hot(&[&synset.gold_sememes], num_sememes),
        };
        let (_, analytic) = model.spbs_step(&ex);
        let h = 1e-6;
        let ids: Vec<_> = model.params.ids().collect();
        for id in ids {
            let shape = model.params.value(id).dim();
            let mut numeric = Array2::<f64>::zeros(shape);
            for idx in 0..numeric.len() {
                let orig = model.params.value(id).as_slice().unwrap()[idx];
                model.params.value_mut(id).as_slice_mut().unwrap()[idx] = orig + h;
                let plus = model.spbs_step(&ex).0;
                model.params.value_mut(id).as_slice_mut().unwrap()[idx] = orig - h;
                let minus = model.spbs_step(&ex).0;
                model.params.value_mut(id).as_slice_mut().unwrap()[idx] = orig;
                numeric.as_slice_mut().unwrap()[idx] = (plus - minus) / (2.0 * h);
            }
            let an = analytic.get(id).cloned().unwrap_or_else(|| Array2::zeros(shape));
            let norm = |a: &Array2<f64>| a.mapv(|v| v * v).sum().sqrt();
            let scale = norm(&an).max(norm(&numeric));
            if scale < 1e-7 {
                continue;
            }
            let rel = norm(&(&an - &numeric)) / scale;
            if rel > worst {
                worst = rel;
                worst_name = format!("{} (seed {seed})", model.params.get(id).name);
            }
        }
    }
    outcome(
        worst < 1e-4,
        format!("worst per-tensor relative error {worst:.2e} at {worst_name} over 50 seeds (tol 1e-4)"),
    )
}

// ---------------------------------------------------------------- 5

fn loss_value() -> Outcome {
    let loss = spbs_loss(&PredictionScores(vec![0.5; 4]), &set([2]), 4).unwrap();
    let err = (loss - std::f64::consts::LN_2).abs();
    outcome(err <= 1e-9, format!("loss {loss:.12}, |loss - ln 2| = {err:.1e} (tol 1e-9)"))
}

// ---------------------------------------------------------------- 6

fn standard_fixture(gloss_signal: f64, image_signal: f64) -> Fixture {
    let params = FixtureParams {
        synsets: 500,
        sememes: 30,
        languages: languages(),
        images_per_synset: 8,
        gloss_signal,
        image_signal,
        ..Default::default()
    };
    generate_fixture(1, &params).unwrap()
}

fn images_for(fx: &Fixture, cfg: &TrainConfig) -> ImageSets {
    build_image_sets(&fx.corpus, Some(&fx.images), Some(&fx.external), cfg.effective_images(), &CurationConfig::default())
        .unwrap()
}

fn learnability(fx: &Fixture) -> (Outcome, TrainOutcome, ImageSets) {
    let test = fx.corpus.split_synsets(SplitName::Test);
    let eval_cfg = EvalConfig::default();
    let baseline = evaluate(&frequency_baseline(&fx.corpus.inventory, &test), &fx.corpus.inventory, &eval_cfg)
        .unwrap()
        .overall
        .map;
    let cfg = TrainConfig::desk();
    let started = Instant::now();
    let images = images_for(fx, &cfg);
    let out = run_training(&fx.corpus, Some(&fx.lexicon), &images, fx.images.dim(), &cfg).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let map = out.manifest.test_map.unwrap_or(0.0);
    let pass = map - baseline >= 0.25 && secs < 900.0 && cfg.epochs <= 20;
    let o = outcome(
        pass,
        format!(
            "test MAP {map:.4} vs frequency baseline {baseline:.4}: margin {:.4} (need >= 0.25), {} epochs, {secs:.1}s (limit 900s)",
            map - baseline,
            cfg.epochs
        ),
    );
    (o, out, images)
}

// ---------------------------------------------------------------- 7

fn ablation_gap(fx: &Fixture, base: &TrainConfig, ablated: AblationVariant) -> (f64, f64) {
    let report = run_ablations(
        base,
        &fx.corpus,
        Some(&fx.lexicon),
        Some(&fx.images),
        Some(&fx.external),
        &CurationConfig::default(),
        &[AblationVariant::Full, ablated.clone()],
    )
    .unwrap();
    let full = report.row("full").and_then(|r| r.test_map).unwrap_or(0.0);
    let other = report.row(&ablated.name()).and_then(|r| r.test_map).unwrap_or(0.0);
    (full, other)
}

fn ablation_direction() -> Outcome {
    let gloss_fx = standard_fixture(1.0, 0.0);
    let (full_g, no_gloss) = ablation_gap(&gloss_fx, &TrainConfig::desk(), AblationVariant::NoGloss);
    // Without gloss signal there is nothing for pre-training to learn, so both arms skip it.
    let image_fx = standard_fixture(0.0, 3.0);
    let image_cfg = TrainConfig {
        mcsp: false,
        ..TrainConfig::desk()
    };
    let (full_i, no_image) = ablation_gap(&image_fx, &image_cfg, AblationVariant::NoImage);
    let (gap_g, gap_i) = (full_g - no_gloss, full_i - no_image);
    outcome(
        gap_g >= 0.05 && gap_i >= 0.05,
        format!(
            "gloss-planted: full {full_g:.4} vs -gloss {no_gloss:.4} (gap {gap_g:.4}); image-planted: full {full_i:.4} vs -image {no_image:.4} (gap {gap_i:.4}); need >= 0.05"
        ),
    )
}

// ---------------------------------------------------------------- 8

fn as_set(vectors: &[Vec<f64>], ids: &[sememe_predict::dataset::ImageId]) -> ImageEmbeddingSet {
    let items = ids
        .iter()
        .zip(vectors)
        .map(|(id, v)| ImageItem {
            id: id.clone(),
            embedding: v.clone(),
            provenance: Provenance::Corpus,
        })
        .collect();
    ImageEmbeddingSet::new("planted", items)
}

fn curation() -> Outcome {
    let cfg = CurationConfig {
        nu: 0.1,
        ..Default::default()
    };
    let mut good = 0;
    let mut false_positives = 0;
    for seed in 0..100 {
        let p = planted_outlier_set(seed, 40, 4, 16, 12.0);
        let set = as_set(&p.vectors, &p.ids);
        let kept: BTreeSet<_> = filter_outliers(&set, &cfg).unwrap().ids().into_iter().collect();
        let removed: Vec<_> = p.ids.iter().filter(|id| !kept.contains(*id)).collect();
        let hits = removed.iter().filter(|id| p.outliers.contains(**id)).count();
        false_positives += removed.len() - hits;
        if hits >= 3 {
            good += 1;
        }
    }
    let mut small_ok = true;
    for n in 1..cfg.min_size {
        let p = planted_outlier_set(7, n, 0, 16, 0.0);
        let set = as_set(&p.vectors, &p.ids);
        small_ok &= filter_outliers(&set, &cfg).unwrap().items == set.items;
    }
    outcome(
        good >= 90 && small_ok,
        format!(
            ">= 3 of 4 outliers removed in {good}/100 seeds (need >= 90), {false_positives} inliers removed in total; sets below {} unchanged: {small_ok}",
            cfg.min_size
        ),
    )
}

// ---------------------------------------------------------------- 9

fn threshold_and_masking(fx: &Fixture, trained: &TrainOutcome, images: &ImageSets) -> Outcome {
    let cfg = TrainConfig::desk();
    let valid = fx.corpus.split_synsets(SplitName::Valid);
    let scored = score_synsets(&trained.model, &valid, images, &cfg).unwrap();
    let grid = EvalConfig::default().grid;
    let tuned = tune_threshold(&scored, &grid, F1Mode::Instance).unwrap();
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for &delta in &grid {
        let f1: f64 = scored.iter().map(|s| brute_f1(&s.scores.0, &s.gold, delta)).sum::<f64>() / scored.len() as f64;
        if f1 > best.0 + 1e-12 {
            best = (f1, delta);
        }
    }

    let lexicon = &fx.lexicon;
    let mut deterministic = true;
    let mut rate_seq = None;
    for s in &fx.corpus.synsets {
        let seq = build_multilingual_sequence(s, &cfg.language_order, SegmentOptions::default()).unwrap();
        let a = apply_mcsp_mask(&seq, lexicon, 0.15, 42).unwrap();
        let b = apply_mcsp_mask(&seq, lexicon, 0.15, 42).unwrap();
        deterministic &= a == b && a.text.as_bytes() == b.text.as_bytes();
        if rate_seq.is_none() && mcsp_candidates(&seq, lexicon).len() >= 10 {
            rate_seq = Some(seq);
        }
    }
    let seq = rate_seq.expect("fixture has a gloss with ten maskable words");
    let candidates = mcsp_candidates(&seq, lexicon).len();
    let masked: usize = (0..1000).map(|seed| apply_mcsp_mask(&seq, lexicon, 0.15, seed).unwrap().targets.len()).sum();
    let rate = masked as f64 / (1000 * candidates) as f64;
    outcome(
        tuned == best.1 && deterministic && (rate - 0.15).abs() <= 0.03,
        format!(
            "tuned {tuned:.2} vs exhaustive argmax {:.2}; masking deterministic: {deterministic}; mask rate {rate:.4} over 1000 trials x {candidates} candidates (0.15 +/- 0.03)",
            best.1
        ),
    )
}

// ---------------------------------------------------------------- 10

fn reproducibility() -> Outcome {
    let fx = generate_fixture(
        5,
        &FixtureParams {
            synsets: 200,
            sememes: 12,
            ..Default::default()
        },
    )
    .unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        mcsp_epochs: 2,
        seed: 7,
        ..TrainConfig::desk()
    };
    let before = fx.images.content_hash();
    let run = || {
        let images = images_for(&fx, &cfg);
        run_training(&fx.corpus, Some(&fx.lexicon), &images, fx.images.dim(), &cfg).unwrap().manifest
    };
    let a = run();
    let b = run();
    let hash_ok = fx.images.content_hash() == before;
    let (va, vb) = (a.valid_maps(), b.valid_maps());
    let worst = va
        .iter()
        .zip(&vb)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
        .fold(0.0, f64::max);
    outcome(
        hash_ok && va.len() == vb.len() && !va.is_empty() && worst <= 1e-5,
        format!(
            "image store hash unchanged: {hash_ok}; {} epochs, worst relative valid-MAP difference {worst:.1e} (tol 1e-5)",
            va.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("[{}] {n:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    report(1, "metric oracle", metric_oracle());
    report(2, "grammar byte-exactness", grammar());
    report(3, "attention properties", attention());
    report(4, "gradient check", gradient_check());
    report(5, "loss value", loss_value());
    let fx = standard_fixture(1.0, 3.0);
    let (o, trained, images) = learnability(&fx);
    report(6, "synthetic learnability", o);
    report(7, "ablation direction", ablation_direction());
    report(8, "curation", curation());
    report(9, "threshold tuning and masking", threshold_and_masking(&fx, &trained, &images));
    report(10, "freezing and reproducibility", reproducibility());

    let failed: Vec<_> = results.iter().filter(|(_, _, o)| !o.pass).map(|(n, _, _)| n.to_string()).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
