use std::fs;
use std::path::Path;

use sememe_predict::cli;
use sememe_predict::training::RunManifest;

fn run(args: &[&str]) -> i32 {
    cli::main(std::iter::once("sememe").chain(args.iter().copied()))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_fixture(dir: &Path) {
    let code = run(&["fixture", "--out", path(dir), "--seed", "1", "--synsets", "80", "--sememes", "8"]);
    assert_eq!(code, 0);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["bogus"]), 2);
    assert_eq!(run(&["train", "--no-such-flag"]), 2);
    assert_eq!(run(&[]), 2);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn data_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing");
    assert_eq!(run(&["train", "--corpus", path(&missing), "--run", path(&tmp.path().join("run"))]), 1);

    let bad = tmp.path().join("bad");
    fs::create_dir_all(&bad).unwrap();
    fs::write(bad.join("corpus.jsonl"), "{\"id\": \"x\", \"pos\": \"noun\"}\n").unwrap();
    assert_eq!(run(&["curate", "--corpus", path(&bad), "--out", path(&tmp.path().join("c"))]), 1);

    let (fx, r) = (tmp.path().join("fx"), tmp.path().join("r"));
    small_fixture(&fx);
    let args = ["train", "--corpus", path(&fx), "--run", path(&r), "--mask-rate", "2"];
    assert_eq!(run(&args), 1);
}

#[test]
fn fixture_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    small_fixture(&a);
    small_fixture(&b);
    for name in ["corpus.jsonl", "split.json", "sememes.txt", "lexicon.tsv", "images.emb", "external.emb"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn pipeline_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = tmp.path().join("fx");
    small_fixture(&fx);
    let corpus_before = fs::read(fx.join("corpus.jsonl")).unwrap();
    let images_before = fs::read(fx.join("images.emb")).unwrap();

    let cur = tmp.path().join("cur");
    assert_eq!(run(&["curate", "--corpus", path(&fx), "--out", path(&cur)]), 0);
    assert!(cur.join("curated.jsonl").exists() && cur.join("curation_report.tsv").exists());

    let cfg = tmp.path().join("c.cfg");
    fs::write(&cfg, "epochs = 3\nmcsp_epochs = 1\nseed = 3\n").unwrap();
    let run_dir = tmp.path().join("run");
    let curated = cur.join("curated.jsonl");
    let train = ["train", "--corpus", path(&fx), "--run", path(&run_dir), "--config", path(&cfg), "--seed", "7", "--curated", path(&curated)];
    assert_eq!(run(&train), 0);
    let manifest = RunManifest::load(&run_dir.join("manifest.json")).unwrap();
    assert_eq!(manifest.seed, 7, "flags win over the config file");
    assert_eq!(manifest.epochs.len(), 3);
    assert!(manifest.inputs.contains_key("images.emb"));

    assert_eq!(run(&["tune-threshold", "--run", path(&run_dir)]), 0);
    let config = fs::read_to_string(run_dir.join("config.cfg")).unwrap();
    let tuned: serde_json::Value = serde_json::from_str(&fs::read_to_string(run_dir.join("threshold.json")).unwrap()).unwrap();
    let delta = tuned["threshold"].as_f64().unwrap();
    assert!(config.lines().any(|l| l.replace(' ', "") == format!("threshold={delta}")), "{config}");

    assert_eq!(run(&["evaluate", "--run", path(&run_dir)]), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("eval-test/report.json")).unwrap()).unwrap();
    let map = report["overall"]["map"].as_f64().unwrap();
    assert!((map - manifest.test_map.unwrap()).abs() < 1e-12, "{map} vs {:?}", manifest.test_map);
    for f in ["by_count.svg", "by_frequency.svg", "records.tsv", "summary.tsv"] {
        assert!(run_dir.join("eval-test").join(f).exists(), "{f}");
    }

    assert_eq!(run(&["analyze", "--run", path(&run_dir)]), 0);
    assert!(run_dir.join("analysis-test/errors.svg").exists());

    let records = tmp.path().join("s.jsonl");
    let lines: Vec<&str> = std::str::from_utf8(&corpus_before).unwrap().lines().take(4).collect();
    fs::write(&records, lines.join("\n")).unwrap();
    let out = tmp.path().join("pred.jsonl");
    let predict = ["predict", "--run", path(&run_dir), "--synset-file", path(&records), "--threshold", "0.42", "--out", path(&out)];
    assert_eq!(run(&predict), 0);
    let predictions = fs::read_to_string(&out).unwrap();
    assert_eq!(predictions.lines().count(), 4);
    for line in predictions.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let scores = v["scores"].as_array().unwrap();
        let chosen = scores.iter().filter(|s| s.as_f64().unwrap() > 0.42).count();
        assert_eq!(v["sememes"].as_array().unwrap().len(), chosen);
    }

    assert_eq!(fs::read(fx.join("corpus.jsonl")).unwrap(), corpus_before);
    assert_eq!(fs::read(fx.join("images.emb")).unwrap(), images_before);
}

#[test]
fn pretrain_then_train_reuses_the_encoder() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = tmp.path().join("fx");
    small_fixture(&fx);
    let run_dir = tmp.path().join("run");
    assert_eq!(run(&["pretrain", "--corpus", path(&fx), "--run", path(&run_dir), "--mcsp-epochs", "1"]), 0);
    let encoder = run_dir.join("encoder.ckpt.json");
    assert!(encoder.exists() && run_dir.join("pretrain.json").exists());
    let args = ["train", "--corpus", path(&fx), "--run", path(&run_dir), "--mcsp-epochs", "1", "--epochs", "2", "--encoder", path(&encoder)];
    assert_eq!(run(&args), 0);
    let manifest = RunManifest::load(&run_dir.join("manifest.json")).unwrap();
    assert!(manifest.inputs.contains_key("encoder"));
}

#[test]
fn ablate_writes_a_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = tmp.path().join("fx");
    small_fixture(&fx);
    let run_dir = tmp.path().join("abl");
    let args = ["ablate", "--corpus", path(&fx), "--run", path(&run_dir), "--epochs", "1", "--mcsp", "false", "--set", "images"];
    assert_eq!(run(&args), 0);
    let tsv = fs::read_to_string(run_dir.join("ablation.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 1 + 4);
    assert!(run_dir.join("ablation.svg").exists());
}
