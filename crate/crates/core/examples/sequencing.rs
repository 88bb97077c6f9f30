//! Build multilingual sequences and masked pre-training variants.

use std::collections::BTreeMap;

use sememe_predict::dataset::{generate_fixture, FixtureParams, MonolingualEntry, PartOfSpeech, Synset};
use sememe_predict::sequencing::{
    apply_mcsp_mask, build_monolingual_segment, build_multilingual_sequence, mcsp_candidates, SegmentOptions,
};

fn main() -> anyhow::Result<()> {
    let entry = MonolingualEntry::new(["husband", "hubby"], Some("A woman's partner in marriage"));
    println!("{}", build_monolingual_segment(&entry, SegmentOptions::default()).unwrap());

    let synset = Synset {
        id: "husband.n.01".into(),
        pos: PartOfSpeech::Noun,
        entries: BTreeMap::from([
            ("en".to_string(), entry),
            ("fr".to_string(), MonolingualEntry::new(["mari", "époux", "marié"], Some("Partenaire masculin dans un mariage"))),
        ]),
        gold_sememes: Default::default(),
        images: vec![],
        external_key: None,
    };
    let order = ["en".to_string(), "fr".to_string(), "zh".to_string()];
    let seq = build_multilingual_sequence(&synset, &order, SegmentOptions::default())?;
    println!("{}", seq.text);
    for span in &seq.spans {
        println!("  {} segment {:?} gloss {:?}", span.language, span.segment, span.gloss);
    }
    let no_gloss = SegmentOptions {
        drop_gloss: true,
        ..Default::default()
    };
    println!("{}", build_multilingual_sequence(&synset, &order, no_gloss)?.text);

    // Masking needs a lexicon; the fixture ships one.
    let fx = generate_fixture(1, &FixtureParams { synsets: 20, sememes: 8, ..Default::default() })?;
    let s = &fx.corpus.synsets[0];
    let seq = build_multilingual_sequence(s, &order, SegmentOptions::default())?;
    println!("\n{}", seq.text);
    println!("{} maskable gloss words", mcsp_candidates(&seq, &fx.lexicon).len());
    let masked = apply_mcsp_mask(&seq, &fx.lexicon, 0.5, 7)?;
    println!("{}", masked.text);
    for t in &masked.targets {
        println!("  [MASK] at byte {} -> {:?}", t.offset, fx.corpus.inventory.labels_of(&t.sememes));
    }
    Ok(())
}
