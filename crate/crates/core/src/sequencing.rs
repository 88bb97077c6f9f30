//! Multilingual text sequences and their masked variants.
//!
//! A monolingual segment reads `[/s] syn1 | syn2 : gloss [/s]`; the sequence
//! joins the segments of the requested languages with single spaces.

use std::io::Write;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{MonolingualEntry, SememeSet, Synset, WordSememeLexicon};
use crate::error::{Error, Result};

pub const LANG_SEP: &str = "[/s]";
pub const MASK_TOKEN: &str = "[MASK]";
pub const SYNONYM_SEP: &str = " | ";
pub const GLOSS_SEP: &str = " : ";

/// Ablation switches for segment construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SegmentOptions {
    pub drop_synonyms: bool,
    pub drop_gloss: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageSpan {
    pub language: String,
    /// Whole segment including both separators.
    pub segment: Range<usize>,
    pub synonyms: Option<Range<usize>>,
    pub gloss: Option<Range<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultilingualSequence {
    pub text: String,
    pub spans: Vec<LanguageSpan>,
}

impl MultilingualSequence {
    pub fn included_languages(&self) -> Vec<&str> {
        self.spans.iter().map(|s| s.language.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskTarget {
    /// Byte offset of the `[MASK]` token in the masked text.
    pub offset: usize,
    pub sememes: SememeSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSequence {
    pub text: String,
    pub targets: Vec<MaskTarget>,
    /// Language spans re-addressed into the masked text.
    pub spans: Vec<LanguageSpan>,
}

/// Anything an encoder can consume: text plus segment boundaries for truncation.
pub trait SequenceText {
    fn text(&self) -> &str;
    fn spans(&self) -> &[LanguageSpan];
}

impl SequenceText for MultilingualSequence {
    fn text(&self) -> &str {
        &self.text
    }
    fn spans(&self) -> &[LanguageSpan] {
        &self.spans
    }
}

impl SequenceText for MaskedSequence {
    fn text(&self) -> &str {
        &self.text
    }
    fn spans(&self) -> &[LanguageSpan] {
        &self.spans
    }
}

struct Segment {
    text: String,
    synonyms: Option<Range<usize>>,
    gloss: Option<Range<usize>>,
}

fn segment_parts(entry: &MonolingualEntry, opts: SegmentOptions) -> Option<Segment> {
    // A language without a gloss is omitted regardless of ablation, so every
    // variant of a synset sees the same language set.
    let gloss = entry.gloss.as_deref()?;
    let synonyms: Vec<&str> = if opts.drop_synonyms {
        Vec::new()
    } else {
        entry.synonyms.iter().map(String::as_str).collect()
    };
    let keep_gloss = !opts.drop_gloss;
    if synonyms.is_empty() && !keep_gloss {
        return None;
    }
    let mut text = String::from(LANG_SEP);
    text.push(' ');
    let mut syn_range = None;
    if !synonyms.is_empty() {
        let start = text.len();
        text.push_str(&synonyms.join(SYNONYM_SEP));
        syn_range = Some(start..text.len());
        if keep_gloss {
            text.push_str(GLOSS_SEP);
        }
    }
    let mut gloss_range = None;
    if keep_gloss {
        let start = text.len();
        text.push_str(gloss);
        gloss_range = Some(start..text.len());
    }
    text.push(' ');
    text.push_str(LANG_SEP);
    Some(Segment {
        text,
        synonyms: syn_range,
        gloss: gloss_range,
    })
}

/// Returns `None` when the language must be omitted from the sequence.
pub fn build_monolingual_segment(entry: &MonolingualEntry, opts: SegmentOptions) -> Option<String> {
    segment_parts(entry, opts).map(|s| s.text)
}

pub fn build_multilingual_sequence(
    synset: &Synset,
    language_order: &[String],
    opts: SegmentOptions,
) -> Result<MultilingualSequence> {
    if language_order.is_empty() {
        return Err(Error::Config("language order is empty".into()));
    }
    let mut text = String::new();
    let mut spans = Vec::new();
    for lang in language_order {
        let Some(seg) = synset.entry(lang).and_then(|e| segment_parts(e, opts)) else {
            continue;
        };
        if !text.is_empty() {
            text.push(' ');
        }
        let base = text.len();
        text.push_str(&seg.text);
        let shift = |r: Range<usize>| r.start + base..r.end + base;
        spans.push(LanguageSpan {
            language: lang.clone(),
            segment: base..text.len(),
            synonyms: seg.synonyms.map(shift),
            gloss: seg.gloss.map(shift),
        });
    }
    if spans.is_empty() {
        return Err(Error::EmptySequence(synset.id.clone()));
    }
    Ok(MultilingualSequence { text, spans })
}

/// Lexicon words in a gloss: `(byte range in the sequence, sememes)`.
fn mask_candidates<'a>(
    text: &str,
    gloss: Range<usize>,
    lang: &str,
    lexicon: &'a WordSememeLexicon,
) -> Vec<(Range<usize>, &'a SememeSet)> {
    let slice = &text[gloss.clone()];
    let mut out = Vec::new();
    match lang {
        "en" => {
            let mut start = None;
            for (i, c) in slice.char_indices().chain(std::iter::once((slice.len(), ' '))) {
                match (c.is_alphanumeric(), start) {
                    (true, None) => start = Some(i),
                    (false, Some(s)) => {
                        if let Some(set) = lexicon.lookup(&slice[s..i], lang) {
                            out.push((gloss.start + s..gloss.start + i, set));
                        }
                        start = None;
                    }
                    _ => {}
                }
            }
        }
        "zh" => {
            let max = lexicon.max_word_chars(lang);
            let bounds: Vec<usize> = slice.char_indices().map(|(i, _)| i).chain(std::iter::once(slice.len())).collect();
            let n_chars = bounds.len() - 1;
            let mut i = 0;
            while i < n_chars {
                let hit = (1..=max.min(n_chars - i))
                    .rev()
                    .find_map(|len| lexicon.lookup(&slice[bounds[i]..bounds[i + len]], lang).map(|set| (len, set)));
                match hit {
                    Some((len, set)) => {
                        out.push((gloss.start + bounds[i]..gloss.start + bounds[i + len], set));
                        i += len;
                    }
                    None => i += 1,
                }
            }
        }
        _ => {}
    }
    out
}

/// All maskable word positions of a sequence, in text order.
pub fn mcsp_candidates<'a>(seq: &MultilingualSequence, lexicon: &'a WordSememeLexicon) -> Vec<(Range<usize>, &'a SememeSet)> {
    seq.spans
        .iter()
        .filter_map(|s| s.gloss.clone().map(|g| (g, s.language.as_str())))
        .flat_map(|(g, lang)| mask_candidates(&seq.text, g, lang, lexicon))
        .collect()
}

/// Replaces each English/Chinese gloss word found in the lexicon with
/// `[MASK]`, independently with probability `rate`.
pub fn apply_mcsp_mask(
    seq: &MultilingualSequence,
    lexicon: &WordSememeLexicon,
    rate: f64,
    rng_seed: u64,
) -> Result<MaskedSequence> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Config(format!("mask rate must lie in (0, 1], got {rate}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let chosen: Vec<_> = mcsp_candidates(seq, lexicon)
        .into_iter()
        .filter(|_| rng.random::<f64>() < rate)
        .collect();

    let mut text = String::with_capacity(seq.text.len());
    let mut targets = Vec::with_capacity(chosen.len());
    // (original offset, cumulative shift after it)
    let mut shifts: Vec<(usize, isize)> = Vec::with_capacity(chosen.len());
    let mut cursor = 0;
    let mut delta = 0isize;
    for (range, set) in chosen {
        text.push_str(&seq.text[cursor..range.start]);
        targets.push(MaskTarget {
            offset: text.len(),
            sememes: set.clone(),
        });
        text.push_str(MASK_TOKEN);
        delta += MASK_TOKEN.len() as isize - range.len() as isize;
        shifts.push((range.end, delta));
        cursor = range.end;
    }
    text.push_str(&seq.text[cursor..]);

    let map = |o: usize| -> usize {
        let d = shifts.iter().take_while(|(end, _)| *end <= o).last().map_or(0, |(_, d)| *d);
        (o as isize + d) as usize
    };
    let remap = |r: &Range<usize>| map(r.start)..map(r.end);
    let spans = seq
        .spans
        .iter()
        .map(|s| LanguageSpan {
            language: s.language.clone(),
            segment: remap(&s.segment),
            synonyms: s.synonyms.as_ref().map(remap),
            gloss: s.gloss.as_ref().map(remap),
        })
        .collect();
    Ok(MaskedSequence { text, targets, spans })
}

/// Writes one sequence per line.
pub fn export_sequences<'a>(seqs: impl IntoIterator<Item = &'a MultilingualSequence>, mut out: impl Write) -> std::io::Result<()> {
    for s in seqs {
        out.write_all(s.text.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::dataset::{PartOfSpeech, SememeId};

    fn entry(syn: &[&str], gloss: Option<&str>) -> MonolingualEntry {
        MonolingualEntry::new(syn.iter().copied(), gloss)
    }

    fn husband() -> Synset {
        Synset {
            id: "bn:husband".into(),
            pos: PartOfSpeech::Noun,
            entries: BTreeMap::from([
                ("en".into(), entry(&["husband", "hubby"], Some("A woman's partner in marriage"))),
                ("fr".into(), entry(&["mari", "époux", "marié"], Some("Partenaire masculin dans un mariage"))),
                ("zh".into(), entry(&["丈夫"], Some("女人的婚姻伴侣"))),
            ]),
            gold_sememes: SememeSet::new(),
            images: vec![],
            external_key: None,
        }
    }

    fn langs(l: &[&str]) -> Vec<String> {
        l.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn english_segment() {
        let s = build_monolingual_segment(&husband().entries["en"], SegmentOptions::default()).unwrap();
        assert_eq!(s, "[/s] husband | hubby : A woman's partner in marriage [/s]");
    }

    #[test]
    fn degenerate_joins() {
        let opts = SegmentOptions::default();
        assert_eq!(build_monolingual_segment(&entry(&["x"], Some("g")), opts).unwrap(), "[/s] x : g [/s]");
        assert_eq!(
            build_monolingual_segment(&entry(&["a", "b", "c"], Some("g")), opts).unwrap(),
            "[/s] a | b | c : g [/s]"
        );
        assert_eq!(build_monolingual_segment(&entry(&[], Some("g")), opts).unwrap(), "[/s] g [/s]");
        assert_eq!(build_monolingual_segment(&entry(&["a"], None), opts), None);
    }

    #[test]
    fn ablation_segments() {
        let e = entry(&["a", "b"], Some("the gloss"));
        let no_syn = SegmentOptions { drop_synonyms: true, drop_gloss: false };
        let no_gloss = SegmentOptions { drop_synonyms: false, drop_gloss: true };
        let neither = SegmentOptions { drop_synonyms: true, drop_gloss: true };
        assert_eq!(build_monolingual_segment(&e, no_syn).unwrap(), "[/s] the gloss [/s]");
        assert_eq!(build_monolingual_segment(&e, no_gloss).unwrap(), "[/s] a | b [/s]");
        assert_eq!(build_monolingual_segment(&e, neither), None);
    }

    #[test]
    fn english_french_sequence() {
        let seq = build_multilingual_sequence(&husband(), &langs(&["en", "fr"]), SegmentOptions::default()).unwrap();
        assert_eq!(
            seq.text,
            "[/s] husband | hubby : A woman's partner in marriage [/s] [/s] mari | époux | marié : Partenaire masculin dans un mariage [/s]"
        );
        assert_eq!(seq.included_languages(), ["en", "fr"]);
        assert_eq!(seq.text.matches(LANG_SEP).count(), 4);
    }

    #[test]
    fn language_order_swaps_segments() {
        let s = husband();
        let a = build_multilingual_sequence(&s, &langs(&["zh", "en"]), SegmentOptions::default()).unwrap();
        let b = build_multilingual_sequence(&s, &langs(&["en", "zh"]), SegmentOptions::default()).unwrap();
        let seg = |q: &MultilingualSequence, i: usize| q.text[q.spans[i].segment.clone()].to_string();
        assert_eq!(seg(&a, 0), seg(&b, 1));
        assert_eq!(seg(&a, 1), seg(&b, 0));
        for q in [&a, &b] {
            for sp in &q.spans {
                let segment = &q.text[sp.segment.clone()];
                assert_eq!(q.text.find(segment), Some(sp.segment.start));
                let gloss = &q.text[sp.gloss.clone().unwrap()];
                assert_eq!(gloss, s.entries[&sp.language].gloss.as_deref().unwrap());
            }
        }
    }

    #[test]
    fn missing_languages_are_omitted() {
        let mut s = husband();
        s.entries.get_mut("fr").unwrap().gloss = None;
        s.entries.remove("zh");
        let seq = build_multilingual_sequence(&s, &langs(&["en", "fr", "zh"]), SegmentOptions::default()).unwrap();
        assert_eq!(seq.text, "[/s] husband | hubby : A woman's partner in marriage [/s]");
        let err = build_multilingual_sequence(&s, &langs(&["fr", "zh"]), SegmentOptions::default()).unwrap_err();
        assert!(matches!(err, Error::EmptySequence(_)));
    }

    fn lexicon() -> WordSememeLexicon {
        let mut lex = WordSememeLexicon::new();
        lex.insert("partner", "en", [SememeId(0)]).unwrap();
        lex.insert("husband", "en", [SememeId(1)]).unwrap();
        lex.insert("婚姻", "zh", [SememeId(2)]).unwrap();
        lex.insert("婚", "zh", [SememeId(3)]).unwrap();
        lex.insert("Partenaire", "en", [SememeId(4)]).unwrap();
        lex
    }

    #[test]
    fn forced_mask_hits_only_gloss_words() {
        let seq = build_multilingual_sequence(&husband(), &langs(&["en", "fr"]), SegmentOptions::default()).unwrap();
        let m = apply_mcsp_mask(&seq, &lexicon(), 1.0, 0).unwrap();
        assert_eq!(
            m.text,
            "[/s] husband | hubby : A woman's [MASK] in marriage [/s] [/s] mari | époux | marié : Partenaire masculin dans un mariage [/s]"
        );
        assert_eq!(m.targets.len(), 1);
        assert_eq!(&m.text[m.targets[0].offset..m.targets[0].offset + 6], MASK_TOKEN);
        assert_eq!(m.targets[0].sememes, SememeSet::from([SememeId(0)]));
        assert_eq!(&m.text[m.spans[1].segment.clone()], &seq.text[seq.spans[1].segment.clone()]);
    }

    #[test]
    fn chinese_longest_match() {
        let seq = build_multilingual_sequence(&husband(), &langs(&["zh"]), SegmentOptions::default()).unwrap();
        let m = apply_mcsp_mask(&seq, &lexicon(), 1.0, 0).unwrap();
        assert_eq!(m.text, "[/s] 丈夫 : 女人的[MASK]伴侣 [/s]");
        assert_eq!(m.targets[0].sememes, SememeSet::from([SememeId(2)]));
        let gloss = m.spans[0].gloss.clone().unwrap();
        assert_eq!(&m.text[gloss], "女人的[MASK]伴侣");
    }

    #[test]
    fn masking_is_seeded() {
        let seq = build_multilingual_sequence(&husband(), &langs(&["en", "zh"]), SegmentOptions::default()).unwrap();
        let a = apply_mcsp_mask(&seq, &lexicon(), 0.5, 42).unwrap();
        let b = apply_mcsp_mask(&seq, &lexicon(), 0.5, 42).unwrap();
        assert_eq!(a, b);
        assert!(apply_mcsp_mask(&seq, &lexicon(), 0.0, 1).is_err());
        assert!(apply_mcsp_mask(&seq, &lexicon(), 1.5, 1).is_err());
    }

    #[test]
    fn no_candidates_yields_empty_targets() {
        let seq = build_multilingual_sequence(&husband(), &langs(&["fr"]), SegmentOptions::default()).unwrap();
        let m = apply_mcsp_mask(&seq, &lexicon(), 1.0, 0).unwrap();
        assert!(m.targets.is_empty());
        assert_eq!(m.text, seq.text);
    }
}
