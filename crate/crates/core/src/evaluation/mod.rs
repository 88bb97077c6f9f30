//! Ranking and set metrics, threshold calibration, breakdowns, and reports.

pub mod ablation;
mod plot;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{write_file, PartOfSpeech, SememeId, SememeInventory, SememeSet, Synset};
use crate::error::{Error, Result};
use crate::model::{select_sememes, PredictionScores};
pub use ablation::{run_ablations, AblationReport, AblationRow, AblationVariant};
pub use plot::bar_chart_svg;

/// Average precision with ties broken by ascending sememe id. `None` for an
/// empty gold set.
pub fn average_precision(p: &PredictionScores, gold: &SememeSet) -> Option<f64> {
    if gold.is_empty() {
        return None;
    }
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p.0[b].total_cmp(&p.0[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &k) in order.iter().enumerate() {
        if gold.contains(&SememeId(k)) {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
            if hits == gold.len() {
                break;
            }
        }
    }
    Some(total / gold.len() as f64)
}

pub fn f1_of_sets(pred: &SememeSet, gold: &SememeSet) -> f64 {
    let tp = pred.intersection(gold).count() as f64;
    let precision = if pred.is_empty() { 0.0 } else { tp / pred.len() as f64 };
    let recall = if gold.is_empty() { 0.0 } else { tp / gold.len() as f64 };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Mode {
    /// Mean of per-synset F1.
    #[default]
    Instance,
    /// F1 of pooled true/false positive counts.
    Micro,
}

impl std::str::FromStr for F1Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "instance" => Ok(F1Mode::Instance),
            "micro" => Ok(F1Mode::Micro),
            _ => Err(Error::Config(format!("unknown F1 mode {s:?} (instance | micro)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub threshold: f64,
    pub grid: Vec<f64>,
    /// Lower edges of the sememe-count bins; the last bin is open.
    pub count_bins: Vec<usize>,
    /// Lower edges of the training-frequency bands; the last band is open.
    pub frequency_bins: Vec<usize>,
    pub f1_mode: F1Mode,
    pub good_threshold: f64,
}

pub fn default_grid() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            threshold: 0.42,
            grid: default_grid(),
            count_bins: vec![1, 2, 3, 4, 5, 6],
            frequency_bins: vec![0, 10, 50, 100, 200, 500],
            f1_mode: F1Mode::Instance,
            good_threshold: 0.85,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("threshold grid is empty".into()));
        }
        if self.grid.iter().any(|d| !(*d > 0.0 && *d < 1.0)) || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("threshold grid must be strictly increasing inside (0, 1)".into()));
        }
        for (name, bins) in [("count_bins", &self.count_bins), ("frequency_bins", &self.frequency_bins)] {
            if bins.is_empty() || bins.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("{name} must be nonempty and strictly increasing")));
            }
        }
        Ok(())
    }
}

/// Model scores for one synset, ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSynset {
    pub id: String,
    pub pos: PartOfSpeech,
    pub gold: SememeSet,
    pub scores: PredictionScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorCategory {
    Good,
    Fewer,
    More,
    Other,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [ErrorCategory::Good, ErrorCategory::Fewer, ErrorCategory::More, ErrorCategory::Other];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynsetResult {
    pub synset: String,
    pub pos: PartOfSpeech,
    pub gold: Vec<SememeId>,
    pub predicted: Vec<SememeId>,
    pub ap: f64,
    pub f1: f64,
    /// Training frequency of the rarest gold sememe.
    pub min_frequency: usize,
    pub category: ErrorCategory,
}

pub fn categorize_errors(ap: f64, f1: f64, predicted: usize, gold: usize, good_threshold: f64) -> ErrorCategory {
    if ap > good_threshold && f1 > good_threshold {
        ErrorCategory::Good
    } else if predicted < gold {
        ErrorCategory::Fewer
    } else if predicted > gold {
        ErrorCategory::More
    } else {
        ErrorCategory::Other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub map: f64,
    pub f1: f64,
    pub count: usize,
}

fn summarize<'a>(records: impl IntoIterator<Item = &'a SynsetResult>, mode: F1Mode) -> Summary {
    let (mut ap, mut f1, mut n) = (0.0, 0.0, 0usize);
    let (mut tp, mut np, mut ng) = (0usize, 0usize, 0usize);
    for r in records {
        ap += r.ap;
        f1 += r.f1;
        n += 1;
        tp += r.predicted.iter().filter(|s| r.gold.contains(s)).count();
        np += r.predicted.len();
        ng += r.gold.len();
    }
    if n == 0 {
        return Summary::default();
    }
    let f1 = match mode {
        F1Mode::Instance => f1 / n as f64,
        F1Mode::Micro => {
            let p = if np == 0 { 0.0 } else { tp as f64 / np as f64 };
            let r = if ng == 0 { 0.0 } else { tp as f64 / ng as f64 };
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        }
    };
    Summary {
        map: ap / n as f64,
        f1,
        count: n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub f1_mode: F1Mode,
    pub overall: Summary,
    pub per_pos: BTreeMap<PartOfSpeech, Summary>,
    pub errors: BTreeMap<ErrorCategory, usize>,
    /// Synsets skipped for having no gold sememes.
    pub skipped: usize,
    pub records: Vec<SynsetResult>,
}

/// Scores every synset with a nonempty gold set; others are skipped with a warning.
pub fn evaluate(scored: &[ScoredSynset], inventory: &SememeInventory, config: &EvalConfig) -> Result<EvalReport> {
    config.validate()?;
    let mut records = Vec::with_capacity(scored.len());
    let mut skipped = 0;
    for s in scored {
        if s.scores.len() != inventory.len() {
            return Err(Error::Contract(format!(
                "synset {} has {} scores for {} sememes",
                s.id,
                s.scores.len(),
                inventory.len()
            )));
        }
        let Some(ap) = average_precision(&s.scores, &s.gold) else {
            log::warn!("synset {} has no gold sememes; excluded from evaluation", s.id);
            skipped += 1;
            continue;
        };
        let predicted = select_sememes(&s.scores, config.threshold);
        let f1 = f1_of_sets(&predicted, &s.gold);
        records.push(SynsetResult {
            synset: s.id.clone(),
            pos: s.pos,
            category: categorize_errors(ap, f1, predicted.len(), s.gold.len(), config.good_threshold),
            gold: s.gold.iter().copied().collect(),
            predicted: predicted.into_iter().collect(),
            ap,
            f1,
            min_frequency: s.gold.iter().map(|g| inventory.frequency(*g)).min().unwrap_or(0),
        });
    }
    let per_pos = PartOfSpeech::ALL
        .iter()
        .filter_map(|pos| {
            let sum = summarize(records.iter().filter(|r| r.pos == *pos), config.f1_mode);
            (sum.count > 0).then_some((*pos, sum))
        })
        .collect();
    let mut errors: BTreeMap<ErrorCategory, usize> = ErrorCategory::ALL.iter().map(|c| (*c, 0)).collect();
    for r in &records {
        *errors.get_mut(&r.category).expect("all categories present") += 1;
    }
    Ok(EvalReport {
        threshold: config.threshold,
        f1_mode: config.f1_mode,
        overall: summarize(&records, config.f1_mode),
        per_pos,
        errors,
        skipped,
        records,
    })
}

/// Grid value maximising mean F1; ties go to the smaller threshold.
pub fn tune_threshold(scored: &[ScoredSynset], grid: &[f64], mode: F1Mode) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Config("threshold grid is empty".into()));
    }
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for &delta in grid {
        let f1 = threshold_f1(scored, delta, mode);
        if f1 > best.0 {
            best = (f1, delta);
        }
    }
    Ok(best.1)
}

/// F1 at threshold `delta` over synsets with nonempty gold sets.
pub fn threshold_f1(scored: &[ScoredSynset], delta: f64, mode: F1Mode) -> f64 {
    let records: Vec<SynsetResult> = scored
        .iter()
        .filter(|s| !s.gold.is_empty())
        .map(|s| {
            let predicted = select_sememes(&s.scores, delta);
            SynsetResult {
                synset: String::new(),
                pos: s.pos,
                gold: s.gold.iter().copied().collect(),
                f1: f1_of_sets(&predicted, &s.gold),
                predicted: predicted.into_iter().collect(),
                ap: 0.0,
                min_frequency: 0,
                category: ErrorCategory::Other,
            }
        })
        .collect();
    summarize(&records, mode).f1
}

/// Scores proportional to training frequency (ties resolved by id when ranked).
pub fn frequency_baseline(inventory: &SememeInventory, synsets: &[&Synset]) -> Vec<ScoredSynset> {
    let freq = inventory.frequencies();
    let max = freq.iter().copied().max().unwrap_or(0) as f64;
    let scores = PredictionScores(freq.iter().map(|&f| (f as f64 + 1.0) / (max + 2.0)).collect());
    synsets
        .iter()
        .map(|s| ScoredSynset {
            id: s.id.clone(),
            pos: s.pos,
            gold: s.gold_sememes.clone(),
            scores: scores.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub label: String,
    pub count: usize,
    pub map: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownTable {
    pub title: String,
    pub rows: Vec<BreakdownRow>,
}

impl BreakdownTable {
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# {}\nbin\tcount\tmap\tf1\n", self.title);
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{:.4}\t{:.4}", r.label, r.count, r.map, r.f1);
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let labels: Vec<&str> = self.rows.iter().map(|r| r.label.as_str()).collect();
        let map: Vec<f64> = self.rows.iter().map(|r| r.map).collect();
        let f1: Vec<f64> = self.rows.iter().map(|r| r.f1).collect();
        bar_chart_svg(&self.title, &labels, &[("MAP", &map), ("F1", &f1)])
    }
}

fn bin_label(edges: &[usize], i: usize) -> String {
    match edges.get(i + 1) {
        None => format!("≥{}", edges[i]),
        Some(&next) if next == edges[i] + 1 => edges[i].to_string(),
        Some(&next) => format!("{}-{}", edges[i], next - 1),
    }
}

fn bin_index(edges: &[usize], value: usize) -> Option<usize> {
    edges.iter().rposition(|&e| value >= e)
}

fn breakdown(report: &EvalReport, edges: &[usize], title: &str, key: impl Fn(&SynsetResult) -> usize) -> BreakdownTable {
    let mut groups: Vec<Vec<&SynsetResult>> = vec![Vec::new(); edges.len()];
    for r in &report.records {
        if let Some(i) = bin_index(edges, key(r)) {
            groups[i].push(r);
        }
    }
    let rows = groups
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            let s = summarize(g, report.f1_mode);
            BreakdownRow {
                label: bin_label(edges, i),
                count: s.count,
                map: s.map,
                f1: s.f1,
            }
        })
        .collect();
    BreakdownTable {
        title: title.to_string(),
        rows,
    }
}

pub fn breakdown_by_sememe_count(report: &EvalReport, bins: &[usize]) -> BreakdownTable {
    breakdown(report, bins, "by number of gold sememes", |r| r.gold.len())
}

/// Groups synsets by the training frequency of their rarest gold sememe.
pub fn breakdown_by_sememe_frequency(report: &EvalReport, bins: &[usize]) -> BreakdownTable {
    breakdown(report, bins, "by training frequency of the rarest gold sememe", |r| r.min_frequency)
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary_tsv(&self) -> String {
        let mut out = String::from("cohort\tcount\tmap\tf1\n");
        let _ = writeln!(out, "all\t{}\t{:.4}\t{:.4}", self.overall.count, self.overall.map, self.overall.f1);
        for (pos, s) in &self.per_pos {
            let _ = writeln!(out, "{}\t{}\t{:.4}\t{:.4}", pos.as_str(), s.count, s.map, s.f1);
        }
        out.push_str("\ncategory\tcount\n");
        for (c, n) in &self.errors {
            let _ = writeln!(out, "{c:?}\t{n}");
        }
        out
    }

    pub fn records_tsv(&self, inventory: &SememeInventory) -> String {
        let join = |ids: &[SememeId]| ids.iter().map(|s| inventory.label(*s)).collect::<Vec<_>>().join(",");
        let mut out = String::from("synset\tpos\tap\tf1\tcategory\tgold\tpredicted\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:?}\t{}\t{}",
                r.synset,
                r.pos.as_str(),
                r.ap,
                r.f1,
                r.category,
                join(&r.gold),
                join(&r.predicted)
            );
        }
        out
    }

    /// Writes `report.json`, `summary.tsv`, `records.tsv`, breakdown tables and plots.
    pub fn write_all(&self, dir: &Path, inventory: &SememeInventory, config: &EvalConfig) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("report.json"), self.to_json().as_bytes())?;
        write_file(&dir.join("summary.tsv"), self.summary_tsv().as_bytes())?;
        write_file(&dir.join("records.tsv"), self.records_tsv(inventory).as_bytes())?;
        let count = breakdown_by_sememe_count(self, &config.count_bins);
        let freq = breakdown_by_sememe_frequency(self, &config.frequency_bins);
        write_file(&dir.join("by_count.tsv"), count.to_tsv().as_bytes())?;
        write_file(&dir.join("by_frequency.tsv"), freq.to_tsv().as_bytes())?;
        write_file(&dir.join("by_count.svg"), count.to_svg().as_bytes())?;
        write_file(&dir.join("by_frequency.svg"), freq.to_svg().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn set(ids: &[usize]) -> SememeSet {
        ids.iter().map(|&i| SememeId(i)).collect()
    }

    #[test]
    fn ap_hand_cases() {
        let p = PredictionScores(vec![0.9, 0.8, 0.7, 0.6, 0.5]);
        assert!((average_precision(&p, &set(&[0, 2])).unwrap() - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(average_precision(&p, &set(&[0, 1])), Some(1.0));
        assert!((average_precision(&p, &set(&[4])).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(average_precision(&p, &SememeSet::new()), None);
        // Ties rank the smaller id first.
        let tied = PredictionScores(vec![0.5, 0.5, 0.5]);
        assert!((average_precision(&tied, &set(&[1])).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn f1_hand_cases() {
        assert!((f1_of_sets(&set(&[0, 1]), &set(&[0, 2])) - 0.5).abs() < 1e-12);
        assert_eq!(f1_of_sets(&set(&[3, 4]), &set(&[3, 4])), 1.0);
        assert_eq!(f1_of_sets(&SememeSet::new(), &set(&[1])), 0.0);
    }

    #[test]
    fn error_categories() {
        assert_eq!(categorize_errors(1.0, 1.0, 2, 2, 0.85), ErrorCategory::Good);
        assert_eq!(categorize_errors(0.5, 0.0, 0, 2, 0.85), ErrorCategory::Fewer);
        assert_eq!(categorize_errors(0.9, 0.6, 4, 2, 0.85), ErrorCategory::More);
        // Two sememes, one swapped: same size, F1 0.5.
        let p = PredictionScores(vec![0.9, 0.1, 0.8, 0.05]);
        let gold = set(&[0, 1]);
        let pred = select_sememes(&p, 0.42);
        let ap = average_precision(&p, &gold).unwrap();
        let f1 = f1_of_sets(&pred, &gold);
        assert_eq!(categorize_errors(ap, f1, pred.len(), gold.len(), 0.85), ErrorCategory::Other);
    }

    fn scored(id: &str, p: Vec<f64>, gold: &[usize]) -> ScoredSynset {
        ScoredSynset {
            id: id.into(),
            pos: PartOfSpeech::Noun,
            gold: set(gold),
            scores: PredictionScores(p),
        }
    }

    #[test]
    fn separable_scores_pick_smallest_threshold() {
        let s = vec![scored("a", vec![0.9, 0.1, 0.1], &[0]), scored("b", vec![0.1, 0.9, 0.9], &[1, 2])];
        assert_eq!(tune_threshold(&s, &default_grid(), F1Mode::Instance).unwrap(), 0.1);
    }

    #[test]
    fn report_means_match_records() {
        let inv = SememeInventory::new(["a", "b", "c"]).unwrap();
        let s = vec![
            scored("a", vec![0.9, 0.2, 0.6], &[0]),
            scored("b", vec![0.3, 0.5, 0.2], &[1, 2]),
            scored("c", vec![0.3, 0.5, 0.2], &[]),
        ];
        let r = evaluate(&s, &inv, &EvalConfig::default()).unwrap();
        assert_eq!(r.skipped, 1);
        let ap: f64 = r.records.iter().map(|x| x.ap).sum::<f64>() / 2.0;
        let f1: f64 = r.records.iter().map(|x| x.f1).sum::<f64>() / 2.0;
        assert!((r.overall.map - ap).abs() < 1e-12 && (r.overall.f1 - f1).abs() < 1e-12);
        assert_eq!(r.errors.values().sum::<usize>(), 2);
        let one = evaluate(&s[..1], &inv, &EvalConfig::default()).unwrap();
        assert_eq!(one.overall.map, 1.0);
    }

    #[test]
    fn breakdowns_bin_by_hand() {
        let inv = SememeInventory::new(["a", "b", "c", "d", "e", "f", "g"]).unwrap();
        let s = vec![
            scored("a", vec![0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1], &[0]),
            scored("b", vec![0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1], &[0, 1]),
            scored("c", vec![0.9; 7], &[0, 1, 2, 3, 4, 5, 6]),
        ];
        let r = evaluate(&s, &inv, &EvalConfig::default()).unwrap();
        let t = breakdown_by_sememe_count(&r, &[1, 2, 3, 4, 5, 6]);
        let counts: Vec<usize> = t.rows.iter().map(|x| x.count).collect();
        assert_eq!(counts, [1, 1, 0, 0, 0, 1]);
        assert_eq!(t.rows[5].label, "≥6");
        assert_eq!(t.rows[0].map, 1.0);
        let single = breakdown_by_sememe_count(&r, &[1]);
        assert_eq!(single.rows[0].map, r.overall.map);
        let f = breakdown_by_sememe_frequency(&r, &[0, 10]);
        assert_eq!(f.rows[0].count, 3);
        assert_eq!(f.rows[0].label, "0-9");
    }

    #[test]
    fn micro_f1_pools_counts() {
        let inv = SememeInventory::new(["a", "b", "c"]).unwrap();
        let s = vec![scored("a", vec![0.9, 0.9, 0.1], &[0]), scored("b", vec![0.1, 0.1, 0.9], &[2, 1])];
        let cfg = EvalConfig {
            f1_mode: F1Mode::Micro,
            ..Default::default()
        };
        let r = evaluate(&s, &inv, &cfg).unwrap();
        // tp 2, predicted 3, gold 3.
        assert!((r.overall.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_grid() {
        let cfg = EvalConfig {
            grid: vec![0.5, 0.2],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(tune_threshold(&[], &[], F1Mode::Instance).is_err());
    }

    proptest! {
        #[test]
        fn ap_is_monotone_in_gold_scores(
            p in prop::collection::vec(0.0f64..1.0, 2..10),
            pick in 0usize..10,
            bump in 0.0f64..0.5,
        ) {
            let n = p.len();
            let g = pick % n;
            let gold = set(&[g, (g + 1) % n]);
            let base = average_precision(&PredictionScores(p.clone()), &gold).unwrap();
            let mut q = p;
            q[g] += bump;
            let raised = average_precision(&PredictionScores(q), &gold).unwrap();
            prop_assert!((0.0..=1.0).contains(&base));
            prop_assert!(raised >= base - 1e-12);
        }
    }
}
