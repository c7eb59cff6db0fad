//! Cell-combination tables, primacy/recency contrasts, consonant-triple
//! memorization labels, alternation-pair accounting and confusion matrices.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{stem_or_surface, CellZone, InflectionTable, MsdTag, VerbClass};
use crate::error::{Error, Result};
use crate::evaluation::{summarize, CiMethod, Metric, PredictionRecord, Z_95};
use crate::tripler::{ReinflectionTriple, ZonePattern};

/// `[s]`, with `[ ]` for an empty cluster.
pub fn bracket(cluster: &str) -> String {
    if cluster.is_empty() {
        "[ ]".to_string()
    } else {
        format!("[{cluster}]")
    }
}

/// Stem-final clusters of the two sources and the target of a triple.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConsonantTriple {
    pub src1: String,
    pub src2: String,
    pub target: String,
}

impl fmt::Display for ConsonantTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}-{}",
            bracket(&self.src1),
            bracket(&self.src2),
            bracket(&self.target)
        )
    }
}

/// Clusters of the three gold forms of a triple.
pub fn consonant_triple(t: &ReinflectionTriple) -> ConsonantTriple {
    ConsonantTriple {
        src1: stem_or_surface(&t.src1.form, t.src1.tag).final_cluster,
        src2: stem_or_surface(&t.src2.form, t.src2.tag).final_cluster,
        target: stem_or_surface(&t.target_form, t.target_tag).final_cluster,
    }
}

/// Out-zone and In-zone stem clusters of one lemma.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConsonantPair {
    pub out_cluster: String,
    pub in_cluster: String,
}

impl ConsonantPair {
    pub fn new(out_cluster: impl Into<String>, in_cluster: impl Into<String>) -> Self {
        Self {
            out_cluster: out_cluster.into(),
            in_cluster: in_cluster.into(),
        }
    }

    pub fn alternates(&self) -> bool {
        self.out_cluster != self.in_cluster
    }
}

impl fmt::Display for ConsonantPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", bracket(&self.out_cluster), bracket(&self.in_cluster))
    }
}

/// Pair read off the IND.3SG (Out) and SBJV.3SG (In) stems.
pub fn lemma_pair(table: &InflectionTable) -> ConsonantPair {
    ConsonantPair::new(
        table.stem(MsdTag::IND_3SG).final_cluster,
        table.stem(MsdTag::SBJV_3SG).final_cluster,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KnowledgeState {
    Memorized,
    Generalized,
}

impl KnowledgeState {
    pub fn label(self) -> &'static str {
        match self {
            KnowledgeState::Memorized => "Memorized",
            KnowledgeState::Generalized => "Generalized",
        }
    }
}

impl fmt::Display for KnowledgeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for KnowledgeState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Memorized" => Ok(KnowledgeState::Memorized),
            "Generalized" => Ok(KnowledgeState::Generalized),
            _ => Err(Error::Serialization(format!("bad knowledge state {s:?}"))),
        }
    }
}

/// Every consonant triple occurring in a training set.
pub fn training_triples(train: &[ReinflectionTriple]) -> BTreeSet<ConsonantTriple> {
    train.iter().map(consonant_triple).collect()
}

/// Memorized iff the record's gold triple occurs in `seen`.
pub fn label_knowledge_state(records: &mut [PredictionRecord], seen: &BTreeSet<ConsonantTriple>) {
    for r in records {
        r.knowledge_state = Some(if seen.contains(&r.gold_triple) {
            KnowledgeState::Memorized
        } else {
            KnowledgeState::Generalized
        });
    }
}

/// One zone-pattern row of a condition's cell-combination table.
#[derive(Clone, Debug, PartialEq)]
pub struct CellCombinationRow {
    pub condition: String,
    pub zone_pattern: ZonePattern,
    /// Mean sequence accuracy in percent.
    pub l: Option<f64>,
    pub nl: Option<f64>,
    pub l_records: usize,
    pub nl_records: usize,
}

impl CellCombinationRow {
    /// L accuracy over NL accuracy.
    pub fn ratio(&self) -> Option<f64> {
        match (self.l, self.nl) {
            (Some(l), Some(nl)) if nl > 0.0 => Some(l / nl),
            (Some(l), Some(_)) if l == 0.0 => Some(1.0),
            _ => None,
        }
    }
}

/// Eight rows per condition in table order, conditions in `conditions` order
/// (any others follow alphabetically).
pub fn cell_combination_table(
    records: &[PredictionRecord],
    conditions: &[String],
    metric: Metric,
) -> Vec<CellCombinationRow> {
    let summaries = summarize(records, true, metric, CiMethod::Normal);
    let mut names: Vec<String> = conditions.to_vec();
    let seen: BTreeSet<&str> = records.iter().map(|r| r.condition.as_str()).collect();
    for c in seen {
        if !names.iter().any(|n| n == c) {
            names.push(c.to_string());
        }
    }
    let lookup = |cond: &str, class: VerbClass, zone: ZonePattern| {
        summaries
            .iter()
            .find(|s| s.key.condition == cond && s.key.verb_class == class && s.key.zone_pattern == Some(zone))
    };
    let mut rows = Vec::new();
    for cond in &names {
        for zone in ZonePattern::TABLE_ORDER {
            let l = lookup(cond, VerbClass::L, zone);
            let nl = lookup(cond, VerbClass::NL, zone);
            rows.push(CellCombinationRow {
                condition: cond.clone(),
                zone_pattern: zone,
                l: l.map(|s| s.mean),
                nl: nl.map(|s| s.mean),
                l_records: l.map_or(0, |s| s.records),
                nl_records: nl.map_or(0, |s| s.records),
            });
        }
    }
    rows
}

pub const CELL_TABLE_HEADER: &str = "condition\tzone_pattern\tL\tNL\tL/NL\tL_records\tNL_records";

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or("NA".to_string(), |v| format!("{v:.digits$}"))
}

pub fn write_cell_table<W: Write>(rows: &[CellCombinationRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CELL_TABLE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.condition,
            r.zone_pattern,
            opt(r.l, 2),
            opt(r.nl, 2),
            opt(r.ratio(), 3),
            r.l_records,
            r.nl_records
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContrastKind {
    /// Source slot 1 varies.
    Primacy,
    /// Source slot 2 varies.
    Recency,
}

impl ContrastKind {
    pub fn label(self) -> &'static str {
        match self {
            ContrastKind::Primacy => "primacy",
            ContrastKind::Recency => "recency",
        }
    }

    fn slot(self) -> usize {
        match self {
            ContrastKind::Primacy => 0,
            ContrastKind::Recency => 1,
        }
    }
}

/// The two patterns of a minimal pair; `matching` has the probed slot in the
/// target's zone, `other` flips it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MinimalPair {
    pub kind: ContrastKind,
    pub matching: ZonePattern,
    pub other: ZonePattern,
}

/// All minimal pairs: for each kind, one per setting of the unprobed source
/// slot and the target zone.
pub fn minimal_pairs() -> Vec<MinimalPair> {
    let zones = [CellZone::In, CellZone::Out];
    let mut out = Vec::new();
    for kind in [ContrastKind::Primacy, ContrastKind::Recency] {
        for fixed in zones {
            for target in zones {
                let mut matching = [fixed; 3];
                matching[kind.slot()] = target;
                matching[2] = target;
                let mut other = matching;
                other[kind.slot()] = target.flip();
                out.push(MinimalPair {
                    kind,
                    matching: ZonePattern(matching),
                    other: ZonePattern(other),
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Contrast {
    pub condition: String,
    pub verb_class: VerbClass,
    pub pair: MinimalPair,
    /// Accuracy of `matching` minus accuracy of `other`, in points.
    pub delta: f64,
}

impl Contrast {
    /// The effect named by the kind when positive, "reverse" when negative.
    pub fn direction(&self) -> &'static str {
        if self.delta > 0.0 {
            self.pair.kind.label()
        } else if self.delta < 0.0 {
            "reverse"
        } else {
            "none"
        }
    }
}

/// Deltas for every minimal pair, condition and class present in the table.
pub fn primacy_recency_contrasts(table: &[CellCombinationRow]) -> Vec<Contrast> {
    let mut out = Vec::new();
    let conditions: Vec<&str> = {
        let mut seen = Vec::new();
        for r in table {
            if !seen.contains(&r.condition.as_str()) {
                seen.push(r.condition.as_str());
            }
        }
        seen
    };
    for cond in conditions {
        let acc = |zone: ZonePattern, class: VerbClass| {
            table
                .iter()
                .find(|r| r.condition == cond && r.zone_pattern == zone)
                .and_then(|r| if class == VerbClass::L { r.l } else { r.nl })
        };
        for class in [VerbClass::L, VerbClass::NL] {
            for pair in minimal_pairs() {
                if let (Some(a), Some(b)) = (acc(pair.matching, class), acc(pair.other, class)) {
                    out.push(Contrast {
                        condition: cond.to_string(),
                        verb_class: class,
                        pair,
                        delta: a - b,
                    });
                }
            }
        }
    }
    out
}

pub const CONTRAST_HEADER: &str = "condition\tverb_class\tkind\tmatching\tother\tdelta\tdirection";

pub fn write_contrasts<W: Write>(rows: &[Contrast], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CONTRAST_HEADER}")?;
    for c in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.2}\t{}",
            c.condition,
            c.verb_class,
            c.pair.kind.label(),
            c.pair.matching,
            c.pair.other,
            c.delta,
            c.direction()
        )?;
    }
    Ok(())
}

/// Column names of the observation export, one per model variable.
pub const OBSERVATION_HEADER: &str = "prediction_status\tknowledge_state\tfrequency_condition\ttriple\tmodel";

/// One row per labeled record; unlabeled records are an error.
pub fn export_observations<W: Write>(records: &[PredictionRecord], mut out: W) -> Result<usize> {
    let io = |e: std::io::Error| Error::Io {
        path: "<observations>".into(),
        source: e,
    };
    writeln!(out, "{OBSERVATION_HEADER}").map_err(io)?;
    for r in records {
        let state = r
            .knowledge_state
            .ok_or_else(|| Error::Config(format!("record {} of {} has no knowledge state", r.id, r.dataset())))?;
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            u8::from(r.seq_correct),
            state,
            r.condition,
            r.gold_triple,
            r.dataset()
        )
        .map_err(io)?;
    }
    Ok(records.len())
}

/// Wilson score interval for `hits` of `n` at 95%.
pub fn wilson(hits: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (p, n) = (hits as f64 / n as f64, n as f64);
    let z2 = Z_95 * Z_95;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z_95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupedProportion {
    pub knowledge_state: KnowledgeState,
    pub condition: String,
    pub hits: usize,
    pub n: usize,
}

impl GroupedProportion {
    pub fn proportion(&self) -> f64 {
        self.hits as f64 / self.n as f64
    }
}

/// Raw correct proportions per (knowledge state, condition).
pub fn grouped_proportions(records: &[PredictionRecord]) -> Vec<GroupedProportion> {
    let mut groups: BTreeMap<(KnowledgeState, String), (usize, usize)> = BTreeMap::new();
    for r in records {
        if let Some(state) = r.knowledge_state {
            let g = groups.entry((state, r.condition.clone())).or_default();
            g.0 += usize::from(r.seq_correct);
            g.1 += 1;
        }
    }
    groups
        .into_iter()
        .map(|((knowledge_state, condition), (hits, n))| GroupedProportion {
            knowledge_state,
            condition,
            hits,
            n,
        })
        .collect()
}

pub const PROPORTION_HEADER: &str =
    "knowledge_state\tfrequency_condition\tcorrect\tn\tproportion\twilson_low\twilson_high";

pub fn write_proportions<W: Write>(rows: &[GroupedProportion], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{PROPORTION_HEADER}")?;
    for g in rows {
        let (lo, hi) = wilson(g.hits, g.n);
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
            g.knowledge_state,
            g.condition,
            g.hits,
            g.n,
            g.proportion(),
            lo,
            hi
        )?;
    }
    Ok(())
}

/// Number of L lemmas per pair, most frequent first (ties by pair).
pub fn consonant_pair_census<'a>(tables: impl IntoIterator<Item = &'a InflectionTable>) -> Vec<(ConsonantPair, usize)> {
    let mut counts: BTreeMap<ConsonantPair, usize> = BTreeMap::new();
    for t in tables {
        if t.verb_class == VerbClass::L {
            *counts.entry(lemma_pair(t)).or_default() += 1;
        }
    }
    let mut rows: Vec<_> = counts.into_iter().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows
}

pub const CENSUS_HEADER: &str = "pair\tout_cluster\tin_cluster\talternating\tlemmas";

pub fn write_census<W: Write>(rows: &[(ConsonantPair, usize)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CENSUS_HEADER}")?;
    for (p, n) in rows {
        writeln!(out, "{p}\t{}\t{}\t{}\t{n}", p.out_cluster, p.in_cluster, p.alternates())?;
    }
    Ok(())
}

/// Pair counts among the L lemmas of one dataset's train and test splits.
#[derive(Clone, Debug, PartialEq)]
pub struct PairFrequency {
    pub dataset: String,
    pub pair: ConsonantPair,
    pub test: usize,
    pub train: usize,
}

impl PairFrequency {
    /// Present in test but never seen in training.
    pub fn generalization_critical(&self) -> bool {
        self.test > 0 && self.train == 0
    }
}

/// Rows ordered by test count, then train count (both descending), then pair.
pub fn pair_train_test_frequencies(
    dataset: &str,
    train_lemmas: &[String],
    test_lemmas: &[String],
    pairs: &HashMap<String, ConsonantPair>,
) -> Vec<PairFrequency> {
    let mut counts: BTreeMap<ConsonantPair, (usize, usize)> = BTreeMap::new();
    for (lemmas, is_test) in [(train_lemmas, false), (test_lemmas, true)] {
        for lemma in lemmas {
            if let Some(p) = pairs.get(lemma) {
                let c = counts.entry(p.clone()).or_default();
                if is_test {
                    c.0 += 1;
                } else {
                    c.1 += 1;
                }
            }
        }
    }
    let mut rows: Vec<PairFrequency> = counts
        .into_iter()
        .map(|(pair, (test, train))| PairFrequency {
            dataset: dataset.to_string(),
            pair,
            test,
            train,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.test
            .cmp(&a.test)
            .then(b.train.cmp(&a.train))
            .then_with(|| a.pair.cmp(&b.pair))
    });
    rows
}

pub const PAIR_FREQUENCY_HEADER: &str = "dataset\tpair\tfreq_test\tfreq_train\tgeneralization_critical";

pub fn write_pair_frequencies<W: Write>(rows: &[PairFrequency], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{PAIR_FREQUENCY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.dataset,
            r.pair,
            r.test,
            r.train,
            r.generalization_critical()
        )?;
    }
    Ok(())
}

/// Cluster shown for a hypothesis whose stem could not be extracted.
pub const UNKNOWN_CLUSTER: &str = "?";

/// Gold-pair by predicted-pair counts over L-verb records with an In-zone
/// target. The predicted pair keeps the gold Out cluster and takes the In
/// cluster from the hypothesis stem.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfusionMatrix {
    pub counts: BTreeMap<ConsonantPair, BTreeMap<ConsonantPair, usize>>,
}

impl ConfusionMatrix {
    pub fn row_total(&self, gold: &ConsonantPair) -> usize {
        self.counts.get(gold).map_or(0, |r| r.values().sum())
    }

    pub fn correct(&self, gold: &ConsonantPair) -> usize {
        self.counts.get(gold).and_then(|r| r.get(gold)).copied().unwrap_or(0)
    }

    pub fn accuracy(&self, gold: &ConsonantPair) -> Option<f64> {
        match self.row_total(gold) {
            0 => None,
            n => Some(self.correct(gold) as f64 / n as f64),
        }
    }

    /// Predictions that carry the Out cluster into an alternating In cell.
    pub fn regularizations(&self, gold: &ConsonantPair) -> usize {
        if !gold.alternates() {
            return 0;
        }
        self.counts
            .get(gold)
            .and_then(|r| r.get(&ConsonantPair::new(gold.out_cluster.clone(), gold.out_cluster.clone())))
            .copied()
            .unwrap_or(0)
    }

    /// Pooled accuracy over several gold pairs.
    pub fn pooled_accuracy<'a>(&self, golds: impl IntoIterator<Item = &'a ConsonantPair>) -> Option<f64> {
        let (mut hits, mut n) = (0, 0);
        for g in golds {
            hits += self.correct(g);
            n += self.row_total(g);
        }
        (n > 0).then(|| hits as f64 / n as f64)
    }
}

pub fn is_regularization(gold: &ConsonantPair, predicted: &ConsonantPair) -> bool {
    gold.alternates() && predicted.in_cluster == gold.out_cluster
}

pub fn pair_confusion_matrix(records: &[PredictionRecord], pairs: &HashMap<String, ConsonantPair>) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::default();
    for r in records {
        if r.verb_class() != VerbClass::L || r.triple.target_tag.zone() != CellZone::In {
            continue;
        }
        let Some(gold) = pairs.get(&r.triple.lemma) else {
            continue;
        };
        let predicted = ConsonantPair::new(
            gold.out_cluster.clone(),
            r.predicted_cluster
                .clone()
                .unwrap_or_else(|| UNKNOWN_CLUSTER.to_string()),
        );
        *m.counts.entry(gold.clone()).or_default().entry(predicted).or_default() += 1;
    }
    m
}

pub const CONFUSION_LONG_HEADER: &str = "condition\tgold\tpredicted\tcount\tregularization";
pub const CONFUSION_ACCURACY_HEADER: &str = "condition\tgold\trecords\tcorrect\taccuracy\tregularizations";

/// Long format, one row per non-zero (condition, gold, predicted) cell.
pub fn write_confusion_long<W: Write>(matrices: &[(String, ConfusionMatrix)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CONFUSION_LONG_HEADER}")?;
    for (cond, m) in matrices {
        for (gold, row) in &m.counts {
            for (pred, n) in row {
                writeln!(out, "{cond}\t{gold}\t{pred}\t{n}\t{}", is_regularization(gold, pred))?;
            }
        }
    }
    Ok(())
}

/// Per-gold-pair accuracy, rows by record count descending within a condition.
pub fn write_confusion_accuracy<W: Write>(matrices: &[(String, ConfusionMatrix)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CONFUSION_ACCURACY_HEADER}")?;
    for (cond, m) in matrices {
        let mut golds: Vec<&ConsonantPair> = m.counts.keys().collect();
        golds.sort_by(|a, b| m.row_total(b).cmp(&m.row_total(a)).then_with(|| a.cmp(b)));
        for g in golds {
            writeln!(
                out,
                "{cond}\t{g}\t{}\t{}\t{}\t{}",
                m.row_total(g),
                m.correct(g),
                opt(m.accuracy(g).map(|a| 100.0 * a), 2),
                m.regularizations(g)
            )?;
        }
    }
    Ok(())
}

/// Wide matrix of one condition: a row per gold pair, a column per predicted pair.
pub fn write_confusion_wide<W: Write>(m: &ConfusionMatrix, mut out: W) -> std::io::Result<()> {
    let cols: BTreeSet<&ConsonantPair> = m.counts.values().flat_map(|r| r.keys()).collect();
    write!(out, "gold")?;
    for c in &cols {
        write!(out, "\t{c}")?;
    }
    writeln!(out, "\taccuracy")?;
    for (gold, row) in &m.counts {
        write!(out, "{gold}")?;
        for c in &cols {
            write!(out, "\t{}", row.get(*c).copied().unwrap_or(0))?;
        }
        writeln!(out, "\t{}", opt(m.accuracy(gold).map(|a| 100.0 * a), 2))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_minimal_pairs() {
        let pairs = minimal_pairs();
        assert_eq!(pairs.len(), 8);
        let ioi: ZonePattern = "In-Out-In".parse().unwrap();
        let ooi: ZonePattern = "Out-Out-In".parse().unwrap();
        assert!(pairs
            .iter()
            .any(|p| p.kind == ContrastKind::Primacy && p.matching == ioi && p.other == ooi));
        for p in &pairs {
            let s = p.kind.slot();
            assert_eq!(p.matching.0[s], p.matching.0[2]);
            assert_ne!(p.other.0[s], p.other.0[2]);
            assert_eq!(p.matching.0[1 - s], p.other.0[1 - s]);
        }
    }

    #[test]
    fn brackets() {
        assert_eq!(ConsonantPair::new("", "jɡ").to_string(), "[ ]-[jɡ]");
        assert_eq!(ConsonantPair::new("s", "sk").to_string(), "[s]-[sk]");
    }

    #[test]
    fn wilson_known_value() {
        // 8 of 10: centre 0.7167, half width 0.2063 (standard tables)
        let (lo, hi) = wilson(8, 10);
        assert!((lo - 0.4902).abs() < 1e-3, "{lo}");
        assert!((hi - 0.9433).abs() < 1e-3, "{hi}");
    }
}
