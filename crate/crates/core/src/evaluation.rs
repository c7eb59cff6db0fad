//! Sequence and stem accuracy per record, and across-model summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{consonant_triple, ConsonantTriple, KnowledgeState};
use crate::corpus::{extract_stem, MsdTag, VerbClass};
use crate::error::{Error, Result};
use crate::sampler::dataset_id;
use crate::transducer::PredictionRow;
use crate::tripler::{ReinflectionTriple, ZonePattern};

/// Outcome of extracting a stem from a hypothesis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StemStatus {
    Ok,
    /// No ending of the target mood matched.
    Unsegmentable,
    /// The ending consumed the whole form.
    Empty,
}

impl StemStatus {
    pub fn label(self) -> &'static str {
        match self {
            StemStatus::Ok => "ok",
            StemStatus::Unsegmentable => "unsegmentable",
            StemStatus::Empty => "empty",
        }
    }
}

impl FromStr for StemStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(StemStatus::Ok),
            "unsegmentable" => Ok(StemStatus::Unsegmentable),
            "empty" => Ok(StemStatus::Empty),
            _ => Err(Error::Serialization(format!("bad stem status {s:?}"))),
        }
    }
}

/// Exact code-point equality.
pub fn score_sequence(hypothesis: &str, gold: &str) -> bool {
    hypothesis == gold
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StemScore {
    pub correct: bool,
    pub status: StemStatus,
    /// Final consonant cluster of the hypothesis stem, when one was extracted.
    pub cluster: Option<String>,
}

/// Compares hypothesis and gold stems for the target cell. An exact match is
/// always stem-correct; otherwise a hypothesis whose stem cannot be extracted
/// or is empty counts as wrong.
pub fn score_stem(hypothesis: &str, gold: &str, tag: MsdTag) -> StemScore {
    let hyp = extract_stem(hypothesis, tag);
    let (status, cluster) = match &hyp {
        Ok(s) if s.surface.is_empty() => (StemStatus::Empty, Some(String::new())),
        Ok(s) => (StemStatus::Ok, Some(s.final_cluster.clone())),
        Err(_) => (StemStatus::Unsegmentable, None),
    };
    let correct = score_sequence(hypothesis, gold)
        || match (&hyp, status) {
            (Ok(h), StemStatus::Ok) => extract_stem(gold, tag).is_ok_and(|g| g.surface == h.surface),
            _ => false,
        };
    StemScore {
        correct,
        status,
        cluster,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub condition: String,
    pub bin: usize,
    pub run: usize,
    /// Row of the test set.
    pub id: usize,
    pub triple: ReinflectionTriple,
    pub hypothesis: String,
    /// False when decoding stopped at the length cap.
    pub complete: bool,
    pub seq_correct: bool,
    pub stem_correct: bool,
    pub stem_status: StemStatus,
    pub gold_triple: ConsonantTriple,
    pub predicted_cluster: Option<String>,
    pub knowledge_state: Option<KnowledgeState>,
}

impl PredictionRecord {
    pub fn dataset(&self) -> String {
        dataset_id(&self.condition, self.bin, self.run)
    }

    pub fn verb_class(&self) -> VerbClass {
        self.triple.verb_class
    }

    pub fn zone_pattern(&self) -> ZonePattern {
        self.triple.zone_pattern()
    }

    pub fn gold(&self) -> &str {
        &self.triple.target_form
    }
}

/// Joins a test set with its predictions (aligned by row id) and scores every row.
pub fn score_records(
    condition: &str,
    bin: usize,
    run: usize,
    test: &[ReinflectionTriple],
    predictions: &[PredictionRow],
) -> Result<Vec<PredictionRecord>> {
    if test.len() != predictions.len() {
        return Err(Error::Serialization(format!(
            "{}: {} test rows but {} predictions",
            dataset_id(condition, bin, run),
            test.len(),
            predictions.len()
        )));
    }
    test.iter()
        .zip(predictions)
        .enumerate()
        .map(|(i, (t, p))| {
            if p.id != i || p.gold != t.target_form {
                return Err(Error::Serialization(format!(
                    "{}: prediction row {} does not match test row {i}",
                    dataset_id(condition, bin, run),
                    p.id
                )));
            }
            let stem = score_stem(&p.hypothesis, &t.target_form, t.target_tag);
            Ok(PredictionRecord {
                condition: condition.to_string(),
                bin,
                run,
                id: i,
                triple: t.clone(),
                hypothesis: p.hypothesis.clone(),
                complete: p.complete,
                seq_correct: score_sequence(&p.hypothesis, &t.target_form),
                stem_correct: stem.correct,
                stem_status: stem.status,
                gold_triple: consonant_triple(t),
                predicted_cluster: stem.cluster,
                knowledge_state: None,
            })
        })
        .collect()
}

pub const RECORDS_HEADER: &str = "condition\tbin\trun\tid\tlemma\tverb_class\tzone_pattern\tsrc1_tag\tsrc1_form\tsrc2_tag\tsrc2_form\ttarget_tag\tgold\thypothesis\tcomplete\tseq_correct\tstem_correct\tstem_status\tsrc1_cluster\tsrc2_cluster\ttarget_cluster\tpredicted_cluster\tknowledge_state";

/// Missing optional values are written as this marker.
const NONE: &str = "NA";

pub fn write_records<W: Write>(records: &[PredictionRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{RECORDS_HEADER}")?;
    for r in records {
        let t = &r.triple;
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.condition,
            r.bin,
            r.run,
            r.id,
            t.lemma,
            t.verb_class,
            t.zone_pattern(),
            t.src1.tag,
            t.src1.form,
            t.src2.tag,
            t.src2.form,
            t.target_tag,
            t.target_form,
            r.hypothesis,
            r.complete,
            r.seq_correct,
            r.stem_correct,
            r.stem_status.label(),
            r.gold_triple.src1,
            r.gold_triple.src2,
            r.gold_triple.target,
            r.predicted_cluster.as_deref().unwrap_or(NONE),
            r.knowledge_state.map_or(NONE, KnowledgeState::label),
        )?;
    }
    Ok(())
}

pub fn parse_records(text: &str) -> Result<Vec<PredictionRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(RECORDS_HEADER) {
        return Err(Error::Serialization("records file has an unexpected header".into()));
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let bad = |what: &str| Error::Malformed {
                line: n + 2,
                reason: format!("bad {what}"),
            };
            let c: Vec<&str> = line.split('\t').collect();
            if c.len() != 23 {
                return Err(bad("column count"));
            }
            let parse_bool = |s: &str, what: &str| s.parse::<bool>().map_err(|_| bad(what));
            let parse_usize = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(what));
            let opt = |s: &str| (s != NONE).then(|| s.to_string());
            let triple = ReinflectionTriple {
                lemma: c[4].to_string(),
                verb_class: c[5].parse()?,
                src1: crate::tripler::SourceCell {
                    tag: c[7].parse()?,
                    form: c[8].to_string(),
                },
                src2: crate::tripler::SourceCell {
                    tag: c[9].parse()?,
                    form: c[10].to_string(),
                },
                target_tag: c[11].parse()?,
                target_form: c[12].to_string(),
            };
            Ok(PredictionRecord {
                condition: c[0].to_string(),
                bin: parse_usize(c[1], "bin")?,
                run: parse_usize(c[2], "run")?,
                id: parse_usize(c[3], "id")?,
                triple,
                hypothesis: c[13].to_string(),
                complete: parse_bool(c[14], "complete")?,
                seq_correct: parse_bool(c[15], "seq_correct")?,
                stem_correct: parse_bool(c[16], "stem_correct")?,
                stem_status: c[17].parse()?,
                gold_triple: ConsonantTriple {
                    src1: c[18].to_string(),
                    src2: c[19].to_string(),
                    target: c[20].to_string(),
                },
                predicted_cluster: opt(c[21]),
                knowledge_state: opt(c[22]).map(|s| s.parse()).transpose()?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Sequence,
    Stem,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::Sequence => "sequence",
            Metric::Stem => "stem",
        }
    }

    pub fn hit(self, r: &PredictionRecord) -> bool {
        match self {
            Metric::Sequence => r.seq_correct,
            Metric::Stem => r.stem_correct,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// How interval bounds are computed from the per-model accuracies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum CiMethod {
    /// mean ± 1.96 · s / √n with the sample standard deviation s
    #[default]
    Normal,
    /// Percentile bootstrap of the mean over models.
    Bootstrap { resamples: usize, seed: u64 },
}

impl CiMethod {
    pub fn label(self) -> &'static str {
        match self {
            CiMethod::Normal => "normal_across_models",
            CiMethod::Bootstrap { .. } => "bootstrap_across_models",
        }
    }
}

pub const Z_95: f64 = 1.959_963_984_540_054;

/// Mean and 95% interval of per-model accuracies; `None` for the interval
/// when fewer than two models contribute.
pub fn mean_ci(values: &[f64], method: CiMethod) -> (f64, Option<(f64, f64)>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    match method {
        CiMethod::Normal => {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let half = Z_95 * var.sqrt() / (n as f64).sqrt();
            (mean, Some((mean - half, mean + half)))
        }
        CiMethod::Bootstrap { resamples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut means: Vec<f64> = (0..resamples.max(1))
                .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
                .collect();
            means.sort_by(f64::total_cmp);
            let at = |q: f64| means[((q * (means.len() - 1) as f64).round() as usize).min(means.len() - 1)];
            (mean, Some((at(0.025).min(mean), at(0.975).max(mean))))
        }
    }
}

/// Grouping of a summary row.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupKey {
    pub condition: String,
    pub verb_class: VerbClass,
    pub zone_pattern: Option<ZonePattern>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracySummary {
    pub key: GroupKey,
    pub metric: Metric,
    /// Percent.
    pub mean: f64,
    pub ci: Option<(f64, f64)>,
    pub models: usize,
    pub records: usize,
}

/// Mean over models of each model's accuracy, per (condition, class[, zone
/// pattern]). Rows are ordered by condition, class, then zone pattern in
/// table order.
pub fn summarize(
    records: &[PredictionRecord],
    by_zone: bool,
    metric: Metric,
    method: CiMethod,
) -> Vec<AccuracySummary> {
    // group -> model -> (hits, n)
    let mut groups: BTreeMap<(String, VerbClass, usize), BTreeMap<String, (usize, usize)>> = BTreeMap::new();
    let zone_rank = |z: ZonePattern| {
        ZonePattern::TABLE_ORDER
            .iter()
            .position(|&p| p == z)
            .unwrap_or(usize::MAX)
    };
    for r in records {
        let zone = if by_zone { zone_rank(r.zone_pattern()) } else { 0 };
        let cell = groups
            .entry((r.condition.clone(), r.verb_class(), zone))
            .or_default()
            .entry(r.dataset())
            .or_default();
        cell.0 += usize::from(metric.hit(r));
        cell.1 += 1;
    }
    groups
        .into_iter()
        .map(|((condition, verb_class, zone), models)| {
            let accs: Vec<f64> = models.values().map(|&(h, n)| 100.0 * h as f64 / n as f64).collect();
            let (mean, ci) = mean_ci(&accs, method);
            AccuracySummary {
                key: GroupKey {
                    condition,
                    verb_class,
                    zone_pattern: by_zone.then(|| ZonePattern::TABLE_ORDER[zone]),
                },
                metric,
                mean,
                ci,
                models: models.len(),
                records: models.values().map(|m| m.1).sum(),
            }
        })
        .collect()
}

pub const SUMMARY_HEADER: &str =
    "condition\tverb_class\tzone_pattern\tmetric\tmean\tci_low\tci_high\tmodels\trecords\tci_method";

pub fn write_summaries<W: Write>(rows: &[AccuracySummary], method: CiMethod, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for s in rows {
        let (lo, hi) = match s.ci {
            Some((lo, hi)) => (format!("{lo:.4}"), format!("{hi:.4}")),
            None => (NONE.to_string(), NONE.to_string()),
        };
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.4}\t{}\t{}\t{}\t{}\t{}",
            s.key.condition,
            s.key.verb_class,
            s.key.zone_pattern.map_or("all".to_string(), |z| z.label()),
            s.metric,
            s.mean,
            lo,
            hi,
            s.models,
            s.records,
            method.label()
        )?;
    }
    Ok(())
}
