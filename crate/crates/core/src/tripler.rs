//! Two-source reinflection triples and their line format.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CellZone, InflectionTable, MsdTag, VerbClass};
use crate::error::{Error, Result};
use crate::fsio::{atomic_write, read_to_string};

/// Token separating the fields of a source line.
pub const SEPARATOR: &str = "#";

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceCell {
    pub form: String,
    pub tag: MsdTag,
}

/// Zones of (source 1, source 2, target).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ZonePattern(pub [CellZone; 3]);

impl ZonePattern {
    /// All eight patterns in the row order of the cell-combination table.
    pub const TABLE_ORDER: [ZonePattern; 8] = {
        use CellZone::{In as I, Out as O};
        [
            ZonePattern([I, I, I]),
            ZonePattern([I, O, O]),
            ZonePattern([I, I, O]),
            ZonePattern([I, O, I]),
            ZonePattern([O, I, I]),
            ZonePattern([O, I, O]),
            ZonePattern([O, O, I]),
            ZonePattern([O, O, O]),
        ]
    };

    pub fn of(src1: MsdTag, src2: MsdTag, target: MsdTag) -> Self {
        Self([src1.zone(), src2.zone(), target.zone()])
    }

    pub fn label(self) -> String {
        let [a, b, c] = self.0;
        format!("{a}-{b}-{c}")
    }
}

impl fmt::Display for ZonePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ZonePattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('-').collect();
        if parts.len() != 3 {
            return Err(Error::Serialization(format!("bad zone pattern {s:?}")));
        }
        Ok(Self([parts[0].parse()?, parts[1].parse()?, parts[2].parse()?]))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReinflectionTriple {
    pub lemma: String,
    pub verb_class: VerbClass,
    pub src1: SourceCell,
    pub src2: SourceCell,
    pub target_tag: MsdTag,
    pub target_form: String,
}

impl ReinflectionTriple {
    pub fn zone_pattern(&self) -> ZonePattern {
        ZonePattern::of(self.src1.tag, self.src2.tag, self.target_tag)
    }
}

/// Label such as `In-Out-In`.
pub fn zone_pattern_label(triple: &ReinflectionTriple) -> String {
    triple.zone_pattern().label()
}

/// How the two sources of a triple are assigned to positions 1 and 2.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceOrdering {
    /// Independent seeded coin flip per triple.
    #[default]
    Random,
    /// Lower cell index first (indicative before subjunctive, then person-number).
    Canonical,
}

/// All 660 triples of a table with randomly ordered sources.
pub fn generate_triples(table: &InflectionTable, seed: u64) -> Vec<ReinflectionTriple> {
    generate_triples_with(table, seed, SourceOrdering::Random)
}

/// One triple per unordered source pair and target cell outside the pair,
/// enumerated in canonical cell order.
pub fn generate_triples_with(table: &InflectionTable, seed: u64, ordering: SourceOrdering) -> Vec<ReinflectionTriple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = |t: MsdTag| SourceCell {
        form: table.form(t).to_string(),
        tag: t,
    };
    let mut out = Vec::with_capacity(660);
    for (i, &a) in MsdTag::ALL.iter().enumerate() {
        for &b in &MsdTag::ALL[i + 1..] {
            for &target in MsdTag::ALL.iter().filter(|&&t| t != a && t != b) {
                let swap = match ordering {
                    SourceOrdering::Random => rng.random::<bool>(),
                    SourceOrdering::Canonical => false,
                };
                let (s1, s2) = if swap { (b, a) } else { (a, b) };
                out.push(ReinflectionTriple {
                    lemma: table.lemma.clone(),
                    verb_class: table.verb_class,
                    src1: cell(s1),
                    src2: cell(s2),
                    target_tag: target,
                    target_form: table.form(target).to_string(),
                });
            }
        }
    }
    out
}

/// Source and target lines of one example.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SerializedExample {
    pub source: String,
    pub target: String,
}

/// Space-separated code points of a form.
pub fn chars_line(form: &str) -> String {
    let mut out = String::with_capacity(form.len() * 2);
    for (i, c) in form.chars().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push(c);
    }
    out
}

pub fn serialize(triple: &ReinflectionTriple) -> SerializedExample {
    let source = format!(
        "{} {SEPARATOR} {} {SEPARATOR} {} {SEPARATOR} {} {SEPARATOR} {}",
        chars_line(&triple.src1.form),
        triple.src1.tag,
        chars_line(&triple.src2.form),
        triple.src2.tag,
        triple.target_tag,
    );
    SerializedExample {
        source,
        target: chars_line(&triple.target_form),
    }
}

/// Fields recoverable from the two lines alone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExampleFields {
    pub src1: SourceCell,
    pub src2: SourceCell,
    pub target_tag: MsdTag,
    pub target_form: String,
}

fn join_chars(tokens: &[&str]) -> Result<String> {
    let mut out = String::new();
    for t in tokens {
        let mut cs = t.chars();
        match (cs.next(), cs.next()) {
            (Some(c), None) => out.push(c),
            _ => return Err(Error::Serialization(format!("{t:?} is not a single character"))),
        }
    }
    Ok(out)
}

pub fn parse_example(example: &SerializedExample) -> Result<ExampleFields> {
    let tokens: Vec<&str> = example.source.split(' ').collect();
    let fields: Vec<&[&str]> = tokens.split(|&t| t == SEPARATOR).collect();
    let [f1, t1, f2, t2, target] = fields.as_slice() else {
        return Err(Error::Serialization(format!(
            "expected 5 fields in source line {:?}",
            example.source
        )));
    };
    let tag = |tokens: &[&str]| -> Result<MsdTag> {
        match tokens {
            [t] => t.parse(),
            _ => Err(Error::Serialization(format!("expected one tag token, got {tokens:?}"))),
        }
    };
    let target_tokens: Vec<&str> = if example.target.is_empty() {
        Vec::new()
    } else {
        example.target.split(' ').collect()
    };
    Ok(ExampleFields {
        src1: SourceCell {
            form: join_chars(f1)?,
            tag: tag(t1)?,
        },
        src2: SourceCell {
            form: join_chars(f2)?,
            tag: tag(t2)?,
        },
        target_tag: tag(target)?,
        target_form: join_chars(&target_tokens)?,
    })
}

/// Inverse of [`serialize`]; lemma and class come from the sidecar.
pub fn deserialize(example: &SerializedExample, lemma: &str, verb_class: VerbClass) -> Result<ReinflectionTriple> {
    let f = parse_example(example)?;
    Ok(ReinflectionTriple {
        lemma: lemma.to_string(),
        verb_class,
        src1: f.src1,
        src2: f.src2,
        target_tag: f.target_tag,
        target_form: f.target_form,
    })
}

pub const SIDECAR_HEADER: &str = "id\tlemma\tverb_class\tsrc1_tag\tsrc2_tag\ttarget_tag\tzone_pattern";

/// Paths of the three files making up one dataset split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetFiles {
    pub source: PathBuf,
    pub target: PathBuf,
    pub sidecar: PathBuf,
}

impl DatasetFiles {
    pub fn new(dir: &Path, name: &str) -> Self {
        Self {
            source: dir.join(format!("{name}.src")),
            target: dir.join(format!("{name}.tgt")),
            sidecar: dir.join(format!("{name}.tsv")),
        }
    }

    pub fn all(&self) -> [&Path; 3] {
        [&self.source, &self.target, &self.sidecar]
    }

    pub fn exist(&self) -> bool {
        self.all().iter().all(|p| p.exists())
    }
}

/// Renders the three file contents of a split.
pub fn render_dataset(triples: &[ReinflectionTriple]) -> (String, String, String) {
    let mut src = String::new();
    let mut tgt = String::new();
    let mut tsv = format!("{SIDECAR_HEADER}\n");
    for (i, t) in triples.iter().enumerate() {
        let ex = serialize(t);
        src.push_str(&ex.source);
        src.push('\n');
        tgt.push_str(&ex.target);
        tgt.push('\n');
        tsv.push_str(&format!(
            "{i}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            t.lemma,
            t.verb_class,
            t.src1.tag,
            t.src2.tag,
            t.target_tag,
            t.zone_pattern()
        ));
    }
    (src, tgt, tsv)
}

pub fn write_dataset(dir: &Path, name: &str, triples: &[ReinflectionTriple]) -> Result<DatasetFiles> {
    let files = DatasetFiles::new(dir, name);
    let (src, tgt, tsv) = render_dataset(triples);
    atomic_write(&files.source, src.as_bytes())?;
    atomic_write(&files.target, tgt.as_bytes())?;
    atomic_write(&files.sidecar, tsv.as_bytes())?;
    Ok(files)
}

pub fn read_dataset(files: &DatasetFiles) -> Result<Vec<ReinflectionTriple>> {
    let src = read_to_string(&files.source)?;
    let tgt = read_to_string(&files.target)?;
    let tsv = read_to_string(&files.sidecar)?;
    let mut rows = tsv.lines();
    if rows.next() != Some(SIDECAR_HEADER) {
        return Err(Error::Serialization(format!("{}: bad header", files.sidecar.display())));
    }
    let (src, tgt, rows): (Vec<_>, Vec<_>, Vec<_>) = (src.lines().collect(), tgt.lines().collect(), rows.collect());
    if src.len() != tgt.len() || src.len() != rows.len() {
        return Err(Error::Serialization(format!(
            "{}: misaligned files ({} / {} / {} lines)",
            files.source.display(),
            src.len(),
            tgt.len(),
            rows.len()
        )));
    }
    let mut out = Vec::with_capacity(src.len());
    for ((s, t), row) in src.iter().zip(&tgt).zip(&rows) {
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != 7 {
            return Err(Error::Serialization(format!("bad sidecar row {row:?}")));
        }
        let ex = SerializedExample {
            source: s.to_string(),
            target: t.to_string(),
        };
        let triple = deserialize(&ex, cols[1], cols[2].parse()?)?;
        if triple.src1.tag.to_string() != cols[3]
            || triple.src2.tag.to_string() != cols[4]
            || triple.target_tag.to_string() != cols[5]
        {
            return Err(Error::Serialization(format!(
                "sidecar row {row:?} disagrees with {s:?}"
            )));
        }
        out.push(triple);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::{HashMap, HashSet};

    use super::*;
    use crate::corpus::InflectionTable;

    pub(crate) fn decir() -> InflectionTable {
        let forms = [
            "dˈiɡo",
            "dˈises",
            "dˈise",
            "desˈimos",
            "desˈis",
            "dˈisen",
            "dˈiɡa",
            "dˈiɡas",
            "dˈiɡa",
            "diɡˈamos",
            "diɡˈajs",
            "dˈiɡan",
        ];
        InflectionTable::new("desiɾ", forms.map(String::from))
    }

    fn tag(s: &str) -> MsdTag {
        s.parse().unwrap()
    }

    #[test]
    fn documented_line_verbatim() {
        let t = ReinflectionTriple {
            lemma: "desiR".into(),
            verb_class: VerbClass::L,
            src1: SourceCell {
                form: "diga".into(),
                tag: tag("<V;SBJV;PRS;1;SG>"),
            },
            src2: SourceCell {
                form: "digas".into(),
                tag: tag("<V;SBJV;PRS;2;SG>"),
            },
            target_tag: MsdTag::IND_1SG,
            target_form: "digo".into(),
        };
        let ex = serialize(&t);
        assert_eq!(
            ex.source,
            "d i g a # <V;SBJV;PRS;1;SG> # d i g a s # <V;SBJV;PRS;2;SG> # <V;IND;PRS;1;SG>"
        );
        assert_eq!(ex.target, "d i g o");
        assert_eq!(deserialize(&ex, "desiR", VerbClass::L).unwrap(), t);
    }

    #[test]
    fn single_character_form_is_one_token() {
        assert_eq!(chars_line("a"), "a");
        assert_eq!(chars_line(""), "");
    }

    #[test]
    fn decir_triples() {
        let triples = generate_triples(&decir(), 7);
        assert_eq!(triples.len(), 660);
        let t = triples
            .iter()
            .find(|t| {
                let pair: HashSet<_> = [t.src1.tag, t.src2.tag].into();
                pair == HashSet::from([tag("<V;SBJV;PRS;1;SG>"), tag("<V;SBJV;PRS;2;SG>")])
                    && t.target_tag == MsdTag::IND_1SG
            })
            .unwrap();
        assert_eq!(t.target_form, "dˈiɡo");
        let labels: HashSet<String> = triples.iter().map(zone_pattern_label).collect();
        assert_eq!(labels.len(), 8);
        let mut per_target: HashMap<MsdTag, usize> = HashMap::new();
        for t in &triples {
            *per_target.entry(t.target_tag).or_default() += 1;
        }
        assert!(per_target.values().all(|&n| n == 55));
    }

    #[test]
    fn ordering_modes() {
        let a = generate_triples(&decir(), 3);
        assert_eq!(a, generate_triples(&decir(), 3));
        assert_ne!(a, generate_triples(&decir(), 4));
        let canon = generate_triples_with(&decir(), 3, SourceOrdering::Canonical);
        assert!(canon.iter().all(|t| t.src1.tag.index() < t.src2.tag.index()));
    }

    #[test]
    fn labels() {
        use CellZone::*;
        assert_eq!(ZonePattern([In, Out, In]).label(), "In-Out-In");
        assert_eq!(ZonePattern([Out, Out, Out]).label(), "Out-Out-Out");
        for p in ZonePattern::TABLE_ORDER {
            assert_eq!(p.label().parse::<ZonePattern>().unwrap(), p);
        }
    }

    #[test]
    fn dataset_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let triples = generate_triples(&decir(), 1);
        let files = write_dataset(dir.path(), "train", &triples[..40]).unwrap();
        assert_eq!(read_dataset(&files).unwrap(), triples[..40]);
        let empty = write_dataset(dir.path(), "empty", &[]).unwrap();
        assert!(read_dataset(&empty).unwrap().is_empty());
    }

    #[test]
    fn malformed_lines_are_rejected() {
        let bad = [
            ("d i # <V;IND;PRS;1;SG> # d", "d"),
            ("di # <V;IND;PRS;1;SG> # d # <V;IND;PRS;2;SG> # <V;IND;PRS;3;SG>", "d"),
            ("d # <V;IND;PRS;1;XX> # d # <V;IND;PRS;2;SG> # <V;IND;PRS;3;SG>", "d"),
        ];
        for (source, target) in bad {
            let ex = SerializedExample {
                source: source.into(),
                target: target.into(),
            };
            assert!(parse_example(&ex).is_err(), "{source}");
        }
    }
}
