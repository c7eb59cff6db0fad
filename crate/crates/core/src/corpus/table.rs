use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ipa::{is_admitted, normalize};
use super::stem::{extract_stem, stem_or_surface, Stem};
use super::tag::{CellZone, Mood, MsdTag};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParadigmEntry {
    pub lemma: String,
    pub form: String,
    pub tag: MsdTag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerbClass {
    L,
    NL,
}

impl VerbClass {
    pub fn label(self) -> &'static str {
        match self {
            VerbClass::L => "L",
            VerbClass::NL => "NL",
        }
    }
}

impl fmt::Display for VerbClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for VerbClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" => Ok(VerbClass::L),
            "NL" => Ok(VerbClass::NL),
            _ => Err(Error::Serialization(format!("unknown verb class {s:?}"))),
        }
    }
}

/// Result of reading a UniMorph stream.
#[derive(Clone, Debug, Default)]
pub struct ParsedCorpus {
    /// Entries whose tag is one of the 12 present-tense cells.
    pub entries: Vec<ParadigmEntry>,
    /// Lines dropped because their tag is outside the inventory, keyed by tag.
    pub filtered: BTreeMap<String, usize>,
    pub lines_read: usize,
}

impl ParsedCorpus {
    pub fn filtered_total(&self) -> usize {
        self.filtered.values().sum()
    }
}

/// Reads three-column `lemma<TAB>form<TAB>tag` lines, normalizing to NFC.
pub fn parse_unimorph<R: BufRead>(reader: R) -> Result<ParsedCorpus> {
    let mut out = ParsedCorpus::default();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| Error::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        out.lines_read += 1;
        let malformed = |reason: String| Error::Malformed { line: line_no, reason };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(malformed(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let tag = MsdTag::parse_unimorph(fields[2].trim()).map_err(|e| malformed(e.to_string()))?;
        let Some(tag) = tag else {
            *out.filtered.entry(fields[2].trim().to_string()).or_default() += 1;
            continue;
        };
        let lemma = normalize(fields[0].trim());
        let form = normalize(fields[1].trim());
        if form.is_empty() {
            return Err(malformed("empty form".into()));
        }
        if lemma.is_empty() {
            return Err(malformed("empty lemma".into()));
        }
        if let Some(c) = lemma.chars().chain(form.chars()).find(|&c| !is_admitted(c)) {
            return Err(malformed(format!(
                "code point {c:?} (U+{:04X}) is not admitted",
                c as u32
            )));
        }
        out.entries.push(ParadigmEntry { lemma, form, tag });
    }
    Ok(out)
}

/// One lemma's complete present-tense paradigm.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InflectionTable {
    pub lemma: String,
    /// Forms indexed by [`MsdTag::index`].
    pub cells: [String; 12],
    pub verb_class: VerbClass,
}

impl InflectionTable {
    /// Builds a table from forms in canonical cell order and classifies it.
    pub fn new(lemma: impl Into<String>, cells: [String; 12]) -> Self {
        let mut table = Self {
            lemma: lemma.into(),
            cells,
            verb_class: VerbClass::NL,
        };
        table.verb_class = classify_verb(&table);
        table
    }

    pub fn form(&self, tag: MsdTag) -> &str {
        &self.cells[tag.index()]
    }

    pub fn cells(&self) -> impl Iterator<Item = (MsdTag, &str)> {
        MsdTag::ALL.iter().map(move |&t| (t, self.form(t)))
    }

    /// Stem of one cell; a form matching no ending falls back to its
    /// stress-free surface so that classification stays total.
    pub fn stem(&self, tag: MsdTag) -> Stem {
        stem_or_surface(self.form(tag), tag)
    }

    /// Cells whose form matches no ending of its mood.
    pub fn unsegmentable_cells(&self) -> Vec<MsdTag> {
        MsdTag::ALL
            .into_iter()
            .filter(|&t| extract_stem(self.form(t), t).is_err())
            .collect()
    }
}

/// L iff the IND.1SG stem equals every subjunctive stem and differs from at
/// least one Out indicative stem.
pub fn classify_verb(table: &InflectionTable) -> VerbClass {
    let first = table.stem(MsdTag::IND_1SG).surface;
    let in_shared = MsdTag::ALL
        .iter()
        .filter(|t| t.mood == Mood::Subjunctive)
        .all(|&t| table.stem(t).surface == first);
    let out_differs = MsdTag::ALL
        .iter()
        .filter(|t| t.zone() == CellZone::Out)
        .any(|&t| table.stem(t).surface != first);
    if in_shared && out_differs {
        VerbClass::L
    } else {
        VerbClass::NL
    }
}

/// Tables plus what was left out while assembling them.
#[derive(Clone, Debug, Default)]
pub struct Assembly {
    /// Complete tables sorted by lemma.
    pub tables: Vec<InflectionTable>,
    /// Lemmas dropped for missing cells, with the number of cells present.
    pub incomplete: Vec<(String, usize)>,
    /// Exact duplicate entries that were merged.
    pub duplicates: usize,
}

impl Assembly {
    pub fn count(&self, class: VerbClass) -> usize {
        self.tables.iter().filter(|t| t.verb_class == class).count()
    }
}

/// Groups entries by lemma and keeps lemmas with all 12 cells.
pub fn assemble_tables(entries: &[ParadigmEntry]) -> Result<Assembly> {
    let mut by_lemma: HashMap<&str, [Option<&str>; 12]> = HashMap::new();
    let mut duplicates = 0;
    for e in entries {
        let slot = &mut by_lemma.entry(e.lemma.as_str()).or_default()[e.tag.index()];
        match slot {
            None => *slot = Some(&e.form),
            Some(prev) if *prev == e.form => duplicates += 1,
            Some(prev) => {
                // report the pair in a stable order regardless of input order
                let (first, second) = if *prev <= e.form.as_str() {
                    (prev.to_string(), e.form.clone())
                } else {
                    (e.form.clone(), prev.to_string())
                };
                return Err(Error::ConflictingForms {
                    lemma: e.lemma.clone(),
                    tag: e.tag,
                    first,
                    second,
                });
            }
        }
    }
    let mut lemmas: Vec<_> = by_lemma.into_iter().collect();
    lemmas.sort_unstable_by(|a, b| a.0.cmp(b.0));
    let mut out = Assembly {
        duplicates,
        ..Assembly::default()
    };
    for (lemma, cells) in lemmas {
        let present = cells.iter().filter(|c| c.is_some()).count();
        if present < 12 {
            out.incomplete.push((lemma.to_string(), present));
            continue;
        }
        let cells = cells.map(|c| c.unwrap_or_default().to_string());
        out.tables.push(InflectionTable::new(lemma, cells));
    }
    Ok(out)
}

/// Writes the ingestion report: `category<TAB>key<TAB>count` rows.
pub fn write_ingest_report<W: Write>(mut w: W, parsed: &ParsedCorpus, assembly: &Assembly) -> std::io::Result<()> {
    writeln!(w, "category\tkey\tcount")?;
    writeln!(w, "lines\tread\t{}", parsed.lines_read)?;
    writeln!(w, "entries\tadmitted\t{}", parsed.entries.len())?;
    writeln!(w, "entries\tfiltered\t{}", parsed.filtered_total())?;
    writeln!(w, "entries\tduplicate_merged\t{}", assembly.duplicates)?;
    writeln!(w, "lemmas\tcomplete\t{}", assembly.tables.len())?;
    writeln!(w, "lemmas\tincomplete\t{}", assembly.incomplete.len())?;
    writeln!(w, "lemmas\tL\t{}", assembly.count(VerbClass::L))?;
    writeln!(w, "lemmas\tNL\t{}", assembly.count(VerbClass::NL))?;
    for (tag, n) in &parsed.filtered {
        writeln!(w, "filtered_tag\t{tag}\t{n}")?;
    }
    for (lemma, present) in &assembly.incomplete {
        writeln!(w, "incomplete_lemma\t{lemma}\t{present}")?;
    }
    for table in &assembly.tables {
        for tag in table.unsegmentable_cells() {
            writeln!(w, "unsegmentable\t{}:{}\t1", table.lemma, tag.short())?;
        }
    }
    Ok(())
}
