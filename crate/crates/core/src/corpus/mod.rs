//! Paradigm ingestion, stem extraction and L/NL classification.

mod ipa;
mod stem;
mod table;
mod tag;

pub use ipa::{
    final_cluster, is_admitted, is_consonant, is_stress_marker, normalize, strip_stress, EndingInventory,
    STRESS_MARKERS, VOWELS,
};
pub use stem::{extract_stem, extract_stem_with, segment, stem_or_surface, Segmentation, Stem};
pub use table::{
    assemble_tables, classify_verb, parse_unimorph, write_ingest_report, Assembly, InflectionTable, ParadigmEntry,
    ParsedCorpus, VerbClass,
};
pub use tag::{zone_of, CellZone, Mood, MsdTag, Number};
