//! Synthetic analysis fixture with hand-derivable outcomes.
//!
//! One L lemma and one NL lemma, all 660 triples each, two models (runs) per
//! condition. Hypotheses follow fixed rules:
//!
//! * run 0, L: correct iff the target is an In cell; wrong targets get "x".
//! * run 1, L: correct except In targets whose second source is Out, which
//!   get the regularized form (Out stem + gold ending).
//! * run 0, NL: always "" (empty).
//! * run 1, NL: correct iff source 1 shares the target's zone, except in
//!   90L-10NL where it is always correct.

use morphome::analysis::lemma_pair;
use morphome::corpus::{extract_stem, strip_stress, CellZone, InflectionTable, MsdTag, VerbClass};
use morphome::evaluation::{score_records, PredictionRecord};
use morphome::synth::{synthesize, SynthConfig};
use morphome::transducer::PredictionRow;
use morphome::tripler::{generate_triples, ReinflectionTriple};

pub const CONDITIONS: [&str; 3] = ["10L-90NL", "50L-50NL", "90L-10NL"];

pub struct Fixture {
    pub l_table: InflectionTable,
    pub l_triples: Vec<ReinflectionTriple>,
    pub nl_triples: Vec<ReinflectionTriple>,
    pub records: Vec<PredictionRecord>,
}

pub fn regularized(table: &InflectionTable, t: &ReinflectionTriple) -> String {
    let gold = strip_stress(&t.target_form);
    let stem = extract_stem(&t.target_form, t.target_tag).unwrap();
    let ending = &gold[stem.surface.len()..];
    format!("{}{ending}", table.stem(MsdTag::IND_3SG).surface)
}

pub fn hypothesis(f: &Fixture, cond: &str, run: usize, t: &ReinflectionTriple) -> String {
    let [z1, z2, zt] = t.zone_pattern().0;
    let gold = t.target_form.clone();
    match (t.verb_class, run) {
        (VerbClass::L, 0) if zt == CellZone::In => gold,
        (VerbClass::L, 0) => "x".into(),
        (VerbClass::L, _) if zt == CellZone::In && z2 == CellZone::Out => regularized(&f.l_table, t),
        (VerbClass::L, _) => gold,
        (VerbClass::NL, 0) => String::new(),
        (VerbClass::NL, _) if cond == "90L-10NL" || z1 == zt => gold,
        (VerbClass::NL, _) => "x".into(),
    }
}

pub fn fixture() -> Fixture {
    let tables = synthesize(&SynthConfig {
        l_lemmas: 20,
        nl_lemmas: 5,
        incomplete_lemmas: 0,
        seed: 9,
    });
    let l_table = tables
        .iter()
        .find(|t| t.verb_class == VerbClass::L && lemma_pair(t).alternates())
        .unwrap()
        .clone();
    let nl_table = tables.iter().find(|t| t.verb_class == VerbClass::NL).unwrap().clone();
    let mut f = Fixture {
        l_triples: generate_triples(&l_table, 1),
        nl_triples: generate_triples(&nl_table, 2),
        l_table,
        records: Vec::new(),
    };
    let test: Vec<ReinflectionTriple> = f.l_triples.iter().chain(&f.nl_triples).cloned().collect();
    let mut records = Vec::new();
    for cond in CONDITIONS {
        for run in 0..2 {
            let rows: Vec<PredictionRow> = test
                .iter()
                .enumerate()
                .map(|(id, t)| PredictionRow {
                    id,
                    gold: t.target_form.clone(),
                    hypothesis: hypothesis(&f, cond, run, t),
                    log_score: -1.0,
                    complete: true,
                })
                .collect();
            records.extend(score_records(cond, 0, run, &test, &rows).unwrap());
        }
    }
    f.records = records;
    f
}

pub fn count(triples: &[ReinflectionTriple], pred: impl Fn(&ReinflectionTriple) -> bool) -> usize {
    triples.iter().filter(|t| pred(t)).count()
}
