//! Scores a rule-based baseline that always reuses the stem of source 1, then
//! prints the cell-combination table, position contrasts and the
//! consonant-pair confusion matrix it produces.
//!
//! ```text
//! cargo run --release --example analysis
//! ```

use std::collections::HashMap;

use morphome::analysis::{
    cell_combination_table, lemma_pair, pair_confusion_matrix, primacy_recency_contrasts, write_cell_table,
    write_confusion_wide, ConsonantPair,
};
use morphome::corpus::{extract_stem, strip_stress, VerbClass};
use morphome::evaluation::{score_records, summarize, CiMethod, Metric};
use morphome::synth::{synthesize, SynthConfig};
use morphome::transducer::PredictionRow;
use morphome::tripler::{generate_triples, ReinflectionTriple};

fn source_one_stem(t: &ReinflectionTriple) -> anyhow::Result<String> {
    let gold = strip_stress(&t.target_form);
    let target_stem = extract_stem(&t.target_form, t.target_tag)?;
    let ending = &gold[target_stem.surface.len()..];
    Ok(format!("{}{ending}", extract_stem(&t.src1.form, t.src1.tag)?.surface))
}

fn main() -> anyhow::Result<()> {
    let condition = "50L-50NL";
    let tables = synthesize(&SynthConfig {
        l_lemmas: 12,
        nl_lemmas: 12,
        incomplete_lemmas: 0,
        seed: 2,
    });
    let test: Vec<ReinflectionTriple> = tables
        .iter()
        .enumerate()
        .flat_map(|(i, t)| generate_triples(t, i as u64))
        .collect();
    let rows = test
        .iter()
        .enumerate()
        .map(|(id, t)| {
            Ok(PredictionRow {
                id,
                gold: t.target_form.clone(),
                hypothesis: source_one_stem(t)?,
                log_score: 0.0,
                complete: true,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let records = score_records(condition, 0, 0, &test, &rows)?;

    for s in summarize(&records, false, Metric::Stem, CiMethod::Normal) {
        println!(
            "{} {} stem accuracy {:.2}% over {} records",
            s.key.condition,
            s.key.verb_class.label(),
            s.mean,
            s.records
        );
    }

    let table = cell_combination_table(&records, &[condition.to_string()], Metric::Stem);
    println!();
    write_cell_table(&table, std::io::stdout())?;

    println!("\nposition contrasts (L verbs):");
    for c in primacy_recency_contrasts(&table)
        .iter()
        .filter(|c| c.verb_class == VerbClass::L)
    {
        println!(
            "  {:<8} {} vs {}: {:+.2} ({})",
            c.pair.kind.label(),
            c.pair.matching.label(),
            c.pair.other.label(),
            c.delta,
            c.direction()
        );
    }

    let pairs: HashMap<String, ConsonantPair> = tables.iter().map(|t| (t.lemma.clone(), lemma_pair(t))).collect();
    let matrix = pair_confusion_matrix(&records, &pairs);
    println!("\ngold pair by predicted pair, L verbs, In-cell targets:");
    write_confusion_wide(&matrix, std::io::stdout())?;
    for gold in matrix.counts.keys() {
        println!(
            "  {gold}: {} regularizations of {}",
            matrix.regularizations(gold),
            matrix.row_total(gold)
        );
    }
    Ok(())
}
