use std::collections::BTreeMap;

use proptest::prelude::*;

use morphome::corpus::{CellZone, Mood, MsdTag, Number};
use morphome::evaluation::{score_sequence, score_stem};
use morphome::sampler::{FrequencyCondition, Sampler, SamplerConfig, SplitSizes};
use morphome::synth::{synthesize, SynthConfig};
use morphome::tripler::{generate_triples_with, render_dataset, SourceOrdering};

fn small_corpus(seed: u64) -> Vec<morphome::corpus::InflectionTable> {
    synthesize(&SynthConfig {
        l_lemmas: 12,
        nl_lemmas: 20,
        incomplete_lemmas: 0,
        seed,
    })
}

fn tag_strategy() -> impl Strategy<Value = MsdTag> {
    (0..12usize).prop_map(|i| MsdTag::ALL[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sequence_correct_implies_stem_correct(
        seed in 0u64..50,
        lemma_idx in 0usize..32,
        tag in tag_strategy(),
        edit in prop::option::of((0usize..12, "[a-zɾçxθɡ]{0,2}")),
    ) {
        let tables = small_corpus(seed);
        let gold = tables[lemma_idx % tables.len()].form(tag).to_string();
        let hyp = match &edit {
            Some((cut, insert)) => {
                let chars: Vec<char> = gold.chars().collect();
                let cut = (*cut).min(chars.len());
                let mut h: String = chars[..chars.len() - cut].iter().collect();
                h.push_str(insert);
                h
            }
            None => gold.clone(),
        };
        let stem = score_stem(&hyp, &gold, tag);
        if score_sequence(&hyp, &gold) {
            prop_assert!(stem.correct);
        }
        if !stem.correct {
            prop_assert!(!score_sequence(&hyp, &gold));
        }
    }

    #[test]
    fn zones_partition_the_present_cells(tag in tag_strategy()) {
        let expected_in = tag.mood == Mood::Subjunctive || (tag.person == 1 && tag.number == Number::Singular);
        prop_assert_eq!(tag.zone() == CellZone::In, expected_in);
        prop_assert_eq!(tag.zone().flip() == CellZone::Out, expected_in);
    }

    #[test]
    fn every_lemma_has_660_triples_with_21_35_10_source_pairs(
        corpus_seed in 0u64..40,
        lemma_idx in 0usize..32,
        seed in any::<u64>(),
        canonical in any::<bool>(),
    ) {
        let tables = small_corpus(corpus_seed);
        let table = &tables[lemma_idx % tables.len()];
        let ordering = if canonical { SourceOrdering::Canonical } else { SourceOrdering::Random };
        let triples = generate_triples_with(table, seed, ordering);
        prop_assert_eq!(triples.len(), 660);

        let mut pairs: BTreeMap<(MsdTag, MsdTag), usize> = BTreeMap::new();
        let mut seen = std::collections::HashSet::new();
        for t in &triples {
            prop_assert!(t.src1.tag != t.src2.tag);
            prop_assert!(t.target_tag != t.src1.tag && t.target_tag != t.src2.tag);
            prop_assert_eq!(&t.target_form, table.form(t.target_tag));
            prop_assert_eq!(&t.src1.form, table.form(t.src1.tag));
            let key = if t.src1.tag < t.src2.tag { (t.src1.tag, t.src2.tag) } else { (t.src2.tag, t.src1.tag) };
            prop_assert!(seen.insert((key, t.target_tag)), "duplicate triple");
            *pairs.entry(key).or_default() += 1;
        }
        prop_assert_eq!(pairs.len(), 66);
        prop_assert!(pairs.values().all(|&n| n == 10));
        let mut zones: BTreeMap<usize, usize> = BTreeMap::new();
        for (a, b) in pairs.keys() {
            let ins = usize::from(a.zone() == CellZone::In) + usize::from(b.zone() == CellZone::In);
            *zones.entry(ins).or_default() += 1;
        }
        prop_assert_eq!(zones.get(&2).copied(), Some(21));
        prop_assert_eq!(zones.get(&1).copied(), Some(35));
        prop_assert_eq!(zones.get(&0).copied(), Some(10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn test_set_bytes_are_identical_across_runs_of_a_bin(
        master in any::<u64>(),
        percent in prop::sample::select(vec![10u32, 50, 90]),
        bin in 0usize..3,
    ) {
        let tables = small_corpus(7);
        let config = SamplerConfig {
            split: SplitSizes { train: 6, dev: 2, test: 2 },
            bins: 3,
            runs: 3,
            source_ordering: SourceOrdering::Random,
        };
        let cond = FrequencyCondition::from_percent(percent, 10).unwrap();
        let mut sampler = Sampler::new(&tables, config.clone(), master).unwrap();
        let reference = sampler.build(&cond, bin, 0).unwrap();
        let (_, _, reference_test) = render_dataset(&reference.test);
        prop_assert_eq!(reference.test.len(), 2 * 660);
        for run in 1..3 {
            let ds = sampler.build(&cond, bin, run).unwrap();
            let (src, tgt, tsv) = render_dataset(&ds.test);
            let (rsrc, rtgt, _) = render_dataset(&reference.test);
            prop_assert_eq!(src, rsrc);
            prop_assert_eq!(tgt, rtgt);
            prop_assert_eq!(&tsv, &reference_test);
            prop_assert_eq!(&ds.roster, &reference.roster);
        }
        // a fresh sampler with the same master seed rebuilds the same bytes
        let mut again = Sampler::new(&tables, config, master).unwrap();
        let rebuilt = again.build(&cond, bin, 2).unwrap();
        prop_assert_eq!(render_dataset(&rebuilt.test).2, reference_test);
        prop_assert!(reference.test.iter().all(|t| reference.roster.test.iter().any(|(l, c)| *l == t.lemma && *c == t.verb_class)));
    }
}

#[test]
fn exactly_seven_in_cells() {
    let ins: Vec<String> = MsdTag::ALL
        .iter()
        .filter(|t| t.zone() == CellZone::In)
        .map(|t| t.short())
        .collect();
    assert_eq!(
        ins,
        ["IND.1SG", "SBJV.1SG", "SBJV.2SG", "SBJV.3SG", "SBJV.1PL", "SBJV.2PL", "SBJV.3PL"]
    );
}
