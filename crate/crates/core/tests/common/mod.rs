#![allow(dead_code)]

pub mod fixture;
pub mod oracle;

use morphome::synth::{synthesize, SynthConfig};
use morphome::tripler::{generate_triples, serialize, SerializedExample};

/// `per_lemma` serialized triples from each of `lemmas` synthetic tables.
pub fn examples(lemmas: usize, per_lemma: usize) -> Vec<SerializedExample> {
    let tables = synthesize(&SynthConfig {
        l_lemmas: lemmas / 2,
        nl_lemmas: lemmas - lemmas / 2,
        incomplete_lemmas: 0,
        seed: 3,
    });
    tables
        .iter()
        .enumerate()
        .flat_map(|(i, t)| generate_triples(t, i as u64).into_iter().take(per_lemma))
        .map(|t| serialize(&t))
        .collect()
}
