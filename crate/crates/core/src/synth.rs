//! Synthetic Spanish-like present-tense paradigms in IPA.
//!
//! L verbs carry a stem-final consonant alternation between the Out cells and
//! the In cells (`konos-` / `konosk-`), drawn with weights that follow the
//! attested Spanish pair frequencies, plus e/i raising verbs whose alternation
//! is a vowel. NL verbs are regular first, second and third conjugation verbs
//! and diphthongizing verbs (`pens-` / `pjens-` under stem stress). A
//! stem-final `x` surfaces as `ç` before front vowels, so velar-fricative
//! verbs of the second and third conjugations come out L-shaped on their own.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CellZone, InflectionTable, Mood, MsdTag, Number, VerbClass};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub l_lemmas: usize,
    pub nl_lemmas: usize,
    /// Extra lemmas written with one cell missing (dropped at assembly).
    pub incomplete_lemmas: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            l_lemmas: 300,
            nl_lemmas: 4860,
            incomplete_lemmas: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Conjugation {
    Ar,
    Er,
    Ir,
}

impl Conjugation {
    fn theme(self) -> &'static str {
        match self {
            Conjugation::Ar => "a",
            Conjugation::Er => "e",
            Conjugation::Ir => "i",
        }
    }

    /// Endings in canonical cell order.
    fn endings(self) -> [&'static str; 12] {
        match self {
            Conjugation::Ar => ["o", "as", "a", "amos", "ajs", "an", "e", "es", "e", "emos", "ejs", "en"],
            Conjugation::Er => ["o", "es", "e", "emos", "ejs", "en", "a", "as", "a", "amos", "ajs", "an"],
            Conjugation::Ir => ["o", "es", "e", "imos", "is", "en", "a", "as", "a", "amos", "ajs", "an"],
        }
    }
}

/// Consonant alternations of L verbs as (Out cluster, In cluster, weight).
/// Velar-fricative pairs are produced by the x/ç rule and listed separately.
const ALTERNATIONS: [(&str, &str, u32); 7] = [
    ("s", "sk", 141),
    ("n", "nɡ", 53),
    ("s", "ɡ", 15),
    ("", "jɡ", 14),
    ("l", "lɡ", 4),
    ("s", "sɡ", 2),
    ("b", "p", 1),
];
const VELAR_FRICATIVES: [(&str, u32); 4] = [("x", 25), ("ɾx", 10), ("nx", 10), ("lx", 4)];
const RAISING_WEIGHT: u32 = 21;

const ONSETS: [&str; 20] = [
    "p", "t", "k", "b", "d", "ɡ", "m", "n", "l", "ɾ", "f", "s", "x", "ʎ", "ɲ", "tɾ", "pɾ", "bl", "kl", "ɡɾ",
];
const NL_CLUSTERS: [&str; 22] = [
    "s", "n", "l", "ɾ", "d", "t", "k", "b", "m", "ɲ", "p", "f", "ʎ", "ɾd", "nd", "nt", "st", "ɾt", "mb", "ɾm", "ɾb",
    "lp",
];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Stem of each cell before the x/ç rule and stress placement.
struct Verb {
    conj: Conjugation,
    stems: [String; 12],
    lemma_stem: String,
}

fn stem_stressed(tag: MsdTag) -> bool {
    !(tag.number == Number::Plural && tag.person < 3)
}

fn prefix<R: Rng>(rng: &mut R, syllables: usize, last_vowels: &[&str]) -> String {
    let mut s = String::new();
    for i in 0..syllables {
        if i > 0 || rng.random_bool(0.7) {
            s.push_str(ONSETS.choose(rng).unwrap());
        }
        let v = if i + 1 == syllables { last_vowels } else { &VOWELS[..] };
        s.push_str(v.choose(rng).unwrap());
    }
    s
}

fn uniform_stems(stem: &str) -> [String; 12] {
    std::array::from_fn(|_| stem.to_string())
}

fn weighted<'a, T, R: Rng>(rng: &mut R, items: &'a [(T, u32)]) -> &'a T {
    let total: u32 = items.iter().map(|(_, w)| w).sum();
    let mut pick = rng.random_range(0..total);
    for (item, w) in items {
        if pick < *w {
            return item;
        }
        pick -= w;
    }
    unreachable!("weights cover the range")
}

enum LKind {
    Alternation(&'static str, &'static str),
    Velar(&'static str),
    Raising,
}

fn l_verb<R: Rng>(rng: &mut R) -> Verb {
    let mut kinds: Vec<(LKind, u32)> = ALTERNATIONS
        .iter()
        .map(|&(o, i, w)| (LKind::Alternation(o, i), w))
        .collect();
    kinds.extend(VELAR_FRICATIVES.iter().map(|&(c, w)| (LKind::Velar(c), w)));
    kinds.push((LKind::Raising, RAISING_WEIGHT));
    let syllables = rng.random_range(1..=2);
    match weighted(rng, &kinds) {
        LKind::Alternation(out, inn) => {
            let conj = if rng.random_bool(0.6) {
                Conjugation::Er
            } else {
                Conjugation::Ir
            };
            // an empty Out cluster needs a stem ending in a non-high vowel
            let last: &[&str] = if out.is_empty() { &["a", "e", "o"] } else { &VOWELS };
            let p = prefix(rng, syllables, last);
            let stems = std::array::from_fn(|i| {
                let cluster = if MsdTag::ALL[i].zone() == CellZone::In {
                    inn
                } else {
                    out
                };
                format!("{p}{cluster}")
            });
            Verb {
                conj,
                stems,
                lemma_stem: format!("{p}{out}"),
            }
        }
        LKind::Velar(cluster) => {
            let conj = if rng.random_bool(0.6) {
                Conjugation::Er
            } else {
                Conjugation::Ir
            };
            let stem = format!("{}{cluster}", prefix(rng, syllables, &VOWELS));
            Verb {
                conj,
                stems: uniform_stems(&stem),
                lemma_stem: stem,
            }
        }
        LKind::Raising => {
            let onset = prefix(rng, syllables - 1, &VOWELS) + ONSETS.choose(rng).unwrap();
            let coda = NL_CLUSTERS.choose(rng).unwrap();
            let low = format!("{onset}e{coda}");
            let high = format!("{onset}i{coda}");
            let stems = std::array::from_fn(|i| {
                let t = MsdTag::ALL[i];
                if t.mood == Mood::Indicative && !stem_stressed(t) {
                    low.clone()
                } else {
                    high.clone()
                }
            });
            Verb {
                conj: Conjugation::Ir,
                stems,
                lemma_stem: low,
            }
        }
    }
}

fn nl_verb<R: Rng>(rng: &mut R) -> Verb {
    let conj = match rng.random_range(0..10) {
        0..=5 => Conjugation::Ar,
        6..=7 => Conjugation::Er,
        _ => Conjugation::Ir,
    };
    let syllables = rng.random_range(1..=2);
    let cluster = NL_CLUSTERS.choose(rng).unwrap();
    if rng.random_bool(0.15) {
        // diphthongization under stem stress
        let (plain, diph) = if rng.random_bool(0.5) { ("e", "je") } else { ("o", "we") };
        let head = prefix(rng, syllables - 1, &VOWELS) + ONSETS.choose(rng).unwrap();
        let low = format!("{head}{plain}{cluster}");
        let high = format!("{head}{diph}{cluster}");
        let stems = std::array::from_fn(|i| {
            if stem_stressed(MsdTag::ALL[i]) {
                high.clone()
            } else {
                low.clone()
            }
        });
        return Verb {
            conj,
            stems,
            lemma_stem: low,
        };
    }
    let mut stem = format!("{}{cluster}", prefix(rng, syllables, &VOWELS));
    if conj == Conjugation::Ar && rng.random_bool(0.05) {
        stem = format!("{}x", prefix(rng, syllables, &VOWELS));
    }
    Verb {
        conj,
        stems: uniform_stems(&stem),
        lemma_stem: stem,
    }
}

/// Applies x → ç before a front vowel.
fn palatalize(stem: &str, ending: &str) -> String {
    match (stem.strip_suffix('x'), ending.chars().next()) {
        (Some(head), Some('e' | 'i')) => format!("{head}ç"),
        _ => stem.to_string(),
    }
}

/// Inserts primary stress before the last vowel of `s`.
fn stress_before_last_vowel(s: &str) -> String {
    match s.char_indices().rev().find(|(_, c)| "aeiou".contains(*c)) {
        Some((i, _)) => format!("{}ˈ{}", &s[..i], &s[i..]),
        None => format!("ˈ{s}"),
    }
}

impl Verb {
    fn forms(&self) -> [String; 12] {
        let endings = self.conj.endings();
        std::array::from_fn(|i| {
            let stem = palatalize(&self.stems[i], endings[i]);
            if stem_stressed(MsdTag::ALL[i]) {
                format!("{}{}", stress_before_last_vowel(&stem), endings[i])
            } else {
                format!("{stem}ˈ{}", endings[i])
            }
        })
    }

    fn lemma(&self) -> String {
        let theme = self.conj.theme();
        format!("{}{theme}ɾ", palatalize(&self.lemma_stem, theme))
    }
}

fn draw<R: Rng>(rng: &mut R, want: VerbClass, seen: &mut HashSet<String>) -> InflectionTable {
    loop {
        let verb = match want {
            VerbClass::L => l_verb(rng),
            VerbClass::NL => nl_verb(rng),
        };
        let lemma = verb.lemma();
        if seen.contains(&lemma) {
            continue;
        }
        let table = InflectionTable::new(lemma.clone(), verb.forms());
        if table.verb_class == want {
            seen.insert(lemma);
            return table;
        }
    }
}

/// Complete tables: `l_lemmas` L verbs followed by `nl_lemmas` NL verbs.
pub fn synthesize(config: &SynthConfig) -> Vec<InflectionTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(config.l_lemmas + config.nl_lemmas);
    for _ in 0..config.l_lemmas {
        out.push(draw(&mut rng, VerbClass::L, &mut seen));
    }
    for _ in 0..config.nl_lemmas {
        out.push(draw(&mut rng, VerbClass::NL, &mut seen));
    }
    out
}

/// UniMorph three-column rendering of [`synthesize`], with a non-finite and a
/// past-tense line per lemma (filtered at ingestion) and the requested number
/// of incomplete lemmas.
pub fn synthesize_unimorph(config: &SynthConfig) -> String {
    let tables = synthesize(config);
    let mut seen: HashSet<String> = tables.iter().map(|t| t.lemma.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED);
    let mut out = String::new();
    let mut emit = |t: &InflectionTable, skip: Option<usize>| {
        writeln!(out, "{0}\t{0}\tV;NFIN", t.lemma).unwrap();
        for (i, (tag, form)) in t.cells().enumerate() {
            if Some(i) != skip {
                writeln!(out, "{}\t{form}\t{}", t.lemma, tag.unimorph()).unwrap();
            }
        }
        writeln!(out, "{}\t{}\tV;IND;PST;1;SG;PFV", t.lemma, t.cells[0]).unwrap();
    };
    for t in &tables {
        emit(t, None);
    }
    for _ in 0..config.incomplete_lemmas {
        let t = draw(&mut rng, VerbClass::NL, &mut seen);
        emit(&t, Some(rng.random_range(0..12)));
    }
    out
}
