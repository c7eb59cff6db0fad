//! Expands one inflection table into its 660 two-source triples and prints
//! the serialized model lines.
//!
//! ```text
//! cargo run --example triples
//! ```

use std::collections::BTreeMap;

use morphome::corpus::{InflectionTable, MsdTag};
use morphome::tripler::{
    deserialize, generate_triples, generate_triples_with, serialize, zone_pattern_label, SourceOrdering,
};

fn main() -> anyhow::Result<()> {
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
    let decir = InflectionTable::new("desiɾ", forms.map(String::from));

    let triples = generate_triples(&decir, 7);
    println!("{} triples for {}", triples.len(), decir.lemma);

    let mut zones: BTreeMap<String, usize> = BTreeMap::new();
    for t in &triples {
        *zones.entry(zone_pattern_label(t)).or_default() += 1;
    }
    for (label, n) in &zones {
        println!("  {label:<12} {n}");
    }

    // the canonical ordering puts the indicative source first
    let canonical = generate_triples_with(&decir, 0, SourceOrdering::Canonical);
    let (s1, s2): (MsdTag, MsdTag) = ("<V;SBJV;PRS;1;SG>".parse()?, "<V;SBJV;PRS;2;SG>".parse()?);
    let t = canonical
        .iter()
        .find(|t| t.src1.tag == s1 && t.src2.tag == s2 && t.target_tag == MsdTag::IND_1SG)
        .expect("every pair and target occurs once");
    let line = serialize(t);
    println!("\nsource: {}\ntarget: {}", line.source, line.target);
    let back = deserialize(&line, &t.lemma, t.verb_class)?;
    assert_eq!(&back, t);
    println!("round trip ok, zone pattern {}", zone_pattern_label(t));
    Ok(())
}
