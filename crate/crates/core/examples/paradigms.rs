//! Reads UniMorph lines, assembles 12-cell present tables, segments stems
//! and labels each verb L or NL.
//!
//! ```text
//! cargo run --example paradigms [path/to/spa.unimorph]
//! ```

use std::fs::File;
use std::io::BufReader;

use morphome::analysis::{consonant_pair_census, lemma_pair};
use morphome::corpus::{assemble_tables, parse_unimorph, CellZone, MsdTag, ParsedCorpus};

const SAMPLE: &str = "\
desiɾ\tdˈiɡo\tV;IND;PRS;1;SG
desiɾ\tdˈises\tV;IND;PRS;2;SG
desiɾ\tdˈise\tV;IND;PRS;3;SG
desiɾ\tdesˈimos\tV;IND;PRS;1;PL
desiɾ\tdesˈis\tV;IND;PRS;2;PL
desiɾ\tdˈisen\tV;IND;PRS;3;PL
desiɾ\tdˈiɡa\tV;SBJV;PRS;1;SG
desiɾ\tdˈiɡas\tV;SBJV;PRS;2;SG
desiɾ\tdˈiɡa\tV;SBJV;PRS;3;SG
desiɾ\tdiɡˈamos\tV;SBJV;PRS;1;PL
desiɾ\tdiɡˈajs\tV;SBJV;PRS;2;PL
desiɾ\tdˈiɡan\tV;SBJV;PRS;3;PL
desiɾ\tdesˈiɾ\tV;NFIN
aβlaɾ\tˈaβlo\tV;IND;PRS;1;SG
aβlaɾ\tˈaβlas\tV;IND;PRS;2;SG
aβlaɾ\tˈaβla\tV;IND;PRS;3;SG
aβlaɾ\taβlˈamos\tV;IND;PRS;1;PL
aβlaɾ\taβlˈajs\tV;IND;PRS;2;PL
aβlaɾ\tˈaβlan\tV;IND;PRS;3;PL
aβlaɾ\tˈaβle\tV;SBJV;PRS;1;SG
aβlaɾ\tˈaβles\tV;SBJV;PRS;2;SG
aβlaɾ\tˈaβle\tV;SBJV;PRS;3;SG
aβlaɾ\taβlˈemos\tV;SBJV;PRS;1;PL
aβlaɾ\taβlˈejs\tV;SBJV;PRS;2;PL
aβlaɾ\tˈaβlen\tV;SBJV;PRS;3;PL
kabeɾ\tkˈepo\tV;IND;PRS;1;SG
";

fn main() -> anyhow::Result<()> {
    let parsed: ParsedCorpus = match std::env::args().nth(1) {
        Some(path) => parse_unimorph(BufReader::new(File::open(path)?))?,
        None => parse_unimorph(SAMPLE.as_bytes())?,
    };
    println!(
        "{} lines, {} present-tense entries, {} filtered",
        parsed.lines_read,
        parsed.entries.len(),
        parsed.filtered_total()
    );
    let assembly = assemble_tables(&parsed.entries)?;
    println!(
        "{} complete tables, {} incomplete lemmas dropped, {} duplicates merged",
        assembly.tables.len(),
        assembly.incomplete.len(),
        assembly.duplicates
    );

    for table in assembly.tables.iter().take(5) {
        println!("\n{} ({})", table.lemma, table.verb_class.label());
        for tag in MsdTag::ALL {
            let stem = table.stem(tag);
            let zone = if tag.zone() == CellZone::In { "In " } else { "Out" };
            println!(
                "  {:<9} {zone} {:<10} stem {}",
                tag.short(),
                table.form(tag),
                stem.surface
            );
        }
        println!("  alternation {}", lemma_pair(table));
    }

    println!("\nconsonant pairs of L verbs:");
    for (pair, n) in consonant_pair_census(&assembly.tables).iter().take(10) {
        println!("  {pair} {n}");
    }
    Ok(())
}
