//! Code-point classes for IPA strings and the present-tense ending inventory.

use std::sync::OnceLock;

use unicode_normalization::UnicodeNormalization;

use super::tag::Mood;
use crate::error::{Error, Result};

/// Primary stress, secondary stress, and the ASCII quote used by TIPA-style
/// transcriptions (`d"igo`).
pub const STRESS_MARKERS: [char; 3] = ['\u{02C8}', '\u{02CC}', '"'];

pub const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

pub fn is_stress_marker(c: char) -> bool {
    STRESS_MARKERS.contains(&c)
}

/// Everything that is not a plain vowel or a stress marker; glides count.
pub fn is_consonant(c: char) -> bool {
    !VOWELS.contains(&c) && !is_stress_marker(c)
}

/// Code points accepted in lemmas and forms.
pub fn is_admitted(c: char) -> bool {
    c.is_alphabetic() || is_stress_marker(c) || ('\u{0300}'..='\u{036F}').contains(&c) || c == 'ː'
}

/// Canonical composition (NFC), applied once at ingestion.
pub fn normalize(s: &str) -> String {
    s.nfc().collect()
}

pub fn strip_stress(s: &str) -> String {
    s.chars().filter(|&c| !is_stress_marker(c)).collect()
}

/// Maximal trailing run of consonant code points.
pub fn final_cluster(surface: &str) -> &str {
    let start = surface
        .char_indices()
        .rev()
        .take_while(|&(_, c)| is_consonant(c))
        .last()
        .map_or(surface.len(), |(i, _)| i);
    &surface[start..]
}

const DEFAULT_INVENTORY: &str = include_str!("../../data/endings.tsv");

/// Mood-specific ending lists, each sorted longest first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EndingInventory {
    pub version: String,
    indicative: Vec<String>,
    subjunctive: Vec<String>,
}

impl EndingInventory {
    /// The inventory shipped with the crate.
    pub fn builtin() -> &'static EndingInventory {
        static INVENTORY: OnceLock<EndingInventory> = OnceLock::new();
        INVENTORY.get_or_init(|| Self::parse(DEFAULT_INVENTORY).expect("bundled inventory parses"))
    }

    /// Parses `MOOD<TAB>ending` lines; `#` starts a comment and
    /// `# version<TAB>v` declares the version.
    pub fn parse(text: &str) -> Result<Self> {
        let mut version = None;
        let mut indicative = Vec::new();
        let mut subjunctive = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("version") {
                    version = Some(v.trim().to_string());
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (mood, ending) = line
                .split_once('\t')
                .ok_or_else(|| Error::Inventory(format!("line {}: expected MOOD<TAB>ending", n + 1)))?;
            let ending = normalize(ending.trim());
            if ending.is_empty() || ending.chars().any(is_stress_marker) {
                return Err(Error::Inventory(format!("line {}: bad ending {ending:?}", n + 1)));
            }
            match mood {
                "IND" => indicative.push(ending),
                "SBJV" => subjunctive.push(ending),
                _ => return Err(Error::Inventory(format!("line {}: unknown mood {mood:?}", n + 1))),
            }
        }
        for list in [&mut indicative, &mut subjunctive] {
            list.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)));
            list.dedup();
        }
        Ok(Self {
            version: version.ok_or_else(|| Error::Inventory("missing version line".into()))?,
            indicative,
            subjunctive,
        })
    }

    pub fn endings(&self, mood: Mood) -> &[String] {
        match mood {
            Mood::Indicative => &self.indicative,
            Mood::Subjunctive => &self.subjunctive,
        }
    }

    /// Longest ending of `mood` that is a suffix of the stress-free `surface`.
    pub fn longest_match(&self, surface: &str, mood: Mood) -> Option<&str> {
        self.endings(mood)
            .iter()
            .find(|e| surface.ends_with(e.as_str()))
            .map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clusters() {
        assert_eq!(final_cluster("tRadus"), "s");
        assert_eq!(final_cluster("tRadusk"), "sk");
        assert_eq!(final_cluster("ka"), "");
        assert_eq!(final_cluster("kajɡ"), "jɡ");
        assert_eq!(final_cluster(""), "");
        assert_eq!(final_cluster("st"), "st");
    }

    #[test]
    fn builtin_inventory() {
        let inv = EndingInventory::builtin();
        assert_eq!(inv.version, "1");
        assert_eq!(inv.endings(Mood::Indicative).len(), 13);
        assert_eq!(inv.endings(Mood::Subjunctive).len(), 10);
        assert_eq!(inv.longest_match("digamos", Mood::Subjunctive), Some("amos"));
        assert_eq!(inv.longest_match("pides", Mood::Indicative), Some("es"));
        assert_eq!(inv.longest_match("diks", Mood::Indicative), None);
    }

    #[test]
    fn normalization_composes() {
        assert_eq!(normalize("n\u{0303}"), "ñ");
        assert!(normalize("ɡ").chars().all(is_admitted));
        assert!(!is_admitted(' ') && !is_admitted('1') && !is_admitted('#'));
    }
}
