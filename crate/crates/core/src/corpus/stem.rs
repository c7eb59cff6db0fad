use serde::{Deserialize, Serialize};

use super::ipa::{final_cluster, is_stress_marker, EndingInventory};
use super::tag::MsdTag;
use crate::error::{Error, Result};

/// Suffix-stripped, stress-free stem of a form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stem {
    pub surface: String,
    pub final_cluster: String,
}

impl Stem {
    pub fn new(surface: impl Into<String>) -> Self {
        let surface = surface.into();
        let final_cluster = final_cluster(&surface).to_string();
        Self { surface, final_cluster }
    }
}

/// A form split into stem and ending, remembering where stress marks sat.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segmentation {
    pub stem: Stem,
    pub ending: String,
    /// (char position in the original form, marker)
    pub stress: Vec<(usize, char)>,
}

impl Segmentation {
    /// Rebuilds the original form.
    pub fn reassemble(&self) -> String {
        let bare: Vec<char> = self.stem.surface.chars().chain(self.ending.chars()).collect();
        let mut out = String::new();
        let mut marks = self.stress.iter().peekable();
        let mut bare_iter = bare.into_iter();
        let mut pos = 0;
        loop {
            if let Some(&&(at, mark)) = marks.peek() {
                if at == pos {
                    out.push(mark);
                    marks.next();
                    pos += 1;
                    continue;
                }
            }
            match bare_iter.next() {
                Some(c) => {
                    out.push(c);
                    pos += 1;
                }
                None => break,
            }
        }
        out.extend(marks.map(|&(_, m)| m));
        out
    }
}

/// Splits `form` into stem and the longest ending of the tag's mood.
pub fn segment(form: &str, tag: MsdTag, inventory: &EndingInventory) -> Result<Segmentation> {
    let mut stress = Vec::new();
    let mut bare = String::with_capacity(form.len());
    for (i, c) in form.chars().enumerate() {
        if is_stress_marker(c) {
            stress.push((i, c));
        } else {
            bare.push(c);
        }
    }
    let ending = inventory
        .longest_match(&bare, tag.mood)
        .ok_or_else(|| Error::NoEnding {
            form: form.to_string(),
            tag,
        })?;
    let stem = &bare[..bare.len() - ending.len()];
    Ok(Segmentation {
        stem: Stem::new(stem),
        ending: ending.to_string(),
        stress,
    })
}

/// Stem of `form` under the built-in ending inventory.
pub fn extract_stem(form: &str, tag: MsdTag) -> Result<Stem> {
    extract_stem_with(form, tag, EndingInventory::builtin())
}

/// Like [`extract_stem`], but a form matching no ending yields its
/// stress-free surface.
pub fn stem_or_surface(form: &str, tag: MsdTag) -> Stem {
    extract_stem(form, tag).unwrap_or_else(|_| Stem::new(super::ipa::strip_stress(form)))
}

pub fn extract_stem_with(form: &str, tag: MsdTag, inventory: &EndingInventory) -> Result<Stem> {
    segment(form, tag, inventory).map(|s| s.stem)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(s: &str) -> MsdTag {
        s.parse().unwrap()
    }

    #[test]
    fn worked_examples() {
        let s = extract_stem("tRad\"usen", tag("<V;IND;PRS;3;PL>")).unwrap();
        assert_eq!(s, Stem::new("tRadus"));
        assert_eq!(s.final_cluster, "s");
        let s = extract_stem("tRadusk\"amos", tag("<V;SBJV;PRS;1;PL>")).unwrap();
        assert_eq!((s.surface.as_str(), s.final_cluster.as_str()), ("tRadusk", "sk"));
        let s = extract_stem("dˈiɡo", MsdTag::IND_1SG).unwrap();
        assert_eq!(s.surface, "diɡ");
    }

    #[test]
    fn bare_ending_gives_empty_stem() {
        let s = extract_stem("ˈo", MsdTag::IND_1SG).unwrap();
        assert_eq!(
            s,
            Stem {
                surface: String::new(),
                final_cluster: String::new()
            }
        );
    }

    #[test]
    fn unmatched_form_is_an_error() {
        let err = extract_stem("dˈiɡ", MsdTag::IND_1SG).unwrap_err();
        assert!(matches!(err, Error::NoEnding { ref form, .. } if form == "dˈiɡ"));
        // "o" is indicative only
        assert!(extract_stem("diɡo", tag("<V;SBJV;PRS;1;SG>")).is_err());
    }

    #[test]
    fn segmentation_is_lossless() {
        for (form, t) in [
            ("diɡˈamos", "<V;SBJV;PRS;1;PL>"),
            ("ˈdiɡo", "<V;IND;PRS;1;SG>"),
            ("tRadusk\"amos", "<V;SBJV;PRS;1;PL>"),
            ("ajˈo", "<V;IND;PRS;1;SG>"),
        ] {
            let seg = segment(form, tag(t), EndingInventory::builtin()).unwrap();
            assert_eq!(seg.reassemble(), form);
        }
    }
}
