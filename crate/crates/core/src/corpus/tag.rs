use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mood {
    #[serde(rename = "IND")]
    Indicative,
    #[serde(rename = "SBJV")]
    Subjunctive,
}

impl Mood {
    pub fn code(self) -> &'static str {
        match self {
            Mood::Indicative => "IND",
            Mood::Subjunctive => "SBJV",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Number {
    #[serde(rename = "SG")]
    Singular,
    #[serde(rename = "PL")]
    Plural,
}

impl Number {
    pub fn code(self) -> &'static str {
        match self {
            Number::Singular => "SG",
            Number::Plural => "PL",
        }
    }
}

/// Whether a cell belongs to the L-shaped stem domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellZone {
    In,
    Out,
}

impl CellZone {
    pub fn label(self) -> &'static str {
        match self {
            CellZone::In => "In",
            CellZone::Out => "Out",
        }
    }

    pub fn flip(self) -> Self {
        match self {
            CellZone::In => CellZone::Out,
            CellZone::Out => CellZone::In,
        }
    }
}

impl fmt::Display for CellZone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CellZone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "In" => Ok(CellZone::In),
            "Out" => Ok(CellZone::Out),
            _ => Err(Error::BadTag(s.to_string())),
        }
    }
}

/// A present-tense verb cell, e.g. `<V;IND;PRS;1;SG>`.
///
/// Part of speech and tense are fixed (verb, present), so only mood, person
/// and number vary. The string form with angle brackets is the token used in
/// serialized examples; [`MsdTag::unimorph`] gives the bare UniMorph spelling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MsdTag {
    pub mood: Mood,
    pub person: u8,
    pub number: Number,
}

impl MsdTag {
    pub const COUNT: usize = 12;

    /// The working cell inventory in canonical order: indicative before
    /// subjunctive, then 1SG, 2SG, 3SG, 1PL, 2PL, 3PL.
    pub const ALL: [MsdTag; 12] = [
        MsdTag::new(Mood::Indicative, 1, Number::Singular),
        MsdTag::new(Mood::Indicative, 2, Number::Singular),
        MsdTag::new(Mood::Indicative, 3, Number::Singular),
        MsdTag::new(Mood::Indicative, 1, Number::Plural),
        MsdTag::new(Mood::Indicative, 2, Number::Plural),
        MsdTag::new(Mood::Indicative, 3, Number::Plural),
        MsdTag::new(Mood::Subjunctive, 1, Number::Singular),
        MsdTag::new(Mood::Subjunctive, 2, Number::Singular),
        MsdTag::new(Mood::Subjunctive, 3, Number::Singular),
        MsdTag::new(Mood::Subjunctive, 1, Number::Plural),
        MsdTag::new(Mood::Subjunctive, 2, Number::Plural),
        MsdTag::new(Mood::Subjunctive, 3, Number::Plural),
    ];

    pub const IND_1SG: MsdTag = MsdTag::ALL[0];
    pub const IND_3SG: MsdTag = MsdTag::ALL[2];
    pub const SBJV_3SG: MsdTag = MsdTag::ALL[8];

    pub const fn new(mood: Mood, person: u8, number: Number) -> Self {
        Self { mood, person, number }
    }

    /// Position in [`MsdTag::ALL`].
    pub fn index(self) -> usize {
        let mood = match self.mood {
            Mood::Indicative => 0,
            Mood::Subjunctive => 6,
        };
        let number = match self.number {
            Number::Singular => 0,
            Number::Plural => 3,
        };
        mood + number + (self.person as usize - 1)
    }

    pub fn zone(self) -> CellZone {
        zone_of(self)
    }

    /// Bare UniMorph spelling, e.g. `V;SBJV;PRS;2;SG`.
    pub fn unimorph(self) -> String {
        format!("V;{};PRS;{};{}", self.mood.code(), self.person, self.number.code())
    }

    /// Short label such as `IND.1SG`.
    pub fn short(self) -> String {
        format!("{}.{}{}", self.mood.code(), self.person, self.number.code())
    }

    /// Parses a UniMorph feature bundle.
    ///
    /// Returns `Ok(None)` for syntactically valid bundles outside the 12-cell
    /// inventory (other tenses, non-finite forms, extra features) and an error
    /// for strings that are not feature bundles at all.
    pub fn parse_unimorph(s: &str) -> Result<Option<MsdTag>> {
        let features: Vec<&str> = s.split(';').collect();
        let well_formed = features.iter().all(|f| {
            !f.is_empty()
                && f.chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '+' | '-' | '_' | '/' | '{' | '}' | ','))
        });
        if !well_formed {
            return Err(Error::BadTag(s.to_string()));
        }
        if features.len() != 5 {
            return Ok(None);
        }
        let mut pos = false;
        let mut tense = false;
        let mut mood = None;
        let mut person = None;
        let mut number = None;
        for f in features {
            match f {
                "V" if !pos => pos = true,
                "PRS" if !tense => tense = true,
                "IND" if mood.is_none() => mood = Some(Mood::Indicative),
                "SBJV" if mood.is_none() => mood = Some(Mood::Subjunctive),
                "1" | "2" | "3" if person.is_none() => person = Some(f.as_bytes()[0] - b'0'),
                "SG" if number.is_none() => number = Some(Number::Singular),
                "PL" if number.is_none() => number = Some(Number::Plural),
                _ => return Ok(None),
            }
        }
        Ok(match (pos, tense, mood, person, number) {
            (true, true, Some(m), Some(p), Some(n)) => Some(MsdTag::new(m, p, n)),
            _ => None,
        })
    }
}

/// In for IND.PRS.1SG and every subjunctive cell, Out otherwise.
pub fn zone_of(tag: MsdTag) -> CellZone {
    if tag.mood == Mood::Subjunctive || tag == MsdTag::IND_1SG {
        CellZone::In
    } else {
        CellZone::Out
    }
}

impl fmt::Display for MsdTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.unimorph())
    }
}

impl FromStr for MsdTag {
    type Err = Error;

    /// Accepts the bracketed token form or the bare UniMorph form.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s.strip_prefix('<').and_then(|r| r.strip_suffix('>')).unwrap_or(s);
        let tag = MsdTag::parse_unimorph(inner)?.ok_or_else(|| Error::BadTag(s.to_string()))?;
        // only the canonical feature order round-trips
        if tag.unimorph() != inner {
            return Err(Error::BadTag(s.to_string()));
        }
        Ok(tag)
    }
}

impl TryFrom<String> for MsdTag {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MsdTag> for String {
    fn from(tag: MsdTag) -> String {
        tag.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn string_form_round_trips() {
        for tag in MsdTag::ALL {
            let s = tag.to_string();
            assert_eq!(s.parse::<MsdTag>().unwrap(), tag);
            assert_eq!(tag.unimorph().parse::<MsdTag>().unwrap(), tag);
        }
        assert_eq!(MsdTag::IND_1SG.to_string(), "<V;IND;PRS;1;SG>");
        assert_eq!(MsdTag::ALL[7].to_string(), "<V;SBJV;PRS;2;SG>");
    }

    #[test]
    fn index_matches_canonical_order() {
        for (i, tag) in MsdTag::ALL.iter().enumerate() {
            assert_eq!(tag.index(), i);
        }
    }

    #[test]
    fn zones() {
        assert_eq!(zone_of(MsdTag::IND_1SG), CellZone::In);
        assert_eq!(zone_of("<V;SBJV;PRS;3;PL>".parse().unwrap()), CellZone::In);
        assert_eq!(zone_of("<V;IND;PRS;2;SG>".parse().unwrap()), CellZone::Out);
        let ins = MsdTag::ALL.iter().filter(|t| t.zone() == CellZone::In).count();
        assert_eq!((ins, 12 - ins), (7, 5));
    }

    #[test]
    fn out_of_inventory_and_malformed_tags() {
        assert_eq!(MsdTag::parse_unimorph("V;IND;PST;1;SG;PFV").unwrap(), None);
        assert_eq!(MsdTag::parse_unimorph("V;NFIN").unwrap(), None);
        assert_eq!(MsdTag::parse_unimorph("V;IND;PRS;4;SG").unwrap(), None);
        assert_eq!(MsdTag::parse_unimorph("V;IND;IND;1;SG").unwrap(), None);
        assert_eq!(MsdTag::parse_unimorph("PRS;V;SG;IND;1").unwrap(), Some(MsdTag::IND_1SG));
        assert!(MsdTag::parse_unimorph("").is_err());
        assert!(MsdTag::parse_unimorph("V;;PRS").is_err());
        assert!(MsdTag::parse_unimorph("V IND").is_err());
        assert!("<V;IND;PRS;1;SG".parse::<MsdTag>().is_err());
    }
}
