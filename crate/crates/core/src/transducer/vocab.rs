use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::tripler::SerializedExample;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Token inventory: the four specials at fixed ids followed by every token
/// seen in the training lines, sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds the vocabulary from source and target lines.
    pub fn build<'a>(examples: impl IntoIterator<Item = &'a SerializedExample>) -> Self {
        let mut seen = BTreeSet::new();
        for ex in examples {
            for line in [&ex.source, &ex.target] {
                seen.extend(line.split(' ').filter(|t| !t.is_empty() && !SPECIALS.contains(t)));
            }
        }
        let tokens: Vec<String> = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(seen.into_iter().map(str::to_string))
            .collect();
        Self::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// True when only the specials are present.
    pub fn is_empty(&self) -> bool {
        self.tokens.len() == SPECIALS.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids of a space-separated line; unseen tokens map to UNK.
    pub fn encode(&self, line: &str) -> Vec<usize> {
        line.split(' ')
            .filter(|t| !t.is_empty())
            .map(|t| self.id(t).unwrap_or(UNK))
            .collect()
    }

    /// Concatenates the tokens of `ids`, skipping specials.
    pub fn decode_form(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i >= SPECIALS.len())
            .map(|&i| self.token(i))
            .collect()
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_are_single_tokens_and_specials_are_fixed() {
        let ex = SerializedExample {
            source: "d i ɡ a # <V;SBJV;PRS;1;SG> # d i ɡ a s # <V;SBJV;PRS;2;SG> # <V;IND;PRS;1;SG>".into(),
            target: "d i ɡ o".into(),
        };
        let v = Vocabulary::build([&ex]);
        assert!(v.id("<V;SBJV;PRS;2;SG>").is_some());
        assert_eq!(v.id("</s>"), Some(EOS));
        assert_eq!(v.encode("d ʎ o"), vec![v.id("d").unwrap(), UNK, v.id("o").unwrap()]);
        assert_eq!(v.decode_form(&v.encode("d i ɡ o")), "diɡo");
        assert_eq!(v.tokens().len(), v.index.len());
    }

    #[test]
    fn empty_corpus_gives_specials_only() {
        let v = Vocabulary::build(std::iter::empty());
        assert_eq!(v.len(), 4);
        assert!(v.is_empty());
    }
}
