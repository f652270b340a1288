//! Word-level vocabulary with atomic boundary markers.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use taxoq_core::generator::SPECIAL_TOKENS;
use taxoq_core::text;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Splits on whitespace, keeps `[CXT]`/`[ANS]`/`[SKL]` whole and otherwise
/// separates punctuation. Case is preserved.
pub fn tokenize(input: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in input.split_whitespace() {
        if SPECIAL_TOKENS.contains(&chunk) {
            out.push(chunk.to_string());
        } else {
            out.extend(text::tokens(chunk).into_iter().map(|t| t.text.to_string()));
        }
    }
    out
}

/// Joins tokens back into text, attaching closing punctuation to the
/// preceding word.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut glue_next = false;
    for tok in tokens {
        let tok = tok.as_ref();
        let closing = matches!(tok, "." | "," | "?" | "!" | ";" | ":" | ")" | "]" | "%");
        if !out.is_empty() && !closing && !glue_next {
            out.push(' ');
        }
        out.push_str(tok);
        glue_next = matches!(tok, "(" | "[");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        Self::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Reserved ids first, then the markers, then corpus tokens seen at least
    /// `min_count` times ordered by descending frequency and then spelling.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            for tok in tokenize(t) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, n)| *n >= min_count.max(1) && !SPECIAL_TOKENS.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = RESERVED
            .iter()
            .chain(SPECIAL_TOKENS.iter())
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, input: &str) -> Vec<u32> {
        tokenize(input).iter().map(|t| self.id(t)).collect()
    }

    /// Drops reserved ids except `<unk>`.
    pub fn decode(&self, ids: &[u32]) -> String {
        let words: Vec<&str> = ids
            .iter()
            .filter(|&&id| !matches!(id, PAD | BOS | EOS))
            .filter_map(|&id| self.token(id))
            .collect();
        detokenize(&words)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markers_are_atomic() {
        let toks = tokenize("[CXT] Anna ran. [ANS] Anna [SKL] remember Ask a question:");
        assert_eq!(toks[0], "[CXT]");
        assert!(toks.contains(&"[ANS]".to_string()));
        assert_eq!(toks.last().unwrap(), ":");
        let v = Vocab::build(["[CXT] Anna ran."], 1);
        assert_eq!(v.id("[CXT]"), 4);
        assert_eq!(v.encode("[CXT]"), vec![4]);
    }

    #[test]
    fn round_trip_through_ids() {
        let q = "Why did Anna hide the golden key?";
        let v = Vocab::build([q], 1);
        assert_eq!(v.decode(&v.encode(q)), q);
        assert_eq!(v.decode(&v.encode("Why did Bob hide?")), "Why did <unk> hide?");
    }

    #[test]
    fn build_is_deterministic_and_frequency_ordered() {
        let a = Vocab::build(["b a a", "c b a"], 1);
        assert_eq!(a, Vocab::build(["b a a", "c b a"], 1));
        assert_eq!(a.token(7), Some("a"));
        assert_eq!(a.token(8), Some("b"));
        assert_eq!(Vocab::build(["b a a"], 2).len(), 8);
    }

    #[test]
    fn detokenize_glues_punctuation() {
        assert_eq!(detokenize(&["Who", "came", "(", "first", ")", "?"]), "Who came (first)?");
    }
}
