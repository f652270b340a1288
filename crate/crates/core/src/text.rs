//! Small text utilities: word spans, sentence splitting, hashing.

use sha2::{Digest, Sha256};

/// A whitespace/punctuation delimited token with character offsets `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

impl Token<'_> {
    pub fn is_punct(&self) -> bool {
        self.text.chars().all(|c| !c.is_alphanumeric())
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '-'
}

/// Splits into word tokens (alphanumerics plus inner `'`/`-`) and single
/// punctuation tokens. Offsets count characters, not bytes.
pub fn tokens(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (byte, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphanumeric() {
            let start = i;
            while i < chars.len() && is_word_char(chars[i].1) {
                i += 1;
            }
            // trailing apostrophes/hyphens are punctuation
            while i > start + 1 && !chars[i - 1].1.is_alphanumeric() {
                i -= 1;
            }
            let end_byte = chars.get(i).map_or(text.len(), |(b, _)| *b);
            out.push(Token {
                text: &text[byte..end_byte],
                start,
                end: i,
            });
        } else {
            let end_byte = chars.get(i + 1).map_or(text.len(), |(b, _)| *b);
            out.push(Token {
                text: &text[byte..end_byte],
                start: i,
                end: i + 1,
            });
            i += 1;
        }
    }
    out
}

/// Substring by character offsets. Returns `None` when out of range.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let start_byte = indices.nth(start)?;
    let end_byte = if end == start {
        start_byte
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&text[start_byte..end_byte])
}

/// Splits on `.`, `!` or `?` followed by whitespace (or end of text), unless
/// a closing quote is followed by a lowercase word.
pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            // absorb closing quotes
            let mut quoted = false;
            while let Some(&q) = chars.peek() {
                if q == '"' || q == '\'' || q == '\u{201d}' {
                    current.push(q);
                    chars.next();
                    quoted = true;
                } else {
                    break;
                }
            }
            // a quote followed by a lowercase word continues the sentence
            let continues = quoted && {
                let rest: String = chars.clone().skip_while(|n| n.is_whitespace()).take(1).collect();
                rest.chars().next().is_some_and(char::is_lowercase)
            };
            if chars.peek().is_none_or(|n| n.is_whitespace()) && !continues {
                let s = current.trim();
                if !s.is_empty() {
                    out.push(s.to_string());
                }
                current.clear();
            }
        }
    }
    let s = current.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}

/// Collapses runs of whitespace to single ASCII spaces and trims.
pub fn normalize_space(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}
