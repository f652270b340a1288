//! Entity-recognizer and semantic-role-labeler contracts.
//!
//! Production pipelines plug in external taggers through these traits. Two
//! kinds of implementations ship here: [`FrozenAnnotations`], which replays
//! tagger output captured to a file (deterministic across tagger versions),
//! and lightweight rule-based taggers for running without any model.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{self, Token};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{backend}: {message}")]
pub struct BackendError {
    pub backend: String,
    pub message: String,
}

impl BackendError {
    pub fn new(backend: impl Into<String>, message: impl Into<String>) -> Self {
        BackendError {
            backend: backend.into(),
            message: message.into(),
        }
    }
}

/// A recognized entity mention; `start`/`end` are character offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub text: String,
    pub label: String,
    pub start: usize,
    pub end: usize,
}

/// One predicate with its core arguments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub verb: String,
    pub subject: Option<String>,
    pub object: Option<String>,
}

pub trait EntityRecognizer {
    fn entities(&self, text: &str) -> Result<Vec<Entity>, BackendError>;
}

pub trait SemanticRoleLabeler {
    fn predicates(&self, text: &str) -> Result<Vec<Predicate>, BackendError>;
}

impl<T: EntityRecognizer + ?Sized> EntityRecognizer for &T {
    fn entities(&self, text: &str) -> Result<Vec<Entity>, BackendError> {
        (**self).entities(text)
    }
}

impl<T: SemanticRoleLabeler + ?Sized> SemanticRoleLabeler for &T {
    fn predicates(&self, text: &str) -> Result<Vec<Predicate>, BackendError> {
        (**self).predicates(text)
    }
}

/// Tagger output for one text, as stored in a frozen-annotation file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrozenRecord {
    pub text: String,
    #[serde(default)]
    pub entities: Vec<Entity>,
    #[serde(default)]
    pub predicates: Vec<Predicate>,
}

/// Replays previously captured tagger output keyed by exact text.
#[derive(Debug, Clone, Default)]
pub struct FrozenAnnotations {
    records: HashMap<String, FrozenRecord>,
}

impl FrozenAnnotations {
    pub fn new(records: impl IntoIterator<Item = FrozenRecord>) -> Self {
        FrozenAnnotations {
            records: records.into_iter().map(|r| (r.text.clone(), r)).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, crate::jsonl::JsonlError> {
        Ok(Self::new(crate::jsonl::read::<FrozenRecord>(path)?))
    }

    fn lookup(&self, text: &str) -> Result<&FrozenRecord, BackendError> {
        self.records
            .get(text)
            .ok_or_else(|| BackendError::new("frozen", "no frozen annotation for text"))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl EntityRecognizer for FrozenAnnotations {
    fn entities(&self, text: &str) -> Result<Vec<Entity>, BackendError> {
        Ok(self.lookup(text)?.entities.clone())
    }
}

impl SemanticRoleLabeler for FrozenAnnotations {
    fn predicates(&self, text: &str) -> Result<Vec<Predicate>, BackendError> {
        Ok(self.lookup(text)?.predicates.clone())
    }
}

const FUNCTION_WORDS: &[&str] = &[
    "a", "an", "the", "he", "she", "it", "they", "we", "i", "you", "his", "her", "their", "its",
    "this", "that", "these", "those", "there", "then", "when", "once", "one", "but", "and", "or",
    "so", "if", "as", "at", "in", "on", "of", "to", "with", "from", "by", "for", "after",
    "before", "while", "because", "all", "every", "some", "no", "not", "what", "who", "why",
    "how", "where", "which", "whom", "whose", "soon", "now", "long", "later", "suddenly", "next",
    "yes", "oh", "him", "them", "me", "my", "our", "your", "was", "were", "is", "are", "be",
    "had", "has", "have", "do", "did", "does", "said", "will", "would", "could", "should",
    "can", "may", "might", "must", "into", "over", "under", "up", "down", "out", "about",
];

pub fn is_function_word(word: &str) -> bool {
    FUNCTION_WORDS.contains(&word.to_lowercase().as_str())
}

/// Capitalized-span entity tagger.
///
/// A maximal run of capitalized words is an entity, except that a
/// sentence-initial function word ("The", "Once", ...) is never part of one.
/// Labels are always `"ENTITY"`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CapitalizedEntityRecognizer;

impl EntityRecognizer for CapitalizedEntityRecognizer {
    fn entities(&self, text: &str) -> Result<Vec<Entity>, BackendError> {
        let toks = text::tokens(text);
        let mut out = Vec::new();
        let mut i = 0;
        while i < toks.len() {
            let capitalized = |t: &Token<'_>| {
                t.text.chars().next().is_some_and(char::is_uppercase) && !is_function_word(t.text)
            };
            if capitalized(&toks[i]) {
                let start = i;
                while i < toks.len() && capitalized(&toks[i]) {
                    i += 1;
                }
                let (s, e) = (toks[start].start, toks[i - 1].end);
                out.push(Entity {
                    text: text::char_slice(text, s, e).unwrap_or_default().to_string(),
                    label: "ENTITY".into(),
                    start: s,
                    end: e,
                });
            } else {
                i += 1;
            }
        }
        Ok(out)
    }
}

const IRREGULAR_PAST: &[&str] = &[
    "ate", "became", "began", "bit", "blew", "broke", "brought", "built", "bought", "came",
    "caught", "chose", "dug", "drew", "drank", "drove", "fell", "fed", "felt", "fought", "found",
    "flew", "forgot", "froze", "gave", "went", "got", "grew", "hid", "held", "hung", "kept",
    "knew", "laid", "led", "left", "lent", "let", "lay", "lit", "lost", "made", "meant", "met",
    "paid", "put", "ran", "rang", "rode", "rose", "saw", "sat", "sang", "sank", "sent", "set",
    "shook", "shot", "shut", "slept", "slid", "sold", "spoke", "spent", "stood", "stole",
    "struck", "swam", "swept", "took", "taught", "tore", "told", "thought", "threw", "understood",
    "woke", "wore", "won", "wrote", "heard", "sought", "wept", "bent", "built", "dreamt",
];

const NOT_VERBS_ED: &[&str] = &["red", "bed", "shed", "sled", "seed", "need", "weed", "hundred", "naked", "wicked", "beloved", "sacred", "bled"];

const CLAUSE_BREAKS: &[&str] = &[
    "and", "but", "so", "then", "because", "when", "while", "after", "before", "until", "that",
    "who", "which", "if", "or",
];

fn is_past_verb(word: &str) -> bool {
    let w = word.to_lowercase();
    if IRREGULAR_PAST.contains(&w.as_str()) {
        return true;
    }
    w.len() > 3 && w.ends_with("ed") && !NOT_VERBS_ED.contains(&w.as_str())
}

/// Past-tense narrative labeler: each past-tense verb is a predicate, its
/// subject the words since the previous clause break, its object the words
/// up to the next clause break or punctuation. Spans are capped at a few
/// words.
#[derive(Debug, Clone, Copy)]
pub struct PastTenseRoleLabeler {
    pub max_argument_words: usize,
}

impl Default for PastTenseRoleLabeler {
    fn default() -> Self {
        PastTenseRoleLabeler {
            max_argument_words: 5,
        }
    }
}

impl SemanticRoleLabeler for PastTenseRoleLabeler {
    fn predicates(&self, text: &str) -> Result<Vec<Predicate>, BackendError> {
        let mut out = Vec::new();
        for sentence in text::sentences(text) {
            let toks = text::tokens(&sentence);
            let words: Vec<&str> = toks.iter().map(|t| t.text).collect();
            let is_break = |w: &str| {
                CLAUSE_BREAKS.contains(&w.to_lowercase().as_str())
                    || w.chars().all(|c| !c.is_alphanumeric())
            };
            for (vi, verb) in words.iter().enumerate() {
                if !is_past_verb(verb) {
                    continue;
                }
                let mut s = vi;
                while s > 0 && !is_break(words[s - 1]) && !is_past_verb(words[s - 1]) {
                    s -= 1;
                }
                let s = s.max(vi.saturating_sub(self.max_argument_words));
                let mut e = vi + 1;
                while e < words.len()
                    && !is_break(words[e])
                    && !is_past_verb(words[e])
                    && e - vi <= self.max_argument_words
                {
                    e += 1;
                }
                let join = |ws: &[&str]| (!ws.is_empty()).then(|| ws.join(" "));
                out.push(Predicate {
                    verb: verb.to_string(),
                    subject: join(&words[s..vi]),
                    object: join(&words[vi + 1..e]),
                });
            }
        }
        Ok(out)
    }
}
