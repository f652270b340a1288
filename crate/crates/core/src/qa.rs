//! A small extractive QA model: it scores candidate spans of the context
//! (sentences, clauses, entities, predicate events) with a linear model over
//! hashed question/candidate features and returns the best one.
//!
//! It exists to measure whether synthetic training questions help or hurt a
//! QA learner, not to be a strong reader.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::rouge_l;
use crate::nlp::{is_function_word, CapitalizedEntityRecognizer, EntityRecognizer, PastTenseRoleLabeler, SemanticRoleLabeler};
use crate::prompting::backends::stable_hash;
use crate::text;
use crate::Skill;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaExample {
    pub context: String,
    pub question: String,
    pub answer: String,
    pub skill: Skill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaConfig {
    pub feature_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for QaConfig {
    fn default() -> Self {
        QaConfig {
            feature_dim: 1 << 16,
            epochs: 8,
            learning_rate: 0.1,
            l2: 1e-6,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Kind {
    Sentence,
    Clause,
    Entity,
    Event,
}

#[derive(Debug, Clone)]
struct Candidate {
    text: String,
    kind: Kind,
    /// Sentence the candidate comes from.
    sentence: usize,
}

const QUESTION_WORDS: &[&str] = &["what", "who", "whom", "whose", "when", "where", "why", "how", "which"];
const CLAUSE_MARKERS: &[&str] = &["because", "so", "when", "after", "before", "while", "until", "that", "and", "but"];

fn words_lower(s: &str) -> Vec<String> {
    text::tokens(s)
        .iter()
        .filter(|t| !t.is_punct())
        .map(|t| t.text.to_lowercase())
        .collect()
}

fn candidates(context: &str) -> Vec<Candidate> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |text: String, kind: Kind, sentence: usize, out: &mut Vec<Candidate>| {
        let text = text.trim().trim_end_matches(['.', '!', '?', ',', ';']).trim().to_string();
        if !text.is_empty() && seen.insert(text.clone()) {
            out.push(Candidate { text, kind, sentence });
        }
    };
    let sentences = text::sentences(context);
    for (si, sentence) in sentences.iter().enumerate() {
        push(sentence.clone(), Kind::Sentence, si, &mut out);
        // clauses: comma-separated pieces and the tail after each marker word
        for piece in sentence.split([',', ';']) {
            if piece.split_whitespace().count() >= 2 {
                push(piece.to_string(), Kind::Clause, si, &mut out);
            }
        }
        let words: Vec<&str> = sentence.split_whitespace().collect();
        for (i, w) in words.iter().enumerate() {
            let lw = w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
            if i > 0 && CLAUSE_MARKERS.contains(&lw.as_str()) && i + 1 < words.len() {
                push(words[i + 1..].join(" "), Kind::Clause, si, &mut out);
                push(words[i..].join(" "), Kind::Clause, si, &mut out);
            }
        }
        if let Ok(entities) = CapitalizedEntityRecognizer.entities(sentence) {
            for e in entities {
                push(e.text, Kind::Entity, si, &mut out);
            }
        }
        if let Ok(preds) = PastTenseRoleLabeler::default().predicates(sentence) {
            for p in preds {
                let parts: Vec<&str> = [p.subject.as_deref(), Some(p.verb.as_str()), p.object.as_deref()]
                    .into_iter()
                    .flatten()
                    .collect();
                push(parts.join(" "), Kind::Event, si, &mut out);
                if let Some(o) = p.object {
                    push(o, Kind::Event, si, &mut out);
                }
            }
        }
    }
    out
}

struct Prepared {
    sentences_words: Vec<HashSet<String>>,
    candidates: Vec<Candidate>,
    candidate_words: Vec<Vec<String>>,
}

fn prepare(context: &str) -> Prepared {
    let candidates = candidates(context);
    let sentences_words = text::sentences(context)
        .iter()
        .map(|s| words_lower(s).into_iter().collect())
        .collect();
    let candidate_words = candidates.iter().map(|c| words_lower(&c.text)).collect();
    Prepared {
        sentences_words,
        candidates,
        candidate_words,
    }
}

fn features(question: &[String], prepared: &Prepared, i: usize, dim: usize) -> Vec<(usize, f64)> {
    let cand = &prepared.candidates[i];
    let cand_words = &prepared.candidate_words[i];
    let wh = question
        .iter()
        .find(|w| QUESTION_WORDS.contains(&w.as_str()))
        .map_or("none", String::as_str);
    let content: Vec<&String> = question
        .iter()
        .filter(|w| !is_function_word(w) && !QUESTION_WORDS.contains(&w.as_str()))
        .collect();
    let sentence_words = &prepared.sentences_words[cand.sentence];
    let cand_set: HashSet<&String> = cand_words.iter().collect();
    let denom = content.len().max(1) as f64;
    let in_sentence = content.iter().filter(|w| sentence_words.contains(w.as_str())).count() as f64 / denom;
    let in_candidate = content.iter().filter(|w| cand_set.contains(*w)).count() as f64 / denom;
    let len_bucket = match cand_words.len() {
        0..=2 => "1-2",
        3..=5 => "3-5",
        6..=10 => "6-10",
        _ => "11+",
    };
    let first = cand_words.first().map_or("", String::as_str);
    let kind = format!("{:?}", cand.kind);

    let mut f: Vec<(String, f64)> = vec![
        (format!("kind={kind}"), 1.0),
        (format!("wh={wh}|kind={kind}"), 1.0),
        (format!("wh={wh}|len={len_bucket}"), 1.0),
        (format!("wh={wh}|first={first}"), 1.0),
        (format!("kind={kind}|len={len_bucket}"), 1.0),
        (format!("wh={wh}|in_sentence"), in_sentence),
        (format!("wh={wh}|in_candidate"), in_candidate),
        ("in_sentence".into(), in_sentence),
        ("in_candidate".into(), in_candidate),
        (format!("kind={kind}|in_sentence"), in_sentence),
        (format!("sentence_pos={}", cand.sentence.min(5)), 1.0),
    ];
    if in_sentence > 0.0 && in_candidate == 0.0 {
        f.push((format!("wh={wh}|kind={kind}|near_not_repeating"), in_sentence));
    }
    f.into_iter()
        .map(|(name, v)| (stable_hash(&name) as usize % dim, v))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractiveQa {
    feature_dim: usize,
    weights: Vec<f64>,
}

impl ExtractiveQa {
    fn score(&self, feats: &[(usize, f64)]) -> f64 {
        feats.iter().map(|(i, v)| self.weights[*i] * v).sum()
    }

    pub fn predict(&self, context: &str, question: &str) -> String {
        self.predict_prepared(&prepare(context), &words_lower(question))
    }

    fn predict_prepared(&self, prepared: &Prepared, question: &[String]) -> String {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..prepared.candidates.len() {
            let s = self.score(&features(question, prepared, i, self.feature_dim));
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, i));
            }
        }
        best.map(|(_, i)| prepared.candidates[i].text.clone()).unwrap_or_default()
    }
}

/// Listwise softmax training toward the candidate closest (ROUGE-L F1) to
/// the gold answer. Examples whose best candidate has F1 0 are skipped.
pub fn train_qa(examples: &[QaExample], cfg: &QaConfig) -> ExtractiveQa {
    let mut cache: HashMap<&str, Prepared> = HashMap::new();
    for e in examples {
        cache.entry(e.context.as_str()).or_insert_with(|| prepare(&e.context));
    }
    struct Item {
        target: usize,
        feats: Vec<Vec<(usize, f64)>>,
    }
    let mut items = Vec::new();
    for e in examples {
        let prepared = &cache[e.context.as_str()];
        let scored: Vec<f64> = prepared.candidates.iter().map(|c| rouge_l(&c.text, &e.answer).f1).collect();
        let Some((target, best)) = scored
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |acc, (i, &s)| match acc {
                Some((_, b)) if b >= s => acc,
                _ => Some((i, s)),
            })
        else {
            continue;
        };
        if best <= 0.0 {
            continue;
        }
        let question = words_lower(&e.question);
        let feats = (0..prepared.candidates.len())
            .map(|i| features(&question, prepared, i, cfg.feature_dim))
            .collect();
        items.push(Item { target, feats });
    }
    let mut model = ExtractiveQa {
        feature_dim: cfg.feature_dim,
        weights: vec![0.0; cfg.feature_dim],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..items.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            let item = &items[k];
            let scores: Vec<f64> = item.feats.iter().map(|f| model.score(f)).collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for (i, f) in item.feats.iter().enumerate() {
                let grad = exps[i] / z - if i == item.target { 1.0 } else { 0.0 };
                if grad.abs() < 1e-9 {
                    continue;
                }
                for (j, v) in f {
                    model.weights[*j] -= cfg.learning_rate * (grad * v + cfg.l2 * model.weights[*j]);
                }
            }
        }
    }
    model
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaEvaluation {
    /// Mean ROUGE-L F1 in [0, 1].
    pub rouge_l_f1: f64,
    pub n: usize,
    /// Per-skill mean ROUGE-L F1 and count.
    pub per_skill: BTreeMap<Skill, (f64, usize)>,
}

pub fn evaluate_qa(model: &ExtractiveQa, examples: &[QaExample]) -> QaEvaluation {
    let mut cache: HashMap<&str, Prepared> = HashMap::new();
    let mut total = 0.0;
    let mut per: BTreeMap<Skill, (f64, usize)> = BTreeMap::new();
    for e in examples {
        let prepared = cache.entry(e.context.as_str()).or_insert_with(|| prepare(&e.context));
        let prediction = model.predict_prepared(prepared, &words_lower(&e.question));
        let f1 = rouge_l(&prediction, &e.answer).f1;
        total += f1;
        let slot = per.entry(e.skill).or_default();
        slot.0 += f1;
        slot.1 += 1;
    }
    let n = examples.len();
    QaEvaluation {
        rouge_l_f1: if n == 0 { 0.0 } else { total / n as f64 },
        n,
        per_skill: per.into_iter().map(|(s, (sum, c))| (s, (sum / c as f64, c))).collect(),
    }
}
