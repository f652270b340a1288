use std::collections::HashMap;

use super::ngram::{bleu4_with, default_config};
use super::{is_punct_token, raw_tokens, MetricConfig};

/// Answerability word classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TokenCategory {
    NamedEntity,
    Question,
    Relevant,
    Function,
}

impl TokenCategory {
    const ALL: [TokenCategory; 4] = [
        TokenCategory::NamedEntity,
        TokenCategory::Question,
        TokenCategory::Relevant,
        TokenCategory::Function,
    ];

    fn weight(self, cfg: &MetricConfig) -> f64 {
        let q = &cfg.qbleu;
        match self {
            TokenCategory::NamedEntity => q.ner_weight,
            TokenCategory::Question => q.question_weight,
            TokenCategory::Relevant => q.relevant_weight,
            TokenCategory::Function => q.function_weight,
        }
    }
}

/// Lexicon words are checked first; otherwise a capitalized or numeric
/// token counts as a named entity and anything else as a relevant word.
fn categorize(token: &str, cfg: &MetricConfig) -> Option<TokenCategory> {
    if is_punct_token(token) {
        return None;
    }
    let lower = token.to_lowercase();
    if cfg.qbleu.question_words.iter().any(|w| *w == lower) {
        Some(TokenCategory::Question)
    } else if cfg.qbleu.function_words.iter().any(|w| *w == lower) {
        Some(TokenCategory::Function)
    } else if token.chars().next().is_some_and(char::is_uppercase)
        || token.chars().all(|c| c.is_ascii_digit())
    {
        Some(TokenCategory::NamedEntity)
    } else {
        Some(TokenCategory::Relevant)
    }
}

fn category_counts(text: &str, cfg: &MetricConfig) -> HashMap<TokenCategory, HashMap<String, usize>> {
    let mut out: HashMap<TokenCategory, HashMap<String, usize>> = HashMap::new();
    for token in raw_tokens(text, cfg.tokenizer.split_punctuation) {
        if let Some(cat) = categorize(&token, cfg) {
            let key = if cfg.tokenizer.lowercase { token.to_lowercase() } else { token };
            *out.entry(cat).or_default().entry(key).or_insert(0) += 1;
        }
    }
    out
}

/// Harmonic mean of category-weighted precision and recall.
///
/// Per category, matches are clipped counts. A category absent from both
/// sides scores 1 in precision and recall; absent from one side only, the
/// side it is absent from scores 1 and the other 0.
pub fn answerability(candidate: &str, reference: &str, cfg: &MetricConfig) -> f64 {
    let cand = category_counts(candidate, cfg);
    let refs = category_counts(reference, cfg);
    if cand.is_empty() {
        return 0.0;
    }
    let empty = HashMap::new();
    let (mut precision, mut recall) = (0.0, 0.0);
    for cat in TokenCategory::ALL {
        let c = cand.get(&cat).unwrap_or(&empty);
        let r = refs.get(&cat).unwrap_or(&empty);
        let c_total: usize = c.values().sum();
        let r_total: usize = r.values().sum();
        let matched: usize = c
            .iter()
            .map(|(w, n)| (*n).min(r.get(w).copied().unwrap_or(0)))
            .sum();
        let p = if c_total > 0 { matched as f64 / c_total as f64 } else { 1.0 };
        let rc = if r_total > 0 { matched as f64 / r_total as f64 } else { 1.0 };
        let w = cat.weight(cfg);
        precision += w * p;
        recall += w * rc;
    }
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn q_bleu4(candidate: &str, reference: &str) -> f64 {
    q_bleu4_with(candidate, reference, default_config())
}

/// `delta * answerability + (1 - delta) * BLEU-4`.
pub fn q_bleu4_with(candidate: &str, reference: &str, cfg: &MetricConfig) -> f64 {
    if candidate.trim().is_empty() {
        return 0.0;
    }
    let delta = cfg.qbleu.delta;
    let bleu = bleu4_with(candidate, &[reference], &cfg.tokenizer, cfg.bleu.smoothing);
    (delta * answerability(candidate, reference, cfg) + (1.0 - delta) * bleu).clamp(0.0, 1.0)
}
