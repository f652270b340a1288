use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{tokenize, MetricConfig, Smoothing, TokenizerConfig};

pub(crate) fn default_config() -> &'static MetricConfig {
    static CONFIG: OnceLock<MetricConfig> = OnceLock::new();
    CONFIG.get_or_init(MetricConfig::bundled)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU-4 with the bundled tokenizer and smoothing.
pub fn bleu4(candidate: &str, references: &[&str]) -> f64 {
    let cfg = default_config();
    bleu4_with(candidate, references, &cfg.tokenizer, cfg.bleu.smoothing)
}

/// Sentence BLEU-4: clipped n-gram precisions (n = 1..4, uniform weights)
/// and a brevity penalty against the reference length closest to the
/// candidate length (shorter wins ties). Add-one smoothing adds 1 to the
/// numerator and denominator of each 2..4-gram precision whose matched count
/// is 0. An order the candidate is too short to have n-grams for counts as
/// precision 1, so a short candidate scored against itself gets 1.
pub fn bleu4_with(
    candidate: &str,
    references: &[&str],
    tokenizer: &TokenizerConfig,
    smoothing: Smoothing,
) -> f64 {
    let cand = tokenize(candidate, tokenizer);
    if cand.is_empty() {
        log::warn!("BLEU-4 of an empty candidate is 0");
        return 0.0;
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r, tokenizer)).collect();
    if refs.is_empty() {
        return 0.0;
    }

    let mut log_sum = 0.0;
    for n in 1..=cand.len().min(4) {
        let cand_counts = ngram_counts(&cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (gram, count) in ngram_counts(r, n) {
                let slot = max_ref.entry(gram).or_insert(0);
                *slot = (*slot).max(count);
            }
        }
        let matched: usize = cand_counts
            .iter()
            .map(|(gram, &count)| count.min(max_ref.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = cand.len() + 1 - n;
        let precision = if matched > 0 {
            matched as f64 / total as f64
        } else if n >= 2 && smoothing == Smoothing::AddOne {
            1.0 / (total as f64 + 1.0)
        } else {
            return 0.0;
        };
        log_sum += 0.25 * precision.ln();
    }

    let c = cand.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    (bp * log_sum.exp()).clamp(0.0, 1.0)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn rouge_l(candidate: &str, reference: &str) -> RougeScore {
    rouge_l_with(candidate, reference, &default_config().tokenizer)
}

pub(crate) fn rouge_l_with(candidate: &str, reference: &str, tokenizer: &TokenizerConfig) -> RougeScore {
    let cand = tokenize(candidate, tokenizer);
    let refs = tokenize(reference, tokenizer);
    let zero = RougeScore { precision: 0.0, recall: 0.0, f1: 0.0 };
    if cand.is_empty() && refs.is_empty() {
        log::warn!("ROUGE-L of two empty strings is 0");
        return zero;
    }
    if cand.is_empty() || refs.is_empty() {
        return zero;
    }
    let lcs = lcs_len(&cand, &refs) as f64;
    let precision = lcs / cand.len() as f64;
    let recall = lcs / refs.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    RougeScore { precision, recall, f1 }
}

/// Mean ROUGE-L F1 of predicted answers against gold answers.
pub fn qa_rouge_l_f1(predictions: &[&str], golds: &[&str]) -> f64 {
    assert_eq!(predictions.len(), golds.len(), "one prediction per gold answer");
    if predictions.is_empty() {
        return 0.0;
    }
    let total: f64 = predictions.iter().zip(golds).map(|(p, g)| rouge_l(p, g).f1).sum();
    total / predictions.len() as f64
}
