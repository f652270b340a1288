//! Automatic evaluation: n-gram metrics, model-backed scorer adapters,
//! annotator agreement and corpus reports.

mod agreement;
mod ngram;
mod qbleu;
mod report;
mod scorer;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agreement::{krippendorff_alpha, RatingMatrix};
pub use ngram::{bleu4, bleu4_with, lcs_len, qa_rouge_l_f1, rouge_l, RougeScore};
pub use qbleu::{answerability, q_bleu4, q_bleu4_with, TokenCategory};
pub use report::{evaluate_corpus, MetricReport, SampleScores, ScorerBinding, TABLE_COLUMNS};
pub use scorer::{
    model_scores, ConstantScorer, ModelScores, Pairing, Scorer, ScorerError, ScoringInput,
    UnavailableScorer,
};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("undefined value: {0}")]
    Undefined(String),
    #[error("invalid input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub split_punctuation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    None,
    AddOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub smoothing: Smoothing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QBleuConfig {
    pub ner_weight: f64,
    pub question_weight: f64,
    pub relevant_weight: f64,
    pub function_weight: f64,
    pub delta: f64,
    pub question_words: Vec<String>,
    pub function_words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerSpec {
    pub column: String,
    pub pairing: Pairing,
    pub identity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub tokenizer: TokenizerConfig,
    pub bleu: BleuConfig,
    pub qbleu: QBleuConfig,
    #[serde(default)]
    pub scorers: Vec<ScorerSpec>,
}

const BUNDLED_CONFIG: &str = include_str!("../../data/metrics.toml");

impl MetricConfig {
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED_CONFIG).expect("bundled metric config is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, MetricError> {
        let cfg: MetricConfig = toml::from_str(text).map_err(|e| MetricError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| MetricError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let q = &self.qbleu;
        if q.question_words.is_empty() || q.function_words.is_empty() {
            return Err(MetricError::Config(
                "question_words and function_words lexicons must be non-empty".into(),
            ));
        }
        let weights = [q.ner_weight, q.question_weight, q.relevant_weight, q.function_weight];
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(MetricError::Config("answerability weights must lie in [0, 1]".into()));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(MetricError::Config("answerability weights must sum to 1".into()));
        }
        if !(0.0..=1.0).contains(&q.delta) {
            return Err(MetricError::Config("delta must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical TOML form, prefixed with the tokenizer
    /// description.
    pub fn fingerprint(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        crate::text::sha256_hex(&format!("{}\n{canonical}", tokenizer_description(&self.tokenizer)))
    }
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self::bundled()
    }
}

fn tokenizer_description(cfg: &TokenizerConfig) -> String {
    format!(
        "tokenizer: lowercase={} split_punctuation={} (non-alphanumeric, non-space chars are single tokens)",
        cfg.lowercase, cfg.split_punctuation
    )
}

fn is_punct_char(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Whitespace tokens with punctuation separated, original case kept.
pub fn raw_tokens(text: &str, split_punctuation: bool) -> Vec<String> {
    if !split_punctuation {
        return text.split_whitespace().map(str::to_string).collect();
    }
    let mut spaced = String::with_capacity(text.len() + 8);
    for c in text.chars() {
        if is_punct_char(c) {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else {
            spaced.push(c);
        }
    }
    spaced.split_whitespace().map(str::to_string).collect()
}

pub fn tokenize(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    let mut tokens = raw_tokens(text, cfg.split_punctuation);
    if cfg.lowercase {
        for t in &mut tokens {
            *t = t.to_lowercase();
        }
    }
    tokens
}

pub(crate) fn is_punct_token(token: &str) -> bool {
    token.chars().all(is_punct_char)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_separates_punctuation_and_lowercases() {
        let cfg = MetricConfig::bundled().tokenizer;
        assert_eq!(
            tokenize("Why did Timmy's dog run?", &cfg),
            vec!["why", "did", "timmy", "'", "s", "dog", "run", "?"]
        );
        assert_eq!(tokenize("  ", &cfg), Vec::<String>::new());
    }

    #[test]
    fn bundled_config_is_valid_and_fingerprinted() {
        let cfg = MetricConfig::bundled();
        assert_eq!(cfg.qbleu.delta, 0.7);
        assert_eq!(cfg.bleu.smoothing, Smoothing::AddOne);
        assert_eq!(cfg.scorers.len(), 3);
        assert_eq!(cfg.fingerprint(), MetricConfig::bundled().fingerprint());
        let mut other = cfg.clone();
        other.qbleu.delta = 0.5;
        assert_ne!(other.fingerprint(), cfg.fingerprint());
    }

    #[test]
    fn missing_lexicon_is_a_config_error() {
        let text = BUNDLED_CONFIG.replace(
            "question_words = [\"what\", \"who\", \"whom\", \"whose\", \"when\", \"where\", \"why\", \"how\", \"which\"]",
            "question_words = []",
        );
        assert!(matches!(MetricConfig::from_toml_str(&text), Err(MetricError::Config(_))));
        let mut cfg = MetricConfig::bundled();
        cfg.qbleu.ner_weight = 0.9;
        assert!(cfg.validate().is_err());
    }
}
