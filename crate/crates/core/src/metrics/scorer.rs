//! Adapters for model-backed scorers.
//!
//! The scoring models themselves live outside this crate; an adapter only
//! routes (candidate, reference) or (candidate, context) pairs to them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScorerError {
    #[error("scorer {0} is unavailable: {1}")]
    Unavailable(String, String),
    #[error("scorer {0} failed: {1}")]
    Failed(String, String),
}

pub trait Scorer {
    fn score(&self, candidate: &str, other: &str) -> Result<f64, ScorerError>;

    /// Name and version; scores are deterministic for a fixed identity.
    fn identity(&self) -> String;

    /// Batched scoring; adapters with a native batch API override this.
    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, ScorerError> {
        pairs.iter().map(|(c, o)| self.score(c, o)).collect()
    }
}

/// Which text the candidate is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    Reference,
    Context,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringInput<'a> {
    pub candidate: &'a str,
    pub reference: &'a str,
    pub context: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ModelScores {
    Scored { identity: String, scores: Vec<f64> },
    Omitted { identity: String, reason: String },
}

impl ModelScores {
    pub fn scores(&self) -> Option<&[f64]> {
        match self {
            ModelScores::Scored { scores, .. } => Some(scores),
            ModelScores::Omitted { .. } => None,
        }
    }
}

pub fn model_scores<S: Scorer + ?Sized>(inputs: &[ScoringInput<'_>], pairing: Pairing, scorer: &S) -> ModelScores {
    let pairs: Vec<(&str, &str)> = inputs
        .iter()
        .map(|i| {
            let other = match pairing {
                Pairing::Reference => i.reference,
                Pairing::Context => i.context,
            };
            (i.candidate, other)
        })
        .collect();
    let identity = scorer.identity();
    match scorer.score_batch(&pairs) {
        Ok(scores) => ModelScores::Scored { identity, scores },
        Err(e) => {
            log::warn!("metric omitted: {e}");
            ModelScores::Omitted {
                identity,
                reason: e.to_string(),
            }
        }
    }
}

/// Returns the same value for every pair.
#[derive(Debug, Clone)]
pub struct ConstantScorer {
    pub value: f64,
}

impl Scorer for ConstantScorer {
    fn score(&self, _: &str, _: &str) -> Result<f64, ScorerError> {
        Ok(self.value)
    }

    fn identity(&self) -> String {
        format!("constant-{}", self.value)
    }
}

/// Stands in for a scorer whose model is not installed.
#[derive(Debug, Clone)]
pub struct UnavailableScorer {
    pub name: String,
}

impl Scorer for UnavailableScorer {
    fn score(&self, _: &str, _: &str) -> Result<f64, ScorerError> {
        Err(ScorerError::Unavailable(self.name.clone(), "no model configured".into()))
    }

    fn identity(&self) -> String {
        self.name.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Spy(Mutex<Vec<String>>);

    impl Scorer for Spy {
        fn score(&self, _: &str, other: &str) -> Result<f64, ScorerError> {
            self.0.lock().unwrap().push(other.to_string());
            Ok(0.0)
        }
        fn identity(&self) -> String {
            "spy".into()
        }
    }

    fn inputs() -> Vec<ScoringInput<'static>> {
        vec![ScoringInput { candidate: "q", reference: "REF", context: "CTX" }; 3]
    }

    #[test]
    fn passthrough_and_routing() {
        let out = model_scores(&inputs(), Pairing::Reference, &ConstantScorer { value: 0.5 });
        assert_eq!(out.scores().unwrap(), &[0.5, 0.5, 0.5]);

        let spy = Spy(Mutex::new(Vec::new()));
        model_scores(&inputs(), Pairing::Context, &spy);
        assert_eq!(*spy.0.lock().unwrap(), vec!["CTX"; 3]);
        let spy = Spy(Mutex::new(Vec::new()));
        model_scores(&inputs(), Pairing::Reference, &spy);
        assert_eq!(*spy.0.lock().unwrap(), vec!["REF"; 3]);
    }

    #[test]
    fn unavailable_scorer_is_omitted() {
        let out = model_scores(&inputs(), Pairing::Context, &UnavailableScorer { name: "bartscore".into() });
        assert!(matches!(out, ModelScores::Omitted { ref identity, .. } if identity == "bartscore"));
        assert!(out.scores().is_none());
    }
}
