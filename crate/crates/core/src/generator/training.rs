use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{format_input, GeneratorError, SerializationMode};
use crate::Skill;

/// Optimization settings for fine-tuning the generator.
///
/// The learning rate warms up linearly over the first `warmup_fraction` of
/// `max_iterations`, then decays linearly to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub peak_learning_rate: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub max_sequence_length: usize,
    /// Validation interval for checkpoint selection, in iterations.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            peak_learning_rate: 3e-5,
            warmup_fraction: 0.10,
            weight_decay: 5e-4,
            adam_epsilon: 1e-8,
            batch_size: 16,
            max_iterations: 40_000,
            max_sequence_length: 384,
            eval_every: 2_000,
            seed: 42,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |m: &str| Err(GeneratorError::InvalidConfig(m.to_string()));
        if !(self.peak_learning_rate > 0.0) {
            return bad("peak_learning_rate must be positive");
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return bad("warmup_fraction must lie in (0, 1)");
        }
        if self.weight_decay < 0.0 || !(self.adam_epsilon > 0.0) {
            return bad("weight_decay must be >= 0 and adam_epsilon > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.max_iterations == 0 || self.max_sequence_length == 0 || self.eval_every == 0 {
            return bad("max_iterations, max_sequence_length and eval_every must be positive");
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> usize {
        ((self.max_iterations as f64 * self.warmup_fraction).ceil() as usize).max(1)
    }

    /// Learning rate used for the update at zero-based `step`.
    pub fn learning_rate(&self, step: usize) -> f64 {
        let warmup = self.warmup_steps();
        if step < warmup {
            self.peak_learning_rate * (step + 1) as f64 / warmup as f64
        } else {
            let remaining = self.max_iterations.saturating_sub(step) as f64;
            let span = (self.max_iterations - warmup).max(1) as f64;
            self.peak_learning_rate * remaining / span
        }
    }
}

/// Serializes the record, dropping words from the end of the (augmented)
/// context until the token count fits `max_tokens`. Answer, skill and prompt
/// segments are never cut. Returns `None` when even an empty-context input
/// would not fit.
pub fn fit_to_budget(
    augmented_context: &str,
    answer: &str,
    skill: Skill,
    mode: SerializationMode,
    max_tokens: usize,
    count_tokens: impl Fn(&str) -> usize,
) -> Result<Option<String>, GeneratorError> {
    let full = format_input(augmented_context, answer, skill, mode)?;
    if count_tokens(&full) <= max_tokens {
        return Ok(Some(full));
    }
    let words: Vec<&str> = augmented_context.split_whitespace().collect();
    let with = |n: usize| format_input(&words[..n].join(" "), answer, skill, mode);
    // largest n in [1, len) whose input fits
    let (mut lo, mut hi) = (0usize, words.len());
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if count_tokens(&with(mid)?) <= max_tokens {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0 {
        return Ok(None);
    }
    Ok(Some(with(lo)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossLogEntry {
    pub step: usize,
    pub loss: f64,
    pub learning_rate: f64,
}

pub fn write_loss_log(path: impl AsRef<Path>, entries: &[LossLogEntry]) -> Result<(), GeneratorError> {
    let err = |e: csv::Error| GeneratorError::Artifact(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for e in entries {
        w.serialize(e).map_err(err)?;
    }
    w.flush().map_err(|e| GeneratorError::Artifact(e.to_string()))
}

pub fn read_loss_log(path: impl AsRef<Path>) -> Result<Vec<LossLogEntry>, GeneratorError> {
    let err = |e: csv::Error| GeneratorError::Artifact(e.to_string());
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize().map(|row| row.map_err(err)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> usize {
        s.split_whitespace().count()
    }

    #[test]
    fn schedule_warms_up_then_decays_to_zero() {
        let cfg = TrainingConfig {
            max_iterations: 100,
            peak_learning_rate: 1.0,
            ..TrainingConfig::default()
        };
        assert_eq!(cfg.warmup_steps(), 10);
        assert!((cfg.learning_rate(0) - 0.1).abs() < 1e-12);
        assert!((cfg.learning_rate(9) - 1.0).abs() < 1e-12);
        assert!((cfg.learning_rate(10) - 1.0).abs() < 1e-12);
        assert!((cfg.learning_rate(55) - 0.5).abs() < 1e-12);
        assert!(cfg.learning_rate(99) > 0.0 && cfg.learning_rate(99) < 0.02);
        assert_eq!(cfg.learning_rate(100), 0.0);
    }

    #[test]
    fn defaults_and_validation() {
        let cfg = TrainingConfig::default();
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.max_iterations, 40_000);
        assert_eq!(cfg.max_sequence_length, 384);
        assert_eq!(cfg.weight_decay, 5e-4);
        assert_eq!(cfg.adam_epsilon, 1e-8);
        assert!(cfg.validate().is_ok());
        let zero_batch = TrainingConfig { batch_size: 0, ..cfg };
        assert!(zero_batch.validate().is_err());
        let bad_warmup = TrainingConfig { warmup_fraction: 1.0, ..cfg };
        assert!(bad_warmup.validate().is_err());
    }

    #[test]
    fn truncation_cuts_context_only() {
        let ctx = "one two three four five six seven eight";
        let out = fit_to_budget(ctx, "the answer", Skill::Create, SerializationMode::Full, 12, words)
            .unwrap()
            .unwrap();
        assert!(words(&out) <= 12);
        assert!(out.starts_with("[CXT] one two"));
        assert!(out.ends_with("[ANS] the answer [SKL] create Ask a question:"));
        // fits untouched
        let out = fit_to_budget("a b", "x", Skill::Create, SerializationMode::Full, 100, words)
            .unwrap()
            .unwrap();
        assert_eq!(out, "[CXT] a b [ANS] x [SKL] create Ask a question:");
        // nothing fits
        assert!(fit_to_budget(ctx, "x", Skill::Create, SerializationMode::Full, 3, words)
            .unwrap()
            .is_none());
    }

    #[test]
    fn loss_log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let entries = vec![
            LossLogEntry { step: 1, loss: 2.5, learning_rate: 1e-4 },
            LossLogEntry { step: 2, loss: 2.25, learning_rate: 2e-4 },
        ];
        write_loss_log(&path, &entries).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,loss,learning_rate\n"));
        assert_eq!(read_loss_log(&path).unwrap(), entries);
    }
}
