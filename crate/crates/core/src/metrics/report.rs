use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ngram::{bleu4_with, rouge_l_with};
use super::qbleu::q_bleu4_with;
use super::scorer::{model_scores, ModelScores, Pairing, Scorer, ScoringInput};
use super::{tokenizer_description, MetricConfig, MetricError};
use crate::corpus::QASample;
use crate::generator::GeneratedQuestion;
use crate::Skill;

/// Corpus table columns, in display order.
pub const TABLE_COLUMNS: [&str; 6] = ["Q-B4", "R-L", "B4", "BE.S", "CTC", "BA.S"];

pub struct ScorerBinding<'a> {
    pub column: String,
    pub pairing: Pairing,
    pub scorer: &'a dyn Scorer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub context: String,
    pub answer: String,
    pub skill: Skill,
    pub question: String,
    pub references: Vec<String>,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnalignedRecord {
    pub context: String,
    pub answer: String,
    pub skill: Skill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_samples: usize,
    pub fingerprint: String,
    pub tokenizer: String,
    pub columns: Vec<String>,
    /// Arithmetic mean of the per-sample scores, per computed column.
    pub corpus: BTreeMap<String, f64>,
    /// Column → reason, for scorers that could not run.
    pub omitted: BTreeMap<String, String>,
    pub scorer_identities: BTreeMap<String, String>,
    pub unaligned: Vec<UnalignedRecord>,
    pub per_sample: Vec<SampleScores>,
}

type Key = (String, String, Skill);

/// Scores rank-0 generated questions against every gold question sharing
/// their (context, answer, skill) key.
///
/// BLEU-4 uses all references at once; ROUGE-L F1, Q-BLEU-4 and
/// reference-paired model scores take the best single reference.
pub fn evaluate_corpus(
    generated: &[GeneratedQuestion],
    gold: &[QASample],
    config: &MetricConfig,
    scorers: &[ScorerBinding<'_>],
) -> Result<MetricReport, MetricError> {
    config.validate()?;
    if generated.is_empty() {
        return Err(MetricError::Input("generated question file is empty".into()));
    }
    let mut refs: HashMap<Key, Vec<&str>> = HashMap::new();
    for g in gold {
        refs.entry((g.context.clone(), g.answer.clone(), g.skill))
            .or_default()
            .push(&g.question);
    }

    let mut samples = Vec::new();
    let mut unaligned = Vec::new();
    for q in generated.iter().filter(|q| q.beam_rank == 0) {
        let key = (q.context.clone(), q.answer.clone(), q.skill);
        match refs.get(&key) {
            Some(r) => {
                let mut scores = BTreeMap::new();
                let best = |f: &dyn Fn(&str) -> f64| r.iter().map(|x| f(x)).fold(0.0f64, f64::max);
                scores.insert("Q-B4".to_string(), best(&|x| q_bleu4_with(&q.question, x, config)));
                scores.insert("R-L".to_string(), best(&|x| rouge_l_with(&q.question, x, &config.tokenizer).f1));
                scores.insert(
                    "B4".to_string(),
                    bleu4_with(&q.question, r, &config.tokenizer, config.bleu.smoothing),
                );
                samples.push(SampleScores {
                    context: q.context.clone(),
                    answer: q.answer.clone(),
                    skill: q.skill,
                    question: q.question.clone(),
                    references: r.iter().map(|s| s.to_string()).collect(),
                    scores,
                });
            }
            None => {
                log::warn!("generated record has no gold counterpart: skill {} answer {:?}", q.skill, q.answer);
                unaligned.push(UnalignedRecord {
                    context: q.context.clone(),
                    answer: q.answer.clone(),
                    skill: q.skill,
                });
            }
        }
    }
    if samples.is_empty() {
        return Err(MetricError::Input("no generated record aligned with the gold data".into()));
    }

    let mut omitted = BTreeMap::new();
    let mut identities = BTreeMap::new();
    for binding in scorers {
        // one input per (sample, reference) for reference pairing
        let mut owner = Vec::new();
        let mut inputs = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            let refs: Vec<&str> = match binding.pairing {
                Pairing::Reference => s.references.iter().map(String::as_str).collect(),
                Pairing::Context => vec![""],
            };
            for r in refs {
                owner.push(i);
                inputs.push(ScoringInput {
                    candidate: &s.question,
                    reference: r,
                    context: &s.context,
                });
            }
        }
        match model_scores(&inputs, binding.pairing, binding.scorer) {
            ModelScores::Scored { identity, scores } => {
                let mut best = vec![f64::NEG_INFINITY; samples.len()];
                for (&i, v) in owner.iter().zip(&scores) {
                    best[i] = best[i].max(*v);
                }
                for (s, v) in samples.iter_mut().zip(best) {
                    s.scores.insert(binding.column.clone(), v);
                }
                identities.insert(binding.column.clone(), identity);
            }
            ModelScores::Omitted { identity, reason } => {
                identities.insert(binding.column.clone(), identity);
                omitted.insert(binding.column.clone(), reason);
            }
        }
    }

    let mut columns: Vec<String> = TABLE_COLUMNS.iter().map(|c| c.to_string()).collect();
    for b in scorers {
        if !columns.contains(&b.column) {
            columns.push(b.column.clone());
        }
    }
    let mut corpus = BTreeMap::new();
    for col in &columns {
        let values: Vec<f64> = samples.iter().filter_map(|s| s.scores.get(col).copied()).collect();
        if values.len() == samples.len() {
            corpus.insert(col.clone(), values.iter().sum::<f64>() / values.len() as f64);
        } else if !omitted.contains_key(col) {
            omitted.insert(col.clone(), "no scorer configured".into());
        }
    }

    Ok(MetricReport {
        n_samples: samples.len(),
        fingerprint: config.fingerprint(),
        tokenizer: tokenizer_description(&config.tokenizer),
        columns,
        corpus,
        omitted,
        scorer_identities: identities,
        unaligned,
        per_sample: samples,
    })
}

impl MetricReport {
    /// Text report: header lines, then the corpus table with scores ×100.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "samples: {}", self.n_samples);
        let _ = writeln!(out, "unaligned: {}", self.unaligned.len());
        let _ = writeln!(out, "fingerprint: {}", self.fingerprint);
        let _ = writeln!(out, "{}", self.tokenizer);
        for (col, id) in &self.scorer_identities {
            let _ = writeln!(out, "scorer {col}: {id}");
        }
        out.push('\n');
        let _ = writeln!(out, "| {} |", self.columns.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(self.columns.len()));
        let cells: Vec<String> = self
            .columns
            .iter()
            .map(|c| match self.corpus.get(c) {
                Some(v) => format!("{:.2}", v * 100.0),
                None => "omitted".to_string(),
            })
            .collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
        for (col, reason) in &self.omitted {
            let _ = writeln!(out, "metric omitted: {col} ({reason})");
        }
        out
    }

    /// Writes the text report and the per-sample JSONL sidecar.
    pub fn write(&self, report_path: impl AsRef<Path>, sidecar_path: impl AsRef<Path>) -> Result<(), MetricError> {
        std::fs::write(report_path, self.render()).map_err(|e| MetricError::Input(e.to_string()))?;
        crate::jsonl::write(sidecar_path, &self.per_sample).map_err(|e| MetricError::Input(e.to_string()))
    }
}
