//! Skill-conditioned reading-comprehension question generation.
//!
//! The crate is organised along the pipeline:
//!
//! * [`skill`] and [`corpus`]: the five-level comprehension schema and dataset ingest.
//! * [`templates`]: focus/knowledge template registry and placeholder filling.
//! * [`prompting`]: question-focus and knowledge elicitation from a causal LM backend.
//! * [`generator`]: knowledge-augmented input construction, NLL, beam search, artifacts.
//! * [`extraction`]: skill classifier plus rule-based answer extraction for augmentation.
//! * [`metrics`]: BLEU-4, ROUGE-L, Q-BLEU-4, scorer adapters, Krippendorff's alpha.
//! * [`annotation`]: human-evaluation tasks, judgment store and aggregations.
//! * [`qa`]: a small extractive QA model used to measure augmentation effects.

pub mod annotation;
pub mod corpus;
pub mod extraction;
#[cfg(feature = "fixtures")]
pub mod fixtures;
pub mod generator;
pub mod jsonl;
pub mod metrics;
pub mod nlp;
pub mod prompting;
pub mod qa;
pub mod skill;
pub mod templates;
pub mod text;

pub use skill::Skill;
