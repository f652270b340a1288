//! Generator inputs, objective and decoding.
//!
//! A [`GeneratorRecord`] is turned into one input string: the context is
//! first augmented with the filled F- and K-templates of its thought chain,
//! then combined with the answer and skill according to a
//! [`SerializationMode`]. The full mode reads
//! `[CXT] {context} [ANS] {answer} [SKL] {skill} Ask a question:`.

mod artifact;
mod beam;
mod loss;
mod training;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::ThoughtChain;
use crate::templates::{fill_focus_template, fill_knowledge_template, TemplateError, BLANK, FOCUS};
use crate::Skill;

pub use artifact::{ArtifactManifest, GeneratedQuestion, ARTIFACT_FORMAT_VERSION, MANIFEST_FILE};
pub use beam::{beam_search, rank_candidates, Hypothesis, StepModel};
pub use loss::nll_loss;
pub use training::{
    fit_to_budget, read_loss_log, write_loss_log, LossLogEntry, TrainingConfig,
};

pub const CXT_TOKEN: &str = "[CXT]";
pub const ANS_TOKEN: &str = "[ANS]";
pub const SKL_TOKEN: &str = "[SKL]";
pub const SPECIAL_TOKENS: [&str; 3] = [CXT_TOKEN, ANS_TOKEN, SKL_TOKEN];
pub const ASK_PROMPT: &str = "Ask a question:";

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("augmented context leaks a placeholder: {0:?}")]
    PlaceholderLeak(String),
    #[error("thought chain was elicited for a different context")]
    ContextMismatch,
    #[error("cannot parse serialized input: {0}")]
    Parse(String),
    #[error("{rows} probability rows for {tokens} reference tokens")]
    LengthMismatch { rows: usize, tokens: usize },
    #[error("row {step} sums to {sum}, not 1")]
    RowNotNormalized { step: usize, sum: f64 },
    #[error("reference token {token} at step {step} is outside the vocabulary")]
    TokenOutOfRange { step: usize, token: usize },
    #[error("zero probability for the reference token at step {step}")]
    ZeroProbability { step: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no trainable records")]
    EmptyDataset,
    #[error("artifact format version {found} is not supported (expected {expected})")]
    ArtifactVersion { found: u32, expected: u32 },
    #[error("artifact: {0}")]
    Artifact(String),
    #[error("model backend: {0}")]
    Backend(String),
}

/// How (context, answer, skill) are combined into one input sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SerializationMode {
    /// Plain concatenation.
    Concat,
    /// Special boundary tokens only.
    Symbol,
    /// Natural-language field prompts only.
    Prompt,
    /// Special tokens plus the trailing question prompt.
    Full,
}

impl SerializationMode {
    pub const ALL: [SerializationMode; 4] = [
        SerializationMode::Concat,
        SerializationMode::Symbol,
        SerializationMode::Prompt,
        SerializationMode::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SerializationMode::Concat => "concat",
            SerializationMode::Symbol => "symbol",
            SerializationMode::Prompt => "prompt",
            SerializationMode::Full => "full",
        }
    }

    pub fn uses_special_tokens(self) -> bool {
        matches!(self, SerializationMode::Symbol | SerializationMode::Full)
    }
}

impl fmt::Display for SerializationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SerializationMode {
    type Err = GeneratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SerializationMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| GeneratorError::Parse(format!("unknown serialization mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub context: String,
    pub chain: Option<ThoughtChain>,
    pub answer: String,
    pub skill: Skill,
    pub question: Option<String>,
    pub mode: SerializationMode,
}

impl GeneratorRecord {
    pub fn new(context: impl Into<String>, answer: impl Into<String>, skill: Skill) -> Self {
        GeneratorRecord {
            context: context.into(),
            chain: None,
            answer: answer.into(),
            skill,
            question: None,
            mode: SerializationMode::Full,
        }
    }

    pub fn with_chain(mut self, chain: ThoughtChain) -> Self {
        self.chain = Some(chain);
        self
    }

    pub fn with_question(mut self, question: impl Into<String>) -> Self {
        self.question = Some(question.into());
        self
    }

    pub fn with_mode(mut self, mode: SerializationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn augmented_context(&self) -> Result<String, GeneratorError> {
        augment_context(&self.context, self.chain.as_ref())
    }
}

fn chain_text(chain: &ThoughtChain) -> Result<String, GeneratorError> {
    let f = fill_focus_template(&chain.pair, &chain.focus.text)?;
    let k = fill_knowledge_template(&chain.pair, &chain.focus.text, &chain.knowledge.text)?;
    Ok(format!("{f} {k}"))
}

/// `Aug(c, f, k)`: the context followed by `T_F(f)` and `T_K(k)`. Without a
/// chain the context is returned unchanged.
pub fn augment_context(
    context: &str,
    chain: Option<&ThoughtChain>,
) -> Result<String, GeneratorError> {
    augment_context_with(context, chain.into_iter())
}

/// Appends the filled templates of several chains, in order.
pub fn augment_context_with<'a>(
    context: &str,
    chains: impl IntoIterator<Item = &'a ThoughtChain>,
) -> Result<String, GeneratorError> {
    let mut out = context.to_string();
    for chain in chains {
        if chain.context != context {
            return Err(GeneratorError::ContextMismatch);
        }
        out.push(' ');
        out.push_str(&chain_text(chain)?);
    }
    if out.contains(BLANK) || out.contains(FOCUS) {
        return Err(GeneratorError::PlaceholderLeak(out));
    }
    Ok(out)
}

/// Combines already-augmented context, answer and skill under `mode`.
pub fn format_input(
    augmented_context: &str,
    answer: &str,
    skill: Skill,
    mode: SerializationMode,
) -> Result<String, GeneratorError> {
    if augmented_context.trim().is_empty() {
        return Err(GeneratorError::EmptyField("context"));
    }
    if answer.trim().is_empty() {
        return Err(GeneratorError::EmptyField("answer"));
    }
    let c = augmented_context;
    let a = answer;
    let s = skill.as_str();
    Ok(match mode {
        SerializationMode::Full => {
            format!("{CXT_TOKEN} {c} {ANS_TOKEN} {a} {SKL_TOKEN} {s} {ASK_PROMPT}")
        }
        SerializationMode::Symbol => format!("{CXT_TOKEN} {c} {ANS_TOKEN} {a} {SKL_TOKEN} {s}"),
        SerializationMode::Prompt => format!("context: {c} answer: {a} skill: {s} {ASK_PROMPT}"),
        SerializationMode::Concat => format!("{c} {a} {s}"),
    })
}

pub fn serialize_input(record: &GeneratorRecord) -> Result<String, GeneratorError> {
    format_input(
        &record.augmented_context()?,
        &record.answer,
        record.skill,
        record.mode,
    )
}

/// Inverse of [`serialize_input`] for the marker-delimited modes.
pub fn parse_input(
    serialized: &str,
    mode: SerializationMode,
) -> Result<(String, String, Skill), GeneratorError> {
    let body = match mode {
        SerializationMode::Full => serialized
            .strip_suffix(ASK_PROMPT)
            .and_then(|s| s.strip_suffix(' '))
            .ok_or_else(|| GeneratorError::Parse(format!("missing {ASK_PROMPT:?}")))?,
        SerializationMode::Symbol => serialized,
        other => {
            return Err(GeneratorError::Parse(format!(
                "mode {other} has no boundary markers"
            )))
        }
    };
    let missing = |t: &str| GeneratorError::Parse(format!("missing {t}"));
    let rest = body
        .strip_prefix(CXT_TOKEN)
        .and_then(|s| s.strip_prefix(' '))
        .ok_or_else(|| missing(CXT_TOKEN))?;
    let ans_marker = format!(" {ANS_TOKEN} ");
    let skl_marker = format!(" {SKL_TOKEN} ");
    let (context, rest) = rest.split_once(&ans_marker).ok_or_else(|| missing(ANS_TOKEN))?;
    let (answer, skill) = rest.rsplit_once(&skl_marker).ok_or_else(|| missing(SKL_TOKEN))?;
    let skill = skill
        .parse::<Skill>()
        .map_err(|e| GeneratorError::Parse(e.to_string()))?;
    Ok((context.to_string(), answer.to_string(), skill))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub beam_size: usize,
    pub max_question_tokens: usize,
    pub keep_all_beams: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            beam_size: 8,
            max_question_tokens: 32,
            keep_all_beams: true,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.beam_size == 0 || self.max_question_tokens == 0 {
            return Err(GeneratorError::InvalidConfig(
                "beam_size and max_question_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionCandidate {
    pub text: String,
    pub beam_rank: usize,
    /// Sequence log-probability.
    pub score: f64,
}

/// A trained question generator.
pub trait QuestionGenerator {
    fn generate(
        &self,
        record: &GeneratorRecord,
        cfg: &GenerationConfig,
    ) -> Result<Vec<QuestionCandidate>, GeneratorError>;
}

impl<T: QuestionGenerator + ?Sized> QuestionGenerator for &T {
    fn generate(
        &self,
        record: &GeneratorRecord,
        cfg: &GenerationConfig,
    ) -> Result<Vec<QuestionCandidate>, GeneratorError> {
        (**self).generate(record, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::{FocusCandidate, FocusSource, KnowledgeCandidate};
    use crate::templates::TemplateRegistry;
    use proptest::prelude::*;

    fn troll_chain(context: &str) -> ThoughtChain {
        let reg = TemplateRegistry::bundled();
        let focus = FocusCandidate {
            text: "the troll".into(),
            source: FocusSource::Lm,
            pair_index: 0,
            log_prob: Some(-1.0),
        };
        ThoughtChain {
            context: context.into(),
            skill: Skill::Remember,
            pair_index: 0,
            pair: reg.get(0).unwrap().clone(),
            focus: focus.clone(),
            knowledge: KnowledgeCandidate {
                text: "a giant creature".into(),
                pair_index: 0,
                focus,
                log_prob: -2.0,
            },
            chain_score: -3.0,
        }
    }

    #[test]
    fn augment_golden() {
        let ctx = "The troll lived under the bridge.";
        assert_eq!(
            augment_context(ctx, Some(&troll_chain(ctx))).unwrap(),
            "The troll lived under the bridge. What is the definition of the troll The definition of the troll is a giant creature"
        );
        assert_eq!(augment_context(ctx, None).unwrap(), ctx);
        assert!(matches!(
            augment_context("Other.", Some(&troll_chain(ctx))),
            Err(GeneratorError::ContextMismatch)
        ));
    }

    #[test]
    fn serialization_modes_golden() {
        let cases = [
            (SerializationMode::Full, "[CXT] C. [ANS] the princess [SKL] analyze Ask a question:"),
            (SerializationMode::Symbol, "[CXT] C. [ANS] the princess [SKL] analyze"),
            (
                SerializationMode::Prompt,
                "context: C. answer: the princess skill: analyze Ask a question:",
            ),
            (SerializationMode::Concat, "C. the princess analyze"),
        ];
        for (mode, expected) in cases {
            let r = GeneratorRecord::new("C.", "the princess", Skill::Analyze).with_mode(mode);
            assert_eq!(serialize_input(&r).unwrap(), expected, "{mode}");
        }
        let r = GeneratorRecord::new("C.", "", Skill::Analyze);
        assert!(matches!(serialize_input(&r), Err(GeneratorError::EmptyField("answer"))));
        let r = GeneratorRecord::new(" ", "a", Skill::Analyze);
        assert!(matches!(serialize_input(&r), Err(GeneratorError::EmptyField("context"))));
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let s = "[CXT] C. [ANS] the princess [SKL] analyze Ask a question:";
        assert_eq!(
            parse_input(s, SerializationMode::Full).unwrap(),
            ("C.".to_string(), "the princess".to_string(), Skill::Analyze)
        );
        assert!(parse_input("[CXT] C. [SKL] analyze Ask a question:", SerializationMode::Full).is_err());
        assert!(parse_input(s, SerializationMode::Concat).is_err());
        let sym = "[CXT] C. [ANS] a [SKL] create";
        assert_eq!(parse_input(sym, SerializationMode::Symbol).unwrap().2, Skill::Create);
    }

    proptest! {
        #[test]
        fn marker_modes_round_trip(
            c in "[A-Za-z0-9 .,!?']{1,60}",
            a in "[A-Za-z0-9 .,']{1,20}",
            skill_idx in 0usize..5,
            full in any::<bool>(),
        ) {
            prop_assume!(!c.trim().is_empty() && !a.trim().is_empty());
            let mode = if full { SerializationMode::Full } else { SerializationMode::Symbol };
            let skill = Skill::ALL[skill_idx];
            let s = format_input(&c, &a, skill, mode).unwrap();
            prop_assert_eq!(parse_input(&s, mode).unwrap(), (c, a, skill));
        }

        #[test]
        fn augmented_context_starts_with_raw_context(
            c in "[A-Za-z .]{1,40}",
            knowledge in "[a-z][a-z ]{0,20}",
        ) {
            prop_assume!(!c.trim().is_empty());
            let mut chain = troll_chain(&c);
            chain.knowledge.text = knowledge;
            let out = augment_context(&c, Some(&chain)).unwrap();
            prop_assert!(out.starts_with(&c));
            prop_assert!(!out.contains(BLANK) && !out.contains(FOCUS));
        }
    }
}
