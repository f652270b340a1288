//! Question-focus and knowledge elicitation.
//!
//! For a context `c` and skill `s`, every template pair of `s` produces focus
//! candidates: prefix-style F-templates are completed by a causal LM from the
//! prompt `c From the context: T_F`, cloze-style ones take named entities of
//! `c` instead. Each focus then seeds knowledge sampling from
//! `c From the context: T_F(f) T_K`. The highest scoring (focus, knowledge)
//! pair becomes the [`ThoughtChain`] that augments the generator input.

pub mod backends;
pub mod cache;

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nlp::{BackendError, EntityRecognizer};
use crate::templates::{
    completion_stub, fill_focus_template, Bindings, TemplateError, TemplatePair, TemplateRegistry,
    TemplateStyle, BLANK, FOCUS,
};
use crate::Skill;

pub use backends::{NgramLanguageModel, ScriptedLanguageModel};
pub use cache::{CacheRecord, ElicitationCache};

/// Literal joiner between the context and the template text.
pub const CONTEXT_JOINER: &str = " From the context: ";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("context must not be empty")]
    EmptyContext,
    #[error("template {0:?} is cloze-style; use entity_focuses for its focus")]
    ClozeTemplate(String),
    #[error("no usable candidates for skill {skill}")]
    EmptyResult { skill: Skill },
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub top_p: f64,
    pub num_samples: usize,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl SamplingConfig {
    /// Five focuses per F-template at nucleus p = 0.2.
    pub fn focus_default() -> Self {
        SamplingConfig {
            top_p: 0.2,
            num_samples: 5,
            max_new_tokens: 16,
            seed: 0,
        }
    }

    /// Ten knowledge texts per K-template at nucleus p = 0.5.
    pub fn knowledge_default() -> Self {
        SamplingConfig {
            top_p: 0.5,
            num_samples: 10,
            max_new_tokens: 48,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(PromptError::InvalidConfig(format!(
                "top_p {} not in (0, 1]",
                self.top_p
            )));
        }
        if self.num_samples == 0 || self.max_new_tokens == 0 {
            return Err(PromptError::InvalidConfig(
                "num_samples and max_new_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A sampled continuation and its sequence log-probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub log_prob: f64,
}

/// Frozen causal LM. Implementations must be deterministic for a given
/// `(prompt, cfg.seed)` and stop at end-of-sequence or `cfg.max_new_tokens`.
pub trait LanguageModel {
    fn generate(&self, prompt: &str, cfg: &SamplingConfig) -> Result<Vec<Completion>, BackendError>;

    fn identity(&self) -> String {
        std::any::type_name::<Self>().to_string()
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for &T {
    fn generate(&self, prompt: &str, cfg: &SamplingConfig) -> Result<Vec<Completion>, BackendError> {
        (**self).generate(prompt, cfg)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }
}

/// Opaque backend selection passed through from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub model: String,
    #[serde(default = "default_device")]
    pub device: String,
    #[serde(default)]
    pub seed: u64,
}

fn default_device() -> String {
    "cpu".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FocusSource {
    Lm,
    Ner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusCandidate {
    pub text: String,
    pub source: FocusSource,
    pub pair_index: usize,
    /// Absent for entity-sourced focuses.
    pub log_prob: Option<f64>,
}

impl FocusCandidate {
    /// Score used in chain selection; entity focuses count as 0.
    pub fn score(&self) -> f64 {
        self.log_prob.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeCandidate {
    pub text: String,
    pub pair_index: usize,
    pub focus: FocusCandidate,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThoughtChain {
    pub context: String,
    pub skill: Skill,
    pub pair_index: usize,
    pub pair: TemplatePair,
    pub focus: FocusCandidate,
    pub knowledge: KnowledgeCandidate,
    pub chain_score: f64,
}

fn check_context(context: &str) -> Result<(), PromptError> {
    if context.trim().is_empty() {
        Err(PromptError::EmptyContext)
    } else {
        Ok(())
    }
}

/// `P_F(c)`: the context, the joiner, and the F-template cut at its blank.
pub fn build_focus_prompt(context: &str, pair: &TemplatePair) -> Result<String, PromptError> {
    check_context(context)?;
    if pair.style() == TemplateStyle::Cloze {
        return Err(PromptError::ClozeTemplate(pair.f_text().to_string()));
    }
    let stub = completion_stub(pair.f_text(), &Bindings::default())?;
    Ok(format!("{context}{CONTEXT_JOINER}{stub}"))
}

/// `P_K(c, f)`: the context, the joiner, `T_F(f)`, and the K-template cut at
/// its blank.
pub fn build_knowledge_prompt(
    context: &str,
    pair: &TemplatePair,
    focus: &FocusCandidate,
) -> Result<String, PromptError> {
    check_context(context)?;
    let filled = fill_focus_template(pair, &focus.text)?;
    let stub = completion_stub(pair.k_text(), &Bindings::default().focus(&focus.text))?;
    Ok(format!("{context}{CONTEXT_JOINER}{filled} {stub}"))
}

/// Cuts a raw continuation at the first sentence terminator or newline and
/// trims it. Returns `None` for empty or placeholder-bearing text.
pub fn clean_completion(raw: &str) -> Option<String> {
    let end = raw
        .find(['.', '?', '!', '\n'])
        .unwrap_or(raw.len());
    let text = crate::text::normalize_space(&raw[..end]);
    if text.is_empty() || text.contains(BLANK) || text.contains(FOCUS) {
        None
    } else {
        Some(text)
    }
}

/// Named entities of the context as focus candidates, deduplicated by
/// surface form in order of first appearance.
pub fn entity_focuses<N: EntityRecognizer + ?Sized>(
    context: &str,
    ner: &N,
    pair_index: usize,
) -> Result<Vec<FocusCandidate>, PromptError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for entity in ner.entities(context)? {
        let Some(text) = clean_completion(&entity.text) else {
            continue;
        };
        if seen.insert(text.clone()) {
            out.push(FocusCandidate {
                text,
                source: FocusSource::Ner,
                pair_index,
                log_prob: None,
            });
        }
    }
    Ok(out)
}

/// Focus candidates from every template pair of `skill`.
pub fn generate_focuses<L, N>(
    context: &str,
    skill: Skill,
    registry: &TemplateRegistry,
    backend: &L,
    ner: &N,
    cfg: &SamplingConfig,
) -> Result<Vec<FocusCandidate>, PromptError>
where
    L: LanguageModel + ?Sized,
    N: EntityRecognizer + ?Sized,
{
    check_context(context)?;
    cfg.validate()?;
    let mut out = Vec::new();
    for (pair_index, pair) in registry.pairs_for(skill) {
        match pair.style() {
            TemplateStyle::Cloze => out.extend(entity_focuses(context, ner, pair_index)?),
            TemplateStyle::Prefix => {
                let prompt = build_focus_prompt(context, pair)?;
                let mut seen = HashSet::new();
                for completion in backend.generate(&prompt, cfg)? {
                    let Some(text) = clean_completion(&completion.text) else {
                        continue;
                    };
                    if seen.insert(text.clone()) {
                        out.push(FocusCandidate {
                            text,
                            source: FocusSource::Lm,
                            pair_index,
                            log_prob: Some(completion.log_prob),
                        });
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(PromptError::EmptyResult { skill });
    }
    Ok(out)
}

/// Knowledge candidates for one focus under its pair's K-template.
pub fn generate_knowledge<L: LanguageModel + ?Sized>(
    context: &str,
    pair: &TemplatePair,
    focus: &FocusCandidate,
    backend: &L,
    cfg: &SamplingConfig,
) -> Result<Vec<KnowledgeCandidate>, PromptError> {
    cfg.validate()?;
    let prompt = build_knowledge_prompt(context, pair, focus)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for completion in backend.generate(&prompt, cfg)? {
        let Some(text) = clean_completion(&completion.text) else {
            continue;
        };
        if seen.insert(text.clone()) {
            out.push(KnowledgeCandidate {
                text,
                pair_index: focus.pair_index,
                focus: focus.clone(),
                log_prob: completion.log_prob,
            });
        }
    }
    if out.is_empty() {
        return Err(PromptError::EmptyResult { skill: pair.skill() });
    }
    Ok(out)
}

fn chain_order(a: &KnowledgeCandidate, b: &KnowledgeCandidate) -> Ordering {
    let score = |k: &KnowledgeCandidate| k.focus.score() + k.log_prob;
    score(b)
        .total_cmp(&score(a))
        .then(a.pair_index.cmp(&b.pair_index))
        .then_with(|| a.focus.text.cmp(&b.focus.text))
        .then_with(|| a.text.cmp(&b.text))
}

/// All chains sorted best first: highest `focus.log_prob + knowledge.log_prob`,
/// then lowest pair index, then focus text, then knowledge text.
pub fn rank_chains(
    context: &str,
    skill: Skill,
    registry: &TemplateRegistry,
    knowledge: &[KnowledgeCandidate],
) -> Result<Vec<ThoughtChain>, PromptError> {
    let mut sorted: Vec<&KnowledgeCandidate> = knowledge.iter().collect();
    sorted.sort_by(|a, b| chain_order(a, b));
    sorted
        .into_iter()
        .map(|k| {
            let pair = registry.get(k.pair_index)?.clone();
            Ok(ThoughtChain {
                context: context.to_string(),
                skill,
                pair_index: k.pair_index,
                pair,
                focus: k.focus.clone(),
                knowledge: k.clone(),
                chain_score: k.focus.score() + k.log_prob,
            })
        })
        .collect()
}

pub fn select_chain(
    context: &str,
    skill: Skill,
    registry: &TemplateRegistry,
    knowledge: &[KnowledgeCandidate],
) -> Result<ThoughtChain, PromptError> {
    rank_chains(context, skill, registry, knowledge)?
        .into_iter()
        .next()
        .ok_or(PromptError::EmptyResult { skill })
}

/// Runs focus then knowledge elicitation for one (context, skill).
pub struct Elicitor<'a, L: ?Sized, N: ?Sized> {
    pub registry: &'a TemplateRegistry,
    pub lm: &'a L,
    pub ner: &'a N,
    pub focus_cfg: SamplingConfig,
    pub knowledge_cfg: SamplingConfig,
}

impl<'a, L, N> Elicitor<'a, L, N>
where
    L: LanguageModel + ?Sized,
    N: EntityRecognizer + ?Sized,
{
    pub fn new(registry: &'a TemplateRegistry, lm: &'a L, ner: &'a N, seed: u64) -> Self {
        Elicitor {
            registry,
            lm,
            ner,
            focus_cfg: SamplingConfig::focus_default().with_seed(seed),
            knowledge_cfg: SamplingConfig::knowledge_default().with_seed(seed),
        }
    }

    /// Every candidate chain, best first. Focuses whose knowledge sampling
    /// yields nothing usable are skipped.
    pub fn chains(&self, context: &str, skill: Skill) -> Result<Vec<ThoughtChain>, PromptError> {
        let focuses =
            generate_focuses(context, skill, self.registry, self.lm, self.ner, &self.focus_cfg)?;
        let mut knowledge = Vec::new();
        for focus in &focuses {
            let pair = self.registry.get(focus.pair_index)?;
            match generate_knowledge(context, pair, focus, self.lm, &self.knowledge_cfg) {
                Ok(k) => knowledge.extend(k),
                Err(PromptError::EmptyResult { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        if knowledge.is_empty() {
            return Err(PromptError::EmptyResult { skill });
        }
        rank_chains(context, skill, self.registry, &knowledge)
    }

    pub fn elicit(&self, context: &str, skill: Skill) -> Result<ThoughtChain, PromptError> {
        self.chains(context, skill)?
            .into_iter()
            .next()
            .ok_or(PromptError::EmptyResult { skill })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::{CapitalizedEntityRecognizer, Entity};

    fn registry() -> TemplateRegistry {
        TemplateRegistry::bundled()
    }

    fn pair(f: &str) -> TemplatePair {
        registry()
            .pairs()
            .iter()
            .find(|p| p.f_text() == f)
            .cloned()
            .unwrap()
    }

    fn lm_focus(text: &str, pair_index: usize, lp: f64) -> FocusCandidate {
        FocusCandidate {
            text: text.into(),
            source: FocusSource::Lm,
            pair_index,
            log_prob: Some(lp),
        }
    }

    #[test]
    fn focus_prompt_golden() {
        let p = pair("What is the definition of <blank>");
        assert_eq!(
            build_focus_prompt("The princess climbed out the window.", &p).unwrap(),
            "The princess climbed out the window. From the context: What is the definition of"
        );
        assert!(matches!(build_focus_prompt("", &p), Err(PromptError::EmptyContext)));
        let cloze = pair("How would <blank> feel afterwards?");
        assert!(matches!(
            build_focus_prompt("ctx", &cloze),
            Err(PromptError::ClozeTemplate(_))
        ));
    }

    #[test]
    fn knowledge_prompt_golden() {
        let p = pair("What is the definition of <blank>");
        let f = lm_focus("the troll", 0, -1.0);
        assert_eq!(
            build_knowledge_prompt("The troll lived under the bridge.", &p, &f).unwrap(),
            "The troll lived under the bridge. From the context: What is the definition of the troll The definition of the troll is"
        );
        let cloze = pair("How would <blank> feel afterwards?");
        let f = lm_focus("the princess", 9, -1.0);
        assert_eq!(
            build_knowledge_prompt("C.", &cloze, &f).unwrap(),
            "C. From the context: How would the princess feel afterwards? the princess felt"
        );
        let bad = lm_focus("x <blank>", 0, 0.0);
        assert!(matches!(
            build_knowledge_prompt("C.", &p, &bad),
            Err(PromptError::Template(_))
        ));
    }

    #[test]
    fn cleaning_truncates_at_sentence_end() {
        assert_eq!(clean_completion("  the old troll. He was"), Some("the old troll".into()));
        assert_eq!(clean_completion("a\nb"), Some("a".into()));
        assert_eq!(clean_completion(" ? "), None);
        assert_eq!(clean_completion("the <blank>"), None);
    }

    #[test]
    fn entity_focuses_dedup_in_order() {
        let f = entity_focuses("Timmy met Anna in Warsaw.", &CapitalizedEntityRecognizer, 3).unwrap();
        let names: Vec<&str> = f.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(names, vec!["Timmy", "Anna", "Warsaw"]);
        assert!(f.iter().all(|c| c.source == FocusSource::Ner && c.log_prob.is_none()));
        let f = entity_focuses("Anna saw Anna.", &CapitalizedEntityRecognizer, 0).unwrap();
        assert_eq!(f.len(), 1);
        assert!(entity_focuses("no names here.", &CapitalizedEntityRecognizer, 0)
            .unwrap()
            .is_empty());
    }

    struct FailingNer;
    impl EntityRecognizer for FailingNer {
        fn entities(&self, _: &str) -> Result<Vec<Entity>, BackendError> {
            Err(BackendError::new("ner", "offline"))
        }
    }

    #[test]
    fn recognizer_failure_propagates() {
        assert!(matches!(
            entity_focuses("x", &FailingNer, 0),
            Err(PromptError::Backend(_))
        ));
    }

    #[test]
    fn focuses_from_scripted_backend() {
        let lm = ScriptedLanguageModel::new(["the troll", "the bridge. extra", " ", "the troll"]);
        let reg = registry();
        let cfg = SamplingConfig::focus_default();
        let out = generate_focuses(
            "The troll lived under the bridge.",
            Skill::Remember,
            &reg,
            &lm,
            &CapitalizedEntityRecognizer,
            &cfg,
        )
        .unwrap();
        assert!(out.len() <= 15);
        assert!(!out.is_empty());
        for c in &out {
            assert!(!c.text.is_empty() && !c.text.contains('<'));
            assert_eq!(c.source, FocusSource::Lm);
        }
        let again = generate_focuses(
            "The troll lived under the bridge.",
            Skill::Remember,
            &reg,
            &lm,
            &CapitalizedEntityRecognizer,
            &cfg,
        )
        .unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn cloze_only_registry_uses_entities() {
        let reg = TemplateRegistry::from_pairs(vec![
            pair("How would <blank> feel afterwards?"),
            pair("Why did <blank> do this?"),
        ]);
        let lm = ScriptedLanguageModel::new(["should not be used"]);
        let out = generate_focuses(
            "Timmy met Anna in Warsaw.",
            Skill::Analyze,
            &reg,
            &lm,
            &CapitalizedEntityRecognizer,
            &SamplingConfig::focus_default(),
        )
        .unwrap();
        assert_eq!(out.len(), 6);
        assert!(out.iter().all(|c| c.source == FocusSource::Ner));
        assert_eq!(lm.calls(), 0);
    }

    #[test]
    fn all_degenerate_candidates_is_an_error() {
        let lm = ScriptedLanguageModel::new(["", ". ", "\n"]);
        let err = generate_focuses(
            "lowercase only.",
            Skill::Remember,
            &registry(),
            &lm,
            &CapitalizedEntityRecognizer,
            &SamplingConfig::focus_default(),
        )
        .unwrap_err();
        assert!(matches!(err, PromptError::EmptyResult { skill: Skill::Remember }));
    }

    #[test]
    fn knowledge_is_deduplicated_and_bounded() {
        let lm = ScriptedLanguageModel::new(["a giant creature", "a giant creature. yes", "big"]);
        let p = pair("What is the definition of <blank>");
        let f = lm_focus("the troll", 0, -1.0);
        let cfg = SamplingConfig::knowledge_default();
        let out = generate_knowledge("C.", &p, &f, &lm, &cfg).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.len() <= cfg.num_samples);
        assert_eq!(out, generate_knowledge("C.", &p, &f, &lm, &cfg).unwrap());
        let empty = ScriptedLanguageModel::new([" "]);
        assert!(generate_knowledge("C.", &p, &f, &empty, &cfg).is_err());
    }

    fn knowledge(text: &str, focus: FocusCandidate, lp: f64) -> KnowledgeCandidate {
        KnowledgeCandidate {
            text: text.into(),
            pair_index: focus.pair_index,
            focus,
            log_prob: lp,
        }
    }

    #[test]
    fn select_chain_argmax_and_ties() {
        let reg = registry();
        let a = knowledge("x", lm_focus("f1", 0, -1.0), -2.0);
        let b = knowledge("y", lm_focus("f2", 1, -0.5), -0.5);
        let chain = select_chain("C", Skill::Remember, &reg, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(chain.knowledge.text, "y");
        assert_eq!(chain.chain_score, -1.0);

        let c = knowledge("z", lm_focus("f3", 2, -1.0), -2.0);
        let chain = select_chain("C", Skill::Remember, &reg, &[c, a.clone()]).unwrap();
        assert_eq!(chain.pair_index, 0);

        let single = select_chain("C", Skill::Remember, &reg, std::slice::from_ref(&a)).unwrap();
        assert_eq!(single.knowledge, a);
        assert!(select_chain("C", Skill::Remember, &reg, &[]).is_err());
    }

    #[test]
    fn entity_focus_scores_zero() {
        let ner = FocusCandidate {
            text: "Anna".into(),
            source: FocusSource::Ner,
            pair_index: 9,
            log_prob: None,
        };
        let k = knowledge("afraid", ner, -3.0);
        let chain = select_chain("C", Skill::Analyze, &registry(), &[k]).unwrap();
        assert_eq!(chain.chain_score, -3.0);
    }

    #[test]
    fn elicitor_builds_a_consistent_chain() {
        let lm = ScriptedLanguageModel::new(["the troll", "a giant creature"]);
        let reg = registry();
        let e = Elicitor::new(&reg, &lm, &CapitalizedEntityRecognizer, 7);
        let chain = e.elicit("The troll lived under the bridge.", Skill::Remember).unwrap();
        assert_eq!(chain.knowledge.focus, chain.focus);
        assert_eq!(chain.pair.skill(), Skill::Remember);
        assert_eq!(chain.context, "The troll lived under the bridge.");
    }

    #[test]
    fn sampling_config_validation() {
        let mut cfg = SamplingConfig::focus_default();
        cfg.top_p = 0.0;
        assert!(cfg.validate().is_err());
        cfg.top_p = 1.0;
        assert!(cfg.validate().is_ok());
        cfg.num_samples = 0;
        assert!(cfg.validate().is_err());
    }
}
