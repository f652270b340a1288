//! Shared by the integration tests here and by the acceptance suite.
#![allow(dead_code)]

use serde::Deserialize;
use taxoq_core::generator::{augment_context, format_input, SerializationMode};
use taxoq_core::prompting::{
    build_focus_prompt, build_knowledge_prompt, FocusCandidate, FocusSource, KnowledgeCandidate,
    PromptError, ThoughtChain,
};
use taxoq_core::templates::{TemplateRegistry, TemplateStyle};

pub const PROMPTS_GOLDEN: &str = include_str!("../golden/prompts.golden");

pub const CONTEXT: &str = "The troll lived under the bridge.";
pub const FOCUS: &str = "the troll";
pub const KNOWLEDGE: &str = "a giant creature";
pub const ANSWER: &str = "the princess";

pub fn render(registry: &TemplateRegistry) -> String {
    let mut out = String::new();
    for (i, pair) in registry.pairs().iter().enumerate() {
        let style = match pair.style() {
            TemplateStyle::Cloze => "cloze",
            TemplateStyle::Prefix => "prefix",
        };
        out += &format!("### pair {i:02} {} {style}\n", pair.skill().as_str());
        let focus_prompt = match build_focus_prompt(CONTEXT, pair) {
            Ok(p) => p,
            Err(PromptError::ClozeTemplate(_)) => "<cloze: focus comes from entities>".to_string(),
            Err(e) => panic!("pair {i}: {e}"),
        };
        out += &format!("focus_prompt: {focus_prompt}\n");
        let focus = FocusCandidate {
            text: FOCUS.into(),
            source: FocusSource::Lm,
            pair_index: i,
            log_prob: Some(-1.0),
        };
        out += &format!(
            "knowledge_prompt: {}\n",
            build_knowledge_prompt(CONTEXT, pair, &focus).unwrap()
        );
        let chain = ThoughtChain {
            context: CONTEXT.into(),
            skill: pair.skill(),
            pair_index: i,
            pair: pair.clone(),
            focus: focus.clone(),
            knowledge: KnowledgeCandidate {
                text: KNOWLEDGE.into(),
                pair_index: i,
                focus,
                log_prob: -2.0,
            },
            chain_score: -3.0,
        };
        let aug = augment_context(CONTEXT, Some(&chain)).unwrap();
        out += &format!("augmented: {aug}\n");
        for mode in [
            SerializationMode::Full,
            SerializationMode::Symbol,
            SerializationMode::Prompt,
            SerializationMode::Concat,
        ] {
            out += &format!(
                "{}: {}\n",
                mode.as_str().to_uppercase(),
                format_input(&aug, ANSWER, pair.skill(), mode).unwrap()
            );
        }
    }
    out
}

#[derive(Deserialize)]
pub struct OracleRow {
    pub candidate: String,
    pub references: Vec<String>,
    pub bleu4: f64,
    pub q_bleu4: f64,
}

pub fn oracle_rows() -> Vec<OracleRow> {
    serde_json::from_str(include_str!("../oracles/ngram_oracle.json")).unwrap()
}

/// Alpha from explicit value pairs: observed disagreement over within-item
/// pairs weighted by 1/(m-1), expected disagreement over all pairs of the
/// pooled pairable values.
pub fn brute_force_alpha(items: &[Vec<Option<String>>]) -> Option<f64> {
    let units: Vec<Vec<&str>> = items
        .iter()
        .map(|row| row.iter().flatten().map(String::as_str).collect::<Vec<_>>())
        .filter(|v| v.len() >= 2)
        .collect();
    let pooled: Vec<&str> = units.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    if pooled.len() < 2 {
        return None;
    }
    let mut observed = 0.0;
    for u in &units {
        let m = u.len() as f64;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j && u[i] != u[j] {
                    observed += 1.0 / (m - 1.0);
                }
            }
        }
    }
    let mut expected = 0.0;
    for p in 0..pooled.len() {
        for q in 0..pooled.len() {
            if p != q && pooled[p] != pooled[q] {
                expected += 1.0;
            }
        }
    }
    let d_o = observed / n;
    let d_e = expected / (n * (n - 1.0));
    Some(if d_e == 0.0 { 1.0 } else { 1.0 - d_o / d_e })
}

