//! wasm-bindgen entry points for `www/index.html`. Each export takes and
//! returns plain strings so the page needs no generated TS types.

use serde_json::{json, Value};
use taxoq_core::metrics::{bleu4, krippendorff_alpha, q_bleu4, rouge_l, RatingMatrix};
use taxoq_core::prompting::build_focus_prompt;
use taxoq_core::templates::{fill_focus_template, TemplateRegistry};
use taxoq_core::Skill;
use wasm_bindgen::prelude::*;

pub fn focus_prompts_json(context: &str, skill: &str) -> Result<String, String> {
    let skill: Skill = skill.parse().map_err(|e| format!("{e}"))?;
    let registry = TemplateRegistry::bundled();
    let mut out = Vec::new();
    for (index, pair) in registry.pairs_for(skill) {
        // cloze pairs have no focus prompt, only a filled question
        let prompt = build_focus_prompt(context, pair).ok();
        let example = fill_focus_template(pair, "the wolf").map_err(|e| e.to_string())?;
        out.push(json!({ "index": index, "prompt": prompt, "example": example }));
    }
    Ok(Value::Array(out).to_string())
}

pub fn question_scores_json(candidate: &str, reference: &str) -> String {
    json!({
        "bleu4": bleu4(candidate, &[reference]),
        "rouge_l": rouge_l(candidate, reference).f1,
        "q_bleu4": q_bleu4(candidate, reference),
    })
    .to_string()
}

/// `rows` is a JSON array of items, each an array of labels or nulls.
pub fn alpha_from_json(rows: &str) -> Result<f64, String> {
    let items: Vec<Vec<Option<String>>> = serde_json::from_str(rows).map_err(|e| e.to_string())?;
    krippendorff_alpha(&RatingMatrix::new(items)).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn focus_prompts(context: &str, skill: &str) -> Result<String, JsValue> {
    focus_prompts_json(context, skill).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn question_scores(candidate: &str, reference: &str) -> String {
    question_scores_json(candidate, reference)
}

#[wasm_bindgen]
pub fn agreement_alpha(rows: &str) -> Result<f64, JsValue> {
    alpha_from_json(rows).map_err(|e| JsValue::from_str(&e))
}
