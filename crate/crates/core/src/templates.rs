//! Focus/knowledge template pairs and placeholder substitution.
//!
//! An F-template carries one `<blank>` slot for the question focus. Its
//! paired K-template carries one `<focus>` slot and one `<blank>` slot for the
//! knowledge text. Substitution is a single left-to-right pass, so placeholder
//! tokens inside substituted values are never expanded.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Skill;

pub const BLANK: &str = "<blank>";
pub const FOCUS: &str = "<focus>";

const BUNDLED_TEMPLATES: &str = include_str!("../data/templates.toml");
const MIN_PAIRS_PER_SKILL: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("{template:?}: expected exactly {expected} {token}, found {found}")]
    PlaceholderCount {
        template: String,
        token: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{0} must not be empty")]
    EmptyValue(&'static str),
    #[error("{0} must not contain placeholder tokens")]
    PlaceholderInValue(&'static str),
    #[error("placeholder {0} is not bound")]
    Unbound(&'static str),
    #[error("skill {skill} has {found} template pairs, at least {MIN_PAIRS_PER_SKILL} required")]
    Coverage { skill: Skill, found: usize },
    #[error("template file: {0}")]
    Parse(String),
    #[error("template pair index {0} out of range")]
    UnknownIndex(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TemplateStyle {
    /// `<blank>` closes the template; a causal LM can complete it.
    Prefix,
    /// `<blank>` sits mid-sentence; focuses come from entity recognition.
    Cloze,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPair", into = "RawPair")]
pub struct TemplatePair {
    skill: Skill,
    f_text: String,
    k_text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawPair {
    skill: Skill,
    f_text: String,
    k_text: String,
}

impl TryFrom<RawPair> for TemplatePair {
    type Error = TemplateError;

    fn try_from(raw: RawPair) -> Result<Self, Self::Error> {
        TemplatePair::new(raw.skill, raw.f_text, raw.k_text)
    }
}

impl From<TemplatePair> for RawPair {
    fn from(p: TemplatePair) -> Self {
        RawPair {
            skill: p.skill,
            f_text: p.f_text,
            k_text: p.k_text,
        }
    }
}

fn check_count(template: &str, token: &'static str, expected: usize) -> Result<(), TemplateError> {
    let found = template.matches(token).count();
    if found == expected {
        Ok(())
    } else {
        Err(TemplateError::PlaceholderCount {
            template: template.to_string(),
            token,
            expected,
            found,
        })
    }
}

impl TemplatePair {
    pub fn new(
        skill: Skill,
        f_text: impl Into<String>,
        k_text: impl Into<String>,
    ) -> Result<Self, TemplateError> {
        let f_text = f_text.into();
        let k_text = k_text.into();
        check_count(&f_text, BLANK, 1)?;
        check_count(&f_text, FOCUS, 0)?;
        check_count(&k_text, BLANK, 1)?;
        check_count(&k_text, FOCUS, 1)?;
        Ok(TemplatePair {
            skill,
            f_text,
            k_text,
        })
    }

    pub fn skill(&self) -> Skill {
        self.skill
    }

    pub fn f_text(&self) -> &str {
        &self.f_text
    }

    pub fn k_text(&self) -> &str {
        &self.k_text
    }

    pub fn style(&self) -> TemplateStyle {
        let after = self.f_text.split(BLANK).nth(1).unwrap_or_default();
        let rest = after.trim_matches(|c: char| c.is_whitespace() || c == '?' || c == '.');
        if rest.is_empty() {
            TemplateStyle::Prefix
        } else {
            TemplateStyle::Cloze
        }
    }
}

/// Values bound to placeholders. `<blank>` may be left unbound for
/// [`completion_stub`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Bindings<'a> {
    pub focus: Option<&'a str>,
    pub blank: Option<&'a str>,
}

impl<'a> Bindings<'a> {
    pub fn focus(mut self, value: &'a str) -> Self {
        self.focus = Some(value);
        self
    }

    pub fn blank(mut self, value: &'a str) -> Self {
        self.blank = Some(value);
        self
    }
}

fn check_value(value: &str, name: &'static str) -> Result<(), TemplateError> {
    if value.trim().is_empty() {
        return Err(TemplateError::EmptyValue(name));
    }
    if value.contains(BLANK) || value.contains(FOCUS) {
        return Err(TemplateError::PlaceholderInValue(name));
    }
    Ok(())
}

/// Single-pass substitution. With `stop_at_blank`, output ends right before
/// the first `<blank>`.
fn substitute(
    template: &str,
    bindings: &Bindings<'_>,
    stop_at_blank: bool,
) -> Result<String, TemplateError> {
    if let Some(v) = bindings.focus {
        check_value(v, "focus")?;
    }
    if let Some(v) = bindings.blank {
        check_value(v, "blank")?;
    }
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    loop {
        let next_blank = rest.find(BLANK);
        let next_focus = rest.find(FOCUS);
        let (pos, token) = match (next_blank, next_focus) {
            (None, None) => {
                out.push_str(rest);
                break;
            }
            (Some(b), Some(f)) if f < b => (f, FOCUS),
            (Some(b), _) => (b, BLANK),
            (None, Some(f)) => (f, FOCUS),
        };
        out.push_str(&rest[..pos]);
        if token == BLANK {
            if stop_at_blank {
                return Ok(out.trim_end().to_string());
            }
            out.push_str(bindings.blank.ok_or(TemplateError::Unbound(BLANK))?);
        } else {
            out.push_str(bindings.focus.ok_or(TemplateError::Unbound(FOCUS))?);
        }
        rest = &rest[pos + token.len()..];
    }
    if stop_at_blank {
        Ok(out.trim_end().to_string())
    } else {
        Ok(out)
    }
}

/// Replaces every placeholder; all placeholders present must be bound.
pub fn fill(template: &str, bindings: &Bindings<'_>) -> Result<String, TemplateError> {
    substitute(template, bindings, false)
}

/// Substitutes bound placeholders and cuts the text at `<blank>`, yielding a
/// prefix for a causal LM to continue.
pub fn completion_stub(template: &str, bindings: &Bindings<'_>) -> Result<String, TemplateError> {
    substitute(template, bindings, true)
}

/// `T_F(f)`: the F-template with its blank filled by the focus.
pub fn fill_focus_template(pair: &TemplatePair, focus: &str) -> Result<String, TemplateError> {
    check_value(focus, "focus")?;
    fill(pair.f_text(), &Bindings::default().blank(focus))
}

/// `T_K(k)`: the K-template with focus and knowledge substituted.
pub fn fill_knowledge_template(
    pair: &TemplatePair,
    focus: &str,
    knowledge: &str,
) -> Result<String, TemplateError> {
    check_value(focus, "focus")?;
    check_value(knowledge, "knowledge")?;
    fill(
        pair.k_text(),
        &Bindings::default().focus(focus).blank(knowledge),
    )
}

#[derive(Debug, Deserialize, Serialize)]
struct RegistryFile {
    pair: Vec<TemplatePair>,
}

/// Ordered, immutable list of template pairs. Indices are stable and are
/// recorded on every elicited candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateRegistry {
    pairs: Vec<TemplatePair>,
}

impl TemplateRegistry {
    /// Registry without the per-skill coverage check.
    pub fn from_pairs(pairs: Vec<TemplatePair>) -> Self {
        TemplateRegistry { pairs }
    }

    /// Parses a registry file and enforces at least two pairs per skill.
    pub fn from_toml_str(text: &str) -> Result<Self, TemplateError> {
        let file: RegistryFile =
            toml::from_str(text).map_err(|e| TemplateError::Parse(e.to_string()))?;
        let registry = TemplateRegistry { pairs: file.pair };
        registry.check_coverage()?;
        Ok(registry)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| TemplateError::Parse(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    /// The default registry shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED_TEMPLATES).expect("bundled template registry is valid")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&RegistryFile {
            pair: self.pairs.clone(),
        })
        .expect("template pairs serialize")
    }

    pub fn check_coverage(&self) -> Result<(), TemplateError> {
        let counts = self.counts();
        for skill in Skill::ALL {
            let found = counts[&skill];
            if found < MIN_PAIRS_PER_SKILL {
                return Err(TemplateError::Coverage { skill, found });
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> BTreeMap<Skill, usize> {
        let mut counts: BTreeMap<Skill, usize> = Skill::ALL.iter().map(|s| (*s, 0)).collect();
        for p in &self.pairs {
            *counts.entry(p.skill).or_default() += 1;
        }
        counts
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[TemplatePair] {
        &self.pairs
    }

    pub fn get(&self, index: usize) -> Result<&TemplatePair, TemplateError> {
        self.pairs.get(index).ok_or(TemplateError::UnknownIndex(index))
    }

    /// `(registry index, pair)` for every pair of `skill`, in registry order.
    pub fn pairs_for(&self, skill: Skill) -> Vec<(usize, &TemplatePair)> {
        self.pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.skill == skill)
            .collect()
    }
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self::bundled()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn remember_first() -> TemplatePair {
        TemplateRegistry::bundled().pairs_for(Skill::Remember)[0].1.clone()
    }

    fn feel_afterwards() -> TemplatePair {
        TemplatePair::new(Skill::Analyze, "How would <blank> feel afterwards?", "<focus> felt <blank>")
            .unwrap()
    }

    #[test]
    fn registry_cardinalities() {
        let reg = TemplateRegistry::bundled();
        assert_eq!(reg.len(), 19);
        let counts: Vec<usize> = Skill::ALL.iter().map(|s| reg.pairs_for(*s).len()).collect();
        assert_eq!(counts, vec![3, 6, 4, 4, 2]);
        assert_eq!(
            reg.pairs_for(Skill::Remember)[0].1.f_text(),
            "What is the definition of <blank>"
        );
    }

    #[test]
    fn empty_registry_has_no_pairs_for_a_skill() {
        let reg = TemplateRegistry::from_pairs(vec![]);
        assert!(reg.pairs_for(Skill::Create).is_empty());
        assert!(matches!(reg.check_coverage(), Err(TemplateError::Coverage { .. })));
    }

    #[test]
    fn style_classification() {
        let reg = TemplateRegistry::bundled();
        let cloze: Vec<&str> = reg
            .pairs()
            .iter()
            .filter(|p| p.style() == TemplateStyle::Cloze)
            .map(|p| p.f_text())
            .collect();
        assert_eq!(
            cloze,
            vec![
                "How would <blank> feel afterwards?",
                "Why did <blank> do this?",
                "What will <blank> want to do next?",
                "What will happen to <blank> next?",
            ]
        );
        assert_eq!(remember_first().style(), TemplateStyle::Prefix);
    }

    #[test]
    fn rejects_bad_placeholder_counts() {
        assert!(TemplatePair::new(Skill::Create, "What <blank> <blank>", "<focus> <blank>").is_err());
        assert!(TemplatePair::new(Skill::Create, "What <blank>", "<blank>").is_err());
        assert!(TemplatePair::new(Skill::Create, "What <focus> <blank>", "<focus> <blank>").is_err());
    }

    #[test]
    fn focus_filling() {
        assert_eq!(
            fill_focus_template(&remember_first(), "the troll").unwrap(),
            "What is the definition of the troll"
        );
        assert_eq!(
            fill_focus_template(&feel_afterwards(), "the princess").unwrap(),
            "How would the princess feel afterwards?"
        );
        assert_eq!(
            fill_focus_template(&remember_first(), ""),
            Err(TemplateError::EmptyValue("focus"))
        );
        assert_eq!(
            fill_focus_template(&remember_first(), "a <focus> b"),
            Err(TemplateError::PlaceholderInValue("focus"))
        );
    }

    #[test]
    fn knowledge_filling() {
        assert_eq!(
            fill_knowledge_template(&remember_first(), "the troll", "a giant creature").unwrap(),
            "The definition of the troll is a giant creature"
        );
        assert_eq!(
            fill_knowledge_template(&feel_afterwards(), "the princess", "afraid").unwrap(),
            "the princess felt afraid"
        );
        assert_eq!(
            fill_knowledge_template(&remember_first(), "the troll", " "),
            Err(TemplateError::EmptyValue("knowledge"))
        );
    }

    #[test]
    fn completion_stubs() {
        assert_eq!(
            completion_stub(
                "The definition of <focus> is <blank>",
                &Bindings::default().focus("the troll")
            )
            .unwrap(),
            "The definition of the troll is"
        );
        assert_eq!(
            completion_stub("What is the definition of <blank>", &Bindings::default()).unwrap(),
            "What is the definition of"
        );
        assert_eq!(
            completion_stub("How would <blank> feel afterwards?", &Bindings::default()).unwrap(),
            "How would"
        );
        assert_eq!(
            completion_stub("The cause of <focus> was <blank>", &Bindings::default()),
            Err(TemplateError::Unbound(FOCUS))
        );
    }

    #[test]
    fn substitution_is_single_pass() {
        // A focus value that looks like a placeholder is refused outright,
        // and literal angle brackets in values are copied verbatim.
        let pair = remember_first();
        assert_eq!(
            fill_focus_template(&pair, "<b>").unwrap(),
            "What is the definition of <b>"
        );
    }

    #[test]
    fn registry_round_trips_through_toml() {
        let reg = TemplateRegistry::bundled();
        let again = TemplateRegistry::from_toml_str(&reg.to_toml_string()).unwrap();
        assert_eq!(reg, again);
    }

    proptest! {
        #[test]
        fn filled_focus_contains_value_and_no_placeholder(
            idx in 0usize..19,
            focus in "[A-Za-z][A-Za-z ,']{0,20}",
        ) {
            let reg = TemplateRegistry::bundled();
            let pair = reg.get(idx).unwrap();
            let out = fill_focus_template(pair, &focus).unwrap();
            prop_assert!(out.contains(&focus));
            prop_assert!(!out.contains('<'));
        }

        #[test]
        fn stub_is_prefix_of_any_fill(
            idx in 0usize..19,
            focus in "[a-z][a-z ]{0,12}",
            value in "[a-z][a-z ]{0,12}",
        ) {
            let reg = TemplateRegistry::bundled();
            let pair = reg.get(idx).unwrap();
            let b = Bindings::default().focus(&focus);
            let stub = completion_stub(pair.k_text(), &b).unwrap();
            let full = fill(pair.k_text(), &b.blank(&value)).unwrap();
            prop_assert!(full.starts_with(&stub));
            let fstub = completion_stub(pair.f_text(), &Bindings::default()).unwrap();
            let ffull = fill(pair.f_text(), &Bindings::default().blank(&value)).unwrap();
            prop_assert!(ffull.starts_with(&fstub));
        }
    }
}
