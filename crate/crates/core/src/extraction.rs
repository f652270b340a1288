//! Two-stage extraction of (context, skill, answer) triples for unlabeled
//! passages: a multi-label skill classifier proposes skills, then each skill's
//! rule decides where answers come from (entities for REMEMBER/EVALUATE,
//! predicate-argument events for the rest).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{QASample, Split};
use crate::generator::{GeneratorError, QuestionCandidate};
use crate::nlp::{BackendError, EntityRecognizer, SemanticRoleLabeler};
use crate::prompting::backends::stable_hash;
use crate::text;
use crate::Skill;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
}

/// p(s | c): a score in [0, 1] for each of the five skills.
pub trait SkillClassifier {
    fn predict_scores(&self, context: &str) -> BTreeMap<Skill, f64>;
}

impl<T: SkillClassifier + ?Sized> SkillClassifier for &T {
    fn predict_scores(&self, context: &str) -> BTreeMap<Skill, f64> {
        (**self).predict_scores(context)
    }
}

/// Fixed scores regardless of input.
#[derive(Debug, Clone)]
pub struct FixedSkillScores(pub BTreeMap<Skill, f64>);

impl SkillClassifier for FixedSkillScores {
    fn predict_scores(&self, _: &str) -> BTreeMap<Skill, f64> {
        Skill::ALL
            .iter()
            .map(|s| (*s, self.0.get(s).copied().unwrap_or(0.0)))
            .collect()
    }
}

/// L2-normalized hashed unigram and bigram indicators, lowercase, without
/// punctuation.
pub(crate) fn hashed_features(text: &str, dim: usize) -> Vec<(usize, f64)> {
    let words: Vec<String> = text::tokens(text)
        .iter()
        .filter(|t| !t.is_punct())
        .map(|t| t.text.to_lowercase())
        .collect();
    let mut set = BTreeSet::new();
    for w in &words {
        set.insert(stable_hash(w) as usize % dim);
    }
    for pair in words.windows(2) {
        set.insert(stable_hash(&format!("{} {}", pair[0], pair[1])) as usize % dim);
    }
    let norm = (set.len() as f64).sqrt().max(1.0);
    set.into_iter().map(|i| (i, 1.0 / norm)).collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub feature_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            feature_dim: 1 << 14,
            epochs: 30,
            learning_rate: 0.5,
            l2: 1e-5,
            seed: 13,
        }
    }
}

/// One-vs-rest logistic regression over hashed bag-of-words features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticSkillClassifier {
    feature_dim: usize,
    /// Indexed by `Skill::index()`.
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl SkillClassifier for LogisticSkillClassifier {
    fn predict_scores(&self, context: &str) -> BTreeMap<Skill, f64> {
        let x = hashed_features(context, self.feature_dim);
        Skill::ALL
            .iter()
            .map(|s| {
                let w = &self.weights[s.index()];
                let z = self.bias[s.index()] + x.iter().map(|(i, v)| w[*i] * v).sum::<f64>();
                (*s, sigmoid(z))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub train_contexts: usize,
    pub dev_contexts: usize,
    /// Per-skill F1 on dev; empty when no dev data was given.
    pub dev_f1: BTreeMap<Skill, f64>,
    pub absent_skills: Vec<Skill>,
}

/// One row per distinct context; its target is the union of the skills of
/// all questions asked about it.
pub fn multi_label_targets(samples: &[QASample]) -> Vec<(String, BTreeSet<Skill>)> {
    let mut by_context: BTreeMap<&str, BTreeSet<Skill>> = BTreeMap::new();
    for s in samples {
        by_context.entry(&s.context).or_default().insert(s.skill);
    }
    by_context.into_iter().map(|(c, s)| (c.to_string(), s)).collect()
}

pub fn train_skill_classifier(
    train: &[QASample],
    dev: &[QASample],
    cfg: &ClassifierConfig,
) -> Result<(LogisticSkillClassifier, ClassifierReport), ExtractionError> {
    if train.is_empty() {
        return Err(ExtractionError::InvalidArgument("no training samples".into()));
    }
    if cfg.feature_dim == 0 || cfg.epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(ExtractionError::InvalidArgument(
            "feature_dim, epochs and learning_rate must be positive".into(),
        ));
    }
    let rows = multi_label_targets(train);
    let present: BTreeSet<Skill> = rows.iter().flat_map(|(_, s)| s.iter().copied()).collect();
    let absent: Vec<Skill> = Skill::ALL.iter().copied().filter(|s| !present.contains(s)).collect();
    for s in &absent {
        log::warn!("skill {s} has no training examples; its scores will stay low");
    }

    let features: Vec<Vec<(usize, f64)>> =
        rows.iter().map(|(c, _)| hashed_features(c, cfg.feature_dim)).collect();
    let mut clf = LogisticSkillClassifier {
        feature_dim: cfg.feature_dim,
        weights: vec![vec![0.0; cfg.feature_dim]; Skill::ALL.len()],
        bias: vec![0.0; Skill::ALL.len()],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let decay = 1.0 - cfg.learning_rate * cfg.l2;
    for _ in 0..cfg.epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for &r in &order {
            let x = &features[r];
            for skill in Skill::ALL {
                let k = skill.index();
                let w = &mut clf.weights[k];
                let z = clf.bias[k] + x.iter().map(|(i, v)| w[*i] * v).sum::<f64>();
                let y = if rows[r].1.contains(&skill) { 1.0 } else { 0.0 };
                let g = sigmoid(z) - y;
                for (i, v) in x {
                    w[*i] = w[*i] * decay - cfg.learning_rate * g * v;
                }
                clf.bias[k] -= cfg.learning_rate * g;
            }
        }
    }

    let dev_rows = multi_label_targets(dev);
    let mut dev_f1 = BTreeMap::new();
    if !dev_rows.is_empty() {
        let predicted: Vec<Vec<Skill>> = dev_rows
            .iter()
            .map(|(c, _)| predict_skills(c, &clf, DEFAULT_THRESHOLD))
            .collect::<Result<_, _>>()?;
        for skill in Skill::ALL {
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            for ((_, gold), pred) in dev_rows.iter().zip(&predicted) {
                match (gold.contains(&skill), pred.contains(&skill)) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
            dev_f1.insert(skill, f1);
        }
    }
    let report = ClassifierReport {
        train_contexts: rows.len(),
        dev_contexts: dev_rows.len(),
        dev_f1,
        absent_skills: absent,
    };
    Ok((clf, report))
}

/// Skills scoring at least `threshold`, in rank order; the single best skill
/// when none does.
pub fn predict_skills<C: SkillClassifier + ?Sized>(
    context: &str,
    clf: &C,
    threshold: f64,
) -> Result<Vec<Skill>, ExtractionError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ExtractionError::InvalidArgument(format!(
            "threshold {threshold} is outside (0, 1)"
        )));
    }
    let scores = clf.predict_scores(context);
    let chosen: Vec<Skill> = Skill::ALL
        .iter()
        .copied()
        .filter(|s| scores.get(s).copied().unwrap_or(0.0) >= threshold)
        .collect();
    if !chosen.is_empty() {
        return Ok(chosen);
    }
    // first maximum in rank order
    let best = Skill::ALL
        .iter()
        .copied()
        .fold(None::<(Skill, f64)>, |acc, s| {
            let v = scores.get(&s).copied().unwrap_or(0.0);
            match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((s, v)),
            }
        })
        .map(|(s, _)| s)
        .unwrap_or(Skill::Remember);
    Ok(vec![best])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnswerSource {
    #[serde(rename = "NER")]
    Ner,
    #[serde(rename = "SRL")]
    Srl,
}

/// Answer proposal; `span` holds character offsets for entity answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerCandidate {
    pub text: String,
    pub source: AnswerSource,
    pub span: Option<(usize, usize)>,
    /// Predicate verb of an event answer.
    pub trigger: Option<String>,
}

pub fn answer_source_for(skill: Skill) -> AnswerSource {
    match skill {
        Skill::Remember | Skill::Evaluate => AnswerSource::Ner,
        Skill::Understand | Skill::Analyze | Skill::Create => AnswerSource::Srl,
    }
}

/// One candidate per distinct entity text, at its first mention.
pub fn extract_entity_answers<N: EntityRecognizer + ?Sized>(
    context: &str,
    ner: &N,
) -> Result<Vec<AnswerCandidate>, ExtractionError> {
    let mut entities = ner.entities(context)?;
    entities.sort_by_key(|e| (e.start, e.end));
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for e in entities {
        if text::char_slice(context, e.start, e.end) != Some(e.text.as_str()) {
            return Err(BackendError::new(
                "ner",
                format!("entity {:?} does not match its span {}..{}", e.text, e.start, e.end),
            )
            .into());
        }
        if seen.insert(e.text.clone()) {
            out.push(AnswerCandidate {
                text: e.text,
                source: AnswerSource::Ner,
                span: Some((e.start, e.end)),
                trigger: None,
            });
        }
    }
    Ok(out)
}

/// One "subject verb object" sentence per predicate that has at least one
/// of the two arguments.
pub fn extract_event_answers<S: SemanticRoleLabeler + ?Sized>(
    context: &str,
    srl: &S,
) -> Result<Vec<AnswerCandidate>, ExtractionError> {
    Ok(srl
        .predicates(context)?
        .into_iter()
        .filter(|p| p.subject.is_some() || p.object.is_some())
        .map(|p| {
            let parts: Vec<&str> = [p.subject.as_deref(), Some(p.verb.as_str()), p.object.as_deref()]
                .into_iter()
                .flatten()
                .filter(|s| !s.trim().is_empty())
                .collect();
            AnswerCandidate {
                text: parts.join(" "),
                source: AnswerSource::Srl,
                span: None,
                trigger: Some(p.verb),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TripleRecord", try_from = "TripleRecord")]
pub struct ExtractionTriple {
    pub context: String,
    pub skill: Skill,
    pub answer: AnswerCandidate,
}

/// Flat JSONL form of a triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub context: String,
    pub skill: Skill,
    pub answer: String,
    pub answer_source: AnswerSource,
    pub span: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<String>,
}

impl From<ExtractionTriple> for TripleRecord {
    fn from(t: ExtractionTriple) -> Self {
        TripleRecord {
            context: t.context,
            skill: t.skill,
            answer: t.answer.text,
            answer_source: t.answer.source,
            span: t.answer.span,
            trigger: t.answer.trigger,
        }
    }
}

impl TryFrom<TripleRecord> for ExtractionTriple {
    type Error = String;

    fn try_from(r: TripleRecord) -> Result<Self, String> {
        if r.answer_source != answer_source_for(r.skill) {
            return Err(format!("{:?} answers are not used for skill {}", r.answer_source, r.skill));
        }
        Ok(ExtractionTriple {
            context: r.context,
            skill: r.skill,
            answer: AnswerCandidate {
                text: r.answer,
                source: r.answer_source,
                span: r.span,
                trigger: r.trigger,
            },
        })
    }
}

/// Pairs each admitted skill with every answer from that skill's path,
/// ordered by skill rank, then candidate order.
pub fn sample_combinations<C, N, S>(
    context: &str,
    clf: &C,
    threshold: f64,
    ner: &N,
    srl: &S,
) -> Result<Vec<ExtractionTriple>, ExtractionError>
where
    C: SkillClassifier + ?Sized,
    N: EntityRecognizer + ?Sized,
    S: SemanticRoleLabeler + ?Sized,
{
    if context.trim().is_empty() {
        return Err(ExtractionError::InvalidArgument("empty context".into()));
    }
    let skills = predict_skills(context, clf, threshold)?;
    let mut entity_answers = None;
    let mut event_answers = None;
    let mut out = Vec::new();
    for skill in skills {
        let answers = match answer_source_for(skill) {
            AnswerSource::Ner => {
                if entity_answers.is_none() {
                    entity_answers = Some(extract_entity_answers(context, ner)?);
                }
                entity_answers.as_ref()
            }
            AnswerSource::Srl => {
                if event_answers.is_none() {
                    event_answers = Some(extract_event_answers(context, srl)?);
                }
                event_answers.as_ref()
            }
        };
        for answer in answers.into_iter().flatten() {
            out.push(ExtractionTriple {
                context: context.to_string(),
                skill,
                answer: answer.clone(),
            });
        }
    }
    Ok(out)
}

/// A QA record in the augmented training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    pub story_id: String,
    pub section_ids: Vec<u32>,
    pub context: String,
    pub question: String,
    pub answer: String,
    /// Empty for synthetic records.
    pub annotation: String,
    pub skill: Skill,
    pub split: Split,
    pub synthetic: bool,
    pub beam_rank: Option<usize>,
}

impl From<&QASample> for AugmentedRecord {
    fn from(s: &QASample) -> Self {
        AugmentedRecord {
            story_id: s.story_id.clone(),
            section_ids: s.section_ids.clone(),
            context: s.context.clone(),
            question: s.question.clone(),
            answer: s.answer.clone(),
            annotation: s.annotation.clone(),
            skill: s.skill,
            split: s.split,
            synthetic: false,
            beam_rank: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedDataset {
    pub base: Vec<AugmentedRecord>,
    pub synthetic: Vec<AugmentedRecord>,
    /// Size of the deduplicated candidate pool.
    pub pool_size: usize,
}

impl AugmentedDataset {
    pub fn records(&self) -> impl Iterator<Item = &AugmentedRecord> {
        self.base.iter().chain(&self.synthetic)
    }
}

/// Generates questions for every triple, drops exact (context, question)
/// duplicates, and draws `n_select` of them uniformly under `seed`.
pub fn build_augmented_dataset<F>(
    base: &[QASample],
    triples: &[ExtractionTriple],
    mut generate: F,
    n_select: usize,
    seed: u64,
) -> Result<AugmentedDataset, ExtractionError>
where
    F: FnMut(&ExtractionTriple) -> Result<Vec<QuestionCandidate>, GeneratorError>,
{
    if n_select == 0 {
        return Err(ExtractionError::InvalidArgument("n_select must be positive".into()));
    }
    let story_of: HashMap<&str, &QASample> = base.iter().map(|s| (s.context.as_str(), s)).collect();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut pool = Vec::new();
    for triple in triples {
        for cand in generate(triple)? {
            let question = cand.text.trim().to_string();
            if question.is_empty() || !seen.insert((triple.context.clone(), question.clone())) {
                continue;
            }
            let origin = story_of.get(triple.context.as_str());
            pool.push(AugmentedRecord {
                story_id: origin.map_or_else(|| "synthetic".to_string(), |s| s.story_id.clone()),
                section_ids: origin.map(|s| s.section_ids.clone()).unwrap_or_default(),
                context: triple.context.clone(),
                question,
                answer: triple.answer.text.clone(),
                annotation: String::new(),
                skill: triple.skill,
                split: Split::Train,
                synthetic: true,
                beam_rank: Some(cand.beam_rank),
            });
        }
    }
    let k = n_select.min(pool.len());
    if k < n_select {
        log::warn!("requested {n_select} synthetic questions but the pool holds only {}", pool.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, pool.len(), k).into_vec();
    picked.sort_unstable();
    let pool_size = pool.len();
    let mut slots: Vec<Option<AugmentedRecord>> = pool.into_iter().map(Some).collect();
    let synthetic = picked.into_iter().filter_map(|i| slots[i].take()).collect();
    Ok(AugmentedDataset {
        base: base.iter().map(AugmentedRecord::from).collect(),
        synthetic,
        pool_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::{CapitalizedEntityRecognizer, Entity, FrozenAnnotations, FrozenRecord, Predicate};

    fn scores(v: [f64; 5]) -> FixedSkillScores {
        FixedSkillScores(Skill::ALL.iter().copied().zip(v).collect())
    }

    #[test]
    fn thresholding_and_fallback() {
        let clf = scores([0.9, 0.2, 0.7, 0.1, 0.3]);
        assert_eq!(predict_skills("c", &clf, 0.5).unwrap(), vec![Skill::Remember, Skill::Analyze]);
        let low = scores([0.1, 0.4, 0.2, 0.1, 0.3]);
        assert_eq!(predict_skills("c", &low, 0.5).unwrap(), vec![Skill::Understand]);
        assert!(predict_skills("c", &clf, 1.5).is_err());
        assert!(predict_skills("c", &clf, 0.0).is_err());
    }

    #[test]
    fn entity_answers() {
        let got = extract_entity_answers("Timmy met Anna in Warsaw.", &CapitalizedEntityRecognizer).unwrap();
        let texts: Vec<_> = got.iter().map(|a| (a.text.as_str(), a.span.unwrap())).collect();
        assert_eq!(texts, vec![("Timmy", (0, 5)), ("Anna", (10, 14)), ("Warsaw", (18, 24))]);
        assert!(extract_entity_answers("the dog slept.", &CapitalizedEntityRecognizer).unwrap().is_empty());
        let repeated = extract_entity_answers("Anna ran. Then Anna sat.", &CapitalizedEntityRecognizer).unwrap();
        assert_eq!(repeated.len(), 1);
        assert_eq!(repeated[0].span, Some((0, 4)));
    }

    #[test]
    fn mismatched_entity_span_is_a_backend_error() {
        let frozen = FrozenAnnotations::new([FrozenRecord {
            text: "Anna ran.".into(),
            entities: vec![Entity { text: "Anna".into(), label: "PERSON".into(), start: 1, end: 5 }],
            predicates: vec![],
        }]);
        assert!(matches!(
            extract_entity_answers("Anna ran.", &frozen),
            Err(ExtractionError::Backend(_))
        ));
    }

    fn frozen_events() -> FrozenAnnotations {
        let text = "Timmy got in the hamper quickly.";
        FrozenAnnotations::new([FrozenRecord {
            text: text.into(),
            entities: vec![Entity { text: "Timmy".into(), label: "PERSON".into(), start: 0, end: 5 }],
            predicates: vec![
                Predicate { verb: "got".into(), subject: Some("Timmy".into()), object: Some("in the hamper".into()) },
                Predicate { verb: "hurried".into(), subject: None, object: None },
                Predicate { verb: "hid".into(), subject: Some("he".into()), object: None },
            ],
        }])
    }

    #[test]
    fn event_answers_compose_subject_verb_object() {
        let got = extract_event_answers("Timmy got in the hamper quickly.", &frozen_events()).unwrap();
        let texts: Vec<_> = got.iter().map(|a| a.text.as_str()).collect();
        assert_eq!(texts, vec!["Timmy got in the hamper", "he hid"]);
        assert!(got.iter().all(|a| a.source == AnswerSource::Srl && a.span.is_none()));
    }

    #[test]
    fn combinations_follow_skill_paths() {
        let ctx = "Timmy got in the hamper quickly.";
        let frozen = frozen_events();
        let clf = scores([0.9, 0.0, 0.8, 0.6, 0.0]);
        let triples = sample_combinations(ctx, &clf, 0.5, &frozen, &frozen).unwrap();
        let got: Vec<_> = triples.iter().map(|t| (t.skill, t.answer.text.as_str())).collect();
        assert_eq!(
            got,
            vec![
                (Skill::Remember, "Timmy"),
                (Skill::Analyze, "Timmy got in the hamper"),
                (Skill::Analyze, "he hid"),
                (Skill::Create, "Timmy got in the hamper"),
                (Skill::Create, "he hid"),
            ]
        );
        assert!(sample_combinations("  ", &clf, 0.5, &frozen, &frozen).is_err());
    }

    #[test]
    fn triple_jsonl_shape() {
        let t = ExtractionTriple {
            context: "c".into(),
            skill: Skill::Remember,
            answer: AnswerCandidate { text: "Anna".into(), source: AnswerSource::Ner, span: Some((0, 4)), trigger: None },
        };
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v, serde_json::json!({"context": "c", "skill": "remember", "answer": "Anna", "answer_source": "NER", "span": [0, 4]}));
        let back: ExtractionTriple = serde_json::from_value(v).unwrap();
        assert_eq!(back, t);
        let wrong = serde_json::json!({"context": "c", "skill": "create", "answer": "Anna", "answer_source": "NER", "span": [0, 4]});
        assert!(serde_json::from_value::<ExtractionTriple>(wrong).is_err());
    }

    fn mock_triples(n: usize) -> Vec<ExtractionTriple> {
        (0..n)
            .map(|i| ExtractionTriple {
                context: format!("context {i}"),
                skill: Skill::Create,
                answer: AnswerCandidate { text: format!("a{i}"), source: AnswerSource::Srl, span: None, trigger: Some("ran".into()) },
            })
            .collect()
    }

    fn mock_generator(t: &ExtractionTriple) -> Result<Vec<QuestionCandidate>, GeneratorError> {
        Ok((0..8)
            .map(|r| QuestionCandidate { text: format!("q{r} about {}?", t.answer.text), beam_rank: r, score: -(r as f64) })
            .collect())
    }

    #[test]
    fn augmented_selection() {
        let triples = mock_triples(10);
        let d = build_augmented_dataset(&[], &triples, mock_generator, 20, 3).unwrap();
        assert_eq!(d.synthetic.len(), 20);
        assert_eq!(d.pool_size, 80);
        assert!(d.synthetic.iter().all(|r| r.synthetic && r.beam_rank.is_some()));
        let pairs: HashSet<_> = d.synthetic.iter().map(|r| (&r.context, &r.question)).collect();
        assert_eq!(pairs.len(), 20);
        assert_eq!(d, build_augmented_dataset(&[], &triples, mock_generator, 20, 3).unwrap());
        assert_ne!(d, build_augmented_dataset(&[], &triples, mock_generator, 20, 4).unwrap());

        let clamped = build_augmented_dataset(&[], &triples, mock_generator, 10_000, 3).unwrap();
        assert_eq!(clamped.synthetic.len(), 80);
        assert!(build_augmented_dataset(&[], &triples, mock_generator, 0, 3).is_err());
    }

    #[test]
    fn duplicate_questions_are_pooled_once() {
        let triples = mock_triples(2);
        let same = |_: &ExtractionTriple| {
            Ok(vec![
                QuestionCandidate { text: "Why?".into(), beam_rank: 0, score: 0.0 },
                QuestionCandidate { text: "Why?".into(), beam_rank: 1, score: -1.0 },
            ])
        };
        let d = build_augmented_dataset(&[], &triples, same, 100, 0).unwrap();
        assert_eq!(d.pool_size, 2);
    }

    #[test]
    fn classifier_learns_separable_skills() {
        let mk = |ctx: &str, label: &str| QASample::new("s", vec![1], ctx, "q?", "a", label, Split::Train).unwrap();
        let mut train = Vec::new();
        for i in 0..20 {
            train.push(mk(&format!("The king wore a crown number {i}."), "Character"));
            train.push(mk(&format!("The storm will come soon, day {i}."), "Prediction"));
        }
        train.push(mk("The king wore a crown number 0.", "Setting"));
        let (clf, report) = train_skill_classifier(&train, &train, &ClassifierConfig::default()).unwrap();
        assert_eq!(report.train_contexts, 40);
        assert_eq!(
            report.absent_skills,
            vec![Skill::Understand, Skill::Analyze, Skill::Evaluate]
        );
        assert_eq!(predict_skills("The king wore a crown.", &clf, 0.5).unwrap(), vec![Skill::Remember]);
        assert_eq!(predict_skills("The storm will come soon.", &clf, 0.5).unwrap(), vec![Skill::Create]);
        assert_eq!(report.dev_f1[&Skill::Remember], 1.0);
        assert_eq!(clf.predict_scores("anything").len(), 5);
        assert!(train_skill_classifier(&[], &[], &ClassifierConfig::default()).is_err());
    }
}
