//! Human-evaluation tasks: pairwise question comparison against a baseline,
//! skill labeling with evidence sentences, and knowledge quality.

mod aggregate;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::GeneratedQuestion;
use crate::text;
use crate::Skill;

pub use aggregate::{
    aggregate_knowledge, aggregate_pairwise, aggregate_skill_accuracy, agreement, AggregateReport,
    KnowledgeCell, PairwiseCell, SkillCell,
};
pub use store::{parse_judgment_request, validate_verdict, JudgmentRequest, JudgmentStore, Progress, SubmitOutcome, TaskTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TaskKind {
    Pairwise,
    Skill,
    Knowledge,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Pairwise, TaskKind::Skill, TaskKind::Knowledge];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Pairwise => "PAIRWISE",
            TaskKind::Skill => "SKILL",
            TaskKind::Knowledge => "KNOWLEDGE",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = AnnotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PAIRWISE" => Ok(TaskKind::Pairwise),
            "SKILL" => Ok(TaskKind::Skill),
            "KNOWLEDGE" => Ok(TaskKind::Knowledge),
            _ => Err(AnnotationError::InvalidArgument(format!("unknown task kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aspect {
    Grammaticality,
    Answerability,
    Relevance,
}

impl Aspect {
    pub const ALL: [Aspect; 3] = [Aspect::Grammaticality, Aspect::Answerability, Aspect::Relevance];

    pub fn as_str(self) -> &'static str {
        match self {
            Aspect::Grammaticality => "grammaticality",
            Aspect::Answerability => "answerability",
            Aspect::Relevance => "relevance",
        }
    }
}

/// What the annotator sees, by task kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum TaskBody {
    Pairwise {
        question_a: String,
        question_b: String,
        answer: String,
        aspect: Aspect,
    },
    Skill {
        question: String,
        answer: String,
        sentences: Vec<String>,
    },
    Knowledge {
        question: String,
        answer: String,
        knowledge_text: String,
    },
}

impl TaskBody {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskBody::Pairwise { .. } => TaskKind::Pairwise,
            TaskBody::Skill { .. } => TaskKind::Skill,
            TaskBody::Knowledge { .. } => TaskKind::Knowledge,
        }
    }
}

/// Labels kept server-side for de-anonymization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLabels {
    /// System shown as question A (pairwise) or the judged system.
    pub system_a: String,
    /// System shown as question B; pairwise only.
    pub system_b: Option<String>,
    pub baseline: Option<String>,
    /// Skill the question was generated for.
    pub conditioned_skill: Skill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub context: String,
    #[serde(flatten)]
    pub body: TaskBody,
    pub hidden: HiddenLabels,
    /// Annotators this task is assigned to; `None` means everyone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotators: Option<Vec<String>>,
}

/// Served form of a task: no hidden labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub context: String,
    #[serde(flatten)]
    pub body: TaskBody,
}

impl AnnotationTask {
    pub fn kind(&self) -> TaskKind {
        self.body.kind()
    }

    pub fn view(&self) -> TaskView {
        TaskView {
            task_id: self.task_id.clone(),
            context: self.context.clone(),
            body: self.body.clone(),
        }
    }

    pub fn assigned_to(&self, annotator: &str) -> bool {
        self.annotators
            .as_ref()
            .is_none_or(|a| a.iter().any(|x| x == annotator))
    }

    /// The judged system for SKILL/KNOWLEDGE tasks; the non-baseline side for
    /// PAIRWISE tasks.
    pub fn system(&self) -> &str {
        match (&self.hidden.baseline, &self.hidden.system_b) {
            (Some(base), Some(b)) if *base == self.hidden.system_a => b,
            _ => &self.hidden.system_a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairwiseChoice {
    A,
    B,
    #[serde(rename = "TIE")]
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Verdict {
    Pairwise(PairwiseChoice),
    Skill {
        evidence_sentence_indices: Vec<usize>,
        skill: Skill,
    },
    Knowledge {
        makes_sense: bool,
        relevant: bool,
    },
}

impl Verdict {
    pub fn kind(&self) -> TaskKind {
        match self {
            Verdict::Pairwise(_) => TaskKind::Pairwise,
            Verdict::Skill { .. } => TaskKind::Skill,
            Verdict::Knowledge { .. } => TaskKind::Knowledge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub task_id: String,
    pub annotator_id: String,
    pub verdict: Verdict,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("systems are not aligned; mismatched keys: {}", .keys.join("; "))]
    Alignment { keys: Vec<String> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("verdict for a {verdict} task submitted to {task} task")]
    KindMismatch { task: TaskKind, verdict: TaskKind },
    #[error("malformed judgment")]
    Malformed(Vec<FieldError>),
    #[error(transparent)]
    Jsonl(#[from] crate::jsonl::JsonlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub seed: u64,
    pub systems: Vec<String>,
    pub baseline: Option<String>,
    pub n_samples: usize,
    pub kinds: Vec<TaskKind>,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    /// Annotators per task when partitioning; `None` for full overlap.
    pub overlap: Option<usize>,
    pub annotators: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub manifest: BundleManifest,
    pub tasks: Vec<AnnotationTask>,
}

impl Bundle {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), AnnotationError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| AnnotationError::InvalidArgument(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, AnnotationError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| AnnotationError::InvalidArgument(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleOptions {
    pub n_samples: usize,
    pub kinds: Vec<TaskKind>,
    pub seed: u64,
    pub baseline: Option<String>,
    pub created_at: u64,
    /// With `Some((annotators, k))`, each task goes to `k` of the annotators
    /// in rotation; otherwise every annotator sees every task.
    pub partition: Option<(Vec<String>, usize)>,
}

type Key = (String, String, Skill);

fn key_label(k: &Key) -> String {
    let ctx: String = k.0.chars().take(40).collect();
    format!("[{} | {} | {}]", ctx, k.1, k.2)
}

/// Builds annotation tasks from the rank-0 questions of each system.
///
/// PAIRWISE: for every non-baseline system, `n_samples` inputs × three
/// aspects, sides randomized per task. SKILL and KNOWLEDGE: `n_samples`
/// tasks per non-baseline system (KNOWLEDGE skips records without knowledge).
pub fn create_annotation_bundle(
    systems: &BTreeMap<String, Vec<GeneratedQuestion>>,
    opts: &BundleOptions,
) -> Result<Bundle, AnnotationError> {
    if opts.n_samples == 0 || opts.kinds.is_empty() {
        return Err(AnnotationError::InvalidArgument("n_samples and kinds must be non-empty".into()));
    }
    let mut by_system: BTreeMap<&str, BTreeMap<Key, &GeneratedQuestion>> = BTreeMap::new();
    for (name, questions) in systems {
        let entry = by_system.entry(name).or_default();
        for q in questions.iter().filter(|q| q.beam_rank == 0) {
            entry
                .entry((q.context.clone(), q.answer.clone(), q.skill))
                .or_insert(q);
        }
    }
    let needs_pairs = opts.kinds.contains(&TaskKind::Pairwise);
    let baseline = opts.baseline.as_deref();
    if let Some(b) = baseline {
        if !by_system.contains_key(b) {
            return Err(AnnotationError::InvalidArgument(format!("baseline {b:?} is not among the systems")));
        }
    }
    let compared: Vec<&str> = by_system.keys().copied().filter(|s| Some(*s) != baseline).collect();
    if needs_pairs && (baseline.is_none() || compared.is_empty()) {
        return Err(AnnotationError::Alignment {
            keys: vec!["pairwise comparison needs a baseline and at least one other system".into()],
        });
    }
    if compared.is_empty() {
        return Err(AnnotationError::InvalidArgument("no system to evaluate".into()));
    }

    // every system must cover the same inputs
    let all_keys: BTreeSet<&Key> = by_system.values().flat_map(|m| m.keys()).collect();
    let mismatched: Vec<String> = all_keys
        .iter()
        .filter(|k| by_system.values().any(|m| !m.contains_key(**k)))
        .map(|k| key_label(k))
        .collect();
    if !mismatched.is_empty() && (needs_pairs || by_system.len() > 1) {
        return Err(AnnotationError::Alignment { keys: mismatched });
    }

    let keys: Vec<&Key> = all_keys.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = opts.n_samples.min(keys.len());
    if n < opts.n_samples {
        log::warn!("only {} aligned inputs for {} requested samples", keys.len(), opts.n_samples);
    }
    let mut chosen = index::sample(&mut rng, keys.len(), n).into_vec();
    chosen.sort_unstable();
    let chosen: Vec<&Key> = chosen.into_iter().map(|i| keys[i]).collect();

    let mut tasks = Vec::new();
    let mut push = |context: &str, body: TaskBody, hidden: HiddenLabels| {
        tasks.push(AnnotationTask {
            task_id: format!("task-{:05}", tasks.len() + 1),
            context: context.to_string(),
            body,
            hidden,
            annotators: None,
        });
    };
    for &kind in &TaskKind::ALL {
        if !opts.kinds.contains(&kind) {
            continue;
        }
        for system in &compared {
            for key in &chosen {
                let q = by_system[system][*key];
                match kind {
                    TaskKind::Pairwise => {
                        let base_name = baseline.expect("checked above");
                        let base = by_system[base_name][*key];
                        for aspect in Aspect::ALL {
                            let swap: bool = rng.random();
                            let (a, b, sa, sb) = if swap {
                                (base, q, base_name, *system)
                            } else {
                                (q, base, *system, base_name)
                            };
                            push(
                                &q.context,
                                TaskBody::Pairwise {
                                    question_a: a.question.clone(),
                                    question_b: b.question.clone(),
                                    answer: q.answer.clone(),
                                    aspect,
                                },
                                HiddenLabels {
                                    system_a: sa.to_string(),
                                    system_b: Some(sb.to_string()),
                                    baseline: Some(base_name.to_string()),
                                    conditioned_skill: q.skill,
                                },
                            );
                        }
                    }
                    TaskKind::Skill => push(
                        &q.context,
                        TaskBody::Skill {
                            question: q.question.clone(),
                            answer: q.answer.clone(),
                            sentences: text::sentences(&q.context),
                        },
                        HiddenLabels {
                            system_a: system.to_string(),
                            system_b: None,
                            baseline: None,
                            conditioned_skill: q.skill,
                        },
                    ),
                    TaskKind::Knowledge => {
                        let Some(knowledge) = q.knowledge.as_ref().filter(|k| !k.trim().is_empty()) else {
                            continue;
                        };
                        push(
                            &q.context,
                            TaskBody::Knowledge {
                                question: q.question.clone(),
                                answer: q.answer.clone(),
                                knowledge_text: knowledge.clone(),
                            },
                            HiddenLabels {
                                system_a: system.to_string(),
                                system_b: None,
                                baseline: None,
                                conditioned_skill: q.skill,
                            },
                        );
                    }
                }
            }
        }
    }

    let (annotators, overlap) = match &opts.partition {
        Some((names, k)) => {
            if names.is_empty() || *k == 0 || *k > names.len() {
                return Err(AnnotationError::InvalidArgument(
                    "overlap must lie between 1 and the number of annotators".into(),
                ));
            }
            for (i, task) in tasks.iter_mut().enumerate() {
                task.annotators = Some((0..*k).map(|j| names[(i * k + j) % names.len()].clone()).collect());
            }
            (Some(names.clone()), Some(*k))
        }
        None => (None, None),
    };

    Ok(Bundle {
        manifest: BundleManifest {
            seed: opts.seed,
            systems: by_system.keys().map(|s| s.to_string()).collect(),
            baseline: opts.baseline.clone(),
            n_samples: opts.n_samples,
            kinds: opts.kinds.clone(),
            created_at: opts.created_at,
            overlap,
            annotators,
        },
        tasks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::SerializationMode;

    pub(crate) fn system_questions(name: &str, n: usize) -> Vec<GeneratedQuestion> {
        (0..n)
            .map(|i| GeneratedQuestion {
                context: format!("Sentence one of story {i}. Sentence two."),
                answer: format!("answer {i}"),
                skill: Skill::ALL[i % 5],
                question: format!("Question {i} variant {}?", name.len()),
                beam_rank: 0,
                score: 0.0,
                focus: None,
                knowledge: Some(format!("knowledge {i}")),
                mode: SerializationMode::Full,
            })
            .collect()
    }

    fn opts(kinds: Vec<TaskKind>) -> BundleOptions {
        BundleOptions {
            n_samples: 300,
            kinds,
            seed: 5,
            baseline: Some("nqg".into()),
            created_at: 0,
            partition: None,
        }
    }

    fn two_systems(n: usize) -> BTreeMap<String, Vec<GeneratedQuestion>> {
        BTreeMap::from([
            ("nqg".to_string(), system_questions("nqg", n)),
            ("ours".to_string(), system_questions("ours", n)),
        ])
    }

    #[test]
    fn pairwise_bundle_size_and_determinism() {
        let systems = two_systems(400);
        let b = create_annotation_bundle(&systems, &opts(vec![TaskKind::Pairwise])).unwrap();
        assert_eq!(b.tasks.len(), 900);
        let again = create_annotation_bundle(&systems, &opts(vec![TaskKind::Pairwise])).unwrap();
        assert_eq!(b, again);
        let sides: BTreeSet<&str> = b.tasks.iter().map(|t| t.hidden.system_a.as_str()).collect();
        assert_eq!(sides.len(), 2, "A side should be randomized");
        assert!(b.tasks.iter().all(|t| t.system() == "ours"));
        let view = serde_json::to_string(&b.tasks[0].view()).unwrap();
        assert!(!view.contains("nqg") && !view.contains("ours") && !view.contains("hidden"));
    }

    #[test]
    fn single_system_pairwise_is_an_alignment_error() {
        let systems = BTreeMap::from([("nqg".to_string(), system_questions("nqg", 5))]);
        assert!(matches!(
            create_annotation_bundle(&systems, &opts(vec![TaskKind::Pairwise])),
            Err(AnnotationError::Alignment { .. })
        ));
    }

    #[test]
    fn misaligned_systems_list_keys() {
        let mut systems = two_systems(5);
        systems.get_mut("ours").unwrap().pop();
        match create_annotation_bundle(&systems, &opts(vec![TaskKind::Pairwise])) {
            Err(AnnotationError::Alignment { keys }) => {
                assert_eq!(keys.len(), 1);
                assert!(keys[0].contains("answer 4"));
            }
            other => panic!("expected alignment error, got {other:?}"),
        }
    }

    #[test]
    fn skill_tasks_carry_indexed_sentences_and_partitioning() {
        let systems = two_systems(10);
        let mut o = opts(vec![TaskKind::Skill, TaskKind::Knowledge]);
        o.n_samples = 4;
        o.partition = Some((vec!["ann1".into(), "ann2".into(), "ann3".into()], 2));
        let b = create_annotation_bundle(&systems, &o).unwrap();
        assert_eq!(b.tasks.len(), 8);
        match &b.tasks[0].body {
            TaskBody::Skill { sentences, .. } => assert_eq!(sentences.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(b.tasks.iter().all(|t| t.annotators.as_ref().unwrap().len() == 2));
        assert_eq!(b.manifest.overlap, Some(2));
    }

    #[test]
    fn verdict_json_forms() {
        let v: Verdict = serde_json::from_str("\"TIE\"").unwrap();
        assert_eq!(v, Verdict::Pairwise(PairwiseChoice::Tie));
        let v: Verdict = serde_json::from_str(r#"{"evidence_sentence_indices":[0,2],"skill":"create"}"#).unwrap();
        assert_eq!(v.kind(), TaskKind::Skill);
        let v: Verdict = serde_json::from_str(r#"{"makes_sense":true,"relevant":false}"#).unwrap();
        assert_eq!(v.kind(), TaskKind::Knowledge);
        assert!(serde_json::from_str::<Verdict>("\"C\"").is_err());
    }
}
