use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AnnotationError, AnnotationTask, FieldError, Judgment, TaskBody, TaskKind, Verdict};

/// Task list with a shared round-robin cursor.
#[derive(Debug, Clone)]
pub struct TaskTable {
    tasks: Vec<AnnotationTask>,
    index: HashMap<String, usize>,
    cursor: usize,
}

impl TaskTable {
    pub fn new(tasks: Vec<AnnotationTask>) -> Result<Self, AnnotationError> {
        let mut index = HashMap::new();
        for (i, t) in tasks.iter().enumerate() {
            if index.insert(t.task_id.clone(), i).is_some() {
                return Err(AnnotationError::InvalidArgument(format!("duplicate task id {:?}", t.task_id)));
            }
        }
        Ok(TaskTable { tasks, index, cursor: 0 })
    }

    pub fn get(&self, task_id: &str) -> Option<&AnnotationTask> {
        self.index.get(task_id).map(|&i| &self.tasks[i])
    }

    pub fn tasks(&self) -> &[AnnotationTask] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// The next task (from the shared cursor onwards, wrapping) that is
    /// assigned to `annotator`, matches `kind`, and has no judgment from
    /// them. The cursor then moves past it, so concurrent annotators spread
    /// over the table.
    pub fn next_for(
        &mut self,
        annotator: &str,
        kind: Option<TaskKind>,
        store: &JudgmentStore,
    ) -> Option<&AnnotationTask> {
        let n = self.tasks.len();
        for step in 0..n {
            let i = (self.cursor + step) % n;
            let t = &self.tasks[i];
            if kind.is_none_or(|k| k == t.kind())
                && t.assigned_to(annotator)
                && store.get(&t.task_id, annotator).is_none()
            {
                self.cursor = (i + 1) % n;
                return Some(&self.tasks[i]);
            }
        }
        None
    }
}

/// Checks that a verdict is legal for the task.
pub fn validate_verdict(task: &AnnotationTask, verdict: &Verdict) -> Result<(), AnnotationError> {
    if task.kind() != verdict.kind() {
        return Err(AnnotationError::KindMismatch {
            task: task.kind(),
            verdict: verdict.kind(),
        });
    }
    if let (TaskBody::Skill { sentences, .. }, Verdict::Skill { evidence_sentence_indices, .. }) =
        (&task.body, verdict)
    {
        let mut errors = Vec::new();
        if evidence_sentence_indices.is_empty() {
            errors.push(FieldError::new(
                "verdict.evidence_sentence_indices",
                "select at least one evidence sentence",
            ));
        }
        if let Some(bad) = evidence_sentence_indices.iter().find(|&&i| i >= sentences.len()) {
            errors.push(FieldError::new(
                "verdict.evidence_sentence_indices",
                format!("sentence index {bad} is out of range (task has {} sentences)", sentences.len()),
            ));
        }
        if !errors.is_empty() {
            return Err(AnnotationError::Malformed(errors));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgmentRequest {
    pub task_id: String,
    pub annotator_id: String,
    pub verdict: Verdict,
}

/// Parses a POSTed judgment body, collecting one error per bad field.
pub fn parse_judgment_request(body: &Value) -> Result<JudgmentRequest, AnnotationError> {
    let Some(obj) = body.as_object() else {
        return Err(AnnotationError::Malformed(vec![FieldError::new("", "body must be a JSON object")]));
    };
    let mut errors = Vec::new();
    let mut text_field = |name: &str| match obj.get(name) {
        Some(Value::String(s)) if !s.trim().is_empty() => Some(s.clone()),
        Some(Value::String(_)) => {
            errors.push(FieldError::new(name, "must not be empty"));
            None
        }
        Some(_) => {
            errors.push(FieldError::new(name, "must be a string"));
            None
        }
        None => {
            errors.push(FieldError::new(name, "is required"));
            None
        }
    };
    let task_id = text_field("task_id");
    let annotator_id = text_field("annotator_id");
    let verdict = match obj.get("verdict") {
        None => {
            errors.push(FieldError::new("verdict", "is required"));
            None
        }
        Some(v) => match serde_json::from_value::<Verdict>(v.clone()) {
            Ok(v) => Some(v),
            Err(_) => {
                errors.push(FieldError::new(
                    "verdict",
                    "must be \"A\", \"B\", \"TIE\", {evidence_sentence_indices, skill} or {makes_sense, relevant}",
                ));
                None
            }
        },
    };
    match (task_id, annotator_id, verdict) {
        (Some(task_id), Some(annotator_id), Some(verdict)) if errors.is_empty() => Ok(JudgmentRequest {
            task_id,
            annotator_id,
            verdict,
        }),
        _ => Err(AnnotationError::Malformed(errors)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubmitOutcome {
    /// A previous judgment by the same annotator on the same task was replaced.
    pub overwritten: bool,
}

/// Judgments keyed by (task, annotator), backed by an append-only JSONL log.
/// Replaying the log applies last-write-wins.
#[derive(Debug, Default)]
pub struct JudgmentStore {
    judgments: BTreeMap<(String, String), Judgment>,
    log: Option<(PathBuf, File)>,
}

impl JudgmentStore {
    pub fn in_memory() -> Self {
        JudgmentStore::default()
    }

    /// Opens (or creates) the log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, AnnotationError> {
        let path = path.as_ref().to_path_buf();
        let mut store = JudgmentStore::default();
        if path.exists() {
            for j in crate::jsonl::read::<Judgment>(&path)? {
                store.judgments.insert((j.task_id.clone(), j.annotator_id.clone()), j);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        store.log = Some((path, file));
        Ok(store)
    }

    pub fn get(&self, task_id: &str, annotator: &str) -> Option<&Judgment> {
        self.judgments.get(&(task_id.to_string(), annotator.to_string()))
    }

    /// Validates against the task table, appends to the log, then updates
    /// the in-memory view.
    pub fn submit(&mut self, tasks: &TaskTable, judgment: Judgment) -> Result<SubmitOutcome, AnnotationError> {
        let task = tasks
            .get(&judgment.task_id)
            .ok_or_else(|| AnnotationError::UnknownTask(judgment.task_id.clone()))?;
        validate_verdict(task, &judgment.verdict)?;
        if let Some((_, file)) = &mut self.log {
            let mut line = serde_json::to_string(&judgment)
                .map_err(|e| AnnotationError::InvalidArgument(e.to_string()))?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        let key = (judgment.task_id.clone(), judgment.annotator_id.clone());
        let overwritten = self.judgments.insert(key, judgment).is_some();
        if overwritten {
            log::warn!("judgment overwritten by a repeat submission");
        }
        Ok(SubmitOutcome { overwritten })
    }

    /// Current judgments ordered by (task, annotator).
    pub fn judgments(&self) -> Vec<Judgment> {
        self.judgments.values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.log.as_ref().map(|(p, _)| p.as_path())
    }

    /// Writes the current (deduplicated) judgments to `path`.
    pub fn snapshot(&self, path: impl AsRef<Path>) -> Result<(), AnnotationError> {
        crate::jsonl::write(path, self.judgments.values())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub tasks_total: usize,
    pub tasks_by_kind: BTreeMap<TaskKind, usize>,
    pub judgments_total: usize,
    pub judgments_by_annotator: BTreeMap<String, usize>,
    pub tasks_with_judgment: usize,
}

impl Progress {
    pub fn compute(tasks: &TaskTable, store: &JudgmentStore) -> Self {
        let mut tasks_by_kind = BTreeMap::new();
        for t in tasks.tasks() {
            *tasks_by_kind.entry(t.kind()).or_insert(0) += 1;
        }
        let mut by_annotator = BTreeMap::new();
        let mut judged = std::collections::BTreeSet::new();
        for j in store.judgments.values() {
            *by_annotator.entry(j.annotator_id.clone()).or_insert(0) += 1;
            judged.insert(j.task_id.as_str());
        }
        Progress {
            tasks_total: tasks.len(),
            tasks_by_kind,
            judgments_total: store.len(),
            judgments_by_annotator: by_annotator,
            tasks_with_judgment: judged.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{Aspect, HiddenLabels, PairwiseChoice};
    use crate::Skill;
    use serde_json::json;

    fn tasks() -> TaskTable {
        let hidden = HiddenLabels {
            system_a: "sys".into(),
            system_b: Some("base".into()),
            baseline: Some("base".into()),
            conditioned_skill: Skill::Create,
        };
        TaskTable::new(vec![
            AnnotationTask {
                task_id: "t1".into(),
                context: "c".into(),
                body: TaskBody::Pairwise { question_a: "a?".into(), question_b: "b?".into(), answer: "x".into(), aspect: Aspect::Relevance },
                hidden: hidden.clone(),
                annotators: None,
            },
            AnnotationTask {
                task_id: "t2".into(),
                context: "One. Two.".into(),
                body: TaskBody::Skill { question: "q?".into(), answer: "x".into(), sentences: vec!["One.".into(), "Two.".into()] },
                hidden: HiddenLabels { system_b: None, baseline: None, ..hidden },
                annotators: Some(vec!["ann2".into()]),
            },
        ])
        .unwrap()
    }

    fn judgment(task: &str, ann: &str, verdict: Verdict) -> Judgment {
        Judgment { task_id: task.into(), annotator_id: ann.into(), verdict, timestamp: 1 }
    }

    #[test]
    fn submission_rules() {
        let t = tasks();
        let mut s = JudgmentStore::in_memory();
        let a = Verdict::Pairwise(PairwiseChoice::A);
        assert!(!s.submit(&t, judgment("t1", "ann1", a.clone())).unwrap().overwritten);
        assert!(s.submit(&t, judgment("t1", "ann1", Verdict::Pairwise(PairwiseChoice::Tie))).unwrap().overwritten);
        assert_eq!(s.len(), 1);
        assert!(matches!(s.submit(&t, judgment("nope", "ann1", a.clone())), Err(AnnotationError::UnknownTask(_))));
        assert!(matches!(s.submit(&t, judgment("t2", "ann1", a)), Err(AnnotationError::KindMismatch { .. })));
        let bad = Verdict::Skill { evidence_sentence_indices: vec![5], skill: Skill::Create };
        assert!(matches!(s.submit(&t, judgment("t2", "ann2", bad)), Err(AnnotationError::Malformed(_))));
    }

    #[test]
    fn next_task_round_robin_and_exhaustion() {
        let mut t = tasks();
        let mut s = JudgmentStore::in_memory();
        assert_eq!(t.next_for("ann1", None, &s).unwrap().task_id, "t1");
        // t2 is not assigned to ann1
        assert_eq!(t.next_for("ann1", None, &s).unwrap().task_id, "t1");
        s.submit(&t, judgment("t1", "ann1", Verdict::Pairwise(PairwiseChoice::B))).unwrap();
        assert!(t.next_for("ann1", None, &s).is_none());
        assert_eq!(t.next_for("ann2", Some(TaskKind::Skill), &s).unwrap().task_id, "t2");
        assert!(t.next_for("ann2", Some(TaskKind::Knowledge), &s).is_none());
    }

    #[test]
    fn log_replay_is_last_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("judgments.jsonl");
        let t = tasks();
        {
            let mut s = JudgmentStore::open(&path).unwrap();
            s.submit(&t, judgment("t1", "ann1", Verdict::Pairwise(PairwiseChoice::A))).unwrap();
            s.submit(&t, judgment("t1", "ann1", Verdict::Pairwise(PairwiseChoice::B))).unwrap();
        }
        let s = JudgmentStore::open(&path).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.get("t1", "ann1").unwrap().verdict, Verdict::Pairwise(PairwiseChoice::B));
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
    }

    #[test]
    fn request_parsing_reports_fields() {
        let ok = parse_judgment_request(&json!({"task_id": "t1", "annotator_id": "a", "verdict": "TIE"})).unwrap();
        assert_eq!(ok.verdict, Verdict::Pairwise(PairwiseChoice::Tie));
        match parse_judgment_request(&json!({"task_id": 3, "verdict": "maybe"})) {
            Err(AnnotationError::Malformed(errs)) => {
                let fields: Vec<_> = errs.iter().map(|e| e.field.as_str()).collect();
                assert_eq!(fields, vec!["task_id", "annotator_id", "verdict"]);
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_judgment_request(&json!([1])).is_err());
    }
}
