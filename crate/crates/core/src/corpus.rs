//! Dataset ingest and the narrative-element → skill mapping.
//!
//! Two on-disk layouts are accepted by [`load_dataset`]:
//!
//! * normalized JSONL (`*.jsonl` files, or a single file), one [`QASample`] per line;
//! * the per-story CSV layout of the public fairy-tale QA release:
//!   `<dir>/<split>/<story>-story.csv` with `section,text` columns and
//!   `<dir>/<split>/<story>-questions.csv` with at least
//!   `cor_section`, `attribute`, `question` and `answer1` (or `answer`).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::{self, JsonlError};
use crate::Skill;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown annotation label {0:?}")]
    UnknownLabel(String),
    #[error("unknown split {0:?} (expected train, dev or test)")]
    UnknownSplit(String),
    #[error("story {story_id}: missing field {field:?}")]
    MissingField { story_id: String, field: String },
    #[error("story {story_id}: {message}")]
    InvalidRecord { story_id: String, message: String },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// The seven narrative-element labels of the source annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AnnotationLabel {
    Character,
    Setting,
    Action,
    Feeling,
    CausalRelationship,
    OutcomeResolution,
    Prediction,
}

impl AnnotationLabel {
    pub const ALL: [AnnotationLabel; 7] = [
        AnnotationLabel::Character,
        AnnotationLabel::Setting,
        AnnotationLabel::Action,
        AnnotationLabel::Feeling,
        AnnotationLabel::CausalRelationship,
        AnnotationLabel::OutcomeResolution,
        AnnotationLabel::Prediction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnnotationLabel::Character => "Character",
            AnnotationLabel::Setting => "Setting",
            AnnotationLabel::Action => "Action",
            AnnotationLabel::Feeling => "Feeling",
            AnnotationLabel::CausalRelationship => "Causal relationship",
            AnnotationLabel::OutcomeResolution => "Outcome resolution",
            AnnotationLabel::Prediction => "Prediction",
        }
    }

    pub fn skill(self) -> Skill {
        match self {
            AnnotationLabel::Character | AnnotationLabel::Setting => Skill::Remember,
            AnnotationLabel::Action => Skill::Understand,
            AnnotationLabel::Feeling => Skill::Evaluate,
            AnnotationLabel::CausalRelationship | AnnotationLabel::OutcomeResolution => {
                Skill::Analyze
            }
            AnnotationLabel::Prediction => Skill::Create,
        }
    }
}

impl FromStr for AnnotationLabel {
    type Err = CorpusError;

    /// Surrounding whitespace is ignored; matching is otherwise case-sensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let label = s.trim();
        AnnotationLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == label)
            .ok_or_else(|| CorpusError::UnknownLabel(label.to_string()))
    }
}

impl fmt::Display for AnnotationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn map_annotation_to_skill(label: &str) -> Result<Skill, CorpusError> {
    label.parse::<AnnotationLabel>().map(AnnotationLabel::skill)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    /// Directory names used by the per-story layout, in lookup order.
    fn dir_names(self) -> &'static [&'static str] {
        match self {
            Split::Train => &["train"],
            Split::Dev => &["dev", "val"],
            Split::Test => &["test"],
        }
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "dev" | "val" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::UnknownSplit(other.to_string())),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One question with its (relevant-section) context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QASample {
    pub story_id: String,
    pub section_ids: Vec<u32>,
    pub context: String,
    pub question: String,
    pub answer: String,
    pub annotation: String,
    pub skill: Skill,
    pub split: Split,
}

impl QASample {
    /// Builds a sample, deriving the skill from the annotation label.
    pub fn new(
        story_id: impl Into<String>,
        section_ids: Vec<u32>,
        context: impl Into<String>,
        question: impl Into<String>,
        answer: impl Into<String>,
        annotation: &str,
        split: Split,
    ) -> Result<Self, CorpusError> {
        let label: AnnotationLabel = annotation.parse()?;
        let sample = QASample {
            story_id: story_id.into(),
            section_ids,
            context: context.into(),
            question: question.into(),
            answer: answer.into(),
            annotation: label.as_str().to_string(),
            skill: label.skill(),
            split,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |message: &str| CorpusError::InvalidRecord {
            story_id: self.story_id.clone(),
            message: message.to_string(),
        };
        if self.context.trim().is_empty() {
            return Err(invalid("empty context"));
        }
        if self.answer.trim().is_empty() {
            return Err(invalid("empty answer"));
        }
        let mapped = map_annotation_to_skill(&self.annotation)?;
        if mapped != self.skill {
            return Err(invalid(&format!(
                "skill {} does not match annotation {:?} (expected {})",
                self.skill, self.annotation, mapped
            )));
        }
        Ok(())
    }
}

/// Loads one split from a dataset directory or a normalized JSONL file.
pub fn load_dataset(path: impl AsRef<Path>, split: &str) -> Result<Vec<QASample>, CorpusError> {
    let split: Split = split.parse()?;
    let path = path.as_ref();
    if path.is_file() {
        return load_jsonl_file(path, split);
    }
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };

    let mut jsonl_files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
        .collect();
    if !jsonl_files.is_empty() {
        jsonl_files.sort();
        let mut out = Vec::new();
        for file in jsonl_files {
            out.extend(load_jsonl_file(&file, split)?);
        }
        return Ok(out);
    }

    for name in split.dir_names() {
        let dir = path.join(name);
        if dir.is_dir() {
            return load_story_dir(&dir, split);
        }
    }
    Ok(Vec::new())
}

fn load_jsonl_file(path: &Path, split: Split) -> Result<Vec<QASample>, CorpusError> {
    let records: Vec<QASample> = jsonl::read(path)?;
    let mut out = Vec::new();
    for record in records {
        record.validate()?;
        if record.split == split {
            out.push(record);
        }
    }
    Ok(out)
}

fn read_csv_rows(path: &Path) -> Result<Vec<HashMap<String, String>>, CorpusError> {
    let csv_err = |source| CorpusError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(csv_err)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let row = headers
            .iter()
            .cloned()
            .zip(record.iter().map(str::to_string))
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

/// Source files spell labels in lowercase ("causal relationship"); the
/// closed vocabulary capitalizes the first letter only.
fn canonical_label(raw: &str) -> String {
    let raw = raw.trim();
    let mut chars = raw.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn parse_section_ids(raw: &str, story_id: &str) -> Result<Vec<u32>, CorpusError> {
    let mut ids = Vec::new();
    for part in raw.split(|c: char| c == ',' || c == ';' || c.is_whitespace()) {
        if part.is_empty() {
            continue;
        }
        let id = part.parse().map_err(|_| CorpusError::InvalidRecord {
            story_id: story_id.to_string(),
            message: format!("bad section id {part:?}"),
        })?;
        ids.push(id);
    }
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

fn load_story_dir(dir: &Path, split: Split) -> Result<Vec<QASample>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut question_files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with("-questions.csv"))
        })
        .collect();
    question_files.sort();

    let mut out = Vec::new();
    for qfile in question_files {
        let file_name = qfile.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let story_id = file_name.trim_end_matches("-questions.csv").to_string();
        let story_file = dir.join(format!("{story_id}-story.csv"));
        let sections: BTreeMap<u32, String> = read_csv_rows(&story_file)?
            .into_iter()
            .map(|row| {
                let id = row
                    .get("section")
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| CorpusError::MissingField {
                        story_id: story_id.clone(),
                        field: "section".into(),
                    })?;
                let text = row.get("text").cloned().ok_or_else(|| CorpusError::MissingField {
                    story_id: story_id.clone(),
                    field: "text".into(),
                })?;
                Ok((id, text))
            })
            .collect::<Result<_, CorpusError>>()?;

        for row in read_csv_rows(&qfile)? {
            let field = |names: &[&str]| -> Result<String, CorpusError> {
                names
                    .iter()
                    .find_map(|n| row.get(*n).filter(|v| !v.trim().is_empty()))
                    .map(|v| v.trim().to_string())
                    .ok_or_else(|| CorpusError::MissingField {
                        story_id: story_id.clone(),
                        field: names[0].to_string(),
                    })
            };
            let section_ids = parse_section_ids(&field(&["cor_section", "corr_sec"])?, &story_id)?;
            let mut parts = Vec::with_capacity(section_ids.len());
            for id in &section_ids {
                let text = sections.get(id).ok_or_else(|| CorpusError::InvalidRecord {
                    story_id: story_id.clone(),
                    message: format!("section {id} not found"),
                })?;
                parts.push(crate::text::normalize_space(text));
            }
            out.push(QASample::new(
                story_id.clone(),
                section_ids,
                parts.join(" "),
                field(&["question"])?,
                field(&["answer1", "answer"])?,
                &canonical_label(&field(&["attribute", "annotation"])?),
                split,
            )?);
        }
    }
    Ok(out)
}

/// Per-skill counts with all five skills present.
pub fn skill_histogram(samples: &[QASample]) -> BTreeMap<Skill, usize> {
    let mut hist: BTreeMap<Skill, usize> = Skill::ALL.iter().map(|s| (*s, 0)).collect();
    for s in samples {
        *hist.entry(s.skill).or_default() += 1;
    }
    hist
}

/// Published per-label question counts of the full dataset (10,580 questions).
pub const REFERENCE_LABEL_COUNTS: [(&str, usize); 7] = [
    ("Character", 1172),
    ("Setting", 630),
    ("Action", 3342),
    ("Feeling", 1024),
    ("Causal relationship", 2940),
    ("Outcome resolution", 986),
    ("Prediction", 486),
];

/// Largest absolute gap, in percentage points, between the label proportions
/// of `samples` and [`REFERENCE_LABEL_COUNTS`]. `None` for an empty input.
pub fn max_proportion_gap(samples: &[QASample]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let hist = annotation_histogram(samples);
    let total_ref: usize = REFERENCE_LABEL_COUNTS.iter().map(|(_, n)| n).sum();
    let n = samples.len() as f64;
    REFERENCE_LABEL_COUNTS
        .iter()
        .map(|(label, count)| {
            let got = 100.0 * hist.get(*label).copied().unwrap_or(0) as f64 / n;
            let want = 100.0 * *count as f64 / total_ref as f64;
            (got - want).abs()
        })
        .reduce(f64::max)
}

/// Per-label counts; labels are canonical so this never sees unknown ones.
pub fn annotation_histogram(samples: &[QASample]) -> BTreeMap<String, usize> {
    let mut hist: BTreeMap<String, usize> = AnnotationLabel::ALL
        .iter()
        .map(|l| (l.as_str().to_string(), 0))
        .collect();
    for s in samples {
        *hist.entry(s.annotation.clone()).or_default() += 1;
    }
    hist
}
