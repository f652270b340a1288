use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AnnotationTask, Aspect, Judgment, PairwiseChoice, TaskBody, TaskKind, Verdict};
use crate::metrics::{krippendorff_alpha, RatingMatrix};
use crate::Skill;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseCell {
    pub wins_pct: f64,
    pub ties_pct: f64,
    pub losses_pct: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillCell {
    pub accuracy: f64,
    pub correct: usize,
    pub judged: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeCell {
    pub makes_sense_pct: f64,
    pub relevant_pct: f64,
    pub n: usize,
}

fn pct(part: usize, whole: usize) -> f64 {
    100.0 * part as f64 / whole as f64
}

fn task_map(tasks: &[AnnotationTask]) -> BTreeMap<&str, &AnnotationTask> {
    tasks.iter().map(|t| (t.task_id.as_str(), t)).collect()
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Preference {
    System,
    Baseline,
    Tie,
}

impl Preference {
    fn label(self) -> &'static str {
        match self {
            Preference::System => "system",
            Preference::Baseline => "baseline",
            Preference::Tie => "tie",
        }
    }
}

/// De-anonymizes a pairwise verdict relative to the compared system.
fn preference(task: &AnnotationTask, choice: PairwiseChoice) -> Preference {
    let winner = match choice {
        PairwiseChoice::Tie => return Preference::Tie,
        PairwiseChoice::A => Some(task.hidden.system_a.as_str()),
        PairwiseChoice::B => task.hidden.system_b.as_deref(),
    };
    if winner == Some(task.system()) {
        Preference::System
    } else {
        Preference::Baseline
    }
}

/// Wins/ties/losses of each system against the baseline, per aspect, pooled
/// over annotators. Cells without judgments are `None`.
pub fn aggregate_pairwise(
    tasks: &[AnnotationTask],
    judgments: &[Judgment],
) -> BTreeMap<String, BTreeMap<Aspect, Option<PairwiseCell>>> {
    let by_id = task_map(tasks);
    let mut counts: BTreeMap<(String, Aspect), [usize; 3]> = BTreeMap::new();
    let mut out: BTreeMap<String, BTreeMap<Aspect, Option<PairwiseCell>>> = BTreeMap::new();
    for t in tasks.iter().filter(|t| t.kind() == TaskKind::Pairwise) {
        out.entry(t.system().to_string())
            .or_insert_with(|| Aspect::ALL.iter().map(|a| (*a, None)).collect());
    }
    for j in judgments {
        let (Some(task), Verdict::Pairwise(choice)) = (by_id.get(j.task_id.as_str()), &j.verdict) else {
            continue;
        };
        let TaskBody::Pairwise { aspect, .. } = task.body else {
            continue;
        };
        let slot = counts.entry((task.system().to_string(), aspect)).or_default();
        match preference(task, *choice) {
            Preference::System => slot[0] += 1,
            Preference::Tie => slot[1] += 1,
            Preference::Baseline => slot[2] += 1,
        }
    }
    for ((system, aspect), [wins, ties, losses]) in counts {
        let n = wins + ties + losses;
        out.entry(system).or_default().insert(
            aspect,
            Some(PairwiseCell {
                wins_pct: pct(wins, n),
                ties_pct: pct(ties, n),
                losses_pct: pct(losses, n),
                n,
            }),
        );
    }
    out
}

/// Fraction of SKILL judgments whose annotated skill equals the skill the
/// question was generated for, per conditioned skill.
pub fn aggregate_skill_accuracy(tasks: &[AnnotationTask], judgments: &[Judgment]) -> BTreeMap<Skill, Option<SkillCell>> {
    let by_id = task_map(tasks);
    let mut counts: BTreeMap<Skill, (usize, usize)> = BTreeMap::new();
    for j in judgments {
        let (Some(task), Verdict::Skill { skill, .. }) = (by_id.get(j.task_id.as_str()), &j.verdict) else {
            continue;
        };
        let slot = counts.entry(task.hidden.conditioned_skill).or_default();
        slot.1 += 1;
        if *skill == task.hidden.conditioned_skill {
            slot.0 += 1;
        }
    }
    Skill::ALL
        .iter()
        .map(|s| {
            let cell = counts.get(s).map(|&(correct, judged)| SkillCell {
                accuracy: correct as f64 / judged as f64,
                correct,
                judged,
            });
            (*s, cell)
        })
        .collect()
}

/// Percentage of "yes" for each knowledge question, per system.
pub fn aggregate_knowledge(tasks: &[AnnotationTask], judgments: &[Judgment]) -> BTreeMap<String, KnowledgeCell> {
    let by_id = task_map(tasks);
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for j in judgments {
        let (Some(task), Verdict::Knowledge { makes_sense, relevant }) = (by_id.get(j.task_id.as_str()), &j.verdict)
        else {
            continue;
        };
        let slot = counts.entry(task.system().to_string()).or_default();
        slot.0 += usize::from(*makes_sense);
        slot.1 += usize::from(*relevant);
        slot.2 += 1;
    }
    counts
        .into_iter()
        .map(|(system, (sense, rel, n))| {
            (
                system,
                KnowledgeCell {
                    makes_sense_pct: pct(sense, n),
                    relevant_pct: pct(rel, n),
                    n,
                },
            )
        })
        .collect()
}

/// Krippendorff's alpha per judged dimension: each pairwise aspect,
/// "skill", "makes_sense" and "relevant". Dimensions without overlapping
/// annotators are `None`.
pub fn agreement(tasks: &[AnnotationTask], judgments: &[Judgment]) -> BTreeMap<String, Option<f64>> {
    let by_id = task_map(tasks);
    // dimension -> task -> annotator -> label
    let mut ratings: BTreeMap<String, BTreeMap<&str, BTreeMap<&str, String>>> = BTreeMap::new();
    let mut dims: BTreeSet<String> = BTreeSet::new();
    for t in tasks {
        match &t.body {
            TaskBody::Pairwise { aspect, .. } => {
                dims.insert(aspect.as_str().to_string());
            }
            TaskBody::Skill { .. } => {
                dims.insert("skill".into());
            }
            TaskBody::Knowledge { .. } => {
                dims.insert("makes_sense".into());
                dims.insert("relevant".into());
            }
        }
    }
    for j in judgments {
        let Some(task) = by_id.get(j.task_id.as_str()) else { continue };
        let mut add = |dim: &str, label: String| {
            ratings
                .entry(dim.to_string())
                .or_default()
                .entry(task.task_id.as_str())
                .or_default()
                .insert(j.annotator_id.as_str(), label);
        };
        match (&task.body, &j.verdict) {
            (TaskBody::Pairwise { aspect, .. }, Verdict::Pairwise(choice)) => {
                add(aspect.as_str(), preference(task, *choice).label().to_string())
            }
            (TaskBody::Skill { .. }, Verdict::Skill { skill, .. }) => add("skill", skill.as_str().to_string()),
            (TaskBody::Knowledge { .. }, Verdict::Knowledge { makes_sense, relevant }) => {
                add("makes_sense", makes_sense.to_string());
                add("relevant", relevant.to_string());
            }
            _ => {}
        }
    }
    dims.into_iter()
        .map(|dim| {
            let alpha = ratings.get(&dim).and_then(|items| {
                let annotators: BTreeSet<&str> = items.values().flat_map(|m| m.keys().copied()).collect();
                let matrix = RatingMatrix::new(
                    items
                        .values()
                        .map(|m| annotators.iter().map(|a| m.get(a).cloned()).collect())
                        .collect(),
                );
                krippendorff_alpha(&matrix).ok()
            });
            (dim, alpha)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub pairwise: BTreeMap<String, BTreeMap<Aspect, Option<PairwiseCell>>>,
    pub skill: BTreeMap<Skill, Option<SkillCell>>,
    pub knowledge: BTreeMap<String, KnowledgeCell>,
    pub agreement: BTreeMap<String, Option<f64>>,
}

impl AggregateReport {
    pub fn compute(tasks: &[AnnotationTask], judgments: &[Judgment]) -> Self {
        AggregateReport {
            pairwise: aggregate_pairwise(tasks, judgments),
            skill: aggregate_skill_accuracy(tasks, judgments),
            knowledge: aggregate_knowledge(tasks, judgments),
            agreement: agreement(tasks, judgments),
        }
    }

    pub fn render_table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"));
        let mut out = String::new();
        let _ = writeln!(out, "Question quality vs baseline (wins% / ties%)");
        let _ = writeln!(out, "| system | grammaticality | answerability | relevance |");
        let _ = writeln!(out, "|---|---|---|---|");
        for (system, aspects) in &self.pairwise {
            let cols: Vec<String> = Aspect::ALL
                .iter()
                .map(|a| match aspects.get(a).copied().flatten() {
                    Some(c) => format!("{:.1} / {:.1}", c.wins_pct, c.ties_pct),
                    None => "-".into(),
                })
                .collect();
            let _ = writeln!(out, "| {system} | {} |", cols.join(" | "));
        }
        let _ = writeln!(out, "\nSkill accuracy (%)");
        let _ = writeln!(out, "| skill | accuracy | judged |");
        let _ = writeln!(out, "|---|---|---|");
        for (skill, c) in &self.skill {
            let _ = writeln!(
                out,
                "| {skill} | {} | {} |",
                cell(c.map(|c| c.accuracy * 100.0)),
                c.map_or(0, |c| c.judged)
            );
        }
        let _ = writeln!(out, "\nKnowledge quality (% yes)");
        let _ = writeln!(out, "| system | makes sense | relevant | judged |");
        let _ = writeln!(out, "|---|---|---|---|");
        for (system, c) in &self.knowledge {
            let _ = writeln!(out, "| {system} | {:.1} | {:.1} | {} |", c.makes_sense_pct, c.relevant_pct, c.n);
        }
        let _ = writeln!(out, "\nKrippendorff's alpha");
        for (dim, a) in &self.agreement {
            let _ = writeln!(out, "{dim}: {}", a.map_or_else(|| "-".to_string(), |x| format!("{x:.4}")));
        }
        out
    }
}
