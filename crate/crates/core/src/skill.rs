use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Comprehension skill, ordered from lower to higher cognitive level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Skill {
    Remember,
    Understand,
    Analyze,
    Create,
    Evaluate,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown skill {0:?}")]
pub struct ParseSkillError(pub String);

impl Skill {
    pub const ALL: [Skill; 5] = [
        Skill::Remember,
        Skill::Understand,
        Skill::Analyze,
        Skill::Create,
        Skill::Evaluate,
    ];

    /// Cognitive rank, 1 (REMEMBER) through 5 (EVALUATE).
    pub fn rank(self) -> u8 {
        match self {
            Skill::Remember => 1,
            Skill::Understand => 2,
            Skill::Analyze => 3,
            Skill::Create => 4,
            Skill::Evaluate => 5,
        }
    }

    pub fn from_rank(rank: u8) -> Option<Skill> {
        Skill::ALL.iter().copied().find(|s| s.rank() == rank)
    }

    /// Zero-based position, handy for fixed-size per-skill arrays.
    pub fn index(self) -> usize {
        usize::from(self.rank() - 1)
    }

    /// Lowercase name used in serialized inputs and files.
    pub fn as_str(self) -> &'static str {
        match self {
            Skill::Remember => "remember",
            Skill::Understand => "understand",
            Skill::Analyze => "analyze",
            Skill::Create => "create",
            Skill::Evaluate => "evaluate",
        }
    }

    /// One-line description shown to annotators.
    pub fn description(self) -> &'static str {
        match self {
            Skill::Remember => "Retrieve relevant facts from input passage.",
            Skill::Understand => "Construct meanings from recalled facts.",
            Skill::Analyze => {
                "Break facts into its constituent parts and determine how the parts are related to one another."
            }
            Skill::Create => "Re-organize elements into a new pattern or structure.",
            Skill::Evaluate => "Make judgments based on established criteria.",
        }
    }
}

impl fmt::Display for Skill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Skill {
    type Err = ParseSkillError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        Skill::ALL
            .iter()
            .copied()
            .find(|skill| skill.as_str().eq_ignore_ascii_case(trimmed))
            .ok_or_else(|| ParseSkillError(s.to_string()))
    }
}
