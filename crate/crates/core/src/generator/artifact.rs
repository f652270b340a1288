use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeneratorError, SerializationMode, SPECIAL_TOKENS};
use crate::Skill;

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Describes a checkpoint directory. Backends store their weights next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub format_version: u32,
    pub backend: String,
    pub mode: SerializationMode,
    pub special_tokens: Vec<String>,
    /// Whether the special tokens are single vocabulary items.
    pub special_tokens_atomic: bool,
    pub max_sequence_length: usize,
    pub seed: u64,
}

impl ArtifactManifest {
    pub fn new(backend: impl Into<String>, mode: SerializationMode, max_sequence_length: usize, seed: u64) -> Self {
        ArtifactManifest {
            format_version: ARTIFACT_FORMAT_VERSION,
            backend: backend.into(),
            mode,
            special_tokens: SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect(),
            special_tokens_atomic: true,
            max_sequence_length,
            seed,
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), GeneratorError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| GeneratorError::Artifact(e.to_string()))?;
        std::fs::write(dir.as_ref().join(MANIFEST_FILE), text)
            .map_err(|e| GeneratorError::Artifact(e.to_string()))
    }

    /// Loads and checks the format version and backend name.
    pub fn load(dir: impl AsRef<Path>, backend: &str) -> Result<Self, GeneratorError> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| GeneratorError::Artifact(format!("{}: {e}", path.display())))?;
        let manifest: ArtifactManifest = serde_json::from_str(&text)
            .map_err(|e| GeneratorError::Artifact(format!("{}: {e}", path.display())))?;
        if manifest.format_version != ARTIFACT_FORMAT_VERSION {
            return Err(GeneratorError::ArtifactVersion {
                found: manifest.format_version,
                expected: ARTIFACT_FORMAT_VERSION,
            });
        }
        if manifest.backend != backend {
            return Err(GeneratorError::Artifact(format!(
                "artifact was written by backend {:?}, not {backend:?}",
                manifest.backend
            )));
        }
        Ok(manifest)
    }
}

/// One line of the generated-question file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedQuestion {
    pub context: String,
    pub answer: String,
    pub skill: Skill,
    pub question: String,
    pub beam_rank: usize,
    pub score: f64,
    pub focus: Option<String>,
    pub knowledge: Option<String>,
    pub mode: SerializationMode,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let m = ArtifactManifest::new("tiny", SerializationMode::Full, 384, 7);
        m.save(dir.path()).unwrap();
        assert_eq!(ArtifactManifest::load(dir.path(), "tiny").unwrap(), m);
        assert!(ArtifactManifest::load(dir.path(), "other").is_err());

        let old = ArtifactManifest { format_version: 99, ..m };
        old.save(dir.path()).unwrap();
        assert!(matches!(
            ArtifactManifest::load(dir.path(), "tiny"),
            Err(GeneratorError::ArtifactVersion { found: 99, .. })
        ));
    }

    #[test]
    fn generated_question_schema() {
        let q = GeneratedQuestion {
            context: "c".into(),
            answer: "a".into(),
            skill: Skill::Create,
            question: "q?".into(),
            beam_rank: 0,
            score: -1.5,
            focus: None,
            knowledge: Some("k".into()),
            mode: SerializationMode::Full,
        };
        let v: serde_json::Value = serde_json::to_value(&q).unwrap();
        assert_eq!(v["skill"], "create");
        assert_eq!(v["mode"], "full");
        assert!(v["focus"].is_null());
    }
}
