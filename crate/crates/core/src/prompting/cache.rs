//! Replayable elicitation results keyed by context hash and skill.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FocusCandidate, FocusSource, KnowledgeCandidate, PromptError, ThoughtChain};
use crate::jsonl::{self, JsonlError};
use crate::templates::TemplateRegistry;
use crate::text::sha256_hex;
use crate::Skill;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub context_hash: String,
    pub skill: Skill,
    pub pair_index: usize,
    pub focus: String,
    pub knowledge: String,
    pub chain_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus_source: Option<FocusSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus_log_prob: Option<f64>,
}

impl CacheRecord {
    pub fn from_chain(chain: &ThoughtChain) -> Self {
        CacheRecord {
            context_hash: sha256_hex(&chain.context),
            skill: chain.skill,
            pair_index: chain.pair_index,
            focus: chain.focus.text.clone(),
            knowledge: chain.knowledge.text.clone(),
            chain_score: chain.chain_score,
            focus_source: Some(chain.focus.source),
            focus_log_prob: chain.focus.log_prob,
        }
    }

    /// Rebuilds the chain. The context must hash to `context_hash`.
    pub fn to_chain(
        &self,
        context: &str,
        registry: &TemplateRegistry,
    ) -> Result<ThoughtChain, PromptError> {
        let pair = registry.get(self.pair_index)?.clone();
        let focus = FocusCandidate {
            text: self.focus.clone(),
            source: self.focus_source.unwrap_or(FocusSource::Lm),
            pair_index: self.pair_index,
            log_prob: self.focus_log_prob,
        };
        let knowledge = KnowledgeCandidate {
            text: self.knowledge.clone(),
            pair_index: self.pair_index,
            focus: focus.clone(),
            log_prob: self.chain_score - focus.score(),
        };
        Ok(ThoughtChain {
            context: context.to_string(),
            skill: self.skill,
            pair_index: self.pair_index,
            pair,
            focus,
            knowledge,
            chain_score: self.chain_score,
        })
    }
}

/// In-memory view of an elicitation cache file. Records are kept in
/// insertion order per key, best chain first.
#[derive(Debug, Clone, Default)]
pub struct ElicitationCache {
    entries: BTreeMap<(String, Skill), Vec<CacheRecord>>,
}

impl ElicitationCache {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, JsonlError> {
        let mut cache = ElicitationCache::default();
        if path.as_ref().exists() {
            for r in jsonl::read::<CacheRecord>(path)? {
                cache.insert(r);
            }
        }
        Ok(cache)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), JsonlError> {
        jsonl::write(path, self.entries.values().flatten())
    }

    pub fn insert(&mut self, record: CacheRecord) {
        self.entries
            .entry((record.context_hash.clone(), record.skill))
            .or_default()
            .push(record);
    }

    pub fn get(&self, context: &str, skill: Skill) -> Option<&[CacheRecord]> {
        self.entries
            .get(&(sha256_hex(context), skill))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
