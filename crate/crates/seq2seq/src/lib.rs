//! A small transformer encoder-decoder question generator.
//!
//! Trained from scratch on serialized generator inputs, it stands in for a
//! pretrained seq2seq checkpoint in tests and desk-scale experiments. Weights
//! are initialized from a seeded RNG and all kernels run on the CPU, so two
//! runs with the same seed produce the same losses and questions.

mod model;
mod train;
pub mod vocab;

use std::path::Path;

use candle_core::{Tensor, D};
use taxoq_core::generator::{
    beam_search, fit_to_budget, rank_candidates, ArtifactManifest, GenerationConfig, GeneratorError,
    GeneratorRecord, QuestionCandidate, QuestionGenerator, SerializationMode, StepModel,
};

pub use model::ModelConfig;
pub use train::{train, window_means, TrainOptions, TrainOutcome};
pub use vocab::Vocab;

use model::{backend, Transformer};

pub const BACKEND_NAME: &str = "taxoq-seq2seq";
pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const VOCAB_FILE: &str = "vocab.json";
pub const MODEL_CONFIG_FILE: &str = "model.json";
pub const LOSS_LOG_FILE: &str = "loss_log.csv";

pub struct Seq2SeqGenerator {
    model: Transformer,
    vocab: Vocab,
    manifest: ArtifactManifest,
}

impl Seq2SeqGenerator {
    pub fn manifest(&self) -> &ArtifactManifest {
        &self.manifest
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn model_config(&self) -> ModelConfig {
        self.model.cfg
    }

    pub fn mode(&self) -> SerializationMode {
        self.manifest.mode
    }

    /// Serialized source ids, with the context cut from the right to fit the
    /// manifest's sequence budget. `None` if even the bare answer and skill
    /// segments do not fit.
    pub fn encode_record(&self, record: &GeneratorRecord) -> Result<Option<Vec<u32>>, GeneratorError> {
        encode_source(&self.vocab, record, self.manifest.max_sequence_length)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), GeneratorError> {
        let dir = dir.as_ref();
        let io = |e: std::io::Error| GeneratorError::Artifact(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        self.manifest.save(dir)?;
        self.model.save(&dir.join(WEIGHTS_FILE)).map_err(backend)?;
        std::fs::write(dir.join(VOCAB_FILE), to_json(&self.vocab)?).map_err(io)?;
        std::fs::write(dir.join(MODEL_CONFIG_FILE), to_json(&ModelFile::from(self))?).map_err(io)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, GeneratorError> {
        let dir = dir.as_ref();
        let manifest = ArtifactManifest::load(dir, BACKEND_NAME)?;
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name))
                .map_err(|e| GeneratorError::Artifact(format!("{}: {e}", dir.join(name).display())))
        };
        let parse = |e: serde_json::Error| GeneratorError::Artifact(e.to_string());
        let vocab: Vocab = serde_json::from_str(&read(VOCAB_FILE)?).map_err(parse)?;
        let file: ModelFile = serde_json::from_str(&read(MODEL_CONFIG_FILE)?).map_err(parse)?;
        if file.vocab_size != vocab.len() {
            return Err(GeneratorError::Artifact(format!(
                "model expects {} vocabulary items, vocabulary has {}",
                file.vocab_size,
                vocab.len()
            )));
        }
        let model = Transformer::load(file.config, file.vocab_size, &dir.join(WEIGHTS_FILE))?;
        Ok(Seq2SeqGenerator { model, vocab, manifest })
    }

    fn decode_ids(&self, ids: &[u32]) -> String {
        self.vocab.decode(ids)
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, GeneratorError> {
    serde_json::to_string_pretty(value).map_err(|e| GeneratorError::Artifact(e.to_string()))
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ModelFile {
    config: ModelConfig,
    vocab_size: usize,
}

impl From<&Seq2SeqGenerator> for ModelFile {
    fn from(g: &Seq2SeqGenerator) -> Self {
        ModelFile {
            config: g.model.cfg,
            vocab_size: g.model.vocab_size,
        }
    }
}

pub(crate) fn encode_source(
    vocab: &Vocab,
    record: &GeneratorRecord,
    max_tokens: usize,
) -> Result<Option<Vec<u32>>, GeneratorError> {
    let serialized = fit_to_budget(
        &record.augmented_context()?,
        &record.answer,
        record.skill,
        record.mode,
        max_tokens,
        |s| vocab::tokenize(s).len(),
    )?;
    Ok(serialized.map(|s| vocab.encode(&s)))
}

/// Encoder output and its additive key mask.
pub struct EncodedSource {
    memory: Tensor,
    key_mask: Tensor,
}

impl StepModel for Seq2SeqGenerator {
    type State = EncodedSource;

    fn encode(&self, source: &[u32]) -> Result<EncodedSource, GeneratorError> {
        let run = || -> candle_core::Result<EncodedSource> {
            let device = self.model.device();
            let src = Tensor::from_slice(source, (1, source.len()), device)?;
            let mask = Tensor::ones((1, source.len()), candle_core::DType::F32, device)?;
            let (memory, key_mask) = self.model.encode(&src, &mask)?;
            Ok(EncodedSource { memory, key_mask })
        };
        if source.is_empty() {
            return Err(GeneratorError::EmptyField("source"));
        }
        run().map_err(backend)
    }

    fn bos(&self) -> u32 {
        vocab::BOS
    }

    fn eos(&self) -> u32 {
        vocab::EOS
    }

    fn next_log_probs(&self, state: &EncodedSource, prefixes: &[Vec<u32>]) -> Result<Vec<Vec<f32>>, GeneratorError> {
        let run = || -> candle_core::Result<Vec<Vec<f32>>> {
            let n = prefixes.len();
            let t = prefixes.iter().map(Vec::len).max().unwrap_or(1);
            let max_t = self.model.cfg.max_positions;
            if t > max_t {
                candle_core::bail!("prefix of {t} tokens exceeds {max_t} positions");
            }
            let mut ids = vec![vocab::PAD; n * t];
            for (row, p) in prefixes.iter().enumerate() {
                ids[row * t..row * t + p.len()].copy_from_slice(p);
            }
            let device = self.model.device();
            let tgt = Tensor::from_vec(ids, (n, t), device)?;
            let (_, s, d) = state.memory.dims3()?;
            let memory = state.memory.broadcast_as((n, s, d))?.contiguous()?;
            let key_mask = state.key_mask.broadcast_as((n, 1, 1, s))?.contiguous()?;
            let logits = self.model.decode(&memory, &key_mask, &tgt)?;
            prefixes
                .iter()
                .enumerate()
                .map(|(row, p)| {
                    let last = logits.get(row)?.get(p.len().max(1) - 1)?;
                    let mut lp = candle_nn::ops::log_softmax(&last, D::Minus1)?.to_vec1::<f32>()?;
                    // never emit padding or a second BOS
                    lp[vocab::PAD as usize] = f32::NEG_INFINITY;
                    lp[vocab::BOS as usize] = f32::NEG_INFINITY;
                    Ok(lp)
                })
                .collect()
        };
        run().map_err(backend)
    }
}

impl QuestionGenerator for Seq2SeqGenerator {
    fn generate(
        &self,
        record: &GeneratorRecord,
        cfg: &GenerationConfig,
    ) -> Result<Vec<QuestionCandidate>, GeneratorError> {
        cfg.validate()?;
        if record.mode != self.manifest.mode {
            return Err(GeneratorError::InvalidConfig(format!(
                "artifact was trained on {} inputs, record uses {}",
                self.manifest.mode, record.mode
            )));
        }
        let source = self.encode_record(record)?.ok_or_else(|| {
            GeneratorError::InvalidConfig("answer and skill alone exceed the sequence budget".into())
        })?;
        let max_len = cfg.max_question_tokens.min(self.model.cfg.max_positions - 1);
        let hyps = beam_search(self, &source, cfg.beam_size, max_len)?;
        let decoded = hyps
            .into_iter()
            .map(|h| (self.decode_ids(&h.tokens), h.score))
            .filter(|(text, _)| !text.trim().is_empty());
        Ok(rank_candidates(decoded, cfg.beam_size, cfg.keep_all_beams))
    }
}
