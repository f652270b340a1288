use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taxoq_core::generator::{
    beam_search, write_loss_log, ArtifactManifest, GeneratorError, GeneratorRecord, LossLogEntry,
    SerializationMode, TrainingConfig,
};
use taxoq_core::metrics::rouge_l;

use crate::model::{backend, Batch, ModelConfig, Transformer};
use crate::vocab::{self, Vocab};
use crate::{encode_source, Seq2SeqGenerator, BACKEND_NAME, LOSS_LOG_FILE};

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub training: TrainingConfig,
    pub model: ModelConfig,
    /// Extra texts whose tokens join the vocabulary, e.g. passages the
    /// generator will later be run on.
    pub vocab_texts: Vec<String>,
    /// Dev records scored during training; at most this many are decoded.
    pub dev_limit: usize,
    /// When set, the loss log and the final artifact are written here.
    pub output_dir: Option<std::path::PathBuf>,
}

pub struct TrainOutcome {
    pub generator: Seq2SeqGenerator,
    pub loss_log: Vec<LossLogEntry>,
    /// Records dropped because answer and skill alone exceed the budget.
    pub skipped: usize,
    /// (step, mean dev ROUGE-L F1) at each evaluation.
    pub dev_scores: Vec<(usize, f64)>,
    /// Step whose weights were kept.
    pub selected_step: usize,
}

/// Mean loss over consecutive windows of `window` steps; a trailing partial
/// window is dropped.
pub fn window_means(log: &[LossLogEntry], window: usize) -> Vec<f64> {
    if window == 0 {
        return Vec::new();
    }
    log.chunks_exact(window)
        .map(|c| c.iter().map(|e| e.loss).sum::<f64>() / window as f64)
        .collect()
}

fn single_mode(records: &[GeneratorRecord]) -> Result<SerializationMode, GeneratorError> {
    let mode = records[0].mode;
    if records.iter().any(|r| r.mode != mode) {
        return Err(GeneratorError::InvalidConfig(
            "training records mix serialization modes".into(),
        ));
    }
    Ok(mode)
}

/// Fine-tunes a fresh model on `records` under summed token NLL, averaged
/// over each batch. With dev records, the weights scoring the best dev
/// ROUGE-L at an evaluation point are kept.
pub fn train(
    records: &[GeneratorRecord],
    dev: &[GeneratorRecord],
    opts: &TrainOptions,
) -> Result<TrainOutcome, GeneratorError> {
    let cfg = &opts.training;
    cfg.validate()?;
    opts.model.validate()?;
    if cfg.max_sequence_length > opts.model.max_positions {
        return Err(GeneratorError::InvalidConfig(format!(
            "max_sequence_length {} exceeds the model's {} positions",
            cfg.max_sequence_length, opts.model.max_positions
        )));
    }
    if records.is_empty() {
        return Err(GeneratorError::EmptyDataset);
    }
    let mode = single_mode(records)?;

    let mut texts = Vec::new();
    for r in records {
        texts.push(taxoq_core::generator::serialize_input(r)?);
        texts.push(r.question.clone().ok_or(GeneratorError::EmptyField("question"))?);
    }
    texts.extend(opts.vocab_texts.iter().cloned());
    let vocab = Vocab::build(texts.iter().map(String::as_str), 1);

    let mut examples: Vec<(Vec<u32>, Vec<u32>)> = Vec::new();
    let mut skipped = 0;
    for r in records {
        let question = r.question.as_deref().unwrap_or_default();
        match encode_source(&vocab, r, cfg.max_sequence_length)? {
            Some(src) => {
                let mut tgt = vocab.encode(question);
                tgt.truncate(opts.model.max_positions - 1);
                examples.push((src, tgt));
            }
            None => {
                warn!("skipping record: answer and skill exceed {} tokens", cfg.max_sequence_length);
                skipped += 1;
            }
        }
    }
    if examples.is_empty() {
        return Err(GeneratorError::EmptyDataset);
    }

    let model = Transformer::new(opts.model, vocab.len(), cfg.seed)?;
    let mut optimizer = AdamW::new(
        model.vars(),
        ParamsAdamW {
            lr: cfg.learning_rate(0),
            eps: cfg.adam_epsilon,
            weight_decay: cfg.weight_decay,
            ..ParamsAdamW::default()
        },
    )
    .map_err(backend)?;
    let generator = Seq2SeqGenerator {
        model,
        vocab,
        manifest: ArtifactManifest::new(BACKEND_NAME, mode, cfg.max_sequence_length, cfg.seed),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut loss_log = Vec::with_capacity(cfg.max_iterations);
    let mut dev_scores = Vec::new();
    let mut best: Option<(f64, usize, _)> = None;
    let dev = &dev[..dev.len().min(if opts.dev_limit == 0 { dev.len() } else { opts.dev_limit })];

    for step in 0..cfg.max_iterations {
        let mut batch_ids = Vec::with_capacity(cfg.batch_size);
        while batch_ids.len() < cfg.batch_size.min(examples.len()) {
            if order.is_empty() {
                order = (0..examples.len()).collect();
                order.shuffle(&mut rng);
            }
            batch_ids.push(order.pop().expect("refilled above"));
        }
        let pairs: Vec<(&[u32], &[u32])> = batch_ids
            .iter()
            .map(|&i| (examples[i].0.as_slice(), examples[i].1.as_slice()))
            .collect();
        let lr = cfg.learning_rate(step);
        let loss = (|| {
            let batch = Batch::new(&pairs, vocab::BOS, vocab::EOS, vocab::PAD, generator.model.device())?;
            let loss = generator.model.loss(&batch)?;
            optimizer.set_learning_rate(lr);
            optimizer.backward_step(&loss)?;
            loss.to_scalar::<f32>()
        })()
        .map_err(backend)?;
        loss_log.push(LossLogEntry {
            step: step + 1,
            loss: f64::from(loss),
            learning_rate: lr,
        });

        let last = step + 1 == cfg.max_iterations;
        if !dev.is_empty() && ((step + 1) % cfg.eval_every == 0 || last) {
            let score = dev_rouge_l(&generator, dev)?;
            info!("step {}: loss {loss:.4}, dev ROUGE-L {score:.4}", step + 1);
            dev_scores.push((step + 1, score));
            if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                best = Some((score, step + 1, generator.model.snapshot().map_err(backend)?));
            }
        }
    }

    let selected_step = match best {
        Some((_, step, weights)) => {
            generator.model.restore(&weights).map_err(backend)?;
            step
        }
        None => cfg.max_iterations,
    };
    if let Some(dir) = &opts.output_dir {
        generator.save(dir)?;
        write_loss_log(dir.join(LOSS_LOG_FILE), &loss_log)?;
    }
    Ok(TrainOutcome {
        generator,
        loss_log,
        skipped,
        dev_scores,
        selected_step,
    })
}

/// Greedy decoding ROUGE-L F1 against the reference questions.
fn dev_rouge_l(generator: &Seq2SeqGenerator, dev: &[GeneratorRecord]) -> Result<f64, GeneratorError> {
    let mut total = 0.0;
    let mut n = 0usize;
    for r in dev {
        let (Some(reference), Some(src)) = (r.question.as_deref(), generator.encode_record(r)?) else {
            continue;
        };
        let hyps = beam_search(generator, &src, 1, 32)?;
        let text = hyps.first().map(|h| generator.vocab.decode(&h.tokens)).unwrap_or_default();
        total += rouge_l(&text, reference).f1;
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}
