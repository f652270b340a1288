//! Language-model backends that run without external model weights.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Completion, LanguageModel, SamplingConfig};
use crate::nlp::BackendError;

/// FNV-1a, stable across platforms and releases (unlike `DefaultHasher`).
pub(crate) fn stable_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Returns canned continuations, cycling through a script.
///
/// The starting offset depends on the prompt and seed, so different prompts
/// see different rotations while repeated calls stay identical. The i-th
/// returned completion has log-probability `-(1 + i) / 2`.
#[derive(Debug)]
pub struct ScriptedLanguageModel {
    script: Vec<String>,
    calls: AtomicUsize,
}

impl ScriptedLanguageModel {
    pub fn new<I, S>(script: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedLanguageModel {
            script: script.into_iter().map(Into::into).collect(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl LanguageModel for ScriptedLanguageModel {
    fn generate(&self, prompt: &str, cfg: &SamplingConfig) -> Result<Vec<Completion>, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if self.script.is_empty() {
            return Err(BackendError::new("scripted", "empty script"));
        }
        let offset = (stable_hash(prompt) ^ cfg.seed) as usize % self.script.len();
        Ok((0..cfg.num_samples)
            .map(|i| {
                let raw = &self.script[(offset + i) % self.script.len()];
                let text: String = raw
                    .split_inclusive(' ')
                    .take(cfg.max_new_tokens)
                    .collect();
                Completion {
                    text,
                    log_prob: -(1.0 + i as f64) / 2.0,
                }
            })
            .collect())
    }

    fn identity(&self) -> String {
        format!("scripted/{}", self.script.len())
    }
}

const END: &str = "</s>";
const START: &str = "<s>";

/// Interpolated word trigram model with nucleus sampling.
///
/// Trained on raw text, split into sentences. `P(w | u v)` mixes trigram,
/// bigram and unigram relative frequencies with weights 0.6 / 0.3 / 0.1.
/// Sampling keeps the smallest set of most likely words whose mass reaches
/// `top_p`, renormalizes, and draws from it; the reported log-probability is
/// the sum of model (not renormalized) log-probabilities of the drawn words.
#[derive(Debug, Clone)]
pub struct NgramLanguageModel {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    unigram: Vec<f64>,
    bigram: HashMap<usize, HashMap<usize, f64>>,
    trigram: HashMap<(usize, usize), HashMap<usize, f64>>,
    total: f64,
}

const LAMBDAS: [f64; 3] = [0.6, 0.3, 0.1];

fn words(text: &str) -> Vec<String> {
    crate::text::tokens(text)
        .into_iter()
        .map(|t| t.text.to_string())
        .collect()
}

impl NgramLanguageModel {
    pub fn train<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut model = NgramLanguageModel {
            vocab: Vec::new(),
            index: HashMap::new(),
            unigram: Vec::new(),
            bigram: HashMap::new(),
            trigram: HashMap::new(),
            total: 0.0,
        };
        model.intern(START);
        model.intern(END);
        for text in texts {
            for sentence in crate::text::sentences(text) {
                let mut ids = vec![model.intern(START), model.intern(START)];
                for w in words(&sentence) {
                    ids.push(model.intern(&w));
                }
                ids.push(model.intern(END));
                for i in 2..ids.len() {
                    let (u, v, w) = (ids[i - 2], ids[i - 1], ids[i]);
                    model.unigram[w] += 1.0;
                    model.total += 1.0;
                    *model.bigram.entry(v).or_default().entry(w).or_default() += 1.0;
                    *model.trigram.entry((u, v)).or_default().entry(w).or_default() += 1.0;
                }
            }
        }
        model
    }

    fn intern(&mut self, w: &str) -> usize {
        if let Some(&i) = self.index.get(w) {
            return i;
        }
        let i = self.vocab.len();
        self.vocab.push(w.to_string());
        self.index.insert(w.to_string(), i);
        self.unigram.push(0.0);
        i
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Full next-word distribution after history `(u, v)`.
    fn distribution(&self, u: usize, v: usize) -> Vec<f64> {
        let mut probs: Vec<f64> = self
            .unigram
            .iter()
            .map(|c| LAMBDAS[2] * c / self.total.max(1.0))
            .collect();
        let mut add = |table: Option<&HashMap<usize, f64>>, weight: f64, fallback: &mut f64| {
            match table {
                Some(t) => {
                    let sum: f64 = t.values().sum();
                    for (w, c) in t {
                        probs[*w] += weight * c / sum;
                    }
                }
                None => *fallback += weight,
            }
        };
        let mut unused = 0.0;
        add(self.bigram.get(&v), LAMBDAS[1], &mut unused);
        add(self.trigram.get(&(u, v)), LAMBDAS[0], &mut unused);
        // unseen histories hand their weight to the unigram term
        if unused > 0.0 {
            let scale = 1.0 + unused / LAMBDAS[2];
            for (p, c) in probs.iter_mut().zip(&self.unigram) {
                *p += (scale - 1.0) * LAMBDAS[2] * c / self.total.max(1.0);
            }
        }
        probs[self.index[START]] = 0.0;
        probs
    }

    fn id_or_start(&self, w: &str) -> usize {
        self.index.get(w).copied().unwrap_or(self.index[START])
    }
}

fn join_words(words: &[&str]) -> String {
    let mut out = String::new();
    for w in words {
        let punct = w.chars().all(|c| !c.is_alphanumeric());
        if !out.is_empty() && !(punct && *w != "\"" && *w != "(") {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

impl LanguageModel for NgramLanguageModel {
    fn generate(&self, prompt: &str, cfg: &SamplingConfig) -> Result<Vec<Completion>, BackendError> {
        if self.total == 0.0 {
            return Err(BackendError::new("ngram", "model has no training data"));
        }
        let history = words(prompt);
        let n = history.len();
        let u0 = if n >= 2 { self.id_or_start(&history[n - 2]) } else { self.index[START] };
        let v0 = if n >= 1 { self.id_or_start(&history[n - 1]) } else { self.index[START] };
        let end = self.index[END];
        let mut out = Vec::with_capacity(cfg.num_samples);
        for sample in 0..cfg.num_samples {
            let mut rng = ChaCha8Rng::seed_from_u64(
                stable_hash(prompt) ^ cfg.seed.rotate_left(17) ^ (sample as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            let (mut u, mut v) = (u0, v0);
            let mut drawn: Vec<&str> = Vec::new();
            let mut log_prob = 0.0;
            for _ in 0..cfg.max_new_tokens {
                let probs = self.distribution(u, v);
                let mut order: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
                order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
                let mut nucleus = Vec::new();
                let mut mass = 0.0;
                for w in order {
                    nucleus.push(w);
                    mass += probs[w];
                    if mass >= cfg.top_p {
                        break;
                    }
                }
                let mut x = rng.random::<f64>() * mass;
                let mut choice = *nucleus.last().expect("non-empty nucleus");
                for &w in &nucleus {
                    x -= probs[w];
                    if x <= 0.0 {
                        choice = w;
                        break;
                    }
                }
                log_prob += probs[choice].ln();
                if choice == end {
                    break;
                }
                drawn.push(&self.vocab[choice]);
                (u, v) = (v, choice);
            }
            out.push(Completion {
                text: join_words(&drawn),
                log_prob,
            });
        }
        Ok(out)
    }

    fn identity(&self) -> String {
        format!("ngram3/{}", self.vocab.len())
    }
}
