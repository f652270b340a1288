//! Pre-norm transformer encoder-decoder with tied input/output embeddings.

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{Device, Tensor, Var, D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use taxoq_core::generator::GeneratorError;

pub(crate) type CResult<T> = candle_core::Result<T>;

pub(crate) fn backend(e: candle_core::Error) -> GeneratorError {
    GeneratorError::Backend(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub ff_dim: usize,
    /// Longest source or target sequence, in tokens.
    pub max_positions: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 128,
            heads: 4,
            encoder_layers: 2,
            decoder_layers: 2,
            ff_dim: 256,
            max_positions: 448,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let ok = self.d_model > 0
            && self.heads > 0
            && self.d_model % self.heads == 0
            && self.encoder_layers > 0
            && self.decoder_layers > 0
            && self.ff_dim > 0
            && self.max_positions > 1;
        if ok {
            Ok(())
        } else {
            Err(GeneratorError::InvalidConfig(format!(
                "invalid model configuration {self:?}"
            )))
        }
    }
}

pub(crate) struct Transformer {
    pub cfg: ModelConfig,
    pub vocab_size: usize,
    params: BTreeMap<String, Var>,
    device: Device,
}

/// Additive attention mask values for blocked positions.
const NEG: f64 = -1e9;

impl Transformer {
    pub fn new(cfg: ModelConfig, vocab_size: usize, seed: u64) -> Result<Self, GeneratorError> {
        cfg.validate()?;
        let device = Device::Cpu;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        let d = cfg.d_model;
        let mut add = |name: String, shape: &[usize], init: Init, rng: &mut ChaCha8Rng| -> Result<(), GeneratorError> {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = match init {
                Init::Uniform(a) => (0..n).map(|_| rng.random_range(-a..a)).collect(),
                Init::Const(c) => vec![c; n],
            };
            let t = Tensor::from_vec(data, shape, &device).map_err(backend)?;
            params.insert(name, Var::from_tensor(&t).map_err(backend)?);
            Ok(())
        };
        let xavier = |fan_in: usize, fan_out: usize| Init::Uniform((6.0 / (fan_in + fan_out) as f32).sqrt());
        let emb = Init::Uniform(1.0 / (d as f32).sqrt());
        add("tok_emb".into(), &[vocab_size, d], emb, &mut rng)?;
        add("src_pos".into(), &[cfg.max_positions, d], Init::Uniform(0.02), &mut rng)?;
        add("tgt_pos".into(), &[cfg.max_positions, d], Init::Uniform(0.02), &mut rng)?;
        let mut linear = |name: String, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng| -> Result<(), GeneratorError> {
            add(format!("{name}.w"), &[fan_in, fan_out], xavier(fan_in, fan_out), rng)?;
            add(format!("{name}.b"), &[fan_out], Init::Const(0.0), rng)
        };
        let mut layer_names = Vec::new();
        for i in 0..cfg.encoder_layers {
            let p = format!("enc.{i}");
            for proj in ["q", "k", "v", "o"] {
                linear(format!("{p}.attn.{proj}"), d, d, &mut rng)?;
            }
            linear(format!("{p}.ff1"), d, cfg.ff_dim, &mut rng)?;
            linear(format!("{p}.ff2"), cfg.ff_dim, d, &mut rng)?;
            layer_names.extend([format!("{p}.ln1"), format!("{p}.ln2")]);
        }
        for i in 0..cfg.decoder_layers {
            let p = format!("dec.{i}");
            for block in ["self", "cross"] {
                for proj in ["q", "k", "v", "o"] {
                    linear(format!("{p}.{block}.{proj}"), d, d, &mut rng)?;
                }
            }
            linear(format!("{p}.ff1"), d, cfg.ff_dim, &mut rng)?;
            linear(format!("{p}.ff2"), cfg.ff_dim, d, &mut rng)?;
            layer_names.extend([format!("{p}.ln1"), format!("{p}.ln2"), format!("{p}.ln3")]);
        }
        layer_names.extend(["enc_ln".to_string(), "dec_ln".to_string()]);
        for name in layer_names {
            add(format!("{name}.g"), &[d], Init::Const(1.0), &mut rng)?;
            add(format!("{name}.b"), &[d], Init::Const(0.0), &mut rng)?;
        }
        Ok(Transformer {
            cfg,
            vocab_size,
            params,
            device,
        })
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn vars(&self) -> Vec<Var> {
        self.params.values().cloned().collect()
    }

    pub fn snapshot(&self) -> CResult<BTreeMap<String, Tensor>> {
        self.params
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?)))
            .collect()
    }

    pub fn restore(&self, snapshot: &BTreeMap<String, Tensor>) -> CResult<()> {
        for (k, v) in &self.params {
            if let Some(t) = snapshot.get(k) {
                v.set(t)?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> CResult<()> {
        let map: std::collections::HashMap<String, Tensor> = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&map, path)
    }

    /// Loads weights into a freshly shaped model; every parameter must be
    /// present with a matching shape.
    pub fn load(cfg: ModelConfig, vocab_size: usize, path: &Path) -> Result<Self, GeneratorError> {
        let model = Transformer::new(cfg, vocab_size, 0)?;
        let tensors = candle_core::safetensors::load(path, &model.device).map_err(backend)?;
        for (name, var) in &model.params {
            let t = tensors
                .get(name)
                .ok_or_else(|| GeneratorError::Artifact(format!("weights lack {name}")))?;
            if t.dims() != var.dims() {
                return Err(GeneratorError::Artifact(format!(
                    "{name} has shape {:?}, expected {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(t).map_err(backend)?;
        }
        Ok(model)
    }

    fn p(&self, name: &str) -> &Tensor {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} is registered at construction"))
            .as_tensor()
    }

    fn linear(&self, x: &Tensor, name: &str) -> CResult<Tensor> {
        let (b, t, din) = x.dims3()?;
        x.reshape((b * t, din))?
            .matmul(self.p(&format!("{name}.w")))?
            .broadcast_add(self.p(&format!("{name}.b")))?
            .reshape((b, t, ()))
    }

    fn layer_norm(&self, x: &Tensor, name: &str) -> CResult<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        centered
            .broadcast_div(&(var + 1e-5)?.sqrt()?)?
            .broadcast_mul(self.p(&format!("{name}.g")))?
            .broadcast_add(self.p(&format!("{name}.b")))
    }

    fn attention(&self, x: &Tensor, memory: &Tensor, mask: &Tensor, name: &str) -> CResult<Tensor> {
        let (b, tq, d) = x.dims3()?;
        let tk = memory.dim(1)?;
        let h = self.cfg.heads;
        let dh = d / h;
        let split = |t: Tensor, len: usize| t.reshape((b, len, h, dh))?.transpose(1, 2)?.contiguous();
        let q = split(self.linear(x, &format!("{name}.q"))?, tq)?;
        let k = split(self.linear(memory, &format!("{name}.k"))?, tk)?;
        let v = split(self.linear(memory, &format!("{name}.v"))?, tk)?;
        let scores = (q.matmul(&k.t()?.contiguous()?)? / (dh as f64).sqrt())?.broadcast_add(mask)?;
        let weights = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let out = weights.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((b, tq, d))?;
        self.linear(&out, &format!("{name}.o"))
    }

    fn feed_forward(&self, x: &Tensor, prefix: &str) -> CResult<Tensor> {
        let hidden = self.linear(x, &format!("{prefix}.ff1"))?.relu()?;
        self.linear(&hidden, &format!("{prefix}.ff2"))
    }

    fn embed(&self, ids: &Tensor, pos: &str) -> CResult<Tensor> {
        let (b, t) = ids.dims2()?;
        let d = self.cfg.d_model;
        let tok = self.p("tok_emb").index_select(&ids.flatten_all()?, 0)?.reshape((b, t, d))?;
        tok.broadcast_add(&self.p(pos).narrow(0, 0, t)?)
    }

    /// `src_mask` holds 1.0 for real tokens and 0.0 for padding, shape (B, S).
    /// Returns the encoder output and the additive key mask (B, 1, 1, S).
    pub fn encode(&self, src: &Tensor, src_mask: &Tensor) -> CResult<(Tensor, Tensor)> {
        let (b, s) = src.dims2()?;
        let key_mask = ((src_mask.reshape((b, 1, 1, s))? - 1.0)? * -NEG)?;
        let mut x = self.embed(src, "src_pos")?;
        for i in 0..self.cfg.encoder_layers {
            let p = format!("enc.{i}");
            let n = self.layer_norm(&x, &format!("{p}.ln1"))?;
            x = (&x + self.attention(&n, &n, &key_mask, &format!("{p}.attn"))?)?;
            let n = self.layer_norm(&x, &format!("{p}.ln2"))?;
            x = (&x + self.feed_forward(&n, &p)?)?;
        }
        Ok((self.layer_norm(&x, "enc_ln")?, key_mask))
    }

    fn causal_mask(&self, t: usize) -> CResult<Tensor> {
        let data: Vec<f32> = (0..t)
            .flat_map(|i| (0..t).map(move |j| if j > i { NEG as f32 } else { 0.0 }))
            .collect();
        Tensor::from_vec(data, (1, 1, t, t), &self.device)
    }

    /// Logits (B, T, V) for every target prefix position.
    pub fn decode(&self, memory: &Tensor, key_mask: &Tensor, tgt: &Tensor) -> CResult<Tensor> {
        let (b, t) = tgt.dims2()?;
        let causal = self.causal_mask(t)?;
        let mut y = self.embed(tgt, "tgt_pos")?;
        for i in 0..self.cfg.decoder_layers {
            let p = format!("dec.{i}");
            let n = self.layer_norm(&y, &format!("{p}.ln1"))?;
            y = (&y + self.attention(&n, &n, &causal, &format!("{p}.self"))?)?;
            let n = self.layer_norm(&y, &format!("{p}.ln2"))?;
            y = (&y + self.attention(&n, memory, key_mask, &format!("{p}.cross"))?)?;
            let n = self.layer_norm(&y, &format!("{p}.ln3"))?;
            y = (&y + self.feed_forward(&n, &p)?)?;
        }
        let y = self.layer_norm(&y, "dec_ln")?;
        y.reshape((b * t, self.cfg.d_model))?
            .matmul(&self.p("tok_emb").t()?)?
            .reshape((b, t, self.vocab_size))
    }

    /// Summed token NLL per sequence, averaged over the batch.
    pub fn loss(&self, batch: &Batch) -> CResult<Tensor> {
        let (memory, key_mask) = self.encode(&batch.src, &batch.src_mask)?;
        let logits = self.decode(&memory, &key_mask, &batch.tgt_in)?;
        let log_probs = candle_nn::ops::log_softmax(&logits, D::Minus1)?;
        let picked = log_probs.gather(&batch.tgt_out.unsqueeze(2)?, 2)?.squeeze(2)?;
        let b = batch.src.dim(0)?;
        (picked * &batch.tgt_mask)?.sum_all()? / -(b as f64)
    }
}

#[derive(Clone, Copy)]
enum Init {
    Uniform(f32),
    Const(f32),
}

/// Right-padded tensors for one optimization step.
pub(crate) struct Batch {
    pub src: Tensor,
    pub src_mask: Tensor,
    pub tgt_in: Tensor,
    pub tgt_out: Tensor,
    pub tgt_mask: Tensor,
}

impl Batch {
    /// `pairs` are (source ids, target ids without BOS/EOS).
    pub fn new(pairs: &[(&[u32], &[u32])], bos: u32, eos: u32, pad: u32, device: &Device) -> CResult<Self> {
        let b = pairs.len();
        let s = pairs.iter().map(|(src, _)| src.len()).max().unwrap_or(1).max(1);
        let t = pairs.iter().map(|(_, tgt)| tgt.len() + 1).max().unwrap_or(1);
        let mut src = vec![pad; b * s];
        let mut src_mask = vec![0f32; b * s];
        let mut tgt_in = vec![pad; b * t];
        let mut tgt_out = vec![pad; b * t];
        let mut tgt_mask = vec![0f32; b * t];
        for (row, (sids, tids)) in pairs.iter().enumerate() {
            for (j, &id) in sids.iter().enumerate() {
                src[row * s + j] = id;
                src_mask[row * s + j] = 1.0;
            }
            tgt_in[row * t] = bos;
            for (j, &id) in tids.iter().enumerate() {
                tgt_in[row * t + j + 1] = id;
                tgt_out[row * t + j] = id;
                tgt_mask[row * t + j] = 1.0;
            }
            tgt_out[row * t + tids.len()] = eos;
            tgt_mask[row * t + tids.len()] = 1.0;
        }
        Ok(Batch {
            src: Tensor::from_vec(src, (b, s), device)?,
            src_mask: Tensor::from_vec(src_mask, (b, s), device)?,
            tgt_in: Tensor::from_vec(tgt_in, (b, t), device)?,
            tgt_out: Tensor::from_vec(tgt_out, (b, t), device)?,
            tgt_mask: Tensor::from_vec(tgt_mask, (b, t), device)?,
        })
    }
}
