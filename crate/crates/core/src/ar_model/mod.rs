// SPDX-License-Identifier: MIT OR Apache-2.0

//! Toy autoregressive decoder over delay-interleaved codebook tokens, with
//! text cross-attention and per-step attention hooks.
//!
//! # Architecture
//!
//! * Text encoder: token embedding plus sinusoidal positions, one pre-norm
//!   bidirectional self-attention layer with a ReLU feed-forward block, then
//!   a final layer norm.
//! * Decoder input at step `s`: sinusoidal position `s` plus, for every
//!   codebook `k`, the embedding of the token that codebook emitted at step
//!   `s - 1` (the padding index `M` where it emitted none).
//! * `N` pre-norm decoder layers, each: causal self-attention over steps
//!   `0..=s` (key/value cache), cross-attention to the encoded text, ReLU
//!   feed-forward block. All residual.
//! * Final layer norm, then one `d_model x M` head per codebook. Codebook
//!   `k` samples at step `s` only when frame `s - k` exists.
//!
//! # Weights
//!
//! Drawn from [`Prng`] seeded with `weight_seed`, in this order: text
//! embedding, encoder attention (`q k v o`), encoder feed-forward (`in out`),
//! codebook embeddings `0..K`, then per decoder layer self-attention
//! (`q k v o`), cross-attention (`q k v o`), feed-forward (`in out`), and
//! finally the codebook heads `0..K`. Embeddings are uniform on `[-1, 1)`;
//! a projection with fan-in `f` is uniform on `[-sqrt(3/f), sqrt(3/f))`.
//! Layer-norm gains are one and all biases zero. Matrices fill row-major.
//!
//! # Sampling
//!
//! Top-k with temperature: logits are ranked (ties to the lower index), the
//! best `top_k` are softmaxed at `1/temperature` and one index is drawn with
//! [`sample_categorical`]. Draws happen codebook 0 first, one per emitted
//! token, so hooks never shift the random stream.

mod hooks;

pub use hooks::{
    AttentionKind, AttentionMap, AttentionTrace, GenerationHook, HookSite, IdentityHook,
    LayerAttention,
};

use serde::{Deserialize, Serialize};

use crate::codec_sim::{CodecConfig, TokenGrid};
use crate::error::{Error, Result};
use crate::tensor_ops::{layer_norm, sample_categorical, softmax_in_place, vec_mat, Matrix, Prng};
use crate::text_frontend::Prompt;

const LN_EPS: f64 = 1e-5;
const FFN_MULT: usize = 4;

/// Model hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub codec: CodecConfig,
    pub vocab_size: usize,
    pub weight_seed: u64,
    pub top_k: usize,
    pub temperature: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_layers: 4,
            n_heads: 4,
            codec: CodecConfig::default(),
            vocab_size: crate::text_frontend::Vocabulary::builtin().len(),
            weight_seed: 42,
            top_k: 8,
            temperature: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.codec.validate()?;
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidConfig(format!(
                "d_model ({}) must be a positive multiple of n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if self.n_layers < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_layers must be >= 2, got {}",
                self.n_layers
            )));
        }
        if self.vocab_size == 0 {
            return Err(Error::InvalidConfig("vocab_size must be >= 1".into()));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be >= 1".into()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidConfig("temperature must be > 0".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone)]
struct Norm {
    gain: Vec<f64>,
    bias: Vec<f64>,
}

impl Norm {
    fn new(d: usize) -> Self {
        Self {
            gain: vec![1.0; d],
            bias: vec![0.0; d],
        }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        layer_norm(v, &self.gain, &self.bias, LN_EPS).expect("norm width fixed at init")
    }
}

#[derive(Debug, Clone)]
struct AttnWeights {
    wq: Matrix,
    wk: Matrix,
    wv: Matrix,
    wo: Matrix,
}

impl AttnWeights {
    fn init(d: usize, rng: &mut Prng) -> Self {
        let b = proj_bound(d);
        Self {
            wq: Matrix::uniform(d, d, b, rng),
            wk: Matrix::uniform(d, d, b, rng),
            wv: Matrix::uniform(d, d, b, rng),
            wo: Matrix::uniform(d, d, b, rng),
        }
    }
}

#[derive(Debug, Clone)]
struct FeedForward {
    w_in: Matrix,
    b_in: Vec<f64>,
    w_out: Matrix,
    b_out: Vec<f64>,
}

impl FeedForward {
    fn init(d: usize, rng: &mut Prng) -> Self {
        let hidden = d * FFN_MULT;
        Self {
            w_in: Matrix::uniform(d, hidden, proj_bound(d), rng),
            b_in: vec![0.0; hidden],
            w_out: Matrix::uniform(hidden, d, proj_bound(hidden), rng),
            b_out: vec![0.0; d],
        }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut h = vec_mat(v, &self.w_in);
        for (x, b) in h.iter_mut().zip(&self.b_in) {
            *x = (*x + b).max(0.0);
        }
        let mut out = vec_mat(&h, &self.w_out);
        for (x, b) in out.iter_mut().zip(&self.b_out) {
            *x += b;
        }
        out
    }
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    ln_attn: Norm,
    attn: AttnWeights,
    ln_ffn: Norm,
    ffn: FeedForward,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    ln_self: Norm,
    self_attn: AttnWeights,
    ln_cross: Norm,
    cross_attn: AttnWeights,
    ln_ffn: Norm,
    ffn: FeedForward,
}

fn proj_bound(fan_in: usize) -> f64 {
    (3.0 / fan_in as f64).sqrt()
}

/// Sinusoidal position code of width `d`.
pub fn sinusoidal_position(pos: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| {
            let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 * freq;
            if i % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

fn add_assign(x: &mut [f64], y: &[f64]) {
    for (a, b) in x.iter_mut().zip(y) {
        *a += b;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scores of one query against `keys` rows for every head, softmaxed per head.
fn attention_probs(q: &[f64], keys: &[Vec<f64>], n_heads: usize) -> AttentionMap {
    let dh = q.len() / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut data = Vec::with_capacity(n_heads * keys.len());
    for h in 0..n_heads {
        let qh = &q[h * dh..(h + 1) * dh];
        let start = data.len();
        data.extend(keys.iter().map(|k| dot(qh, &k[h * dh..(h + 1) * dh])));
        softmax_in_place(&mut data[start..], scale);
    }
    AttentionMap::new(Matrix::new(n_heads, keys.len(), data).expect("softmax output is finite"))
}

/// Per-head probability-weighted sum of `values` rows.
fn attend(map: &AttentionMap, values: &[Vec<f64>], d: usize) -> Vec<f64> {
    let n_heads = map.heads();
    let dh = d / n_heads;
    let mut out = vec![0.0; d];
    for h in 0..n_heads {
        let o = &mut out[h * dh..(h + 1) * dh];
        for (w, v) in map.row(h).iter().zip(values) {
            for (acc, x) in o.iter_mut().zip(&v[h * dh..(h + 1) * dh]) {
                *acc += w * x;
            }
        }
    }
    out
}

/// Picks a token from `logits` by top-k sampling with temperature.
pub fn sample_top_k(
    logits: &[f64],
    top_k: usize,
    temperature: f64,
    rng: &mut Prng,
) -> Result<usize> {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    // Stable sort keeps the lower index first among equal logits.
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]));
    order.truncate(top_k.min(logits.len()));
    let mut probs: Vec<f64> = order.iter().map(|&i| logits[i]).collect();
    softmax_in_place(&mut probs, 1.0 / temperature);
    Ok(order[sample_categorical(&probs, rng)?])
}

/// Text encoding plus the per-layer cross-attention keys and values.
struct TextContext {
    keys: Vec<Vec<Vec<f64>>>,
    values: Vec<Vec<Vec<f64>>>,
}

/// Self-attention maps from a teacher-forced full-sequence pass.
#[derive(Debug, Clone)]
pub struct FullSequenceAttention {
    /// `[layer][head]`, each `steps x steps`; entries above the diagonal are
    /// masked out.
    pub self_attn: Vec<Vec<Matrix>>,
    /// `[layer][head]`, each `steps x L_text`.
    pub cross: Vec<Vec<Matrix>>,
}

/// Seeded random decoder. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    text_embedding: Matrix,
    encoder: EncoderLayer,
    encoder_norm: Norm,
    codebook_embeddings: Vec<Matrix>,
    decoder: Vec<DecoderLayer>,
    final_norm: Norm,
    heads: Vec<Matrix>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let codec = config.codec;
        let mut rng = Prng::new(config.weight_seed);

        let text_embedding = Matrix::uniform(config.vocab_size, d, 1.0, &mut rng);
        let encoder = EncoderLayer {
            ln_attn: Norm::new(d),
            attn: AttnWeights::init(d, &mut rng),
            ln_ffn: Norm::new(d),
            ffn: FeedForward::init(d, &mut rng),
        };
        let codebook_embeddings = (0..codec.k)
            .map(|_| Matrix::uniform(codec.m + 1, d, 1.0, &mut rng))
            .collect();
        let decoder = (0..config.n_layers)
            .map(|_| DecoderLayer {
                ln_self: Norm::new(d),
                self_attn: AttnWeights::init(d, &mut rng),
                ln_cross: Norm::new(d),
                cross_attn: AttnWeights::init(d, &mut rng),
                ln_ffn: Norm::new(d),
                ffn: FeedForward::init(d, &mut rng),
            })
            .collect();
        let heads = (0..codec.k)
            .map(|_| Matrix::uniform(d, codec.m, proj_bound(d), &mut rng))
            .collect();

        Ok(Self {
            config,
            text_embedding,
            encoder,
            encoder_norm: Norm::new(d),
            codebook_embeddings,
            decoder,
            final_norm: Norm::new(d),
            heads,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Named weight matrices with their shapes, in initialisation order.
    pub fn parameter_shapes(&self) -> Vec<(String, (usize, usize))> {
        self.named_matrices()
            .into_iter()
            .map(|(name, m)| (name, m.shape()))
            .collect()
    }

    /// FNV-1a over the bit patterns of every weight, in initialisation order.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, m) in self.named_matrices() {
            for v in m.data() {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    fn named_matrices(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![("text_embedding".to_string(), &self.text_embedding)];
        let enc = &self.encoder;
        for (n, m) in [
            ("wq", &enc.attn.wq),
            ("wk", &enc.attn.wk),
            ("wv", &enc.attn.wv),
            ("wo", &enc.attn.wo),
            ("ffn_in", &enc.ffn.w_in),
            ("ffn_out", &enc.ffn.w_out),
        ] {
            out.push((format!("encoder.{n}"), m));
        }
        for (k, m) in self.codebook_embeddings.iter().enumerate() {
            out.push((format!("codebook_embedding.{k}"), m));
        }
        for (i, layer) in self.decoder.iter().enumerate() {
            for (n, m) in [
                ("self.wq", &layer.self_attn.wq),
                ("self.wk", &layer.self_attn.wk),
                ("self.wv", &layer.self_attn.wv),
                ("self.wo", &layer.self_attn.wo),
                ("cross.wq", &layer.cross_attn.wq),
                ("cross.wk", &layer.cross_attn.wk),
                ("cross.wv", &layer.cross_attn.wv),
                ("cross.wo", &layer.cross_attn.wo),
                ("ffn_in", &layer.ffn.w_in),
                ("ffn_out", &layer.ffn.w_out),
            ] {
                out.push((format!("decoder.{i}.{n}"), m));
            }
        }
        for (k, m) in self.heads.iter().enumerate() {
            out.push((format!("head.{k}"), m));
        }
        out
    }

    /// Encodes the prompt into an `L_text x d_model` matrix.
    pub fn encode_text(&self, prompt: &Prompt) -> Result<Matrix> {
        let d = self.config.d_model;
        if prompt.ids.is_empty() {
            return Err(Error::EmptyPrompt);
        }
        let mut x: Vec<Vec<f64>> = Vec::with_capacity(prompt.len());
        for (pos, &id) in prompt.ids.iter().enumerate() {
            if id as usize >= self.config.vocab_size {
                return Err(Error::TokenIdOutOfRange {
                    id,
                    size: self.config.vocab_size,
                });
            }
            let mut row = self.text_embedding.row(id as usize).to_vec();
            add_assign(&mut row, &sinusoidal_position(pos, d));
            x.push(row);
        }

        let enc = &self.encoder;
        let normed: Vec<Vec<f64>> = x.iter().map(|r| enc.ln_attn.apply(r)).collect();
        let keys: Vec<Vec<f64>> = normed.iter().map(|r| vec_mat(r, &enc.attn.wk)).collect();
        let values: Vec<Vec<f64>> = normed.iter().map(|r| vec_mat(r, &enc.attn.wv)).collect();
        for (row, n) in x.iter_mut().zip(&normed) {
            let q = vec_mat(n, &enc.attn.wq);
            let map = attention_probs(&q, &keys, self.config.n_heads);
            add_assign(row, &vec_mat(&attend(&map, &values, d), &enc.attn.wo));
        }
        for row in x.iter_mut() {
            let f = enc.ffn.apply(&enc.ln_ffn.apply(row));
            add_assign(row, &f);
        }
        let rows: Vec<Vec<f64>> = x.iter().map(|r| self.encoder_norm.apply(r)).collect();
        Matrix::from_rows(&rows)
    }

    fn text_context(&self, prompt: &Prompt) -> Result<TextContext> {
        let enc = self.encode_text(prompt)?;
        let mut keys = Vec::with_capacity(self.decoder.len());
        let mut values = Vec::with_capacity(self.decoder.len());
        for layer in &self.decoder {
            keys.push(
                enc.row_iter()
                    .map(|r| vec_mat(r, &layer.cross_attn.wk))
                    .collect(),
            );
            values.push(
                enc.row_iter()
                    .map(|r| vec_mat(r, &layer.cross_attn.wv))
                    .collect(),
            );
        }
        Ok(TextContext { keys, values })
    }

    /// Decoder input at `step` given the tokens emitted so far.
    fn step_input(&self, grid: &TokenGrid, step: usize) -> Vec<f64> {
        let codec = self.config.codec;
        let mut x = sinusoidal_position(step, self.config.d_model);
        for (k, emb) in self.codebook_embeddings.iter().enumerate() {
            let token = step
                .checked_sub(1)
                .and_then(|prev| codec.frame_at(prev, k))
                .map_or(codec.pad_token(), |f| grid.get(k, f));
            add_assign(&mut x, emb.row(token as usize));
        }
        x
    }

    /// Runs the full delay schedule under `prompt`.
    ///
    /// With a hook, the maps it returns replace the computed ones before the
    /// value-weighted sums. The trace records both the maps used and the maps
    /// computed.
    pub fn generate(
        &self,
        prompt: &Prompt,
        sample_seed: u64,
        mut hook: Option<&mut dyn GenerationHook>,
    ) -> Result<(TokenGrid, AttentionTrace)> {
        let cfg = &self.config;
        let codec = cfg.codec;
        let d = cfg.d_model;
        let n_steps = codec.steps();
        let text = self.text_context(prompt)?;
        let mut rng = Prng::new(sample_seed);
        let mut grid = TokenGrid::zeros(codec)?;
        let mut trace = AttentionTrace::with_capacity(cfg.n_layers, cfg.n_heads, n_steps);
        let mut self_keys: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(n_steps); cfg.n_layers];
        let mut self_values: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(n_steps); cfg.n_layers];

        for step in 0..n_steps {
            let mut x = self.step_input(&grid, step);
            let mut layers = Vec::with_capacity(cfg.n_layers);
            for (i, layer) in self.decoder.iter().enumerate() {
                let site = HookSite {
                    step,
                    layer: i,
                    n_layers: cfg.n_layers,
                };

                let a = layer.ln_self.apply(&x);
                let q = vec_mat(&a, &layer.self_attn.wq);
                self_keys[i].push(vec_mat(&a, &layer.self_attn.wk));
                self_values[i].push(vec_mat(&a, &layer.self_attn.wv));
                let self_computed = attention_probs(&q, &self_keys[i], cfg.n_heads);
                let self_used = match hook.as_deref_mut() {
                    Some(h) => match h.self_attention(site, &self_computed)? {
                        Some(m) => {
                            hooks::check_shape(site, &self_computed, &m)?;
                            m
                        }
                        None => self_computed.clone(),
                    },
                    None => self_computed.clone(),
                };
                let ctx = attend(&self_used, &self_values[i], d);
                add_assign(&mut x, &vec_mat(&ctx, &layer.self_attn.wo));

                let b = layer.ln_cross.apply(&x);
                let qc = vec_mat(&b, &layer.cross_attn.wq);
                let cross_computed = attention_probs(&qc, &text.keys[i], cfg.n_heads);
                let cross_used = match hook.as_deref_mut() {
                    Some(h) => {
                        let m = h.cross_attention(site, &cross_computed)?;
                        hooks::check_shape(site, &cross_computed, &m)?;
                        m
                    }
                    None => cross_computed.clone(),
                };
                let ctx = attend(&cross_used, &text.values[i], d);
                add_assign(&mut x, &vec_mat(&ctx, &layer.cross_attn.wo));

                let f = layer.ffn.apply(&layer.ln_ffn.apply(&x));
                add_assign(&mut x, &f);

                layers.push(LayerAttention {
                    cross: cross_used,
                    self_attn: self_used,
                    cross_computed,
                    self_computed,
                });
            }
            trace.push_step(layers);

            let out = self.final_norm.apply(&x);
            for (k, head) in self.heads.iter().enumerate() {
                if let Some(frame) = codec.frame_at(step, k) {
                    let logits = vec_mat(&out, head);
                    let token = sample_top_k(&logits, cfg.top_k, cfg.temperature, &mut rng)?;
                    grid.set(k, frame, token as u32);
                }
            }
        }
        Ok((grid, trace))
    }

    /// Teacher-forced pass over a finished grid with explicit causal masking
    /// and no cache. Positions after the query get exactly zero weight.
    pub fn full_sequence_attention(
        &self,
        prompt: &Prompt,
        grid: &TokenGrid,
    ) -> Result<FullSequenceAttention> {
        let cfg = &self.config;
        if grid.config() != &cfg.codec {
            return Err(Error::InvalidGrid(
                "grid codec differs from the model's".into(),
            ));
        }
        let d = cfg.d_model;
        let n_heads = cfg.n_heads;
        let dh = cfg.head_dim();
        let n_steps = cfg.codec.steps();
        let text = self.text_context(prompt)?;
        let mut xs: Vec<Vec<f64>> = (0..n_steps).map(|s| self.step_input(grid, s)).collect();
        let mut self_maps = Vec::with_capacity(cfg.n_layers);
        let mut cross_maps = Vec::with_capacity(cfg.n_layers);

        for (i, layer) in self.decoder.iter().enumerate() {
            let normed: Vec<Vec<f64>> = xs.iter().map(|x| layer.ln_self.apply(x)).collect();
            let qs: Vec<Vec<f64>> = normed
                .iter()
                .map(|a| vec_mat(a, &layer.self_attn.wq))
                .collect();
            let ks: Vec<Vec<f64>> = normed
                .iter()
                .map(|a| vec_mat(a, &layer.self_attn.wk))
                .collect();
            let vs: Vec<Vec<f64>> = normed
                .iter()
                .map(|a| vec_mat(a, &layer.self_attn.wv))
                .collect();
            let mut per_head = vec![Matrix::zeros(n_steps, n_steps); n_heads];
            for t in 0..n_steps {
                let mut data = Vec::with_capacity(n_heads * n_steps);
                for (h, m) in per_head.iter_mut().enumerate() {
                    let qh = &qs[t][h * dh..(h + 1) * dh];
                    let mut row: Vec<f64> = ks
                        .iter()
                        .map(|k| dot(qh, &k[h * dh..(h + 1) * dh]))
                        .collect();
                    // Causal mask: only keys 0..=t take part in the softmax.
                    softmax_in_place(&mut row[..=t], 1.0 / (dh as f64).sqrt());
                    row[t + 1..].fill(0.0);
                    m.row_mut(t).copy_from_slice(&row);
                    data.extend_from_slice(&row[..=t]);
                }
                let map = AttentionMap::new(Matrix::new(n_heads, t + 1, data)?);
                let ctx = attend(&map, &vs[..=t], d);
                add_assign(&mut xs[t], &vec_mat(&ctx, &layer.self_attn.wo));
            }
            self_maps.push(per_head);

            let l_text = text.keys[i].len();
            let mut per_head = vec![Matrix::zeros(n_steps, l_text); n_heads];
            for (t, x) in xs.iter_mut().enumerate() {
                let qc = vec_mat(&layer.ln_cross.apply(x), &layer.cross_attn.wq);
                let map = attention_probs(&qc, &text.keys[i], n_heads);
                for (h, m) in per_head.iter_mut().enumerate() {
                    m.row_mut(t).copy_from_slice(map.row(h));
                }
                let ctx = attend(&map, &text.values[i], d);
                add_assign(x, &vec_mat(&ctx, &layer.cross_attn.wo));
                let f = layer.ffn.apply(&layer.ln_ffn.apply(x));
                add_assign(x, &f);
            }
            cross_maps.push(per_head);
        }
        Ok(FullSequenceAttention {
            self_attn: self_maps,
            cross: cross_maps,
        })
    }
}
