//! Post-LayerNorm transformer encoder with a tied masked-LM head, forward
//! and backward passes written out by hand.
//!
//! A batch is a set of variable-length sequences packed row-wise into one
//! `tokens × hidden` matrix. Dense layers run over the packed matrix and
//! attention runs per sequence, so no padding is ever materialized.

use std::ops::Range;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{accumulate_col_sums, add_row_bias, matmul, matmul_nt, matmul_tn};

const LN_EPS: f64 = 1e-12;
const INIT_STD: f64 = 0.02;
/// Number of final layers summed for numeral embeddings.
pub const EMBEDDING_LAYERS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Fraction of all steps spent in linear warmup; the rest decays
    /// linearly to zero.
    pub warmup_fraction: f64,
    pub batch_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            hidden: 128,
            heads: 4,
            ffn: 512,
            max_seq_len: 128,
            dropout: 0.1,
            seed: 0,
            epochs: 6,
            learning_rate: 1e-4,
            warmup_fraction: 0.1,
            batch_size: 32,
        }
    }
}

impl EncoderConfig {
    /// Shape constraints of the network itself.
    pub fn check_shape(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.heads == 0 || self.ffn == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "hidden size {} not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if self.max_seq_len < 2 {
            return Err(Error::Config("max_seq_len must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Same parameter shapes; training hyper-parameters may differ.
    pub fn same_shape(&self, other: &EncoderConfig) -> bool {
        (self.layers, self.hidden, self.heads, self.ffn, self.max_seq_len)
            == (other.layers, other.hidden, other.heads, other.ffn, other.max_seq_len)
    }

    /// Full validation for training and embedding extraction, which sum the
    /// last four layers.
    pub fn validate(&self) -> Result<()> {
        self.check_shape()?;
        if self.layers < EMBEDDING_LAYERS {
            return Err(Error::Config(format!(
                "need at least {EMBEDDING_LAYERS} layers, got {}",
                self.layers
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config("invalid learning-rate schedule".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `fan_in × fan_out`, row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    fn new(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        Self {
            w: (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect(),
            b: vec![0.0; fan_out],
            fan_in,
            fan_out,
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w: vec![0.0; self.w.len()],
            b: vec![0.0; self.b.len()],
            ..*self
        }
    }

    fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let mut y = vec![0.0; rows * self.fan_out];
        matmul(x, &self.w, &mut y, rows, self.fan_in, self.fan_out, false);
        add_row_bias(&mut y, &self.b);
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&self, x: &[f64], dy: &[f64], rows: usize, grad: &mut Linear) -> Vec<f64> {
        matmul_tn(x, dy, &mut grad.w, self.fan_in, rows, self.fan_out, true);
        accumulate_col_sums(dy, &mut grad.b);
        let mut dx = vec![0.0; rows * self.fan_in];
        matmul_nt(dy, &self.w, &mut dx, rows, self.fan_out, self.fan_in, false);
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

struct LnCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

impl LayerNorm {
    fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            gamma: vec![0.0; self.gamma.len()],
            beta: vec![0.0; self.beta.len()],
        }
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, LnCache) {
        let h = self.gamma.len();
        let rows = x.len() / h;
        let mut y = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let row = &x[r * h..(r + 1) * h];
            let mean = row.iter().sum::<f64>() / h as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
            let s = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = s;
            for j in 0..h {
                let xh = (row[j] - mean) * s;
                xhat[r * h + j] = xh;
                y[r * h + j] = self.gamma[j] * xh + self.beta[j];
            }
        }
        (y, LnCache { xhat, rstd })
    }

    fn backward(&self, cache: &LnCache, dy: &[f64], grad: &mut LayerNorm) -> Vec<f64> {
        let h = self.gamma.len();
        let mut dx = vec![0.0; dy.len()];
        let mut dxhat = vec![0.0; h];
        for (r, &s) in cache.rstd.iter().enumerate() {
            let dyr = &dy[r * h..(r + 1) * h];
            let xh = &cache.xhat[r * h..(r + 1) * h];
            let mut sum = 0.0;
            let mut sum_x = 0.0;
            for j in 0..h {
                grad.gamma[j] += dyr[j] * xh[j];
                grad.beta[j] += dyr[j];
                dxhat[j] = dyr[j] * self.gamma[j];
                sum += dxhat[j];
                sum_x += dxhat[j] * xh[j];
            }
            let n = h as f64;
            for j in 0..h {
                dx[r * h + j] = s / n * (n * dxhat[j] - sum - xh[j] * sum_x);
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Fused query/key/value projection, `hidden × 3·hidden`.
    pub qkv: Linear,
    pub attn_out: Linear,
    pub ln1: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub ln2: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub hidden: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    /// `vocab × hidden`, shared with the output projection.
    pub tok_emb: Vec<f64>,
    pub pos_emb: Vec<f64>,
    pub emb_ln: LayerNorm,
    pub layers: Vec<LayerParams>,
    pub head_dense: Linear,
    pub head_ln: LayerNorm,
    pub dec_bias: Vec<f64>,
}

/// Sinusoidal table scaled to the token-embedding spread. Learned from
/// there; a random start leaves no handle on relative offsets.
fn sinusoid_positions(len: usize, h: usize) -> Vec<f64> {
    let scale = INIT_STD * std::f64::consts::SQRT_2;
    let mut out = vec![0.0; len * h];
    for p in 0..len {
        for i in 0..h {
            let rate = 10_000f64.powf(-((i / 2 * 2) as f64) / h as f64);
            let angle = p as f64 * rate;
            out[p * h + i] = scale * if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

impl EncoderParams {
    pub fn init(config: &EncoderConfig, vocab_size: usize) -> Result<Self> {
        config.check_shape()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let h = config.hidden;
        let sample = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| normal.sample(rng)).collect()
        };
        let tok_emb = sample(vocab_size * h, &mut rng);
        let pos_emb = sinusoid_positions(config.max_seq_len, h);
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                qkv: Linear::new(h, 3 * h, &mut rng),
                attn_out: Linear::new(h, h, &mut rng),
                ln1: LayerNorm::new(h),
                ffn_in: Linear::new(h, config.ffn, &mut rng),
                ffn_out: Linear::new(config.ffn, h, &mut rng),
                ln2: LayerNorm::new(h),
            })
            .collect();
        Ok(Self {
            hidden: h,
            vocab_size,
            max_seq_len: config.max_seq_len,
            tok_emb,
            pos_emb,
            emb_ln: LayerNorm::new(h),
            layers,
            head_dense: Linear::new(h, h, &mut rng),
            head_ln: LayerNorm::new(h),
            dec_bias: vec![0.0; vocab_size],
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            hidden: self.hidden,
            vocab_size: self.vocab_size,
            max_seq_len: self.max_seq_len,
            tok_emb: vec![0.0; self.tok_emb.len()],
            pos_emb: vec![0.0; self.pos_emb.len()],
            emb_ln: self.emb_ln.zeros_like(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    qkv: l.qkv.zeros_like(),
                    attn_out: l.attn_out.zeros_like(),
                    ln1: l.ln1.zeros_like(),
                    ffn_in: l.ffn_in.zeros_like(),
                    ffn_out: l.ffn_out.zeros_like(),
                    ln2: l.ln2.zeros_like(),
                })
                .collect(),
            head_dense: self.head_dense.zeros_like(),
            head_ln: self.head_ln.zeros_like(),
            dec_bias: vec![0.0; self.dec_bias.len()],
        }
    }

    /// Named tensors with their shapes, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let h = self.hidden;
        let mut out: Vec<(String, Vec<usize>, &[f64])> = vec![
            ("tok_emb".into(), vec![self.vocab_size, h], &self.tok_emb),
            ("pos_emb".into(), vec![self.max_seq_len, h], &self.pos_emb),
            ("emb_ln.gamma".into(), vec![h], &self.emb_ln.gamma),
            ("emb_ln.beta".into(), vec![h], &self.emb_ln.beta),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (name, lin) in [
                ("qkv", &l.qkv),
                ("attn_out", &l.attn_out),
                ("ffn_in", &l.ffn_in),
                ("ffn_out", &l.ffn_out),
            ] {
                out.push((format!("layer{i}.{name}.w"), vec![lin.fan_in, lin.fan_out], &lin.w));
                out.push((format!("layer{i}.{name}.b"), vec![lin.fan_out], &lin.b));
            }
            for (name, ln) in [("ln1", &l.ln1), ("ln2", &l.ln2)] {
                out.push((format!("layer{i}.{name}.gamma"), vec![h], &ln.gamma));
                out.push((format!("layer{i}.{name}.beta"), vec![h], &ln.beta));
            }
        }
        out.push(("head_dense.w".into(), vec![h, h], &self.head_dense.w));
        out.push(("head_dense.b".into(), vec![h], &self.head_dense.b));
        out.push(("head_ln.gamma".into(), vec![h], &self.head_ln.gamma));
        out.push(("head_ln.beta".into(), vec![h], &self.head_ln.beta));
        out.push(("dec_bias".into(), vec![self.vocab_size], &self.dec_bias));
        out
    }

    /// Mutable views in the same order as [`Self::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = vec![
            &mut self.tok_emb,
            &mut self.pos_emb,
            &mut self.emb_ln.gamma,
            &mut self.emb_ln.beta,
        ];
        for l in &mut self.layers {
            let LayerParams {
                qkv,
                attn_out,
                ln1,
                ffn_in,
                ffn_out,
                ln2,
            } = l;
            for lin in [qkv, attn_out, ffn_in, ffn_out] {
                out.push(&mut lin.w);
                out.push(&mut lin.b);
            }
            for ln in [ln1, ln2] {
                out.push(&mut ln.gamma);
                out.push(&mut ln.beta);
            }
        }
        out.push(&mut self.head_dense.w);
        out.push(&mut self.head_dense.b);
        out.push(&mut self.head_ln.gamma);
        out.push(&mut self.head_ln.beta);
        out.push(&mut self.dec_bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|t| t.2.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn token_embedding(&self, id: u32) -> &[f64] {
        let h = self.hidden;
        &self.tok_emb[id as usize * h..(id as usize + 1) * h]
    }
}

/// Sequences packed row-wise.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub ids: Vec<u32>,
    pub seqs: Vec<Range<usize>>,
}

impl Batch {
    pub fn push(&mut self, ids: &[u32]) -> usize {
        let start = self.ids.len();
        self.ids.extend_from_slice(ids);
        self.seqs.push(start..self.ids.len());
        start
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }
}

struct LayerCache {
    input: Vec<f64>,
    qkv: Vec<f64>,
    /// Attention probabilities per (sequence, head), `len × len` each.
    probs: Vec<Vec<f64>>,
    ctx: Vec<f64>,
    attn_drop: Option<Vec<f64>>,
    ln1: LnCache,
    y1: Vec<f64>,
    pre_gelu: Vec<f64>,
    post_gelu: Vec<f64>,
    ffn_drop: Option<Vec<f64>>,
    ln2: LnCache,
    output: Vec<f64>,
}

/// Forward activations retained for the backward pass.
pub struct ForwardPass {
    rows: usize,
    positions: Vec<usize>,
    emb_ln: LnCache,
    emb_drop: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
}

impl ForwardPass {
    /// Output of every layer, `rows × hidden` each.
    pub fn hidden_states(&self) -> Vec<&[f64]> {
        self.layers.iter().map(|l| l.output.as_slice()).collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let t = (C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn dropout_mask(len: usize, p: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<f64>> {
    let rng = rng?;
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect(),
    )
}

fn apply_mask(x: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
    }
}

/// The encoder network: parameters plus static dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub params: EncoderParams,
    pub heads: usize,
    pub ffn: usize,
    pub dropout: f64,
}

/// Replaces the input embedding of one packed row.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingOverride<'a> {
    pub row: usize,
    pub vector: &'a [f64],
}

impl Encoder {
    pub fn new(config: &EncoderConfig, vocab_size: usize) -> Result<Self> {
        Ok(Self {
            params: EncoderParams::init(config, vocab_size)?,
            heads: config.heads,
            ffn: config.ffn,
            dropout: config.dropout,
        })
    }

    pub fn hidden(&self) -> usize {
        self.params.hidden
    }

    /// Runs the encoder. Dropout is active only when `rng` is given.
    pub fn forward(
        &self,
        batch: &Batch,
        mut rng: Option<&mut ChaCha8Rng>,
        input_override: Option<EmbeddingOverride<'_>>,
    ) -> Result<ForwardPass> {
        let p = &self.params;
        let h = p.hidden;
        let rows = batch.rows();
        let mut positions = vec![0; rows];
        for s in &batch.seqs {
            if s.len() > p.max_seq_len {
                return Err(Error::Config(format!(
                    "sequence of length {} exceeds max_seq_len {}",
                    s.len(),
                    p.max_seq_len
                )));
            }
            for (i, r) in s.clone().enumerate() {
                positions[r] = i;
            }
        }
        let mut emb = vec![0.0; rows * h];
        for r in 0..rows {
            let id = batch.ids[r] as usize;
            if id >= p.vocab_size {
                return Err(Error::Config(format!("token id {id} outside vocabulary")));
            }
            let tok = match input_override {
                Some(o) if o.row == r => o.vector,
                _ => &p.tok_emb[id * h..(id + 1) * h],
            };
            let pos = &p.pos_emb[positions[r] * h..(positions[r] + 1) * h];
            for j in 0..h {
                emb[r * h + j] = tok[j] + pos[j];
            }
        }
        let (mut x, emb_ln) = p.emb_ln.forward(&emb);
        let emb_drop = dropout_mask(x.len(), self.dropout, rng.as_deref_mut());
        apply_mask(&mut x, &emb_drop);

        let mut layers = Vec::with_capacity(p.layers.len());
        for lp in &p.layers {
            let cache = self.layer_forward(lp, x, batch, rows, rng.as_deref_mut());
            x = cache.output.clone();
            layers.push(cache);
        }
        Ok(ForwardPass {
            rows,
            positions,
            emb_ln,
            emb_drop,
            layers,
        })
    }

    fn layer_forward(
        &self,
        lp: &LayerParams,
        input: Vec<f64>,
        batch: &Batch,
        rows: usize,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> LayerCache {
        let h = self.params.hidden;
        let dh = h / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let qkv = lp.qkv.forward(&input, rows);
        let mut ctx = vec![0.0; rows * h];
        let mut probs = Vec::with_capacity(batch.seqs.len() * self.heads);
        for s in &batch.seqs {
            let t = s.len();
            for head in 0..self.heads {
                let q_off = head * dh;
                let k_off = h + head * dh;
                let v_off = 2 * h + head * dh;
                let mut pr = vec![0.0; t * t];
                for i in 0..t {
                    let qi = &qkv[(s.start + i) * 3 * h + q_off..][..dh];
                    let row = &mut pr[i * t..(i + 1) * t];
                    let mut max = f64::NEG_INFINITY;
                    for (j, slot) in row.iter_mut().enumerate() {
                        let kj = &qkv[(s.start + j) * 3 * h + k_off..][..dh];
                        let sc = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                        *slot = sc;
                        max = max.max(sc);
                    }
                    let mut z = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        z += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= z;
                    }
                    let out = &mut ctx[(s.start + i) * h + q_off..][..dh];
                    for (j, &pij) in row.iter().enumerate() {
                        let vj = &qkv[(s.start + j) * 3 * h + v_off..][..dh];
                        for d in 0..dh {
                            out[d] += pij * vj[d];
                        }
                    }
                }
                probs.push(pr);
            }
        }
        let mut a = lp.attn_out.forward(&ctx, rows);
        let attn_drop = dropout_mask(a.len(), self.dropout, rng.as_deref_mut());
        apply_mask(&mut a, &attn_drop);
        for (av, xv) in a.iter_mut().zip(&input) {
            *av += xv;
        }
        let (y1, ln1) = lp.ln1.forward(&a);
        let pre_gelu = lp.ffn_in.forward(&y1, rows);
        let post_gelu: Vec<f64> = pre_gelu.iter().map(|&u| gelu(u)).collect();
        let mut f = lp.ffn_out.forward(&post_gelu, rows);
        let ffn_drop = dropout_mask(f.len(), self.dropout, rng.as_deref_mut());
        apply_mask(&mut f, &ffn_drop);
        for (fv, yv) in f.iter_mut().zip(&y1) {
            *fv += yv;
        }
        let (output, ln2) = lp.ln2.forward(&f);
        LayerCache {
            input,
            qkv,
            probs,
            ctx,
            attn_drop,
            ln1,
            y1,
            pre_gelu,
            post_gelu,
            ffn_drop,
            ln2,
            output,
        }
    }

    fn layer_backward(
        &self,
        lp: &LayerParams,
        cache: &LayerCache,
        batch: &Batch,
        dout: &[f64],
        grad: &mut LayerParams,
    ) -> Vec<f64> {
        let h = self.params.hidden;
        let rows = dout.len() / h;
        let dh = h / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let dr2 = lp.ln2.backward(&cache.ln2, dout, &mut grad.ln2);
        let mut df = dr2.clone();
        apply_mask(&mut df, &cache.ffn_drop);
        let mut dg = lp.ffn_out.backward(&cache.post_gelu, &df, rows, &mut grad.ffn_out);
        for (d, &u) in dg.iter_mut().zip(&cache.pre_gelu) {
            *d *= gelu_grad(u);
        }
        let mut dy1 = lp.ffn_in.backward(&cache.y1, &dg, rows, &mut grad.ffn_in);
        for (a, b) in dy1.iter_mut().zip(&dr2) {
            *a += b;
        }
        let dr1 = lp.ln1.backward(&cache.ln1, &dy1, &mut grad.ln1);
        let mut da = dr1.clone();
        apply_mask(&mut da, &cache.attn_drop);
        let dctx = lp.attn_out.backward(&cache.ctx, &da, rows, &mut grad.attn_out);

        let mut dqkv = vec![0.0; rows * 3 * h];
        let mut probs = cache.probs.iter();
        let qkv = &cache.qkv;
        for s in &batch.seqs {
            let t = s.len();
            for head in 0..self.heads {
                let pr = probs.next().expect("one probability block per head");
                let q_off = head * dh;
                let k_off = h + head * dh;
                let v_off = 2 * h + head * dh;
                let mut ds = vec![0.0; t];
                for i in 0..t {
                    let dci = &dctx[(s.start + i) * h + q_off..][..dh];
                    let prow = &pr[i * t..(i + 1) * t];
                    // dP_ij = dC_i · V_j, dV_j += P_ij dC_i
                    let mut weighted = 0.0;
                    for j in 0..t {
                        let vj = &qkv[(s.start + j) * 3 * h + v_off..][..dh];
                        let dp = dci.iter().zip(vj).map(|(a, b)| a * b).sum::<f64>();
                        ds[j] = dp;
                        weighted += dp * prow[j];
                        let dvj = &mut dqkv[(s.start + j) * 3 * h + v_off..][..dh];
                        for d in 0..dh {
                            dvj[d] += prow[j] * dci[d];
                        }
                    }
                    for j in 0..t {
                        ds[j] = prow[j] * (ds[j] - weighted) * scale;
                    }
                    for j in 0..t {
                        let g = ds[j];
                        if g == 0.0 {
                            continue;
                        }
                        let (qrow, krow) = ((s.start + i) * 3 * h, (s.start + j) * 3 * h);
                        for d in 0..dh {
                            dqkv[qrow + q_off + d] += g * qkv[krow + k_off + d];
                            dqkv[krow + k_off + d] += g * qkv[qrow + q_off + d];
                        }
                    }
                }
            }
        }
        let mut dx = lp.qkv.backward(&cache.input, &dqkv, rows, &mut grad.qkv);
        for (a, b) in dx.iter_mut().zip(&dr1) {
            *a += b;
        }
        dx
    }

    /// Masked-LM loss (mean cross-entropy over `targets`, each a packed row
    /// and its label id) and, when `grad` is given, accumulated gradients.
    pub fn mlm_loss(
        &self,
        batch: &Batch,
        targets: &[(usize, u32)],
        rng: Option<&mut ChaCha8Rng>,
        grad: Option<&mut EncoderParams>,
    ) -> Result<f64> {
        if targets.is_empty() {
            return Ok(0.0);
        }
        let p = &self.params;
        let h = p.hidden;
        let v = p.vocab_size;
        let fwd = self.forward(batch, rng, None)?;
        let last = &fwd.layers.last().expect("at least one layer").output;
        let m = targets.len();
        let mut hm = vec![0.0; m * h];
        for (k, &(row, _)) in targets.iter().enumerate() {
            hm[k * h..(k + 1) * h].copy_from_slice(&last[row * h..(row + 1) * h]);
        }
        let t0 = p.head_dense.forward(&hm, m);
        let t1: Vec<f64> = t0.iter().map(|&x| gelu(x)).collect();
        let (t, head_ln) = p.head_ln.forward(&t1);
        let mut logits = vec![0.0; m * v];
        matmul_nt(&t, &p.tok_emb, &mut logits, m, h, v, false);
        add_row_bias(&mut logits, &p.dec_bias);

        let mut loss = 0.0;
        for (k, &(_, label)) in targets.iter().enumerate() {
            let row = &mut logits[k * v..(k + 1) * v];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                z += *x;
            }
            for x in row.iter_mut() {
                *x /= z;
            }
            loss -= row[label as usize].max(f64::MIN_POSITIVE).ln();
        }
        loss /= m as f64;

        let Some(grad) = grad else {
            return Ok(loss);
        };

        // logits now hold probabilities; turn them into dlogits
        let inv_m = 1.0 / m as f64;
        for (k, &(_, label)) in targets.iter().enumerate() {
            let row = &mut logits[k * v..(k + 1) * v];
            row[label as usize] -= 1.0;
            row.iter_mut().for_each(|x| *x *= inv_m);
        }
        let dlogits = logits;
        accumulate_col_sums(&dlogits, &mut grad.dec_bias);
        matmul_tn(&dlogits, &t, &mut grad.tok_emb, v, m, h, true);
        let mut dt = vec![0.0; m * h];
        matmul(&dlogits, &p.tok_emb, &mut dt, m, v, h, false);
        let mut dt1 = p.head_ln.backward(&head_ln, &dt, &mut grad.head_ln);
        for (d, &x) in dt1.iter_mut().zip(&t0) {
            *d *= gelu_grad(x);
        }
        let dhm = p.head_dense.backward(&hm, &dt1, m, &mut grad.head_dense);

        let mut dx = vec![0.0; fwd.rows * h];
        for (k, &(row, _)) in targets.iter().enumerate() {
            for j in 0..h {
                dx[row * h + j] += dhm[k * h + j];
            }
        }
        for (li, lp) in p.layers.iter().enumerate().rev() {
            dx = self.layer_backward(lp, &fwd.layers[li], batch, &dx, &mut grad.layers[li]);
        }
        apply_mask(&mut dx, &fwd.emb_drop);
        let de = p.emb_ln.backward(&fwd.emb_ln, &dx, &mut grad.emb_ln);
        for r in 0..fwd.rows {
            let id = batch.ids[r] as usize;
            let pos = fwd.positions[r];
            for j in 0..h {
                grad.tok_emb[id * h + j] += de[r * h + j];
                grad.pos_emb[pos * h + j] += de[r * h + j];
            }
        }
        Ok(loss)
    }
}
