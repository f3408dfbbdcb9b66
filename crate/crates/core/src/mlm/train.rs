use std::io::Write;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::EncoderCheckpoint;
use super::encoder::{Batch, Encoder, EncoderConfig, EncoderParams};
use super::masking::{mask_sequence, MaskedSequence, MaskingMode, IGNORE};
use super::vocab::{is_priming_id, Vocab};
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(params: &mut EncoderParams) -> Self {
        let shapes: Vec<usize> = params.tensors_mut().iter().map(|t| t.len()).collect();
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut EncoderParams, grads: &mut EncoderParams, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors_mut())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Linear warmup over the first `warmup_fraction` of steps, then linear
/// decay to zero.
pub fn learning_rate_at(config: &EncoderConfig, step: usize, total_steps: usize) -> f64 {
    let warmup = (config.warmup_fraction * total_steps as f64).round() as usize;
    let base = config.learning_rate;
    if step < warmup {
        base * (step + 1) as f64 / warmup as f64
    } else if total_steps > warmup {
        base * (total_steps - step) as f64 / (total_steps - warmup) as f64
    } else {
        base
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub steps: Vec<StepRecord>,
    pub epoch_mean_loss: Vec<f64>,
}

impl TrainingLog {
    /// Mean loss over the first `n` steps of training.
    pub fn initial_loss(&self, n: usize) -> Option<f64> {
        let head: Vec<f64> = self.steps.iter().take(n).map(|s| s.loss).collect();
        (!head.is_empty()).then(|| head.iter().sum::<f64>() / head.len() as f64)
    }

    pub fn final_epoch_loss(&self) -> Option<f64> {
        self.epoch_mean_loss.last().copied()
    }

    /// `epoch \t step \t loss` lines.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for s in &self.steps {
            writeln!(out, "{}\t{}\t{:?}", s.epoch, s.step, s.loss)
                .map_err(|e| Error::io("writing training log", e))?;
        }
        Ok(())
    }
}

/// Splits an encoded document into windows of at most `max_len` tokens,
/// never separating a priming token from its anchor value.
pub fn chunk_sequence(ids: &[u32], max_len: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < ids.len() {
        let mut end = (start + max_len).min(ids.len());
        if end < ids.len() && end - start > 1 && is_priming_id(ids[end - 1]) {
            end -= 1;
        }
        out.push(ids[start..end].to_vec());
        start = end;
    }
    out
}

/// Encodes documents and chunks them to the model's window.
pub fn encode_corpus(docs: &[Vec<String>], vocab: &Vocab, max_len: usize) -> Vec<Vec<u32>> {
    docs.iter()
        .flat_map(|d| chunk_sequence(&vocab.encode(d), max_len))
        .collect()
}

fn mask_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    seed ^ ((epoch as u64) << 40) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn batch_targets(items: &[MaskedSequence]) -> (Batch, Vec<(usize, u32)>) {
    let mut batch = Batch::default();
    let mut targets = Vec::new();
    for item in items {
        let start = batch.push(&item.input);
        for (i, &l) in item.labels.iter().enumerate() {
            if l != IGNORE {
                targets.push((start + i, l as u32));
            }
        }
    }
    (batch, targets)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub masking: MaskingMode,
    /// Stop after this many optimizer steps (for smoke tests).
    pub max_steps: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            masking: MaskingMode::Anchor,
            max_steps: None,
        }
    }
}

/// Trains an encoder on tokenized (augmented) documents.
pub fn train(
    config: &EncoderConfig,
    docs: &[Vec<String>],
    vocab: &Vocab,
    options: TrainOptions,
) -> Result<EncoderCheckpoint> {
    train_from(None, config, docs, vocab, options)
}

/// Continues training from `base` when given (fresh optimizer state and
/// schedule), otherwise from a new initialization. The base must share the
/// vocabulary and shape.
pub fn train_from(
    base: Option<&EncoderCheckpoint>,
    config: &EncoderConfig,
    docs: &[Vec<String>],
    vocab: &Vocab,
    options: TrainOptions,
) -> Result<EncoderCheckpoint> {
    config.validate()?;
    if docs.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    let sequences = encode_corpus(docs, vocab, config.max_seq_len);
    let mut encoder = match base {
        None => Encoder::new(config, vocab.len())?,
        Some(b) => {
            if &b.vocab != vocab {
                return Err(Error::Config("base checkpoint has a different vocabulary".into()));
            }
            if !b.config.same_shape(config) {
                return Err(Error::Config("base checkpoint has a different encoder shape".into()));
            }
            let mut e = b.encoder.clone();
            e.dropout = config.dropout;
            e
        }
    };
    let mut grads = encoder.params.zeros_like();
    let mut adam = Adam::new(&mut encoder.params);

    let usable = sequences
        .iter()
        .enumerate()
        .filter(|(i, s)| mask_sequence(s, options.masking, mask_seed(config.seed, 0, *i)).is_some())
        .count();
    if usable == 0 {
        return Err(Error::Config(
            "no trainable sequences: corpus has no priming groups to mask".into(),
        ));
    }
    let steps_per_epoch = usable.div_ceil(config.batch_size);
    let mut total_steps = steps_per_epoch * config.epochs;
    if let Some(cap) = options.max_steps {
        total_steps = total_steps.min(cap);
    }

    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5DEE_CE66);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xD0D0_0D0D);
    let mut step = 0;

    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let masked: Vec<MaskedSequence> = order
            .iter()
            .filter_map(|&i| {
                mask_sequence(&sequences[i], options.masking, mask_seed(config.seed, epoch, i))
            })
            .collect();
        let mut epoch_sum = 0.0;
        let mut epoch_batches = 0;
        for (b, chunk) in masked.chunks(config.batch_size).enumerate() {
            if step >= total_steps {
                if epoch_batches > 0 {
                    log.epoch_mean_loss.push(epoch_sum / epoch_batches as f64);
                }
                break 'epochs;
            }
            let (batch, targets) = batch_targets(chunk);
            grads.fill_zero();
            let rng = (config.dropout > 0.0).then_some(&mut dropout_rng);
            let loss = encoder.mlm_loss(&batch, &targets, rng, Some(&mut grads))?;
            let lr = learning_rate_at(config, step, total_steps);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    loss,
                    epoch,
                    batch: b,
                    lr,
                });
            }
            adam.step(&mut encoder.params, &mut grads, lr);
            log.steps.push(StepRecord { epoch, step, loss });
            epoch_sum += loss;
            epoch_batches += 1;
            step += 1;
        }
        let mean = epoch_sum / epoch_batches.max(1) as f64;
        info!("epoch {epoch}: mean masked loss {mean:.4} over {epoch_batches} batches");
        log.epoch_mean_loss.push(mean);
    }

    Ok(EncoderCheckpoint::new(
        config.clone(),
        vocab.clone(),
        options.masking,
        encoder,
        log,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlm::vocab::{ANC_ID, LA_ID};

    #[test]
    fn schedule_shape() {
        let c = EncoderConfig {
            learning_rate: 1.0,
            warmup_fraction: 0.1,
            ..Default::default()
        };
        assert!((learning_rate_at(&c, 0, 100) - 0.1).abs() < 1e-12);
        assert!((learning_rate_at(&c, 9, 100) - 1.0).abs() < 1e-12);
        assert!((learning_rate_at(&c, 10, 100) - 1.0).abs() < 1e-12);
        assert!((learning_rate_at(&c, 99, 100) - 1.0 / 90.0).abs() < 1e-12);
    }

    #[test]
    fn chunks_keep_priming_groups_together() {
        let ids = [9, 9, 9, ANC_ID, 7, 9, LA_ID, 8];
        let chunks = chunk_sequence(&ids, 4);
        assert_eq!(chunks, vec![vec![9, 9, 9], vec![ANC_ID, 7, 9], vec![LA_ID, 8]]);
        assert_eq!(chunks.concat(), ids);
    }
}
