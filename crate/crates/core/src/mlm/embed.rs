use serde::{Deserialize, Serialize};

use super::checkpoint::EncoderCheckpoint;
use super::encoder::{Batch, EmbeddingOverride, EMBEDDING_LAYERS};
use super::vocab::UNK_ID;
use crate::error::{Error, Result};
use crate::numeral::{is_numeral, pre_tokenize, render_value};

/// Probe frames; `<N>` marks the numeral slot.
pub const TEMPLATES: [&[&str]; 1] = [&["the", "value", "is", "<N>", "."]];
/// Number of in-vocabulary neighbours averaged for unseen numerals.
pub const OOD_NEIGHBOURS: usize = 16;

/// Input embedding used for numerals without a vocabulary entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OodEmbedding {
    /// `<UNK>` embedding plus the mean embedding of the nearest in-vocab
    /// numerals by value.
    #[default]
    NeighbourMean,
    /// Plain `<UNK>` embedding.
    RawUnk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumeralEmbedding {
    pub value: f64,
    pub vector: Vec<f64>,
    pub checkpoint_id: String,
    pub template_id: usize,
}

/// Per-layer hidden states at the numeral slot.
#[derive(Debug, Clone, PartialEq)]
pub struct NumeralTaps {
    pub layers: Vec<Vec<f64>>,
    pub in_vocab: bool,
}

fn render_single_token(value: f64) -> Result<String> {
    if !value.is_finite() || value < 0.0 {
        return Err(Error::UnsupportedShape(value.to_string()));
    }
    let surface = render_value(value);
    match pre_tokenize(&surface).as_slice() {
        [tok] if is_numeral(tok) => Ok(tok.clone()),
        _ => Err(Error::UnsupportedShape(surface)),
    }
}

/// `<UNK>` plus the mean of the `OOD_NEIGHBOURS` closest corpus numerals.
fn neighbour_mean_embedding(ckpt: &EncoderCheckpoint, value: f64) -> Vec<f64> {
    let params = &ckpt.encoder.params;
    let mut out = params.token_embedding(UNK_ID).to_vec();
    let numerals = ckpt.vocab.numerals();
    if numerals.is_empty() {
        return out;
    }
    // two-pointer walk outward from the insertion point
    let mut hi = numerals.partition_point(|&(v, _)| v < value);
    let mut lo = hi;
    let mut picked = Vec::with_capacity(OOD_NEIGHBOURS);
    while picked.len() < OOD_NEIGHBOURS && (lo > 0 || hi < numerals.len()) {
        let take_lo = match (lo > 0, hi < numerals.len()) {
            (true, true) => value - numerals[lo - 1].0 <= numerals[hi].0 - value,
            (l, _) => l,
        };
        if take_lo {
            lo -= 1;
            picked.push(numerals[lo].1);
        } else {
            picked.push(numerals[hi].1);
            hi += 1;
        }
    }
    let scale = 1.0 / picked.len() as f64;
    for id in picked {
        for (o, e) in out.iter_mut().zip(params.token_embedding(id)) {
            *o += e * scale;
        }
    }
    out
}

/// Hidden states of every layer at the numeral slot of the probe frame.
pub fn numeral_taps(
    ckpt: &EncoderCheckpoint,
    value: f64,
    template_id: usize,
    ood: OodEmbedding,
) -> Result<NumeralTaps> {
    let template = TEMPLATES
        .get(template_id)
        .ok_or_else(|| Error::Config(format!("unknown template id {template_id}")))?;
    let surface = render_single_token(value)?;
    let slot = template
        .iter()
        .position(|&t| t == "<N>")
        .expect("template has a numeral slot");
    let known = ckpt.vocab.numeral_id(value).or_else(|| ckpt.vocab.get(&surface));
    let ids: Vec<u32> = template
        .iter()
        .map(|&t| {
            if t == "<N>" {
                known.unwrap_or(UNK_ID)
            } else {
                ckpt.vocab.id(t)
            }
        })
        .collect();
    let mut batch = Batch::default();
    batch.push(&ids);
    let injected = match (known, ood) {
        (None, OodEmbedding::NeighbourMean) => Some(neighbour_mean_embedding(ckpt, value)),
        _ => None,
    };
    let input_override = injected.as_deref().map(|vector| EmbeddingOverride { row: slot, vector });
    let fwd = ckpt.encoder.forward(&batch, None, input_override)?;
    let h = ckpt.encoder.hidden();
    Ok(NumeralTaps {
        layers: fwd
            .hidden_states()
            .iter()
            .map(|hs| hs[slot * h..(slot + 1) * h].to_vec())
            .collect(),
        in_vocab: known.is_some(),
    })
}

/// Sum of the last four layers' hidden states at the numeral slot.
pub fn embed_numeral(
    ckpt: &EncoderCheckpoint,
    value: f64,
    template_id: usize,
    ood: OodEmbedding,
) -> Result<NumeralEmbedding> {
    let taps = numeral_taps(ckpt, value, template_id, ood)?;
    if taps.layers.len() < EMBEDDING_LAYERS {
        return Err(Error::Config(format!(
            "checkpoint has {} layers; embeddings need {EMBEDDING_LAYERS}",
            taps.layers.len()
        )));
    }
    let mut vector = vec![0.0; ckpt.encoder.hidden()];
    for layer in &taps.layers[taps.layers.len() - EMBEDDING_LAYERS..] {
        for (v, x) in vector.iter_mut().zip(layer) {
            *v += x;
        }
    }
    Ok(NumeralEmbedding {
        value,
        vector,
        checkpoint_id: ckpt.id().to_string(),
        template_id,
    })
}
