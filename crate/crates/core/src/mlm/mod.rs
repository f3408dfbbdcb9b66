//! Whole-token vocabulary, anchor masking, a small transformer encoder
//! trained with masked-LM, and numeral embedding retrieval.

pub mod checkpoint;
pub mod embed;
pub mod encoder;
pub mod masking;
pub mod train;
pub mod vocab;

pub use checkpoint::EncoderCheckpoint;
pub use embed::{embed_numeral, numeral_taps, NumeralEmbedding, OodEmbedding};
pub use encoder::{Batch, Encoder, EncoderConfig, EncoderParams};
pub use masking::{mask_anchor_tokens, MaskedSequence, MaskingMode};
pub use train::{train, train_from, TrainOptions, TrainingLog};
pub use vocab::Vocab;

/// Builds the vocabulary over an augmented corpus.
pub fn build_vocab(docs: &[Vec<String>], min_frequency: usize) -> Vocab {
    Vocab::build(docs, min_frequency)
}
