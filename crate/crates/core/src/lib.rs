//! Numeral anchors for language-model numeracy.
//!
//! The crate covers the whole workflow: extracting numerals from a corpus
//! ([`numeral`]), fitting a one-dimensional Gaussian mixture and deriving
//! anchors from its means ([`gmm`]), priming the corpus with anchor tokens
//! ([`augment`]), training a small encoder with anchor masking ([`mlm`]),
//! probing the resulting numeral embeddings ([`probe`]) and running all of
//! it as a staged, checksummed pipeline ([`pipeline`]).

pub mod augment;
pub mod error;
pub mod gmm;
pub mod linalg;
pub mod mlm;
pub mod numeral;
pub mod pipeline;
pub mod probe;
pub mod synth;

pub use error::{Error, Result};
