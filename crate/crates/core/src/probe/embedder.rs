use std::cell::RefCell;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::mlm::{embed_numeral, EncoderCheckpoint, OodEmbedding};

/// Anything that maps a numeral value to a fixed-width vector.
pub trait NumeralEmbedder {
    fn dim(&self) -> usize;
    fn embed(&self, value: f64) -> Result<Vec<f64>>;
    /// Identifier recorded in reports.
    fn name(&self) -> String;
}

/// Embeddings read from a trained encoder checkpoint.
pub struct CheckpointEmbedder<'a> {
    pub checkpoint: &'a EncoderCheckpoint,
    pub template_id: usize,
    pub ood: OodEmbedding,
}

impl<'a> CheckpointEmbedder<'a> {
    pub fn new(checkpoint: &'a EncoderCheckpoint) -> Self {
        Self {
            checkpoint,
            template_id: 0,
            ood: OodEmbedding::default(),
        }
    }
}

impl NumeralEmbedder for CheckpointEmbedder<'_> {
    fn dim(&self) -> usize {
        self.checkpoint.encoder.hidden()
    }

    fn embed(&self, value: f64) -> Result<Vec<f64>> {
        Ok(embed_numeral(self.checkpoint, value, self.template_id, self.ood)?.vector)
    }

    fn name(&self) -> String {
        format!("checkpoint:{}", self.checkpoint.id())
    }
}

/// The single feature `ln(value)`.
pub struct LogFeatureEmbedder;

impl NumeralEmbedder for LogFeatureEmbedder {
    fn dim(&self) -> usize {
        1
    }

    fn embed(&self, value: f64) -> Result<Vec<f64>> {
        Ok(vec![value.ln()])
    }

    fn name(&self) -> String {
        "log-feature".into()
    }
}

/// Uniform noise in [-1, 1], deterministic per (seed, value).
pub struct RandomEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl NumeralEmbedder for RandomEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, value: f64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ value.to_bits().rotate_left(17));
        Ok((0..self.dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
    }

    fn name(&self) -> String {
        format!("random:{}", self.seed)
    }
}

/// The same vector for every numeral.
pub struct ConstantEmbedder {
    pub dim: usize,
    pub value: f64,
}

impl NumeralEmbedder for ConstantEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, _value: f64) -> Result<Vec<f64>> {
        Ok(vec![self.value; self.dim])
    }

    fn name(&self) -> String {
        "constant".into()
    }
}

/// Memoizes another embedder by exact value.
pub struct CachedEmbedder<E> {
    inner: E,
    cache: RefCell<HashMap<u64, Vec<f64>>>,
}

impl<E: NumeralEmbedder> CachedEmbedder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            cache: RefCell::new(HashMap::new()),
        }
    }
}

impl<E: NumeralEmbedder> NumeralEmbedder for CachedEmbedder<E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, value: f64) -> Result<Vec<f64>> {
        if let Some(v) = self.cache.borrow().get(&value.to_bits()) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(value)?;
        self.cache.borrow_mut().insert(value.to_bits(), v.clone());
        Ok(v)
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}
