//! Seeded synthetic corpora with log-uniformly distributed numerals.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const WORDS: &[&str] = &[
    "the", "a", "of", "in", "and", "to", "was", "for", "on", "with", "by", "at", "from", "about",
    "city", "river", "team", "album", "season", "people", "station", "company", "game", "route",
    "built", "released", "recorded", "reported", "moved", "opened", "scored", "sold", "held",
    "large", "small", "new", "old", "first", "last", "north", "south", "early", "late", "local",
    "population", "miles", "copies", "votes", "tons", "seats", "games", "years", "dollars",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub sentences: usize,
    /// Distinct numerals available to the generator.
    pub pool_size: usize,
    pub min_value: f64,
    pub max_value: f64,
    pub min_words: usize,
    pub max_words: usize,
    pub max_numerals: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sentences: 20_000,
            pool_size: 2_000,
            min_value: 1.0,
            max_value: 1e6,
            min_words: 4,
            max_words: 9,
            max_numerals: 2,
            seed: 0,
        }
    }
}

/// Draws an integer log-uniformly from `[lo, hi]`.
pub fn log_uniform_integer<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random_range(lo.ln()..=hi.ln());
    u.exp().round().clamp(lo.ceil(), hi.floor())
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub documents: Vec<String>,
    /// Sorted distinct numeral values the generator drew from.
    pub pool: Vec<f64>,
}

pub fn generate(config: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pool: Vec<f64> = (0..config.pool_size)
        .map(|_| log_uniform_integer(&mut rng, config.min_value, config.max_value))
        .collect();
    pool.sort_by(f64::total_cmp);
    pool.dedup();

    let documents = (0..config.sentences)
        .map(|_| {
            let n_words = rng.random_range(config.min_words..=config.max_words);
            let mut words: Vec<String> = (0..n_words)
                .map(|_| WORDS.choose(&mut rng).expect("non-empty lexicon").to_string())
                .collect();
            let n_num = rng.random_range(1..=config.max_numerals.max(1));
            for _ in 0..n_num {
                let v = *pool.choose(&mut rng).expect("non-empty pool");
                let at = rng.random_range(0..=words.len());
                words.insert(at, format!("{v:.0}"));
            }
            words.push(".".to_string());
            words.join(" ")
        })
        .collect();
    SynthCorpus { documents, pool }
}
