use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{is_priming_id, MASK_ID, PAD_ID};

/// Label value for positions that do not contribute to the loss.
pub const IGNORE: i64 = -100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSequence {
    pub input: Vec<u32>,
    pub labels: Vec<i64>,
}

impl MaskedSequence {
    pub fn masked_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != IGNORE)
            .map(|(i, _)| i)
    }
}

/// Which positions the trainer hides from the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MaskingMode {
    /// Every anchor value (the token after a priming token).
    Anchor,
    /// A seeded random fraction of ordinary tokens, used for the
    /// unaugmented control.
    Random { rate: f64 },
}

/// Masks exactly the anchor values. Returns `None` when the sequence holds
/// no priming group, so the caller can drop it from the batch.
pub fn mask_anchor_tokens(ids: &[u32]) -> Option<MaskedSequence> {
    let mut input = ids.to_vec();
    let mut labels = vec![IGNORE; ids.len()];
    let mut any = false;
    for i in 1..ids.len() {
        if is_priming_id(ids[i - 1]) && !is_priming_id(ids[i]) {
            input[i] = MASK_ID;
            labels[i] = ids[i] as i64;
            any = true;
        }
    }
    any.then_some(MaskedSequence { input, labels })
}

/// Masks `rate` of the non-padding positions (at least one), chosen with
/// the given seed.
pub fn mask_random_tokens(ids: &[u32], rate: f64, seed: u64) -> Option<MaskedSequence> {
    let candidates: Vec<usize> = (0..ids.len()).filter(|&i| ids[i] != PAD_ID).collect();
    if candidates.is_empty() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut input = ids.to_vec();
    let mut labels = vec![IGNORE; ids.len()];
    for &i in &candidates {
        if rng.random::<f64>() < rate {
            input[i] = MASK_ID;
            labels[i] = ids[i] as i64;
        }
    }
    if labels.iter().all(|&l| l == IGNORE) {
        let i = candidates[rng.random_range(0..candidates.len())];
        input[i] = MASK_ID;
        labels[i] = ids[i] as i64;
    }
    Some(MaskedSequence { input, labels })
}

pub fn mask_sequence(ids: &[u32], mode: MaskingMode, seed: u64) -> Option<MaskedSequence> {
    match mode {
        MaskingMode::Anchor => mask_anchor_tokens(ids),
        MaskingMode::Random { rate } => mask_random_tokens(ids, rate, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlm::vocab::{Vocab, ANC_ID, LA_ID, RA_ID};

    fn encode(v: &Vocab, s: &str) -> Vec<u32> {
        v.encode(&s.split_whitespace().map(str::to_string).collect::<Vec<_>>())
    }

    fn vocab() -> Vocab {
        let docs: Vec<Vec<String>> = ["6 <ANC> 5 April 1911 <LA> 2000 <RA> 9 plain words"]
            .iter()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect();
        Vocab::build(&docs, 1)
    }

    #[test]
    fn masks_anchor_value_only() {
        let v = vocab();
        let ids = encode(&v, "6 <ANC> 5 April");
        let m = mask_anchor_tokens(&ids).unwrap();
        assert_eq!(m.input, [v.id("6"), ANC_ID, MASK_ID, v.id("April")]);
        assert_eq!(m.labels, [IGNORE, IGNORE, v.id("5") as i64, IGNORE]);
    }

    #[test]
    fn masks_every_directional_anchor() {
        let v = vocab();
        let ids = encode(&v, "6 <LA> 5 April 1911 <RA> 2000");
        let m = mask_anchor_tokens(&ids).unwrap();
        assert_eq!(m.masked_positions().collect::<Vec<_>>(), [2, 6]);
        assert_eq!(m.input[1], LA_ID);
        assert_eq!(m.input[5], RA_ID);
    }

    #[test]
    fn unaugmented_is_skipped() {
        let v = vocab();
        assert!(mask_anchor_tokens(&encode(&v, "plain words 6")).is_none());
        assert!(mask_anchor_tokens(&[]).is_none());
    }

    #[test]
    fn random_masking_is_seeded_and_nonempty() {
        let v = vocab();
        let ids = encode(&v, "plain words April 6 plain words");
        let a = mask_random_tokens(&ids, 0.15, 9).unwrap();
        let b = mask_random_tokens(&ids, 0.15, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.masked_positions().count() >= 1);
    }
}
