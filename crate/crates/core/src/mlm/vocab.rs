use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::augment::{is_priming_token, ANC, LA, RA};
use crate::error::{Error, Result};
use crate::numeral::{is_numeral, parse_numeral};

pub const PAD: &str = "<PAD>";
pub const UNK: &str = "<UNK>";
pub const MASK: &str = "<MASK>";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const MASK_ID: u32 = 2;
pub const ANC_ID: u32 = 3;
pub const LA_ID: u32 = 4;
pub const RA_ID: u32 = 5;

pub const RESERVED: [&str; 6] = [PAD, UNK, MASK, ANC, LA, RA];

pub fn is_priming_id(id: u32) -> bool {
    matches!(id, ANC_ID | LA_ID | RA_ID)
}

/// Whole-token vocabulary. Ids are dense from zero: the reserved tokens
/// first, then corpus tokens by descending frequency and ascending text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
    /// Ids of tokens that occur as corpus numerals (not as anchor values),
    /// sorted by value.
    numerals: Vec<(f64, u32)>,
}

impl Vocab {
    /// Builds a vocabulary over tokenized documents.
    pub fn build(docs: &[Vec<String>], min_frequency: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut numeral_tokens: HashMap<&str, f64> = HashMap::new();
        for doc in docs {
            for (i, tok) in doc.iter().enumerate() {
                *counts.entry(tok.as_str()).or_insert(0) += 1;
                let after_priming = i > 0 && is_priming_token(&doc[i - 1]);
                if !after_priming && is_numeral(tok) {
                    if let Ok(v) = parse_numeral(tok) {
                        numeral_tokens.insert(tok.as_str(), v);
                    }
                }
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_frequency.max(1) && !RESERVED.contains(&t))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let tokens: Vec<String> = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t.to_string()))
            .collect();
        let mut vocab = Self::from_tokens(tokens);
        let mut numerals: Vec<(f64, u32)> = numeral_tokens
            .into_iter()
            .filter_map(|(t, v)| vocab.index.get(t).map(|&id| (v, id)))
            .collect();
        numerals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        vocab.numerals = numerals;
        vocab
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            tokens,
            index,
            numerals: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Corpus numeral tokens as `(value, id)`, ascending by value.
    pub fn numerals(&self) -> &[(f64, u32)] {
        &self.numerals
    }

    /// Id of the corpus numeral token with exactly this value.
    pub fn numeral_id(&self, value: f64) -> Option<u32> {
        let i = self.numerals.partition_point(|&(v, _)| v < value);
        self.numerals.get(i).filter(|&&(v, _)| v == value).map(|&(_, id)| id)
    }

    /// Restores the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(out, "{t}\t{i}").map_err(|e| Error::io("writing vocab", e))?;
        }
        Ok(())
    }

    /// Reads a `token \t id` file. Numeral metadata is not part of this
    /// format; it is re-derived from tokens that parse as numerals.
    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("reading vocab", e))?;
            let bad = || Error::format("vocab", format!("line {}: {line:?}", lineno + 1));
            let (tok, id) = line.rsplit_once('\t').ok_or_else(bad)?;
            let id: usize = id.parse().map_err(|_| bad())?;
            if id != tokens.len() {
                return Err(bad());
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::format("vocab", "reserved tokens missing or out of place"));
        }
        let mut vocab = Self::from_tokens(tokens);
        let mut numerals: Vec<(f64, u32)> = vocab
            .tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| is_numeral(t))
            .filter_map(|(i, t)| parse_numeral(t).ok().map(|v| (v, i as u32)))
            .collect();
        numerals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        vocab.numerals = numerals;
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn reserved_ids_fixed() {
        let v = Vocab::build(&docs(&["6 <ANC> 5"]), 1);
        for (i, r) in RESERVED.iter().enumerate() {
            assert_eq!(v.id(r), i as u32);
        }
        assert_eq!(v.len(), RESERVED.len() + 2);
        assert_ne!(v.id("6"), UNK_ID);
        assert_ne!(v.id("5"), UNK_ID);
    }

    #[test]
    fn rare_tokens_map_to_unk() {
        let v = Vocab::build(&docs(&["a a b", "a c c"]), 2);
        assert_ne!(v.id("a"), UNK_ID);
        assert_ne!(v.id("c"), UNK_ID);
        assert_eq!(v.id("b"), UNK_ID);
        assert_eq!(v.id("never"), UNK_ID);
        // frequency descending, then lexicographic
        assert_eq!(v.id("a"), 6);
        assert_eq!(v.id("c"), 7);
    }

    #[test]
    fn deterministic_ids() {
        let d = docs(&["z y x 3 <LA> 2", "y x 3"]);
        assert_eq!(Vocab::build(&d, 1), Vocab::build(&d, 1));
    }

    #[test]
    fn anchor_values_are_not_corpus_numerals() {
        let v = Vocab::build(&docs(&["6 <ANC> 5 April 1911 <ANC> 2000"]), 1);
        let values: Vec<f64> = v.numerals().iter().map(|p| p.0).collect();
        assert_eq!(values, [6.0, 1911.0]);
        assert_eq!(v.numeral_id(1911.0), Some(v.id("1911")));
        assert_eq!(v.numeral_id(5.0), None);
    }

    #[test]
    fn tsv_round_trip() {
        let v = Vocab::build(&docs(&["the value is 7 .", "7 <RA> 9"]), 1);
        let mut buf = Vec::new();
        v.write_tsv(&mut buf).unwrap();
        let back = Vocab::read_tsv(&buf[..]).unwrap();
        for i in 0..v.len() as u32 {
            assert_eq!(back.token(i), v.token(i));
            assert_eq!(back.id(v.token(i)), i);
        }
    }
}
