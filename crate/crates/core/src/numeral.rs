//! Numeral recognition over whitespace/punctuation pre-tokenized text.
//!
//! A numeral is a maximal token made of ASCII digits with optional comma
//! group separators (groups of exactly three digits) and an optional single
//! decimal point followed by at least one digit. Signs, exponents, fractions
//! and number words are ordinary tokens. A digit run glued to letters
//! (`2nd`, `A4`) is an ordinary word token.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A numeral located in a tokenized document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumeralOccurrence {
    pub doc_id: usize,
    pub token_index: usize,
    pub surface: String,
    pub value: f64,
}

/// A tokenized document together with the numerals found in it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScannedDocument {
    pub tokens: Vec<String>,
    pub numerals: Vec<NumeralOccurrence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_tokens: usize,
    pub numeral_tokens: usize,
    pub numeral_fraction: f64,
    /// Integer-part digit count -> number of numerals.
    pub digit_length_histogram: BTreeMap<usize, usize>,
}

/// Length in bytes of the numeral grammar match starting at `s[0]`, or 0.
fn match_numeral(s: &[u8]) -> usize {
    let digits = |from: usize| s[from..].iter().take_while(|b| b.is_ascii_digit()).count();
    let lead = digits(0);
    if lead == 0 {
        return 0;
    }
    let mut end = lead;
    // comma groups only when the leading group has at most three digits
    if lead <= 3 {
        while end < s.len() && s[end] == b',' {
            let group = digits(end + 1);
            if group != 3 {
                break;
            }
            end += 4;
        }
    }
    if end < s.len() && s[end] == b'.' {
        let frac = digits(end + 1);
        if frac > 0 {
            end += 1 + frac;
        }
    }
    end
}

/// True when `surface` is, in its entirety, a numeral.
pub fn is_numeral(surface: &str) -> bool {
    !surface.is_empty() && match_numeral(surface.as_bytes()) == surface.len()
}

/// Parses a numeral surface into its base-10 value.
pub fn parse_numeral(surface: &str) -> Result<f64> {
    if !is_numeral(surface) {
        return Err(Error::NotANumeral(surface.to_string()));
    }
    let cleaned: String = surface.chars().filter(|&c| c != ',').collect();
    let value: f64 = cleaned
        .parse()
        .map_err(|_| Error::NotANumeral(surface.to_string()))?;
    if !value.is_finite() {
        return Err(Error::NumeralRange(surface.to_string()));
    }
    Ok(value)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits text on whitespace and punctuation. Words are maximal runs of
/// alphanumeric characters, numerals follow the grammar above, and every
/// other non-space character is a token of its own.
pub fn pre_tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < text.len() {
        let c = text[i..].chars().next().expect("char boundary");
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if is_word_char(c) {
            if c.is_ascii_digit() {
                let len = match_numeral(&bytes[i..]);
                let glued = text[i + len..].chars().next().is_some_and(is_word_char);
                if !glued {
                    tokens.push(text[i..i + len].to_string());
                    i += len;
                    continue;
                }
            }
            let len: usize = text[i..]
                .chars()
                .take_while(|&ch| is_word_char(ch))
                .map(char::len_utf8)
                .sum();
            tokens.push(text[i..i + len].to_string());
            i += len;
            continue;
        }
        tokens.push(c.to_string());
        i += c.len_utf8();
    }
    tokens
}

/// Tokenizes one document and records its numerals.
pub fn scan_document(doc_id: usize, text: &str) -> Result<ScannedDocument> {
    let tokens = pre_tokenize(text);
    let mut numerals = Vec::new();
    for (token_index, tok) in tokens.iter().enumerate() {
        if is_numeral(tok) {
            numerals.push(NumeralOccurrence {
                doc_id,
                token_index,
                surface: tok.clone(),
                value: parse_numeral(tok)?,
            });
        }
    }
    Ok(ScannedDocument { tokens, numerals })
}

/// Decodes and scans a corpus given as raw bytes per document.
pub fn scan_corpus<D: AsRef<[u8]>>(documents: &[D]) -> Result<Vec<ScannedDocument>> {
    documents
        .iter()
        .enumerate()
        .map(|(doc_id, raw)| {
            let text = std::str::from_utf8(raw.as_ref()).map_err(|e| Error::Decode {
                doc_id,
                offset: e.valid_up_to(),
            })?;
            scan_document(doc_id, text)
        })
        .collect()
}

/// Number of digits before the decimal point.
pub fn integer_digit_count(surface: &str) -> usize {
    surface
        .bytes()
        .take_while(|&b| b != b'.')
        .filter(u8::is_ascii_digit)
        .count()
}

pub fn corpus_numeral_stats(occurrences: &[NumeralOccurrence], total_tokens: usize) -> CorpusStats {
    let mut digit_length_histogram = BTreeMap::new();
    for occ in occurrences {
        *digit_length_histogram
            .entry(integer_digit_count(&occ.surface))
            .or_insert(0) += 1;
    }
    let numeral_tokens = occurrences.len();
    let numeral_fraction = if total_tokens == 0 {
        0.0
    } else {
        numeral_tokens as f64 / total_tokens as f64
    };
    CorpusStats {
        total_tokens,
        numeral_tokens,
        numeral_fraction,
        digit_length_histogram,
    }
}

/// Stats over an already scanned corpus.
pub fn scanned_corpus_stats(docs: &[ScannedDocument]) -> CorpusStats {
    let occurrences: Vec<NumeralOccurrence> =
        docs.iter().flat_map(|d| d.numerals.iter().cloned()).collect();
    let total = docs.iter().map(|d| d.tokens.len()).sum();
    corpus_numeral_stats(&occurrences, total)
}

/// Shortest decimal text that parses back to `value` (no grouping commas).
pub fn render_value(value: f64) -> String {
    let mut s = String::new();
    if value.fract() == 0.0 && value.abs() < 1e21 {
        write!(s, "{value:.0}").expect("write to string");
    } else {
        write!(s, "{value}").expect("write to string");
    }
    s
}

/// Writes occurrences as `doc_id \t token_index \t surface \t value` lines.
pub fn write_occurrences<W: Write>(mut out: W, occurrences: &[NumeralOccurrence]) -> Result<()> {
    for occ in occurrences {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            occ.doc_id,
            occ.token_index,
            occ.surface,
            render_value(occ.value)
        )
        .map_err(|e| Error::io("writing occurrences", e))?;
    }
    Ok(())
}

pub fn read_occurrences<R: BufRead>(input: R) -> Result<Vec<NumeralOccurrence>> {
    let mut out = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("reading occurrences", e))?;
        if line.is_empty() {
            continue;
        }
        let bad = || Error::format("occurrence file", format!("line {}: {line:?}", lineno + 1));
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad());
        }
        let doc_id = fields[0].parse().map_err(|_| bad())?;
        let token_index = fields[1].parse().map_err(|_| bad())?;
        let value: f64 = fields[3].parse().map_err(|_| bad())?;
        out.push(NumeralOccurrence {
            doc_id,
            token_index,
            surface: fields[2].to_string(),
            value,
        });
    }
    Ok(out)
}

/// Splits newline-delimited text into documents, dropping blank lines.
pub fn split_lines(raw: &[u8]) -> Vec<&[u8]> {
    raw.split(|&b| b == b'\n')
        .map(|l| l.strip_suffix(b"\r").unwrap_or(l))
        .filter(|l| !l.iter().all(u8::is_ascii_whitespace))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(text: &str) -> Vec<(usize, f64)> {
        scan_document(0, text)
            .unwrap()
            .numerals
            .iter()
            .map(|o| (o.token_index, o.value))
            .collect()
    }

    #[test]
    fn finds_date_numerals() {
        let doc = scan_document(0, "Philadelphia on 6 April 1911").unwrap();
        assert_eq!(doc.tokens, ["Philadelphia", "on", "6", "April", "1911"]);
        assert_eq!(values("Philadelphia on 6 April 1911"), [(2, 6.0), (4, 1911.0)]);
    }

    #[test]
    fn no_digits() {
        assert!(values("no digits here").is_empty());
    }

    #[test]
    fn comma_groups() {
        assert_eq!(values("costs 1,250 dollars"), [(1, 1250.0)]);
        assert_eq!(parse_numeral("1,250").unwrap(), 1250.0);
        assert_eq!(parse_numeral("12,345,678.25").unwrap(), 12_345_678.25);
    }

    #[test]
    fn parse_literals() {
        assert_eq!(parse_numeral("1911").unwrap(), 1911.0);
        assert_eq!(parse_numeral("3.5").unwrap(), 3.5);
        assert_eq!(parse_numeral("007").unwrap(), 7.0);
    }

    #[test]
    fn parse_rejects_non_numerals() {
        for s in ["", "-5", "1e5", "1/2", "seven", "1,25", "1.", ".5", "1.2.3", "1234,567"] {
            assert!(
                matches!(parse_numeral(s), Err(Error::NotANumeral(_))),
                "{s:?} should be rejected"
            );
        }
    }

    #[test]
    fn parse_overflow_is_range_error() {
        let huge = "9".repeat(400);
        assert!(matches!(parse_numeral(&huge), Err(Error::NumeralRange(_))));
    }

    #[test]
    fn punctuation_and_glued_tokens() {
        assert_eq!(
            pre_tokenize("In 2nd place, A4 paper cost 3.5. Then -7 and 1,25!"),
            [
                "In", "2nd", "place", ",", "A4", "paper", "cost", "3.5", ".", "Then", "-", "7",
                "and", "1", ",", "25", "!"
            ]
        );
        let nums: Vec<f64> = values("In 2nd place, A4 paper cost 3.5. Then -7")
            .into_iter()
            .map(|(_, v)| v)
            .collect();
        assert_eq!(nums, [3.5, 7.0]);
    }

    #[test]
    fn decode_error_reports_offset() {
        let docs: Vec<Vec<u8>> = vec![b"fine".to_vec(), vec![b'a', b'b', 0xff, b'c']];
        match scan_corpus(&docs) {
            Err(Error::Decode { doc_id, offset }) => {
                assert_eq!((doc_id, offset), (1, 2));
            }
            other => panic!("expected decode error, got {other:?}"),
        }
    }

    #[test]
    fn stats_counting() {
        let occ = scan_document(0, "Philadelphia on 6 April 1911").unwrap().numerals;
        let stats = corpus_numeral_stats(&occ, 100);
        assert_eq!(stats.numeral_fraction, 0.02);
        assert_eq!(stats.digit_length_histogram, BTreeMap::from([(1, 1), (4, 1)]));
    }

    #[test]
    fn empty_corpus_stats() {
        let stats = corpus_numeral_stats(&[], 0);
        assert_eq!(stats.total_tokens, 0);
        assert_eq!(stats.numeral_tokens, 0);
        assert_eq!(stats.numeral_fraction, 0.0);
        assert!(stats.digit_length_histogram.is_empty());
    }

    #[test]
    fn occurrence_file_round_trip() {
        let docs = scan_corpus(&["a 1,250 b 3.5", "x 7"]).unwrap();
        let occ: Vec<_> = docs.iter().flat_map(|d| d.numerals.clone()).collect();
        let mut buf = Vec::new();
        write_occurrences(&mut buf, &occ).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "0\t1\t1,250\t1250\n0\t3\t3.5\t3.5\n1\t1\t7\t7\n"
        );
        assert_eq!(read_occurrences(&buf[..]).unwrap(), occ);
    }

    #[test]
    fn render_is_shortest_round_trip() {
        assert_eq!(render_value(1250.0), "1250");
        assert_eq!(render_value(3.5), "3.5");
        assert_eq!(render_value(0.1), "0.1");
    }
}
