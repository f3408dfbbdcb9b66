//! Anchor priming: each numeral token is followed by a priming token
//! (`<ANC>`, `<LA>` or `<RA>`) and the rendered value of its nearest anchor.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{AnchorTable, Direction, Space};
use crate::numeral::{is_numeral, NumeralOccurrence};

pub const ANC: &str = "<ANC>";
pub const LA: &str = "<LA>";
pub const RA: &str = "<RA>";
pub const PRIMING_TOKENS: [&str; 3] = [ANC, LA, RA];

pub fn is_priming_token(tok: &str) -> bool {
    PRIMING_TOKENS.contains(&tok)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Anchors,
    LnAnchors,
    AnchorsDir,
    LnAnchorsDir,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Anchors,
        Strategy::LnAnchors,
        Strategy::AnchorsDir,
        Strategy::LnAnchorsDir,
    ];

    pub fn space(self) -> Space {
        match self {
            Strategy::Anchors | Strategy::AnchorsDir => Space::Linear,
            Strategy::LnAnchors | Strategy::LnAnchorsDir => Space::Log,
        }
    }

    pub fn directional(self) -> bool {
        matches!(self, Strategy::AnchorsDir | Strategy::LnAnchorsDir)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Anchors => "anchors",
            Strategy::LnAnchors => "ln-anchors",
            Strategy::AnchorsDir => "anchors-dir",
            Strategy::LnAnchorsDir => "ln-anchors-dir",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown strategy {s:?}")))
    }
}

/// How log-space anchors are written into the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogRendering {
    /// The log-magnitude itself, four decimals.
    #[default]
    LogValue,
    /// `e^m`, rendered like a linear anchor.
    Exponentiated,
}

/// Renders an anchor value as a single corpus token.
pub fn render_anchor(anchor: f64, space: Space) -> String {
    render_anchor_with(anchor, space, LogRendering::LogValue)
}

pub fn render_anchor_with(anchor: f64, space: Space, log_rendering: LogRendering) -> String {
    match (space, log_rendering) {
        (Space::Log, LogRendering::LogValue) => format!("{anchor:.4}"),
        (Space::Log, LogRendering::Exponentiated) => render_linear(anchor.exp()),
        (Space::Linear, _) => render_linear(anchor),
    }
}

fn render_linear(anchor: f64) -> String {
    let rounded = anchor.round();
    if (anchor - rounded).abs() <= 1e-9 {
        return format!("{:.0}", rounded + 0.0);
    }
    // six significant digits
    let magnitude = anchor.abs().log10().floor() as i32;
    if magnitude >= 5 {
        let scale = 10f64.powi(magnitude - 5);
        return format!("{:.0}", (anchor / scale).round() * scale);
    }
    let decimals = (5 - magnitude) as usize;
    let s = format!("{anchor:.decimals$}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Anchor values are numerals, optionally negative (log anchors below 1).
pub fn is_anchor_value(tok: &str) -> bool {
    is_numeral(tok.strip_prefix('-').unwrap_or(tok))
}

/// A numeral whose anchor could not be computed in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct FallbackWarning {
    pub token_index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDocument {
    pub tokens: Vec<String>,
    pub warnings: Vec<FallbackWarning>,
}

/// Anchor table plus the strategy that will use it; construction fails
/// when the table's space does not match the strategy.
#[derive(Debug, Clone)]
pub struct Augmenter<'a> {
    table: &'a AnchorTable,
    strategy: Strategy,
    log_rendering: LogRendering,
}

impl<'a> Augmenter<'a> {
    pub fn new(table: &'a AnchorTable, strategy: Strategy) -> Result<Self> {
        if table.space != strategy.space() {
            return Err(Error::Validation(format!(
                "strategy {strategy} needs a {} anchor table, got {}",
                strategy.space(),
                table.space
            )));
        }
        if table.is_empty() {
            return Err(Error::Config("empty anchor table".into()));
        }
        Ok(Self {
            table,
            strategy,
            log_rendering: LogRendering::LogValue,
        })
    }

    pub fn with_log_rendering(mut self, log_rendering: LogRendering) -> Self {
        self.log_rendering = log_rendering;
        self
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn augment(
        &self,
        tokens: &[String],
        occurrences: &[NumeralOccurrence],
    ) -> Result<AugmentedDocument> {
        if let Some((position, tok)) = tokens.iter().enumerate().find(|(_, t)| is_priming_token(t)) {
            return Err(Error::AlreadyAugmented {
                token: tok.clone(),
                position,
            });
        }
        let mut out = Vec::with_capacity(tokens.len() + 2 * occurrences.len());
        let mut warnings = Vec::new();
        let mut occ = occurrences.iter().peekable();
        for (i, tok) in tokens.iter().enumerate() {
            out.push(tok.clone());
            let Some(o) = occ.next_if(|o| o.token_index == i) else {
                continue;
            };
            if &o.surface != tok {
                return Err(Error::Config(format!(
                    "occurrence at {i} is {:?} but token is {tok:?}",
                    o.surface
                )));
            }
            let assignment = match self.table.nearest_anchor(o.value) {
                Ok(a) => a,
                Err(Error::Domain(_)) => {
                    warn!("numeral {} at token {i} has no log anchor; using linear fallback", o.value);
                    warnings.push(FallbackWarning {
                        token_index: i,
                        value: o.value,
                    });
                    self.table.nearest_anchor_linear_fallback(o.value)?
                }
                Err(e) => return Err(e),
            };
            let rendered = render_anchor_with(assignment.anchor, self.table.space, self.log_rendering);
            let priming = if self.strategy.directional() {
                match self.rendered_direction(&rendered, o.value)? {
                    Direction::Left => LA,
                    Direction::Right => RA,
                    Direction::Exact => ANC,
                }
            } else {
                ANC
            };
            out.push(priming.to_string());
            out.push(rendered);
        }
        if let Some(o) = occ.next() {
            return Err(Error::Config(format!(
                "occurrence at token {} is out of order or out of range",
                o.token_index
            )));
        }
        Ok(AugmentedDocument {
            tokens: out,
            warnings,
        })
    }
}

impl Augmenter<'_> {
    /// Direction of the anchor as written, so that rounding in the
    /// rendered token never contradicts the direction marker.
    fn rendered_direction(&self, rendered: &str, n: f64) -> Result<Direction> {
        let r: f64 = rendered
            .parse()
            .map_err(|_| Error::CorruptAugmentation(format!("unparseable anchor {rendered:?}")))?;
        let log_token = self.table.space == Space::Log && self.log_rendering == LogRendering::LogValue;
        let c = match (log_token, n > 0.0) {
            (true, true) => n.ln(),
            // a log token is always above a numeral with no logarithm
            (true, false) => return Ok(Direction::Right),
            (false, _) => n,
        };
        Ok(if r < c {
            Direction::Left
        } else if r > c {
            Direction::Right
        } else {
            Direction::Exact
        })
    }
}

pub fn augment_document(
    tokens: &[String],
    occurrences: &[NumeralOccurrence],
    table: &AnchorTable,
    strategy: Strategy,
) -> Result<AugmentedDocument> {
    Augmenter::new(table, strategy)?.augment(tokens, occurrences)
}

/// Removes every priming token together with the anchor value after it.
pub fn strip_augmentation(tokens: &[String]) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if is_priming_token(&tokens[i]) {
            match tokens.get(i + 1) {
                Some(v) if is_anchor_value(v) => i += 2,
                Some(v) => {
                    return Err(Error::CorruptAugmentation(format!(
                        "{} at {i} followed by non-value {v:?}",
                        tokens[i]
                    )))
                }
                None => {
                    return Err(Error::CorruptAugmentation(format!(
                        "{} at end of stream",
                        tokens[i]
                    )))
                }
            }
            continue;
        }
        out.push(tokens[i].clone());
        i += 1;
    }
    Ok(out)
}

/// `(numeral position, priming token, anchor value position)` for every
/// priming group in an augmented stream.
pub fn priming_groups(tokens: &[String]) -> Vec<(usize, usize, usize)> {
    tokens
        .iter()
        .enumerate()
        .filter(|(i, t)| is_priming_token(t) && *i > 0 && *i + 1 < tokens.len())
        .map(|(i, _)| (i - 1, i, i + 1))
        .collect()
}
