use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedder::NumeralEmbedder;
use crate::error::{Error, Result};
use crate::synth::log_uniform_integer;

/// Items per list in the extremum tasks.
pub const LIST_LEN: usize = 5;
const MAX_DRAWS: usize = 10_000;

/// Sorted, distinct, positive numeral values seen in the corpus.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NumeralSet {
    values: Vec<f64>,
}

impl NumeralSet {
    pub fn new(values: impl IntoIterator<Item = f64>) -> Self {
        let mut values: Vec<f64> = values.into_iter().filter(|v| v.is_finite() && *v > 0.0).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn contains(&self, value: f64) -> bool {
        self.values.binary_search_by(|v| v.total_cmp(&value)).is_ok()
    }

    /// Members inside the closed interval.
    pub fn within(&self, lower: f64, upper: f64) -> &[f64] {
        let a = self.values.partition_point(|&v| v < lower);
        let b = self.values.partition_point(|&v| v <= upper);
        &self.values[a..b.max(a)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RangeLabel {
    #[serde(rename = "1-100")]
    OneToHundred,
    #[serde(rename = "100-1k")]
    HundredToThousand,
    #[serde(rename = "1k-10k")]
    ThousandToTenThousand,
    #[serde(rename = "10k-1e10")]
    TenThousandToTenBillion,
    #[serde(rename = "all")]
    All,
}

impl RangeLabel {
    pub const ALL_LABELS: [RangeLabel; 5] = [
        RangeLabel::OneToHundred,
        RangeLabel::HundredToThousand,
        RangeLabel::ThousandToTenThousand,
        RangeLabel::TenThousandToTenBillion,
        RangeLabel::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RangeLabel::OneToHundred => "1-100",
            RangeLabel::HundredToThousand => "100-1k",
            RangeLabel::ThousandToTenThousand => "1k-10k",
            RangeLabel::TenThousandToTenBillion => "10k-1e10",
            RangeLabel::All => "all",
        }
    }

    /// Only the two upper fixed ranges are evaluated out of domain.
    pub fn admits_ood(self) -> bool {
        matches!(self, RangeLabel::ThousandToTenThousand | RangeLabel::TenThousandToTenBillion)
    }
}

impl fmt::Display for RangeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RangeLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL_LABELS
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown range {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSpec {
    pub lower: f64,
    pub upper: f64,
    pub label: RangeLabel,
}

impl RangeSpec {
    /// Resolves a label; `All` spans the corpus numerals.
    pub fn resolve(label: RangeLabel, corpus: &NumeralSet) -> Result<Self> {
        let (lower, upper) = match label {
            RangeLabel::OneToHundred => (1.0, 100.0),
            RangeLabel::HundredToThousand => (100.0, 1e3),
            RangeLabel::ThousandToTenThousand => (1e3, 1e4),
            RangeLabel::TenThousandToTenBillion => (1e4, 1e10),
            RangeLabel::All => match corpus.values() {
                [first, .., last] => (*first, *last),
                _ => {
                    return Err(Error::InfeasibleSplit(
                        "range all needs at least two distinct corpus numerals".into(),
                    ))
                }
            },
        };
        Ok(Self { lower, upper, label })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    InDomain,
    #[serde(rename = "ood")]
    OutOfDomain,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::InDomain => "in-domain",
            Split::OutOfDomain => "ood",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in-domain" => Ok(Split::InDomain),
            "ood" => Ok(Split::OutOfDomain),
            _ => Err(Error::Validation(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Decoding,
    Addition,
    ListMax,
    ListMin,
}

impl Task {
    pub const ALL_TASKS: [Task; 4] = [Task::Decoding, Task::Addition, Task::ListMax, Task::ListMin];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Decoding => "decoding",
            Task::Addition => "addition",
            Task::ListMax => "list-max",
            Task::ListMin => "list-min",
        }
    }

    /// Numerals per item.
    pub fn arity(self) -> usize {
        match self {
            Task::Decoding => 1,
            Task::Addition => 2,
            Task::ListMax | Task::ListMin => LIST_LEN,
        }
    }

    pub fn is_list(self) -> bool {
        matches!(self, Task::ListMax | Task::ListMin)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL_TASKS
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown task {s:?}")))
    }
}

/// Draws numerals for one (range, split) cell.
pub struct NumeralSampler<'a> {
    range: RangeSpec,
    split: Split,
    corpus: &'a NumeralSet,
    members: &'a [f64],
}

impl<'a> NumeralSampler<'a> {
    pub fn new(range: RangeSpec, split: Split, corpus: &'a NumeralSet) -> Result<Self> {
        let members = corpus.within(range.lower, range.upper);
        match split {
            Split::InDomain if members.is_empty() => Err(Error::InfeasibleSplit(format!(
                "no corpus numerals in range {}",
                range.label
            ))),
            Split::OutOfDomain if !range.label.admits_ood() => Err(Error::InfeasibleSplit(format!(
                "range {} has no out-of-domain split",
                range.label
            ))),
            _ => Ok(Self {
                range,
                split,
                corpus,
                members,
            }),
        }
    }

    /// Log-uniform draw; in-domain draws snap to the nearest member in log
    /// space, out-of-domain draws are integers rejected when seen in the corpus.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        let (lo, hi) = (self.range.lower, self.range.upper);
        match self.split {
            Split::InDomain => {
                let t: f64 = rng.random_range(lo.ln()..=hi.ln());
                let m = self.members;
                let i = m.partition_point(|&v| v.ln() < t);
                Ok(match (i.checked_sub(1), m.get(i)) {
                    (Some(a), Some(&b)) if t - m[a].ln() <= b.ln() - t => m[a],
                    (_, Some(&b)) => b,
                    (Some(a), None) => m[a],
                    (None, None) => unreachable!("members non-empty"),
                })
            }
            Split::OutOfDomain => {
                for _ in 0..MAX_DRAWS {
                    let v = log_uniform_integer(rng, lo, hi);
                    if !self.corpus.contains(v) {
                        return Ok(v);
                    }
                }
                Err(Error::InfeasibleSplit(format!(
                    "could not draw an unseen numeral in range {}",
                    self.range.label
                )))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset {
    pub task: Task,
    pub range: RangeSpec,
    pub split: Split,
    pub seed: u64,
    /// Source numerals per item, `task.arity()` each.
    pub values: Vec<Vec<f64>>,
    /// Value, exact sum, or extremum index (as f64) per item.
    pub targets: Vec<f64>,
    /// Row-major features: embeddings concatenated per item.
    pub features: Vec<f64>,
    pub embedding_dim: usize,
}

impl ProbeDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn feature_width(&self) -> usize {
        self.embedding_dim * self.task.arity()
    }

    pub fn item_features(&self, i: usize) -> &[f64] {
        let w = self.feature_width();
        &self.features[i * w..(i + 1) * w]
    }

    pub fn target_indices(&self) -> Vec<usize> {
        self.targets.iter().map(|&t| t as usize).collect()
    }
}

/// Index of the unique extremum, or `None` on a tie.
pub fn unique_extremum(values: &[f64], task: Task) -> Option<usize> {
    let better = |a: f64, b: f64| if task == Task::ListMin { a < b } else { a > b };
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if better(v, values[best]) {
            best = i;
        }
    }
    let ties = values.iter().filter(|&&v| v == values[best]).count();
    (ties == 1).then_some(best)
}

pub fn build_probe_dataset(
    task: Task,
    range: RangeSpec,
    split: Split,
    n_samples: usize,
    seed: u64,
    corpus: &NumeralSet,
    embedder: &dyn NumeralEmbedder,
) -> Result<ProbeDataset> {
    let sampler = NumeralSampler::new(range, split, corpus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = embedder.dim();
    let mut values = Vec::with_capacity(n_samples);
    let mut targets = Vec::with_capacity(n_samples);
    let mut features = Vec::with_capacity(n_samples * dim * task.arity());
    for _ in 0..n_samples {
        let (item, target) = match task {
            Task::Decoding => {
                let v = sampler.sample(&mut rng)?;
                (vec![v], v)
            }
            Task::Addition => {
                let a = sampler.sample(&mut rng)?;
                let b = sampler.sample(&mut rng)?;
                (vec![a, b], a + b)
            }
            Task::ListMax | Task::ListMin => {
                let mut drawn = None;
                for _ in 0..MAX_DRAWS {
                    let list = (0..LIST_LEN)
                        .map(|_| sampler.sample(&mut rng))
                        .collect::<Result<Vec<_>>>()?;
                    if let Some(idx) = unique_extremum(&list, task) {
                        drawn = Some((list, idx as f64));
                        break;
                    }
                }
                drawn.ok_or_else(|| {
                    Error::InfeasibleSplit(format!(
                        "range {} cannot produce lists with a unique extremum",
                        range.label
                    ))
                })?
            }
        };
        for &v in &item {
            let e = embedder.embed(v)?;
            if e.len() != dim {
                return Err(Error::Config(format!(
                    "embedder returned {} dims, declared {dim}",
                    e.len()
                )));
            }
            features.extend_from_slice(&e);
        }
        values.push(item);
        targets.push(target);
    }
    Ok(ProbeDataset {
        task,
        range,
        split,
        seed,
        values,
        targets,
        features,
        embedding_dim: dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::embedder::LogFeatureEmbedder;

    fn corpus() -> NumeralSet {
        NumeralSet::new([1.0, 2.0, 3.0, 5.0, 40.0, 99.0, 1500.0, 2500.0, 8000.0, 50_000.0])
    }

    #[test]
    fn in_domain_decoding_uses_corpus_members() {
        let c = corpus();
        let r = RangeSpec::resolve(RangeLabel::OneToHundred, &c).unwrap();
        let d = build_probe_dataset(Task::Decoding, r, Split::InDomain, 3, 1, &c, &LogFeatureEmbedder).unwrap();
        assert_eq!(d.len(), 3);
        for (v, t) in d.values.iter().zip(&d.targets) {
            assert_eq!(v[0], *t);
            assert!(c.contains(*t) && *t <= 100.0);
        }
    }

    #[test]
    fn addition_target_is_exact_sum() {
        let c = NumeralSet::new([2.0, 3.0]);
        let r = RangeSpec::resolve(RangeLabel::OneToHundred, &c).unwrap();
        let d = build_probe_dataset(Task::Addition, r, Split::InDomain, 20, 2, &c, &LogFeatureEmbedder).unwrap();
        for (v, t) in d.values.iter().zip(&d.targets) {
            assert_eq!(v[0] + v[1], *t);
        }
        assert!(d.values.iter().any(|v| v == &[2.0, 3.0]));
    }

    #[test]
    fn ood_rules() {
        let c = corpus();
        let r = RangeSpec::resolve(RangeLabel::OneToHundred, &c).unwrap();
        assert!(matches!(
            build_probe_dataset(Task::Decoding, r, Split::OutOfDomain, 3, 1, &c, &LogFeatureEmbedder),
            Err(Error::InfeasibleSplit(_))
        ));
        let r = RangeSpec::resolve(RangeLabel::ThousandToTenThousand, &c).unwrap();
        let d = build_probe_dataset(Task::Decoding, r, Split::OutOfDomain, 200, 1, &c, &LogFeatureEmbedder).unwrap();
        assert!(d.targets.iter().all(|&v| !c.contains(v) && (1e3..=1e4).contains(&v) && v.fract() == 0.0));
    }

    #[test]
    fn empty_in_domain_range_is_infeasible() {
        let c = NumeralSet::new([5.0, 7.0]);
        let r = RangeSpec::resolve(RangeLabel::HundredToThousand, &c).unwrap();
        assert!(NumeralSampler::new(r, Split::InDomain, &c).is_err());
    }

    #[test]
    fn list_targets_point_at_unique_extremum() {
        let c = corpus();
        let r = RangeSpec::resolve(RangeLabel::All, &c).unwrap();
        assert_eq!((r.lower, r.upper), (1.0, 50_000.0));
        for task in [Task::ListMax, Task::ListMin] {
            let d = build_probe_dataset(task, r, Split::InDomain, 50, 9, &c, &LogFeatureEmbedder).unwrap();
            for (v, t) in d.values.iter().zip(d.target_indices()) {
                assert_eq!(unique_extremum(v, task), Some(t));
            }
        }
    }

    #[test]
    fn labels_round_trip() {
        for l in RangeLabel::ALL_LABELS {
            assert_eq!(l.as_str().parse::<RangeLabel>().unwrap(), l);
        }
        for t in Task::ALL_TASKS {
            assert_eq!(t.as_str().parse::<Task>().unwrap(), t);
        }
        assert_eq!("ood".parse::<Split>().unwrap(), Split::OutOfDomain);
    }
}
