use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{build_probe_dataset, NumeralSet, ProbeDataset, RangeSpec, Split, Task, LIST_LEN};
use super::embedder::NumeralEmbedder;
use super::gbt::{train_gbt_regressor, GbtConfig};
use super::lstm::{train_list_classifier, ListClassifierConfig};
use super::metrics::{accuracy, cosine, log_rmse, r_squared};
use crate::error::{Error, Result};

/// Fraction of each probe dataset used for training.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Seeded 80/20 partition of item indices.
pub fn train_eval_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((n as f64) * TRAIN_FRACTION).round() as usize;
    let eval = idx.split_off(cut.min(n));
    (idx, eval)
}

fn gather(data: &ProbeDataset, rows: &[usize]) -> Vec<f64> {
    rows.iter().flat_map(|&i| data.item_features(i).iter().copied()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionOutcome {
    pub log_rmse: f64,
    /// Goodness of fit between predictions and targets in log space.
    pub r2: f64,
    pub n_eval: usize,
    /// Held-out (true value, decoded value) pairs.
    pub pairs: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationOutcome {
    pub accuracy: f64,
    pub n_eval: usize,
}

/// Fits the regressor on ln(target) and scores the held-out items.
pub fn evaluate_regression(data: &ProbeDataset, config: &GbtConfig, seed: u64) -> Result<RegressionOutcome> {
    let (train, eval) = train_eval_split(data.len(), seed);
    let log_target = |i: &usize| data.targets[*i].ln();
    let model = train_gbt_regressor(
        &gather(data, &train),
        &train.iter().map(log_target).collect::<Vec<_>>(),
        config,
    )?;
    let predicted = model.predict_many(&gather(data, &eval));
    if predicted.iter().any(|p| !p.is_finite()) {
        return Err(Error::format("regression probe", "non-finite prediction"));
    }
    let truth: Vec<f64> = eval.iter().map(log_target).collect();
    Ok(RegressionOutcome {
        log_rmse: log_rmse(&predicted, &truth),
        r2: r_squared(&predicted, &truth),
        n_eval: eval.len(),
        pairs: eval
            .iter()
            .zip(&predicted)
            .map(|(&i, p)| (data.targets[i], p.exp()))
            .collect(),
    })
}

pub fn evaluate_list(data: &ProbeDataset, config: &ListClassifierConfig, seed: u64) -> Result<ClassificationOutcome> {
    if !data.task.is_list() {
        return Err(Error::Config(format!("{} is not a list task", data.task)));
    }
    let (train, eval) = train_eval_split(data.len(), seed);
    let targets = data.target_indices();
    let pick = |rows: &[usize]| rows.iter().map(|&i| targets[i]).collect::<Vec<_>>();
    let model = train_list_classifier(&gather(data, &train), &pick(&train), LIST_LEN, config)?;
    let predicted = model.predict(&gather(data, &eval), LIST_LEN);
    Ok(ClassificationOutcome {
        accuracy: accuracy(&predicted, &pick(&eval)),
        n_eval: eval.len(),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn run_decoding(
    embedder: &dyn NumeralEmbedder,
    config: &GbtConfig,
    range: RangeSpec,
    split: Split,
    corpus: &NumeralSet,
    n_samples: usize,
    seed: u64,
) -> Result<RegressionOutcome> {
    let data = build_probe_dataset(Task::Decoding, range, split, n_samples, seed, corpus, embedder)?;
    evaluate_regression(&data, config, seed)
}

pub fn run_addition(
    embedder: &dyn NumeralEmbedder,
    config: &GbtConfig,
    range: RangeSpec,
    split: Split,
    corpus: &NumeralSet,
    n_samples: usize,
    seed: u64,
) -> Result<RegressionOutcome> {
    let data = build_probe_dataset(Task::Addition, range, split, n_samples, seed, corpus, embedder)?;
    evaluate_regression(&data, config, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Max,
    Min,
}

#[allow(clippy::too_many_arguments)]
pub fn run_list_extremum(
    embedder: &dyn NumeralEmbedder,
    config: &ListClassifierConfig,
    range: RangeSpec,
    split: Split,
    kind: Extremum,
    corpus: &NumeralSet,
    n_samples: usize,
    seed: u64,
) -> Result<ClassificationOutcome> {
    let task = match kind {
        Extremum::Max => Task::ListMax,
        Extremum::Min => Task::ListMin,
    };
    let data = build_probe_dataset(task, range, split, n_samples, seed, corpus, embedder)?;
    evaluate_list(&data, config, seed)
}

/// Pairwise cosine similarities of numeral embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub values: Vec<f64>,
    /// Row-major `values.len()²` matrix.
    pub matrix: Vec<f64>,
}

impl Heatmap {
    pub fn size(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.size() + j]
    }

    /// Mean similarity over pairs with `|i−j| <= near` (excluding the
    /// diagonal) and over pairs with `|i−j| >= far`.
    pub fn band_means(&self, near: usize, far: usize) -> (f64, f64) {
        let n = self.size();
        let (mut ns, mut nc, mut fs, mut fc) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..n {
            for j in 0..n {
                let d = i.abs_diff(j);
                if d >= 1 && d <= near {
                    ns += self.get(i, j);
                    nc += 1;
                }
                if d >= far {
                    fs += self.get(i, j);
                    fc += 1;
                }
            }
        }
        (ns / nc.max(1) as f64, fs / fc.max(1) as f64)
    }

    /// Header line `# values: ...` then one tab-separated row per value.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("writing heatmap", e);
        let header: Vec<String> = self.values.iter().map(|v| crate::numeral::render_value(*v)).collect();
        writeln!(out, "# values: {}", header.join(" ")).map_err(io)?;
        for row in self.matrix.chunks_exact(self.size()) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(out, "{}", cells.join("\t")).map_err(io)?;
        }
        Ok(())
    }
}

pub fn cosine_heatmap(embedder: &dyn NumeralEmbedder, values: &[f64]) -> Result<Heatmap> {
    if values.len() < 2 {
        return Err(Error::Config("a heatmap needs at least two values".into()));
    }
    let emb = values
        .iter()
        .map(|&v| embedder.embed(v))
        .collect::<Result<Vec<_>>>()?;
    let n = values.len();
    let mut matrix = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let c = if i == j {
                // still rejects a zero embedding
                cosine(&emb[i], &emb[i], values[i], values[i])?;
                1.0
            } else {
                cosine(&emb[i], &emb[j], values[i], values[j])?
            };
            matrix[i * n + j] = c;
            matrix[j * n + i] = c;
        }
    }
    Ok(Heatmap {
        values: values.to_vec(),
        matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::dataset::RangeLabel;
    use crate::probe::embedder::{ConstantEmbedder, LogFeatureEmbedder, RandomEmbedder};

    fn corpus() -> NumeralSet {
        NumeralSet::new((1..=3000).map(|i| (i * i) as f64))
    }

    #[test]
    fn split_is_a_partition() {
        let (a, b) = train_eval_split(10, 3);
        assert_eq!((a.len(), b.len()), (8, 2));
        let mut all: Vec<usize> = a.into_iter().chain(b).collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn perfect_feature_decodes() {
        let c = corpus();
        let r = RangeSpec::resolve(RangeLabel::All, &c).unwrap();
        let out = run_decoding(&LogFeatureEmbedder, &GbtConfig::default(), r, Split::InDomain, &c, 500, 1).unwrap();
        assert!(out.log_rmse < 0.1, "{}", out.log_rmse);
        assert!(out.r2 > 0.99);
    }

    #[test]
    fn constant_features_do_not_fit() {
        let c = corpus();
        let r = RangeSpec::resolve(RangeLabel::All, &c).unwrap();
        let emb = ConstantEmbedder { dim: 3, value: 0.5 };
        let out = run_decoding(&emb, &GbtConfig::default(), r, Split::InDomain, &c, 300, 2).unwrap();
        assert!(out.r2 <= 0.0);
        let ln: Vec<f64> = out.pairs.iter().map(|p| p.0.ln()).collect();
        let m = ln.iter().sum::<f64>() / ln.len() as f64;
        let sd = (ln.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / ln.len() as f64).sqrt();
        assert!((out.log_rmse - sd).abs() < 0.25 * sd);
    }

    #[test]
    fn heatmap_shape() {
        let emb = RandomEmbedder { dim: 4, seed: 1 };
        let h = cosine_heatmap(&emb, &[1.0, 2.0, 3.0]).unwrap();
        for i in 0..3 {
            assert_eq!(h.get(i, i), 1.0);
            for j in 0..3 {
                assert_eq!(h.get(i, j), h.get(j, i));
            }
        }
        let zero = ConstantEmbedder { dim: 2, value: 0.0 };
        assert!(matches!(cosine_heatmap(&zero, &[4.0, 5.0]), Err(Error::ZeroNorm(v)) if v == 4.0));
    }
}
