//! Gradient-boosted regression trees with a squared-error objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbtConfig {
    /// Desk-scale setting.
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 5,
            learning_rate: 0.05,
            min_samples_leaf: 1,
        }
    }
}

impl GbtConfig {
    /// The full-scale setting: 1000 trees of depth 5 at learning rate 0.01.
    pub fn full_scale() -> Self {
        Self {
            n_trees: 1000,
            max_depth: 5,
            learning_rate: 0.01,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

struct TreeBuilder<'a> {
    x: &'a [f64],
    n_features: usize,
    residual: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let slot = self.nodes.len();
        let mean = idx.iter().map(|&i| self.residual[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return slot;
        }
        let Some((feature, threshold)) = self.best_split(idx) else {
            return slot;
        };
        // partition in place
        let mut split = 0;
        for k in 0..idx.len() {
            if self.x[idx[k] * self.n_features + feature] <= threshold {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }

    /// Split maximizing the reduction of the residual sum of squares.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.residual[i]).sum();
        let base = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<(f64, f64)> = Vec::with_capacity(n);
        for f in 0..self.n_features {
            order.clear();
            order.extend(idx.iter().map(|&i| (self.x[i * self.n_features + f], self.residual[i])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            if order[0].0 == order[n - 1].0 {
                continue;
            }
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += order[k].1;
                let nl = k + 1;
                if order[k].0 == order[k + 1].0 || nl < self.min_leaf || n - nl < self.min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / nl as f64
                    + right_sum * right_sum / (n - nl) as f64
                    - base;
                if score > 1e-12 && best.is_none_or(|(s, _, _)| score > s) {
                    let mut threshold = 0.5 * (order[k].0 + order[k + 1].0);
                    // adjacent floats: the midpoint may round up onto the right value
                    if threshold >= order[k + 1].0 {
                        threshold = order[k].0;
                    }
                    best = Some((score, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtRegressor {
    pub initial: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    pub n_features: usize,
}

impl GbtRegressor {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.initial
            + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_many(&self, x: &[f64]) -> Vec<f64> {
        x.chunks_exact(self.n_features).map(|row| self.predict(row)).collect()
    }
}

/// Fits boosted trees on row-major `features` (`targets.len()` rows).
pub fn train_gbt_regressor(
    features: &[f64],
    targets: &[f64],
    config: &GbtConfig,
) -> Result<GbtRegressor> {
    let n = targets.len();
    if n < 10 {
        return Err(Error::Config(format!("need at least 10 training rows, got {n}")));
    }
    if features.len() % n != 0 || features.is_empty() {
        return Err(Error::Config("feature matrix does not match target count".into()));
    }
    if config.max_depth == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::Config("invalid boosting configuration".into()));
    }
    let n_features = features.len() / n;
    let initial = targets.iter().sum::<f64>() / n as f64;
    let mut pred = vec![initial; n];
    let mut residual = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut idx: Vec<usize> = (0..n).collect();
    for _ in 0..config.n_trees {
        for i in 0..n {
            residual[i] = targets[i] - pred[i];
        }
        idx.iter_mut().enumerate().for_each(|(k, v)| *v = k);
        let mut builder = TreeBuilder {
            x: features,
            n_features,
            residual: &residual,
            max_depth: config.max_depth,
            min_leaf: config.min_samples_leaf.max(1),
            nodes: Vec::new(),
        };
        builder.build(&mut idx, 0);
        let tree = RegressionTree {
            nodes: builder.nodes,
        };
        for i in 0..n {
            pred[i] += config.learning_rate * tree.predict(&features[i * n_features..][..n_features]);
        }
        trees.push(tree);
    }
    Ok(GbtRegressor {
        initial,
        learning_rate: config.learning_rate,
        trees,
        n_features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rmse(a: &[f64], b: &[f64]) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
    }

    #[test]
    fn zero_trees_predict_mean() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        let cfg = GbtConfig { n_trees: 0, ..Default::default() };
        let m = train_gbt_regressor(&x, &y, &cfg).unwrap();
        let mean = y.iter().sum::<f64>() / 20.0;
        assert_eq!(m.predict(&[3.0]), mean);
    }

    #[test]
    fn one_stage_equals_leaf_means() {
        // separable by feature 0 into two groups
        let x: Vec<f64> = (0..12).flat_map(|i| [if i < 6 { 0.0 } else { 1.0 }, i as f64 * 0.0]).collect();
        let y: Vec<f64> = (0..12).map(|i| if i < 6 { 1.0 + i as f64 * 0.1 } else { 9.0 }).collect();
        let cfg = GbtConfig { n_trees: 1, max_depth: 1, learning_rate: 1.0, min_samples_leaf: 1 };
        let m = train_gbt_regressor(&x, &y, &cfg).unwrap();
        let left_mean = y[..6].iter().sum::<f64>() / 6.0;
        assert!((m.predict(&x[0..2]) - left_mean).abs() < 1e-12);
        assert!((m.predict(&x[22..24]) - 9.0).abs() < 1e-12);
        assert_eq!(m.trees[0].leaf_count(), 2);
    }

    #[test]
    fn degenerate_features_predict_mean() {
        let x = vec![3.0; 30];
        let y: Vec<f64> = (0..30).map(f64::from).collect();
        let m = train_gbt_regressor(&x, &y, &GbtConfig::default()).unwrap();
        assert!((m.predict(&[3.0]) - 14.5).abs() < 1e-9);
    }

    #[test]
    fn identity_fit_beats_single_deep_tree_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 1000;
        let x: Vec<f64> = (0..n).flat_map(|_| [rng.random::<f64>() * 10.0, rng.random::<f64>()]).collect();
        let y: Vec<f64> = (0..n).map(|i| x[i * 2]).collect();
        let m = train_gbt_regressor(&x, &y, &GbtConfig::default()).unwrap();
        let pred = m.predict_many(&x);
        let mean = y.iter().sum::<f64>() / n as f64;
        let std = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
        assert!(rmse(&pred, &y) < 0.05 * std, "rmse {} std {std}", rmse(&pred, &y));
    }

    #[test]
    fn adjacent_float_features_split_cleanly() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let x: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { a } else { b }).collect();
        let y: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect();
        let m = train_gbt_regressor(&x, &y, &GbtConfig::default()).unwrap();
        assert!(m.predict_many(&x).iter().all(|p| p.is_finite()));
        assert!(m.predict(&[b]) > 0.9 && m.predict(&[a]) < 0.1);
    }

    #[test]
    fn rejects_tiny_inputs() {
        assert!(train_gbt_regressor(&[1.0; 5], &[1.0; 5], &GbtConfig::default()).is_err());
    }
}
