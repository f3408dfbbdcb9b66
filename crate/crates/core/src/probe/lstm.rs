//! Stacked LSTM that scores each position of a numeral list.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{accumulate_col_sums, matmul, matmul_nt, matmul_tn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ListClassifierConfig {
    pub layers: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ListClassifierConfig {
    /// Desk-scale setting.
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 32,
            epochs: 50,
            learning_rate: 1e-4,
            batch_size: 4,
            seed: 0,
        }
    }
}

impl ListClassifierConfig {
    /// Four layers trained for 150 epochs.
    pub fn full_scale() -> Self {
        Self {
            layers: 4,
            epochs: 150,
            batch_size: 2,
            ..Self::default()
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
struct LayerOffsets {
    input: usize,
    wx: usize,
    wh: usize,
    b: usize,
}

/// Per-layer, per-step values kept for backpropagation.
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListClassifier {
    pub input_dim: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
    layers: Vec<LayerOffsets>,
    head: usize,
    /// Feature standardization fitted on the training lists.
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

impl ListClassifier {
    pub fn new(input_dim: usize, config: &ListClassifierConfig) -> Result<Self> {
        if input_dim == 0 || config.layers == 0 || config.hidden == 0 {
            return Err(Error::Config("list classifier needs non-zero sizes".into()));
        }
        let h = config.hidden;
        let mut layers = Vec::with_capacity(config.layers);
        let mut offset = 0;
        for l in 0..config.layers {
            let input = if l == 0 { input_dim } else { h };
            let wx = offset;
            let wh = wx + input * 4 * h;
            let b = wh + h * 4 * h;
            offset = b + 4 * h;
            layers.push(LayerOffsets { input, wx, wh, b });
        }
        let head = offset;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let bound = 1.0 / (h as f64).sqrt();
        let mut params: Vec<f64> = (0..head + h + 1)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        for lay in &layers {
            // forget-gate bias starts at one
            params[lay.b..lay.b + 4 * h].fill(0.0);
            params[lay.b + h..lay.b + 2 * h].fill(1.0);
        }
        params[head + h] = 0.0;
        Ok(Self {
            input_dim,
            hidden: h,
            params,
            layers,
            head,
            feature_mean: vec![0.0; input_dim],
            feature_scale: vec![1.0; input_dim],
        })
    }

    fn standardize(&self, lists: &[f64]) -> Vec<f64> {
        let mut out = lists.to_vec();
        for row in out.chunks_exact_mut(self.input_dim) {
            for ((v, m), s) in row.iter_mut().zip(&self.feature_mean).zip(&self.feature_scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    fn fit_standardization(&mut self, lists: &[f64]) {
        let d = self.input_dim;
        let n = (lists.len() / d) as f64;
        for j in 0..d {
            let col = lists.iter().skip(j).step_by(d);
            let mean = col.clone().sum::<f64>() / n;
            let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            self.feature_mean[j] = mean;
            self.feature_scale[j] = if var > 1e-24 { var.sqrt() } else { 1.0 };
        }
    }

    /// Time-major inputs: `x[t]` is the `batch × input_dim` block for step t.
    fn forward(&self, x: &[Vec<f64>], batch: usize) -> (Vec<Vec<f64>>, Vec<Vec<StepCache>>, Vec<Vec<f64>>) {
        let h = self.hidden;
        let steps = x.len();
        let p = &self.params;
        let mut caches: Vec<Vec<StepCache>> = Vec::with_capacity(self.layers.len());
        let mut inputs: Vec<Vec<f64>> = x.to_vec();
        for lay in &self.layers {
            let mut layer_cache = Vec::with_capacity(steps);
            let mut h_prev = vec![0.0; batch * h];
            let mut c_prev = vec![0.0; batch * h];
            let mut outputs = Vec::with_capacity(steps);
            for xt in &inputs {
                let mut z = vec![0.0; batch * 4 * h];
                matmul(xt, &p[lay.wx..lay.wh], &mut z, batch, lay.input, 4 * h, false);
                matmul(&h_prev, &p[lay.wh..lay.b], &mut z, batch, h, 4 * h, true);
                let bias = &p[lay.b..lay.b + 4 * h];
                let mut c = vec![0.0; batch * h];
                let mut tanh_c = vec![0.0; batch * h];
                let mut h_new = vec![0.0; batch * h];
                for r in 0..batch {
                    let zr = &mut z[r * 4 * h..(r + 1) * 4 * h];
                    for (v, b) in zr.iter_mut().zip(bias) {
                        *v += b;
                    }
                    for k in 0..h {
                        let i = sigmoid(zr[k]);
                        let f = sigmoid(zr[h + k]);
                        let g = zr[2 * h + k].tanh();
                        let o = sigmoid(zr[3 * h + k]);
                        zr[k] = i;
                        zr[h + k] = f;
                        zr[2 * h + k] = g;
                        zr[3 * h + k] = o;
                        let ci = f * c_prev[r * h + k] + i * g;
                        c[r * h + k] = ci;
                        tanh_c[r * h + k] = ci.tanh();
                        h_new[r * h + k] = o * ci.tanh();
                    }
                }
                layer_cache.push(StepCache {
                    x: xt.clone(),
                    h_prev: std::mem::replace(&mut h_prev, h_new.clone()),
                    c_prev: std::mem::replace(&mut c_prev, c),
                    gates: z,
                    tanh_c,
                });
                outputs.push(h_new);
            }
            caches.push(layer_cache);
            inputs = outputs;
        }
        let w = &p[self.head..self.head + h];
        let b = p[self.head + h];
        let scores = inputs
            .iter()
            .map(|ht| ht.chunks_exact(h).map(|row| sigmoid(row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b)).collect())
            .collect();
        (scores, caches, inputs)
    }

    /// Mean binary cross-entropy and its gradient for a batch of lists.
    fn loss_and_grad(&self, x: &[Vec<f64>], targets: &[usize], grad: &mut [f64]) -> f64 {
        let batch = targets.len();
        let steps = x.len();
        let h = self.hidden;
        let (scores, caches, top) = self.forward(x, batch);
        let norm = 1.0 / (batch * steps) as f64;
        let mut loss = 0.0;
        let w = self.params[self.head..self.head + h].to_vec();
        let mut dh_above: Vec<Vec<f64>> = vec![vec![0.0; batch * h]; steps];
        for t in 0..steps {
            for r in 0..batch {
                let y = if targets[r] == t { 1.0 } else { 0.0 };
                let s = scores[t][r].clamp(1e-15, 1.0 - 1e-15);
                loss -= norm * (y * s.ln() + (1.0 - y) * (1.0 - s).ln());
                let dz = norm * (scores[t][r] - y);
                let hrow = &top[t][r * h..(r + 1) * h];
                for k in 0..h {
                    grad[self.head + k] += dz * hrow[k];
                    dh_above[t][r * h + k] += dz * w[k];
                }
                grad[self.head + h] += dz;
            }
        }
        for (lay, cache) in self.layers.iter().zip(&caches).rev() {
            let mut dh_next = vec![0.0; batch * h];
            let mut dc_next = vec![0.0; batch * h];
            let mut dx_all = vec![vec![0.0; batch * lay.input]; steps];
            for t in (0..steps).rev() {
                let st = &cache[t];
                let mut dz = vec![0.0; batch * 4 * h];
                for r in 0..batch {
                    for k in 0..h {
                        let j = r * h + k;
                        let g4 = r * 4 * h;
                        let (i, f, g, o) = (st.gates[g4 + k], st.gates[g4 + h + k], st.gates[g4 + 2 * h + k], st.gates[g4 + 3 * h + k]);
                        let dh = dh_above[t][j] + dh_next[j];
                        let tc = st.tanh_c[j];
                        let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                        dz[g4 + k] = dc * g * i * (1.0 - i);
                        dz[g4 + h + k] = dc * st.c_prev[j] * f * (1.0 - f);
                        dz[g4 + 2 * h + k] = dc * i * (1.0 - g * g);
                        dz[g4 + 3 * h + k] = dh * tc * o * (1.0 - o);
                        dc_next[j] = dc * f;
                    }
                }
                matmul_tn(&st.x, &dz, &mut grad[lay.wx..lay.wh], lay.input, batch, 4 * h, true);
                matmul_tn(&st.h_prev, &dz, &mut grad[lay.wh..lay.b], h, batch, 4 * h, true);
                accumulate_col_sums(&dz, &mut grad[lay.b..lay.b + 4 * h]);
                matmul_nt(&dz, &self.params[lay.wx..lay.wh], &mut dx_all[t], batch, 4 * h, lay.input, false);
                matmul_nt(&dz, &self.params[lay.wh..lay.b], &mut dh_next, batch, 4 * h, h, false);
            }
            dh_above = dx_all;
        }
        loss
    }

    fn to_time_major(&self, lists: &[f64], rows: &[usize], steps: usize) -> Vec<Vec<f64>> {
        let d = self.input_dim;
        (0..steps)
            .map(|t| {
                rows.iter()
                    .flat_map(|&r| lists[(r * steps + t) * d..][..d].iter().copied())
                    .collect()
            })
            .collect()
    }

    /// Per-position scores for already-standardized lists.
    fn scores(&self, std_lists: &[f64], steps: usize) -> Vec<Vec<f64>> {
        let n = std_lists.len() / (steps * self.input_dim);
        let rows: Vec<usize> = (0..n).collect();
        let x = self.to_time_major(std_lists, &rows, steps);
        let (scores, _, _) = self.forward(&x, n);
        (0..n).map(|r| scores.iter().map(|s| s[r]).collect()).collect()
    }

    /// Predicted extremum index per list; `lists` is `n × steps × input_dim`.
    pub fn predict(&self, lists: &[f64], steps: usize) -> Vec<usize> {
        let std_lists = self.standardize(lists);
        self.scores(&std_lists, steps)
            .into_iter()
            .map(|s| {
                let mut best = 0;
                for (i, v) in s.iter().enumerate() {
                    if *v > s[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

/// Trains a classifier on `targets.len()` lists of `steps` items each.
pub fn train_list_classifier(
    lists: &[f64],
    targets: &[usize],
    steps: usize,
    config: &ListClassifierConfig,
) -> Result<ListClassifier> {
    let n = targets.len();
    if n == 0 || steps == 0 || lists.len() % (n * steps) != 0 {
        return Err(Error::Config("list tensor does not match target count".into()));
    }
    if targets.iter().any(|&t| t >= steps) {
        return Err(Error::Config("target index outside list".into()));
    }
    let input_dim = lists.len() / (n * steps);
    let mut model = ListClassifier::new(input_dim, config)?;
    model.fit_standardization(lists);
    let std_lists = model.standardize(lists);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; model.params.len()];
    let mut m = vec![0.0; model.params.len()];
    let mut v = vec![0.0; model.params.len()];
    let mut t = 0i32;
    let batch = config.batch_size.max(1);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            grad.fill(0.0);
            let x = model.to_time_major(&std_lists, chunk, steps);
            let y: Vec<usize> = chunk.iter().map(|&r| targets[r]).collect();
            let loss = model.loss_and_grad(&x, &y, &mut grad);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    loss,
                    epoch: 0,
                    batch: 0,
                    lr: config.learning_rate,
                });
            }
            t += 1;
            let c1 = 1.0 - BETA1.powi(t);
            let c2 = 1.0 - BETA2.powi(t);
            for i in 0..grad.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                model.params[i] -= config.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
    Ok(model)
}
