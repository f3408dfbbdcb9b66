//! One-dimensional Gaussian mixtures fitted by EM, information-criterion
//! model selection, and the anchor table derived from the component means.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_RESTARTS: usize = 3;
/// Variance floor relative to the data variance.
pub const VARIANCE_FLOOR_RATIO: f64 = 1e-6;
/// Relative BIC band used to pick the smallest adequate K.
pub const BIC_STABILITY_BAND: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Linear,
    Log,
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Space::Linear => "linear",
            Space::Log => "log",
        })
    }
}

impl FromStr for Space {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Space::Linear),
            "log" => Ok(Space::Log),
            _ => Err(Error::format("space", format!("unknown space {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub components: Vec<Component>,
    pub space: Space,
    pub seed: u64,
    pub tolerance: f64,
    pub final_log_likelihood: f64,
    /// Total data log-likelihood after every E-step, in order.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub seed: u64,
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            tolerance: DEFAULT_TOLERANCE,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

fn log_normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * PI * variance).ln() + d * d / variance)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Fits a K-component mixture with EM. Means start at K distinct data
/// values drawn uniformly with the given seed; weights start uniform and
/// variances at the data variance.
pub fn fit_gmm(values: &[f64], k: usize, space: Space, opts: FitOptions) -> Result<GmmModel> {
    if k == 0 {
        return Err(Error::Config("K must be positive".into()));
    }
    if values.len() < k {
        return Err(Error::Config(format!(
            "need at least K={k} values, got {}",
            values.len()
        )));
    }
    if !(opts.tolerance > 0.0) || opts.max_iters == 0 {
        return Err(Error::Config("tolerance and max_iters must be positive".into()));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("non-finite value {bad}")));
    }

    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::DegenerateData(format!(
            "{} distinct values cannot support K={k}",
            distinct.len()
        )));
    }

    let n = values.len();
    let (_, data_var) = mean_and_variance(values);
    let floor = if data_var > 0.0 {
        VARIANCE_FLOOR_RATIO * data_var
    } else {
        f64::MIN_POSITIVE
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    // means are data points drawn in a seeded random order, skipping repeats of
    // an already chosen value, so frequent values are proportionally likely
    let mut means: Vec<f64> = Vec::with_capacity(k);
    let mut order = (0..n).collect::<Vec<_>>();
    order.shuffle(&mut rng);
    for i in order {
        if !means.iter().any(|m| m.to_bits() == values[i].to_bits()) {
            means.push(values[i]);
            if means.len() == k {
                break;
            }
        }
    }
    let mut components: Vec<Component> = means
        .into_iter()
        .map(|mean| Component {
            weight: 1.0 / k as f64,
            mean,
            // a component seeded by one point has only the floor as its spread,
            // so the first E-step is a nearest-mean assignment
            variance: floor,
        })
        .collect();

    let mut resp = vec![0.0; n * k];
    let mut log_terms = vec![0.0; k];
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        // E-step
        let mut total = 0.0;
        for (i, &x) in values.iter().enumerate() {
            for (j, c) in components.iter().enumerate() {
                log_terms[j] = c.weight.ln() + log_normal_pdf(x, c.mean, c.variance);
            }
            let lse = log_sum_exp(&log_terms);
            total += lse;
            let row = &mut resp[i * k..(i + 1) * k];
            for (r, &t) in row.iter_mut().zip(&log_terms) {
                *r = (t - lse).exp();
            }
        }
        trace.push(total);
        if let [.., prev, last] = trace[..] {
            if ((last - prev) / n as f64).abs() < opts.tolerance {
                break;
            }
        }
        if iterations == opts.max_iters {
            break;
        }

        // M-step
        for (j, c) in components.iter_mut().enumerate() {
            let mut nk = 0.0;
            let mut sum = 0.0;
            for (i, &x) in values.iter().enumerate() {
                let r = resp[i * k + j];
                nk += r;
                sum += r * x;
            }
            if nk <= 0.0 {
                // empty component keeps its position with negligible weight
                c.weight = f64::MIN_POSITIVE;
                c.variance = c.variance.max(floor);
                continue;
            }
            let mean = sum / nk;
            let mut ss = 0.0;
            for (i, &x) in values.iter().enumerate() {
                let d = x - mean;
                ss += resp[i * k + j] * d * d;
            }
            c.weight = nk / n as f64;
            c.mean = mean;
            c.variance = (ss / nk).max(floor);
        }
        let wsum: f64 = components.iter().map(|c| c.weight).sum();
        for c in &mut components {
            c.weight /= wsum;
        }
        iterations += 1;
    }

    Ok(GmmModel {
        components,
        space,
        seed: opts.seed,
        tolerance: opts.tolerance,
        final_log_likelihood: *trace.last().expect("at least one E-step"),
        log_likelihood_trace: trace,
        iterations,
    })
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Mixture density at `n`, in the model's own space.
    pub fn pdf(&self, n: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let d = n - c.mean;
                c.weight * (-0.5 * d * d / c.variance).exp() / (2.0 * PI * c.variance).sqrt()
            })
            .sum()
    }

    pub fn log_likelihood(&self, values: &[f64]) -> f64 {
        let mut terms = vec![0.0; self.k()];
        values
            .iter()
            .map(|&x| {
                for (t, c) in terms.iter_mut().zip(&self.components) {
                    *t = c.weight.ln() + log_normal_pdf(x, c.mean, c.variance);
                }
                log_sum_exp(&terms)
            })
            .sum()
    }

    pub fn free_parameters(&self) -> usize {
        3 * self.k() - 1
    }
}

pub fn gmm_pdf(model: &GmmModel, n: f64) -> f64 {
    model.pdf(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub aic: f64,
    pub bic: f64,
}

/// AIC/BIC from a total log-likelihood, parameter count and sample size.
pub fn criteria_from(log_likelihood: f64, params: usize, n: usize) -> Criteria {
    let p = params as f64;
    Criteria {
        aic: 2.0 * p - 2.0 * log_likelihood,
        bic: p * (n as f64).ln() - 2.0 * log_likelihood,
    }
}

pub fn information_criteria(model: &GmmModel, values: &[f64]) -> Criteria {
    criteria_from(model.log_likelihood(values), model.free_parameters(), values.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub chosen_k: usize,
    pub table: Vec<SweepRow>,
    /// Best-of-restarts model for the chosen K.
    pub model: GmmModel,
}

/// Seed for restart `r` of the fit at `k`.
fn restart_seed(seed: u64, k: usize, r: usize) -> u64 {
    let mut z = seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (r as u64).rotate_left(32);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Best of `restarts` seeded fits.
pub fn fit_best(
    values: &[f64],
    k: usize,
    space: Space,
    restarts: usize,
    opts: FitOptions,
) -> Result<GmmModel> {
    if restarts == 0 {
        return Err(Error::Config("restarts must be positive".into()));
    }
    let mut best: Option<GmmModel> = None;
    for r in 0..restarts {
        let seed = restart_seed(opts.seed, k, r);
        let m = fit_gmm(values, k, space, FitOptions { seed, ..opts })?;
        if best
            .as_ref()
            .is_none_or(|b| m.final_log_likelihood > b.final_log_likelihood)
        {
            best = Some(m);
        }
    }
    Ok(best.expect("restarts > 0"))
}

/// Smallest K whose BIC lies within the stability band of the grid minimum.
pub fn select_stable_k(table: &[SweepRow]) -> Option<usize> {
    let min = table.iter().map(|r| r.bic).fold(f64::INFINITY, f64::min);
    let band = BIC_STABILITY_BAND * min.abs();
    table.iter().find(|r| r.bic - min <= band).map(|r| r.k)
}

pub fn sweep_k(
    values: &[f64],
    k_grid: &[usize],
    space: Space,
    restarts: usize,
    opts: FitOptions,
) -> Result<SweepResult> {
    if k_grid.is_empty() {
        return Err(Error::Config("K grid is empty".into()));
    }
    if k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("K grid must be strictly ascending".into()));
    }
    let mut table = Vec::with_capacity(k_grid.len());
    let mut models = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let model = fit_best(values, k, space, restarts, opts)?;
        let c = criteria_from(model.final_log_likelihood, model.free_parameters(), values.len());
        table.push(SweepRow {
            k,
            log_likelihood: model.final_log_likelihood,
            aic: c.aic,
            bic: c.bic,
        });
        models.push(model);
    }
    let chosen_k = select_stable_k(&table).expect("non-empty table");
    let idx = table.iter().position(|r| r.k == chosen_k).expect("chosen from table");
    Ok(SweepResult {
        chosen_k,
        table,
        model: models.swap_remove(idx),
    })
}

pub fn write_sweep_table<W: Write>(mut out: W, table: &[SweepRow]) -> Result<()> {
    let io = |e| Error::io("writing sweep table", e);
    writeln!(out, "k\tlog_likelihood\taic\tbic").map_err(io)?;
    for r in table {
        writeln!(out, "{}\t{}\t{}\t{}", r.k, r.log_likelihood, r.aic, r.bic).map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Anchor is smaller than the numeral.
    Left,
    /// Anchor is larger than the numeral.
    Right,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorAssignment {
    pub numeral_value: f64,
    pub anchor: f64,
    pub direction: Direction,
}

/// Sorted, deduplicated component means plus the statistics of the
/// component each anchor came from.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorTable {
    pub anchors: Vec<f64>,
    pub weights: Vec<f64>,
    pub variances: Vec<f64>,
    pub space: Space,
    pub seed: u64,
    pub tolerance: f64,
    /// Number of mixture components in the source model (before dedup).
    pub k: usize,
}

pub fn induce_anchors(model: &GmmModel) -> AnchorTable {
    let mut comps = model.components.clone();
    comps.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    let mut table = AnchorTable {
        anchors: Vec::new(),
        weights: Vec::new(),
        variances: Vec::new(),
        space: model.space,
        seed: model.seed,
        tolerance: model.tolerance,
        k: model.k(),
    };
    for c in comps {
        if table.anchors.last() == Some(&c.mean) {
            // merged duplicate keeps the combined weight
            *table.weights.last_mut().expect("parallel vectors") += c.weight;
            continue;
        }
        table.anchors.push(c.mean);
        table.weights.push(c.weight);
        table.variances.push(c.variance);
    }
    table
}

/// Anchor table built directly from a list of anchors (unit weights).
impl AnchorTable {
    pub fn from_anchors(mut anchors: Vec<f64>, space: Space) -> Result<Self> {
        if anchors.is_empty() || anchors.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("anchor list must be non-empty and finite".into()));
        }
        anchors.sort_by(f64::total_cmp);
        anchors.dedup();
        let n = anchors.len();
        Ok(Self {
            anchors,
            weights: vec![1.0 / n as f64; n],
            variances: vec![1.0; n],
            space,
            seed: 0,
            tolerance: DEFAULT_TOLERANCE,
            k: n,
        })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Value compared against anchors for numeral `n`.
    pub fn comparison_value(&self, n: f64) -> Result<f64> {
        match self.space {
            Space::Linear => Ok(n),
            Space::Log if n > 0.0 => Ok(n.ln()),
            Space::Log => Err(Error::Domain(format!(
                "numeral {n} has no logarithm; log-space anchors need n > 0"
            ))),
        }
    }

    /// Closest anchor to `n`; ties go to the smaller anchor.
    pub fn nearest_anchor(&self, n: f64) -> Result<AnchorAssignment> {
        if self.anchors.is_empty() {
            return Err(Error::Config("empty anchor table".into()));
        }
        let c = self.comparison_value(n)?;
        Ok(self.assign(n, c, self.nearest_index(c)))
    }

    /// Linear-space fallback for numerals without a logarithm: anchors are
    /// compared by their exponentiated value.
    pub fn nearest_anchor_linear_fallback(&self, n: f64) -> Result<AnchorAssignment> {
        if self.anchors.is_empty() {
            return Err(Error::Config("empty anchor table".into()));
        }
        let lifted: Vec<f64> = match self.space {
            Space::Linear => self.anchors.clone(),
            Space::Log => self.anchors.iter().map(|a| a.exp()).collect(),
        };
        let idx = nearest_in_sorted(&lifted, n);
        let anchor = self.anchors[idx];
        Ok(AnchorAssignment {
            numeral_value: n,
            anchor,
            direction: direction_of(lifted[idx], n),
        })
    }

    fn nearest_index(&self, c: f64) -> usize {
        nearest_in_sorted(&self.anchors, c)
    }

    fn assign(&self, n: f64, c: f64, idx: usize) -> AnchorAssignment {
        let anchor = self.anchors[idx];
        AnchorAssignment {
            numeral_value: n,
            anchor,
            direction: direction_of(anchor, c),
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("writing anchor table", e);
        writeln!(out, "#numanchor-anchors v1").map_err(io)?;
        writeln!(out, "#space\t{}", self.space).map_err(io)?;
        writeln!(out, "#k\t{}", self.k).map_err(io)?;
        writeln!(out, "#seed\t{}", self.seed).map_err(io)?;
        writeln!(out, "#tolerance\t{}", self.tolerance).map_err(io)?;
        writeln!(out, "anchor_value\tweight\tvariance").map_err(io)?;
        for ((a, w), v) in self.anchors.iter().zip(&self.weights).zip(&self.variances) {
            writeln!(out, "{a:?}\t{w:?}\t{v:?}").map_err(io)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let ctx = "anchor table";
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::format(ctx, "truncated header"))?
                .map_err(|e| Error::io("reading anchor table", e))
        };
        if next()? != "#numanchor-anchors v1" {
            return Err(Error::format(ctx, "missing or unsupported version line"));
        }
        let mut header = |key: &str| -> Result<String> {
            let line = next()?;
            line.strip_prefix(&format!("#{key}\t"))
                .map(str::to_string)
                .ok_or_else(|| Error::format(ctx, format!("expected #{key}, got {line:?}")))
        };
        let bad = |what: &str| Error::format(ctx, format!("bad {what}"));
        let space: Space = header("space")?.parse()?;
        let k = header("k")?.parse().map_err(|_| bad("k"))?;
        let seed = header("seed")?.parse().map_err(|_| bad("seed"))?;
        let tolerance = header("tolerance")?.parse().map_err(|_| bad("tolerance"))?;
        if next()? != "anchor_value\tweight\tvariance" {
            return Err(Error::format(ctx, "missing column header"));
        }
        let mut table = AnchorTable {
            anchors: Vec::new(),
            weights: Vec::new(),
            variances: Vec::new(),
            space,
            seed,
            tolerance,
            k,
        };
        while let Ok(line) = next() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad("row"));
            }
            table.anchors.push(f[0].parse().map_err(|_| bad("anchor"))?);
            table.weights.push(f[1].parse().map_err(|_| bad("weight"))?);
            table.variances.push(f[2].parse().map_err(|_| bad("variance"))?);
        }
        if table.anchors.is_empty() || table.anchors.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::format(ctx, "anchors must be non-empty and strictly ascending"));
        }
        Ok(table)
    }
}

fn direction_of(anchor: f64, c: f64) -> Direction {
    if anchor < c {
        Direction::Left
    } else if anchor > c {
        Direction::Right
    } else {
        Direction::Exact
    }
}

/// Index of the closest element of ascending `sorted`, ties to the lower one.
fn nearest_in_sorted(sorted: &[f64], c: f64) -> usize {
    let hi = sorted.partition_point(|&a| a < c);
    if hi == 0 {
        return 0;
    }
    if hi == sorted.len() {
        return hi - 1;
    }
    let lo = hi - 1;
    if (c - sorted[lo]) <= (sorted[hi] - c) {
        lo
    } else {
        hi
    }
}

pub fn nearest_anchor(table: &AnchorTable, n: f64) -> Result<AnchorAssignment> {
    table.nearest_anchor(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn two_clusters(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Normal::new(0.0, 1.0).unwrap();
        let b = Normal::new(100.0, 1.0).unwrap();
        (0..n)
            .map(|i| if i % 2 == 0 { a.sample(&mut rng) } else { b.sample(&mut rng) })
            .collect()
    }

    #[test]
    fn k1_is_closed_form_mle() {
        let values = two_clusters(500, 3);
        let m = fit_gmm(&values, 1, Space::Linear, FitOptions::default()).unwrap();
        let (mean, var) = mean_and_variance(&values);
        assert_eq!(m.components[0].mean, mean);
        assert_eq!(m.components[0].variance, var);
        assert_eq!(m.components[0].weight, 1.0);
    }

    #[test]
    fn standard_normal_peak() {
        let m = GmmModel {
            components: vec![Component { weight: 1.0, mean: 0.0, variance: 1.0 }],
            space: Space::Linear,
            seed: 0,
            tolerance: 1e-3,
            final_log_likelihood: 0.0,
            log_likelihood_trace: vec![],
            iterations: 0,
        };
        assert!((gmm_pdf(&m, 0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn two_cluster_recovery() {
        let values = two_clusters(2000, 11);
        let m = fit_best(&values, 2, Space::Linear, 3, FitOptions::default()).unwrap();
        let mut comps = m.components.clone();
        comps.sort_by(|a, b| a.mean.total_cmp(&b.mean));
        assert!((comps[0].mean - 0.0).abs() < 0.5);
        assert!((comps[1].mean - 100.0).abs() < 0.5);
        assert!((comps[0].weight - 0.5).abs() < 0.05);
        for w in m.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            fit_gmm(&[1.0], 2, Space::Linear, FitOptions::default()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            fit_gmm(&[4.0; 10], 2, Space::Linear, FitOptions::default()),
            Err(Error::DegenerateData(_))
        ));
        // a single repeated value still supports K = 1
        let m = fit_gmm(&[4.0; 10], 1, Space::Linear, FitOptions::default()).unwrap();
        assert_eq!(m.components[0].mean, 4.0);
        assert!(m.components[0].variance > 0.0);
    }

    #[test]
    fn seed_determinism() {
        let values = two_clusters(300, 5);
        let opts = FitOptions { seed: 42, ..Default::default() };
        let a = fit_gmm(&values, 4, Space::Linear, opts).unwrap();
        let b = fit_gmm(&values, 4, Space::Linear, opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn criteria_formula() {
        let c = criteria_from(-150.0, 2, 100);
        assert_eq!(c.aic, 304.0);
        assert!((c.bic - (2.0 * 100f64.ln() + 300.0)).abs() < 1e-12);
        assert!((c.bic - 309.21).abs() < 0.005);
    }

    #[test]
    fn nested_models_fit_no_worse() {
        let values = two_clusters(400, 8);
        let opts = FitOptions { tolerance: 1e-8, ..Default::default() };
        let m1 = fit_best(&values, 1, Space::Linear, 3, opts).unwrap();
        let m2 = fit_best(&values, 2, Space::Linear, 3, opts).unwrap();
        assert!(m2.final_log_likelihood >= m1.final_log_likelihood - 1e-6);
    }

    #[test]
    fn sweep_grid_of_one() {
        let values = two_clusters(100, 1);
        let r = sweep_k(&values, &[1], Space::Linear, 1, FitOptions::default()).unwrap();
        assert_eq!(r.chosen_k, 1);
        assert!(sweep_k(&values, &[], Space::Linear, 1, FitOptions::default()).is_err());
        assert!(sweep_k(&values, &[2, 1], Space::Linear, 1, FitOptions::default()).is_err());
    }

    #[test]
    fn stability_rule_prefers_smallest_within_band() {
        let row = |k, bic| SweepRow { k, log_likelihood: 0.0, aic: 0.0, bic };
        let table = [row(1, 2000.0), row(2, 1005.0), row(4, 1000.0), row(8, 1003.0)];
        assert_eq!(select_stable_k(&table), Some(2));
        let table = [row(1, 2000.0), row(2, 1020.0), row(4, 1000.0)];
        assert_eq!(select_stable_k(&table), Some(4));
    }

    #[test]
    fn induce_sorts_and_dedups() {
        let comp = |mean| Component { weight: 1.0 / 3.0, mean, variance: 1.0 };
        let model = GmmModel {
            components: vec![comp(7.0), comp(3.0), comp(3.0)],
            space: Space::Linear,
            seed: 0,
            tolerance: 1e-3,
            final_log_likelihood: 0.0,
            log_likelihood_trace: vec![],
            iterations: 0,
        };
        let t = induce_anchors(&model);
        assert_eq!(t.anchors, [3.0, 7.0]);
        assert!((t.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let single = AnchorTable::from_anchors(vec![5.0], Space::Linear).unwrap();
        assert_eq!(single.anchors, [5.0]);
    }

    #[test]
    fn nearest_anchor_examples() {
        let t = AnchorTable::from_anchors(vec![5.0], Space::Linear).unwrap();
        let a = t.nearest_anchor(0.0).unwrap();
        assert_eq!((a.anchor, a.direction), (5.0, Direction::Right));
        let a = t.nearest_anchor(10.0).unwrap();
        assert_eq!((a.anchor, a.direction), (5.0, Direction::Left));

        let t = AnchorTable::from_anchors(vec![2.0], Space::Log).unwrap();
        let a = t.nearest_anchor(std::f64::consts::E.powi(2)).unwrap();
        assert_eq!(a.anchor, 2.0);
        // ln(e^2) rounds to exactly 2.0 in f64
        assert_eq!(a.direction, Direction::Exact);
        assert!(matches!(t.nearest_anchor(0.0), Err(Error::Domain(_))));
        assert!(matches!(t.nearest_anchor(-3.0), Err(Error::Domain(_))));

        let t = AnchorTable::from_anchors(vec![3.0, 7.0], Space::Linear).unwrap();
        let a = t.nearest_anchor(5.0).unwrap();
        assert_eq!((a.anchor, a.direction), (3.0, Direction::Left));
    }

    #[test]
    fn log_fallback_uses_smallest_anchor() {
        let t = AnchorTable::from_anchors(vec![0.5, 2.0], Space::Log).unwrap();
        let a = t.nearest_anchor_linear_fallback(0.0).unwrap();
        assert_eq!((a.anchor, a.direction), (0.5, Direction::Right));
    }

    #[test]
    fn anchor_table_file_round_trip() {
        let values = two_clusters(200, 2);
        let m = fit_gmm(&values, 3, Space::Linear, FitOptions::default()).unwrap();
        let t = induce_anchors(&m);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        assert_eq!(AnchorTable::read(&buf[..]).unwrap(), t);
        assert!(AnchorTable::read(&b"garbage\n"[..]).is_err());
    }

    #[test]
    fn pdf_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let comp = |mean| Component { weight: 0.5, mean, variance: 2.0 };
        let m = GmmModel {
            components: vec![comp(-3.0), comp(3.0)],
            space: Space::Linear,
            seed: 0,
            tolerance: 1e-3,
            final_log_likelihood: 0.0,
            log_likelihood_trace: vec![],
            iterations: 0,
        };
        for _ in 0..100 {
            let x: f64 = rng.random_range(-10.0..10.0);
            assert!((m.pdf(x) - m.pdf(-x)).abs() < 1e-15);
        }
    }
}
