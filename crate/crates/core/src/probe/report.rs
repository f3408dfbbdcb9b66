use std::io::Write;

use log::info;
use serde::{Deserialize, Serialize};

use super::dataset::{build_probe_dataset, NumeralSet, RangeLabel, RangeSpec, Split, Task};
use super::embedder::NumeralEmbedder;
use super::gbt::GbtConfig;
use super::lstm::ListClassifierConfig;
use super::tasks::{cosine_heatmap, evaluate_list, evaluate_regression, Heatmap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbePlan {
    pub tasks: Vec<Task>,
    pub ranges: Vec<RangeLabel>,
    pub splits: Vec<Split>,
    /// Items per decoding / addition cell.
    pub regression_samples: usize,
    /// Lists per extremum cell.
    pub list_samples: usize,
    pub regressor: GbtConfig,
    pub classifier: ListClassifierConfig,
    /// Heatmap over the integers `1..=heatmap_max`; 0 disables it.
    pub heatmap_max: u32,
    pub seed: u64,
}

impl Default for ProbePlan {
    fn default() -> Self {
        Self {
            tasks: Task::ALL_TASKS.to_vec(),
            ranges: RangeLabel::ALL_LABELS.to_vec(),
            splits: vec![Split::InDomain, Split::OutOfDomain],
            regression_samples: 2000,
            list_samples: 1000,
            regressor: GbtConfig::default(),
            classifier: ListClassifierConfig::default(),
            heatmap_max: 100,
            seed: 0,
        }
    }
}

/// One (task, range, split) result or an infeasibility marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCell {
    pub task: Task,
    pub range: RangeLabel,
    pub split: Split,
    pub metric: String,
    pub value: Option<f64>,
    pub n: usize,
    pub r2: Option<f64>,
    pub infeasible: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub range: RangeLabel,
    pub split: Split,
    pub true_value: f64,
    pub decoded_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub embedder: String,
    pub cells: Vec<ProbeCell>,
    pub heatmap: Option<Heatmap>,
    pub scatter: Vec<ScatterPoint>,
}

/// Cell seed derived from the plan seed and the cell's identity only.
fn cell_seed(seed: u64, task: Task, range: RangeLabel, split: Split) -> u64 {
    let key = format!("{task}/{range}/{split}");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn run_probe_plan(
    plan: &ProbePlan,
    embedder: &dyn NumeralEmbedder,
    corpus: &NumeralSet,
) -> Result<ProbeReport> {
    let mut cells = Vec::new();
    let mut scatter = Vec::new();
    for &task in &plan.tasks {
        for &range in &plan.ranges {
            for &split in &plan.splits {
                let seed = cell_seed(plan.seed, task, range, split);
                let metric = if task.is_list() { "accuracy" } else { "log_rmse" };
                let mut cell = ProbeCell {
                    task,
                    range,
                    split,
                    metric: metric.into(),
                    value: None,
                    n: 0,
                    r2: None,
                    infeasible: None,
                };
                let n = if task.is_list() { plan.list_samples } else { plan.regression_samples };
                let data = RangeSpec::resolve(range, corpus)
                    .and_then(|r| build_probe_dataset(task, r, split, n, seed, corpus, embedder));
                match data {
                    Err(Error::InfeasibleSplit(why)) => cell.infeasible = Some(why),
                    Err(e) => return Err(e),
                    Ok(data) if task.is_list() => {
                        let out = evaluate_list(&data, &plan.classifier, seed)?;
                        cell.value = Some(out.accuracy);
                        cell.n = out.n_eval;
                    }
                    Ok(data) => {
                        let out = evaluate_regression(&data, &plan.regressor, seed)?;
                        cell.value = Some(out.log_rmse);
                        cell.n = out.n_eval;
                        if task == Task::Decoding {
                            cell.r2 = Some(out.r2);
                            scatter.extend(out.pairs.iter().map(|&(t, d)| ScatterPoint {
                                range,
                                split,
                                true_value: t,
                                decoded_value: d,
                            }));
                        }
                    }
                }
                info!(
                    "probe {task} {range} {split}: {}",
                    cell.value.map_or("infeasible".to_string(), |v| format!("{metric} {v:.4}"))
                );
                cells.push(cell);
            }
        }
    }
    let heatmap = match plan.heatmap_max {
        0 => None,
        1 => return Err(Error::Config("heatmap_max must be 0 or at least 2".into())),
        m => Some(cosine_heatmap(embedder, &(1..=m).map(f64::from).collect::<Vec<_>>())?),
    };
    Ok(ProbeReport {
        embedder: embedder.name(),
        cells,
        heatmap,
        scatter,
    })
}

impl ProbeReport {
    pub fn cell(&self, task: Task, range: RangeLabel, split: Split) -> Option<&ProbeCell> {
        self.cells
            .iter()
            .find(|c| c.task == task && c.range == range && c.split == split)
    }

    /// One record per cell: task, range, split, metric, value, n, r2.
    pub fn write_cells<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("writing probe report", e);
        writeln!(out, "task\trange\tsplit\tmetric\tvalue\tn\tr2").map_err(io)?;
        for c in &self.cells {
            let value = match (&c.value, &c.infeasible) {
                (Some(v), _) => format!("{v:.6}"),
                _ => "infeasible".to_string(),
            };
            let r2 = c.r2.map_or("-".to_string(), |v| format!("{v:.6}"));
            writeln!(out, "{}\t{}\t{}\t{}\t{value}\t{}\t{r2}", c.task, c.range, c.split, c.metric, c.n)
                .map_err(io)?;
        }
        Ok(())
    }

    /// `range,split,true_value,decoded_value` rows for scatter plots.
    pub fn write_scatter<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("writing scatter", e);
        writeln!(out, "range,split,true_value,decoded_value").map_err(io)?;
        for p in &self.scatter {
            writeln!(out, "{},{},{},{:.6}", p.range, p.split, p.true_value, p.decoded_value).map_err(io)?;
        }
        Ok(())
    }

    /// Metric grid with one row per (task, split) and one column per range.
    pub fn write_grid<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("writing metric grid", e);
        let mut ranges: Vec<RangeLabel> = self.cells.iter().map(|c| c.range).collect();
        ranges.sort();
        ranges.dedup();
        let mut rows: Vec<(Task, Split)> = self.cells.iter().map(|c| (c.task, c.split)).collect();
        rows.sort();
        rows.dedup();
        let header: Vec<&str> = ranges.iter().map(|r| r.as_str()).collect();
        writeln!(out, "task\tsplit\t{}", header.join("\t")).map_err(io)?;
        for (task, split) in rows {
            let cols: Vec<String> = ranges
                .iter()
                .map(|&r| match self.cell(task, r, split) {
                    Some(ProbeCell { value: Some(v), .. }) if task.is_list() => format!("{:.2}%", v * 100.0),
                    Some(ProbeCell { value: Some(v), .. }) => format!("{v:.4}"),
                    Some(_) => "n/a".to_string(),
                    None => "-".to_string(),
                })
                .collect();
            writeln!(out, "{task}\t{split}\t{}", cols.join("\t")).map_err(io)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::embedder::LogFeatureEmbedder;

    #[test]
    fn every_cell_present_or_marked() {
        let corpus = NumeralSet::new((1..=400).map(|i| (i * 7) as f64));
        let plan = ProbePlan {
            tasks: vec![Task::Decoding, Task::ListMax],
            regression_samples: 50,
            list_samples: 40,
            classifier: ListClassifierConfig { epochs: 1, ..Default::default() },
            regressor: GbtConfig { n_trees: 5, ..Default::default() },
            // ln 1 = 0 has no direction, so no heatmap for this embedder
            heatmap_max: 0,
            ..Default::default()
        };
        let report = run_probe_plan(&plan, &LogFeatureEmbedder, &corpus).unwrap();
        assert_eq!(report.cells.len(), 2 * 5 * 2);
        for c in &report.cells {
            assert!(c.value.is_some() != c.infeasible.is_some());
            if c.split == Split::OutOfDomain && !c.range.admits_ood() {
                assert!(c.infeasible.is_some());
            }
        }
        // corpus tops out at 2800, so 10k-1e10 has no in-domain numerals
        assert!(report.cell(Task::Decoding, RangeLabel::TenThousandToTenBillion, Split::InDomain).unwrap().infeasible.is_some());
        let mut buf = Vec::new();
        report.write_cells(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 21);
        assert!(report.heatmap.is_none());
    }
}
