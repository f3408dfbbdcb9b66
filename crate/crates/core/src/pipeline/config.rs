//! Declarative pipeline configuration (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{LogRendering, Strategy};
use crate::error::{Error, Result};
use crate::gmm::{AnchorTable, Space};
use crate::mlm::{EncoderConfig, OodEmbedding};
use crate::probe::ProbePlan;

/// Strategy name that trains the unaugmented control.
pub const NO_ANCHOR: &str = "none";

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_strategy() -> String {
    Strategy::LnAnchorsDir.as_str().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; when present it overrides every section seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// One of the four augmentation strategies or `none`.
    #[serde(default = "default_strategy")]
    pub strategy: String,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub anchors: AnchorsSection,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub probe: ProbePlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    /// UTF-8 text, one document per line.
    pub path: PathBuf,
}

/// Default K grid when neither `k` nor `sweep` is given.
pub const DEFAULT_SWEEP: [usize; 6] = [2, 4, 8, 16, 32, 64];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnchorsSection {
    /// Fixed number of components; mutually exclusive with `sweep`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<usize>>,
    pub restarts: usize,
    pub tolerance: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Precomputed anchor table used instead of fitting.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    pub log_rendering: LogRendering,
}

impl Default for AnchorsSection {
    fn default() -> Self {
        Self {
            k: None,
            sweep: None,
            restarts: 3,
            tolerance: 1e-3,
            max_iters: 500,
            seed: 0,
            table: None,
            log_rendering: LogRendering::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub min_frequency: usize,
    /// Masking rate for the `none` control.
    pub random_mask_rate: f64,
    /// Epochs of random-mask training on the un-augmented text before the
    /// main run; every strategy starts from such a base encoder.
    pub base_epochs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            min_frequency: 1,
            random_mask_rate: 0.15,
            base_epochs: 2,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSection {
    pub template_id: usize,
    pub ood: OodEmbedding,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self {
            template_id: 0,
            ood: OodEmbedding::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub deterministic: bool,
    pub out_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(e.message().to_string()))
    }

    /// `None` selects the unaugmented control.
    pub fn strategy(&self) -> Result<Option<Strategy>> {
        if self.strategy == NO_ANCHOR {
            Ok(None)
        } else {
            self.strategy.parse().map(Some)
        }
    }

    /// Space in which anchors are fitted; the control uses log space.
    pub fn anchor_space(&self) -> Result<Space> {
        Ok(self.strategy()?.map_or(Space::Log, Strategy::space))
    }

    /// K grid the anchors stage fits.
    pub fn k_grid(&self) -> Vec<usize> {
        match (&self.anchors.k, &self.anchors.sweep) {
            (Some(k), _) => vec![*k],
            (None, Some(grid)) => grid.clone(),
            (None, None) => DEFAULT_SWEEP.to_vec(),
        }
    }

    /// Applies overrides, fills defaults, resolves relative paths against
    /// `base` and checks cross-field consistency.
    pub fn normalize(mut self, base: &Path, overrides: &Overrides) -> Result<Self> {
        if let Some(seed) = overrides.seed {
            self.seed = Some(seed);
        }
        self.deterministic |= overrides.deterministic;
        if let Some(out) = &overrides.out_dir {
            self.out_dir = out.clone();
        }
        if self.deterministic && self.seed.is_none() {
            return Err(Error::Validation(
                "deterministic runs need an explicit seed (config `seed` or --seed)".into(),
            ));
        }
        if let Some(seed) = self.seed {
            self.anchors.seed = seed;
            self.encoder.seed = seed;
            self.probe.seed = seed;
            self.probe.classifier.seed = seed;
        }
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        self.corpus.path = resolve(&self.corpus.path);
        self.anchors.table = self.anchors.table.as_deref().map(resolve);
        if overrides.out_dir.is_none() {
            self.out_dir = resolve(&self.out_dir);
        }
        if self.anchors.k.is_none() && self.anchors.sweep.is_none() {
            self.anchors.sweep = Some(DEFAULT_SWEEP.to_vec());
        }
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::Validation(m));
        let strategy = self.strategy()?;
        if !self.corpus.path.is_file() {
            return invalid(format!("corpus {} does not exist", self.corpus.path.display()));
        }
        match (&self.anchors.k, &self.anchors.sweep) {
            (Some(_), Some(_)) => return invalid("set either anchors.k or anchors.sweep, not both".into()),
            (Some(0), _) => return invalid("anchors.k must be positive".into()),
            (_, Some(g)) if g.is_empty() || g.contains(&0) || g.windows(2).any(|w| w[0] >= w[1]) => {
                return invalid("anchors.sweep must be a non-empty ascending list of positive K".into())
            }
            _ => {}
        }
        if self.anchors.restarts == 0 || self.anchors.max_iters == 0 || !(self.anchors.tolerance > 0.0) {
            return invalid("anchors.restarts, max_iters and tolerance must be positive".into());
        }
        if let Some(path) = &self.anchors.table {
            let file = fs::File::open(path)
                .map_err(|e| Error::Validation(format!("anchor table {}: {e}", path.display())))?;
            let table = AnchorTable::read(std::io::BufReader::new(file))?;
            match strategy {
                None => return invalid("strategy none does not use an anchor table".into()),
                Some(s) if s.space() != table.space => {
                    return invalid(format!(
                        "strategy {s} needs a {} anchor table but {} is {}",
                        s.space(),
                        path.display(),
                        table.space
                    ))
                }
                _ => {}
            }
        }
        self.encoder
            .validate()
            .map_err(|e| Error::Validation(e.to_string()))?;
        if !(0.0 < self.train.random_mask_rate && self.train.random_mask_rate <= 1.0) {
            return invalid("train.random_mask_rate must lie in (0, 1]".into());
        }
        if self.train.min_frequency == 0 {
            return invalid("train.min_frequency must be at least 1".into());
        }
        if self.embedding.template_id >= crate::mlm::embed::TEMPLATES.len() {
            return invalid(format!("unknown template id {}", self.embedding.template_id));
        }
        if self.probe.heatmap_max == 1 {
            return invalid("probe.heatmap_max must be 0 or at least 2".into());
        }
        if self.probe.regression_samples < 13 || self.probe.list_samples < 2 {
            return invalid("probe sample counts too small for an 80/20 split".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Validation(e.to_string()))
    }
}

/// Reads, normalizes and validates a config file.
pub fn validate_config(path: &Path, overrides: &Overrides) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    PipelineConfig::parse(&text)?.normalize(base, overrides)
}
