//! Staged, checksummed pipeline: extract, anchors, augment, train, probe,
//! report.
//!
//! Every stage writes its artifacts under the output directory through a
//! temp file and rename, then records input and output checksums in
//! `manifest.json`. A stage whose config hash, inputs and outputs all
//! match the manifest is skipped.

pub mod config;
pub mod manifest;
mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::Serialize;

pub use config::{validate_config, Overrides, PipelineConfig};
pub use manifest::{file_checksum, sha256_hex, write_atomic, Manifest, StageRecord};

use crate::error::{Error, Result};

/// Echo of the normalized configuration inside the output directory.
pub const NORMALIZED_CONFIG_FILE: &str = "config.normalized.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Extract,
    Anchors,
    Augment,
    Train,
    Probe,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Extract,
        Stage::Anchors,
        Stage::Augment,
        Stage::Train,
        Stage::Probe,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Anchors => "anchors",
            Stage::Augment => "augment",
            Stage::Train => "train",
            Stage::Probe => "probe",
            Stage::Report => "report",
        }
    }

    /// Upstream artifacts this stage reads, as (producing stage, path).
    pub fn artifact_inputs(self) -> &'static [(Stage, &'static str)] {
        match self {
            Stage::Extract => &[],
            Stage::Anchors => &[(Stage::Extract, stages::NUMERALS)],
            Stage::Augment => &[
                (Stage::Extract, stages::TOKENS),
                (Stage::Extract, stages::NUMERALS),
                (Stage::Anchors, stages::ANCHORS),
            ],
            Stage::Train => &[(Stage::Augment, stages::AUGMENTED)],
            Stage::Probe => &[(Stage::Train, stages::CHECKPOINT), (Stage::Extract, stages::NUMERALS)],
            Stage::Report => &[(Stage::Probe, stages::PROBE_REPORT)],
        }
    }

    pub fn dependencies(self) -> Vec<Stage> {
        let mut deps: Vec<Stage> = self.artifact_inputs().iter().map(|(s, _)| *s).collect();
        deps.sort();
        deps.dedup();
        deps
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    /// Inputs, config and outputs unchanged since the recorded run.
    Skipped,
}

pub struct Pipeline {
    pub config: PipelineConfig,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Self { config }
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn artifact(&self, rel: &str) -> PathBuf {
        self.config.out_dir.join(rel)
    }

    /// Hash of the settings that influence `stage`'s artifacts.
    pub fn stage_config_hash(&self, stage: Stage) -> Result<String> {
        #[derive(Serialize)]
        struct Key<'a, T: Serialize> {
            stage: &'a str,
            settings: T,
        }
        let c = &self.config;
        let settings = match stage {
            Stage::Extract => serde_json::json!({}),
            Stage::Anchors => serde_json::json!({
                "space": c.anchor_space()?.to_string(),
                "grid": c.k_grid(),
                "restarts": c.anchors.restarts,
                "tolerance": c.anchors.tolerance,
                "max_iters": c.anchors.max_iters,
                "seed": c.anchors.seed,
                "table": c.anchors.table.is_some(),
            }),
            Stage::Augment => serde_json::json!({
                "strategy": c.strategy,
                "log_rendering": c.anchors.log_rendering,
            }),
            Stage::Train => serde_json::json!({
                "strategy_is_control": c.strategy()?.is_none(),
                "encoder": c.encoder,
                "train": c.train,
            }),
            Stage::Probe => serde_json::json!({
                "embedding": c.embedding,
                "probe": c.probe,
            }),
            Stage::Report => serde_json::json!({}),
        };
        let bytes = serde_json::to_vec(&Key {
            stage: stage.as_str(),
            settings,
        })
        .map_err(|e| Error::format("config hash", e.to_string()))?;
        Ok(sha256_hex(&bytes))
    }

    /// Current checksums of everything `stage` reads.
    fn current_inputs(&self, stage: Stage) -> Result<BTreeMap<String, String>> {
        let mut inputs = BTreeMap::new();
        if stage == Stage::Extract {
            inputs.insert("corpus".to_string(), file_checksum(&self.config.corpus.path)?);
        }
        if stage == Stage::Anchors {
            if let Some(table) = &self.config.anchors.table {
                inputs.insert("anchor_table".to_string(), file_checksum(table)?);
            }
        }
        for (_, rel) in stage.artifact_inputs() {
            let path = self.artifact(rel);
            if !path.is_file() {
                return Err(Error::Stale { path });
            }
            inputs.insert(rel.to_string(), file_checksum(&path)?);
        }
        Ok(inputs)
    }

    fn outputs_intact(&self, record: &StageRecord) -> Result<Option<PathBuf>> {
        for (rel, sum) in &record.outputs {
            let path = self.artifact(rel);
            if !path.is_file() || &file_checksum(&path)? != sum {
                return Ok(Some(path));
            }
        }
        Ok(None)
    }

    /// Ensures `stage` has a recorded, unmodified, up-to-date run.
    fn check_fresh(&self, manifest: &Manifest, stage: Stage) -> Result<()> {
        let record = &manifest.stages[stage.as_str()];
        if let Some(path) = self.outputs_intact(record)? {
            return Err(Error::Stale { path });
        }
        let first_output = || {
            record
                .outputs
                .keys()
                .next()
                .map_or_else(|| self.out_dir().to_path_buf(), |r| self.artifact(r))
        };
        if record.config_hash != self.stage_config_hash(stage)? {
            return Err(Error::Stale { path: first_output() });
        }
        let inputs = self.current_inputs(stage)?;
        for (name, sum) in &record.inputs {
            if inputs.get(name) != Some(sum) {
                let path = if name == "corpus" {
                    self.config.corpus.path.clone()
                } else {
                    self.artifact(name)
                };
                return Err(Error::Stale { path });
            }
        }
        for dep in stage.dependencies() {
            self.check_fresh(manifest, dep)?;
        }
        Ok(())
    }

    fn missing_ancestors(&self, manifest: &Manifest, stage: Stage, out: &mut Vec<Stage>) {
        for dep in stage.dependencies() {
            self.missing_ancestors(manifest, dep, out);
            if !manifest.stages.contains_key(dep.as_str()) && !out.contains(&dep) {
                out.push(dep);
            }
        }
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageOutcome> {
        let mut manifest = Manifest::load(self.out_dir())?;
        let mut missing = Vec::new();
        self.missing_ancestors(&manifest, stage, &mut missing);
        if !missing.is_empty() {
            missing.sort();
            return Err(Error::Dependency {
                stage: stage.to_string(),
                missing: missing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
            });
        }
        for dep in stage.dependencies() {
            self.check_fresh(&manifest, dep)?;
        }
        write_atomic(
            &self.artifact(NORMALIZED_CONFIG_FILE),
            self.config.to_toml()?.as_bytes(),
        )?;
        let config_hash = self.stage_config_hash(stage)?;
        let inputs = self.current_inputs(stage)?;
        if let Some(rec) = manifest.stages.get(stage.as_str()) {
            if rec.config_hash == config_hash
                && rec.tool_version == manifest::TOOL_VERSION
                && rec.inputs == inputs
                && self.outputs_intact(rec)?.is_none()
            {
                info!("{stage}: up to date");
                return Ok(StageOutcome::Skipped);
            }
        }
        info!("{stage}: running");
        let artifacts = stages::run(self, stage)?;
        let mut outputs = BTreeMap::new();
        for (rel, bytes) in artifacts {
            write_atomic(&self.artifact(&rel), &bytes)?;
            outputs.insert(rel, sha256_hex(&bytes));
        }
        manifest.stages.insert(
            stage.to_string(),
            StageRecord {
                config_hash,
                tool_version: manifest::TOOL_VERSION.to_string(),
                inputs,
                outputs,
            },
        );
        manifest.save(self.out_dir())?;
        Ok(StageOutcome::Ran)
    }

    pub fn run_all(&self) -> Result<Vec<(Stage, StageOutcome)>> {
        Stage::ALL
            .into_iter()
            .map(|s| self.run_stage(s).map(|o| (s, o)))
            .collect()
    }
}

pub use stages::{
    AUGMENTED, CHECKPOINT, GRID, HEATMAP, METRICS, NUMERALS, PROBE_REPORT, SCATTER, SELECTION, SWEEP, TOKENS,
};
pub use stages::ANCHORS as ANCHOR_TABLE;
