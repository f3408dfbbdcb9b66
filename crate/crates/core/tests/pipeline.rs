use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use numanchor::gmm::{AnchorTable, Space};
use numanchor::pipeline::{
    validate_config, Overrides, Pipeline, Stage, StageOutcome, ANCHOR_TABLE, AUGMENTED, CHECKPOINT, GRID, HEATMAP,
    METRICS, SCATTER, SELECTION, SWEEP,
};
use numanchor::synth::{generate, SynthConfig};
use numanchor::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SMALL: &str = r#"
seed = 1
strategy = "ln-anchors-dir"
[corpus]
path = "corpus.txt"
[anchors]
k = 8
[encoder]
layers = 4
hidden = 8
heads = 2
ffn = 16
max_seq_len = 24
epochs = 1
learning_rate = 1e-3
dropout = 0.0
[train]
max_steps = 20
[probe]
tasks = ["decoding", "list-max"]
ranges = ["1-100", "all"]
regression_samples = 100
list_samples = 50
heatmap_max = 12
[probe.regressor]
n_trees = 20
[probe.classifier]
layers = 1
hidden = 4
epochs = 1
"#;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate(&SynthConfig {
            sentences: 300,
            pool_size: 150,
            seed: 3,
            ..Default::default()
        });
        fs::write(dir.path().join("corpus.txt"), corpus.documents.join("\n") + "\n").unwrap();
        fs::write(dir.path().join("cfg.toml"), config).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn pipeline(&self) -> numanchor::Result<Pipeline> {
        self.pipeline_with(&Overrides::default())
    }

    fn pipeline_with(&self, o: &Overrides) -> numanchor::Result<Pipeline> {
        validate_config(&self.path("cfg.toml"), o).map(Pipeline::new)
    }
}

fn bin(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_numanchor"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn augment_before_anchors_is_a_dependency_error() {
    let ws = Workspace::new(SMALL);
    let err = ws.pipeline().unwrap().run_stage(Stage::Augment).unwrap_err();
    match &err {
        Error::Dependency { missing, .. } => assert_eq!(missing, "extract, anchors"),
        other => panic!("unexpected {other}"),
    }
    assert_eq!(err.exit_code(), 3);
    let (code, text) = bin(&["augment", "--config", "cfg.toml"], ws.dir.path());
    assert_eq!(code, 3, "{text}");
    assert!(text.contains("anchors"));
}

#[test]
fn rerun_is_a_no_op_and_outputs_exist() {
    let ws = Workspace::new(SMALL);
    let p = ws.pipeline().unwrap();
    assert!(p.run_all().unwrap().iter().all(|(_, o)| *o == StageOutcome::Ran));
    for rel in [ANCHOR_TABLE, AUGMENTED, CHECKPOINT, METRICS, GRID, HEATMAP, SCATTER] {
        assert!(p.artifact(rel).is_file(), "{rel}");
    }
    assert!(p.artifact("config.normalized.toml").is_file());
    let before = fs::read(p.artifact("manifest.json")).unwrap();
    assert!(p.run_all().unwrap().iter().all(|(_, o)| *o == StageOutcome::Skipped));
    assert_eq!(before, fs::read(p.artifact("manifest.json")).unwrap());

    // no temp files are left next to the artifacts
    for entry in walk(p.out_dir()) {
        let name = entry.file_name().unwrap().to_string_lossy().into_owned();
        assert!(!name.contains(".tmp-"), "{name}");
    }
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn tampered_upstream_artifact_is_stale() {
    let ws = Workspace::new(SMALL);
    let p = ws.pipeline().unwrap();
    p.run_stage(Stage::Extract).unwrap();
    p.run_stage(Stage::Anchors).unwrap();
    let path = p.artifact(ANCHOR_TABLE);
    let mut text = fs::read_to_string(&path).unwrap();
    text.push('\n');
    fs::write(&path, text).unwrap();
    let err = p.run_stage(Stage::Augment).unwrap_err();
    assert!(matches!(&err, Error::Stale { path: s } if s == &path), "{err}");
    assert_eq!(err.exit_code(), 3);
    // re-running the producing stage repairs it
    assert_eq!(p.run_stage(Stage::Anchors).unwrap(), StageOutcome::Ran);
    assert_eq!(p.run_stage(Stage::Augment).unwrap(), StageOutcome::Ran);
}

#[test]
fn changed_corpus_makes_downstream_stale() {
    let ws = Workspace::new(SMALL);
    let p = ws.pipeline().unwrap();
    p.run_stage(Stage::Extract).unwrap();
    p.run_stage(Stage::Anchors).unwrap();
    fs::write(ws.path("corpus.txt"), "only 7 words here .\n").unwrap();
    assert!(matches!(p.run_stage(Stage::Augment), Err(Error::Stale { .. })));
    assert_eq!(p.run_stage(Stage::Extract).unwrap(), StageOutcome::Ran);
}

#[test]
fn config_change_reruns_only_affected_stages() {
    let ws = Workspace::new(SMALL);
    ws.pipeline().unwrap().run_all().unwrap();
    fs::write(ws.path("cfg.toml"), SMALL.replace("heatmap_max = 12", "heatmap_max = 10")).unwrap();
    let outcomes = ws.pipeline().unwrap().run_all().unwrap();
    let ran: Vec<Stage> = outcomes.iter().filter(|(_, o)| *o == StageOutcome::Ran).map(|(s, _)| *s).collect();
    assert_eq!(ran, vec![Stage::Probe, Stage::Report]);
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let ws = Workspace::new(SMALL);
    let run = |out: &str| {
        let o = Overrides {
            seed: Some(9),
            deterministic: true,
            out_dir: Some(ws.path(out)),
        };
        let p = ws.pipeline_with(&o).unwrap();
        p.run_all().unwrap();
        p
    };
    let (a, b) = (run("a"), run("b"));
    for rel in [CHECKPOINT, METRICS, GRID, HEATMAP, SCATTER] {
        assert_eq!(fs::read(a.artifact(rel)).unwrap(), fs::read(b.artifact(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn deterministic_flag_requires_a_seed() {
    let ws = Workspace::new(&SMALL.replace("seed = 1\n", ""));
    let o = Overrides {
        deterministic: true,
        ..Default::default()
    };
    assert!(matches!(ws.pipeline_with(&o), Err(Error::Validation(_))));
    let (code, _) = bin(&["validate", "--config", "cfg.toml", "--deterministic"], ws.dir.path());
    assert_eq!(code, 2);
    let (code, _) = bin(&["validate", "--config", "cfg.toml", "--deterministic", "--seed", "4"], ws.dir.path());
    assert_eq!(code, 0);
}

#[test]
fn unknown_keys_are_rejected() {
    let ws = Workspace::new(&SMALL.replace("k = 8", "k = 8\nrestart = 2"));
    let err = ws.pipeline().err().unwrap();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("restart"), "{err}");
    let (code, _) = bin(&["validate", "--config", "cfg.toml"], ws.dir.path());
    assert_eq!(code, 2);
}

#[test]
fn log_strategy_with_linear_table_is_rejected() {
    let ws = Workspace::new(&SMALL.replace("k = 8", "table = \"lin.tsv\""));
    let table = AnchorTable::from_anchors(vec![10.0, 100.0], Space::Linear).unwrap();
    let mut bytes = Vec::new();
    table.write(&mut bytes).unwrap();
    fs::write(ws.path("lin.tsv"), bytes).unwrap();
    assert!(matches!(ws.pipeline(), Err(Error::Validation(_))));
    let (code, text) = bin(&["validate", "--config", "cfg.toml"], ws.dir.path());
    assert_eq!(code, 2, "{text}");
}

#[test]
fn minimal_config_gets_desk_defaults() {
    let ws = Workspace::new("[corpus]\npath = \"corpus.txt\"\n");
    let c = ws.pipeline().unwrap().config;
    assert_eq!(c.strategy, "ln-anchors-dir");
    assert_eq!(c.anchors.sweep.as_deref(), Some(&[2, 4, 8, 16, 32, 64][..]));
    assert_eq!((c.anchors.restarts, c.anchors.max_iters), (3, 500));
    assert_eq!(c.anchors.tolerance, 1e-3);
    assert_eq!((c.encoder.layers, c.encoder.hidden, c.encoder.heads), (4, 128, 4));
    assert_eq!((c.encoder.epochs, c.encoder.batch_size), (6, 32));
    assert_eq!(c.probe.tasks.len(), 4);
    assert_eq!(c.probe.ranges.len(), 5);
    assert_eq!(c.out_dir, ws.path("out"));

    let (code, text) = bin(&["validate", "--config", "cfg.toml"], ws.dir.path());
    assert_eq!(code, 0);
    let echoed = numanchor::pipeline::PipelineConfig::parse(&text).unwrap();
    assert_eq!(echoed.encoder, c.encoder);
    assert_eq!(echoed.probe, c.probe);
}

#[test]
fn sweep_on_two_cluster_data_records_k2() {
    // two well separated magnitude clusters in log space
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let spread = Normal::new(0.0f64, 0.25).unwrap();
    let docs: Vec<String> = (0..400)
        .map(|i| {
            let centre: f64 = if i % 2 == 0 { 20.0 } else { 100_000.0 };
            let v = centre * spread.sample(&mut rng).exp();
            format!("we counted {v:.3} items .")
        })
        .collect();
    let ws = Workspace::new(&SMALL.replace("k = 8", "sweep = [1, 2, 4, 8]"));
    fs::write(ws.path("corpus.txt"), docs.join("\n") + "\n").unwrap();
    let p = ws.pipeline().unwrap();
    p.run_stage(Stage::Extract).unwrap();
    p.run_stage(Stage::Anchors).unwrap();
    let selection: serde_json::Value = serde_json::from_slice(&fs::read(p.artifact(SELECTION)).unwrap()).unwrap();
    assert_eq!(selection["chosen_k"], 2);
    assert_eq!(fs::read_to_string(p.artifact(SWEEP)).unwrap().lines().count(), 5);
    let table = AnchorTable::read(fs::read(p.artifact(ANCHOR_TABLE)).unwrap().as_slice()).unwrap();
    assert_eq!(table.len(), 2);
}

#[test]
fn cli_run_all_and_synth() {
    let ws = Workspace::new(SMALL);
    let (code, _) = bin(&["synth", "--out", "corpus.txt", "--sentences", "200", "--pool-size", "100"], ws.dir.path());
    assert_eq!(code, 0);
    assert_eq!(fs::read_to_string(ws.path("corpus.txt")).unwrap().lines().count(), 200);
    let (code, text) = bin(&["run-all", "--config", "cfg.toml", "--out", "o"], ws.dir.path());
    assert_eq!(code, 0, "{text}");
    assert!(ws.path("o/report/grid.tsv").is_file());
    let (code, text) = bin(&["report", "--config", "cfg.toml", "--out", "o"], ws.dir.path());
    assert_eq!(code, 0);
    assert!(text.contains("report: up to date"));
}
