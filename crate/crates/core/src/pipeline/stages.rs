use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};

use log::info;

use super::{Pipeline, Stage};
use crate::augment::{strip_augmentation, Augmenter};
use crate::error::{Error, Result};
use crate::gmm::{fit_best, BIC_STABILITY_BAND, induce_anchors, sweep_k, write_sweep_table, AnchorTable, FitOptions, Space};
use crate::mlm::{build_vocab, train, train_from, EncoderCheckpoint, EncoderConfig, MaskingMode, TrainOptions};
use crate::numeral::{read_occurrences, scan_corpus, scanned_corpus_stats, split_lines, write_occurrences, NumeralOccurrence};
use crate::probe::{run_probe_plan, CachedEmbedder, CheckpointEmbedder, NumeralSet, ProbeReport};

pub const TOKENS: &str = "extract/tokens.txt";
pub const NUMERALS: &str = "extract/numerals.tsv";
pub const STATS: &str = "extract/stats.json";
pub const ANCHORS: &str = "anchors/anchors.tsv";
pub const SWEEP: &str = "anchors/sweep.tsv";
pub const GMM: &str = "anchors/gmm.json";
pub const SELECTION: &str = "anchors/selection.json";
pub const AUGMENTED: &str = "augment/corpus.txt";
pub const WARNINGS: &str = "augment/warnings.tsv";
pub const CHECKPOINT: &str = "train/model.ckpt";
pub const VOCAB: &str = "train/vocab.tsv";
pub const LOSS: &str = "train/loss.tsv";
pub const BASE_LOSS: &str = "train/base_loss.tsv";
pub const PROBE_REPORT: &str = "probe/report.json";
pub const METRICS: &str = "report/metrics.tsv";
pub const GRID: &str = "report/grid.tsv";
pub const HEATMAP: &str = "report/heatmap.tsv";
pub const SCATTER: &str = "report/scatter.csv";

type Artifacts = Vec<(String, Vec<u8>)>;

fn read_bytes(p: &Pipeline, rel: &str) -> Result<Vec<u8>> {
    let path = p.artifact(rel);
    fs::read(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn open(p: &Pipeline, rel: &str) -> Result<BufReader<fs::File>> {
    let path = p.artifact(rel);
    fs::File::open(&path)
        .map(BufReader::new)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))
}

fn json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::format("json", e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

/// Space-separated token lines.
fn read_token_lines(p: &Pipeline, rel: &str) -> Result<Vec<Vec<String>>> {
    open(p, rel)?
        .lines()
        .map(|l| {
            l.map(|l| l.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect())
                .map_err(|e| Error::io(format!("reading {rel}"), e))
        })
        .collect()
}

fn write_token_lines(docs: &[Vec<String>]) -> Vec<u8> {
    let mut out = Vec::new();
    for d in docs {
        out.extend_from_slice(d.join(" ").as_bytes());
        out.push(b'\n');
    }
    out
}

pub(super) fn run(p: &Pipeline, stage: Stage) -> Result<Artifacts> {
    match stage {
        Stage::Extract => extract(p),
        Stage::Anchors => anchors(p),
        Stage::Augment => augment(p),
        Stage::Train => train_stage(p),
        Stage::Probe => probe(p),
        Stage::Report => report(p),
    }
}

fn extract(p: &Pipeline) -> Result<Artifacts> {
    let path = &p.config.corpus.path;
    let raw = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let docs = scan_corpus(&split_lines(&raw))?;
    let tokens: Vec<Vec<String>> = docs.iter().map(|d| d.tokens.clone()).collect();
    let occurrences: Vec<NumeralOccurrence> = docs.iter().flat_map(|d| d.numerals.iter().cloned()).collect();
    let mut numerals = Vec::new();
    write_occurrences(&mut numerals, &occurrences)?;
    let stats = scanned_corpus_stats(&docs);
    info!(
        "extract: {} documents, {} numerals ({:.3} of tokens)",
        docs.len(),
        stats.numeral_tokens,
        stats.numeral_fraction
    );
    Ok(vec![
        (TOKENS.into(), write_token_lines(&tokens)),
        (NUMERALS.into(), numerals),
        (STATS.into(), json(&stats)?),
    ])
}

fn anchors(p: &Pipeline) -> Result<Artifacts> {
    let c = &p.config;
    let space = c.anchor_space()?;
    if let Some(path) = &c.anchors.table {
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let table = AnchorTable::read(bytes.as_slice())?;
        if table.space != space {
            return Err(Error::Validation(format!("anchor table is {} but strategy needs {space}", table.space)));
        }
        let mut out = Vec::new();
        table.write(&mut out)?;
        return Ok(vec![(ANCHORS.into(), out)]);
    }
    let occurrences = read_occurrences(open(p, NUMERALS)?)?;
    let values: Vec<f64> = occurrences
        .iter()
        .map(|o| o.value)
        // zero cannot be placed in log space; those numerals use the linear fallback
        .filter(|&v| space == Space::Linear || v > 0.0)
        .map(|v| if space == Space::Log { v.ln() } else { v })
        .collect();
    let opts = FitOptions {
        seed: c.anchors.seed,
        tolerance: c.anchors.tolerance,
        max_iters: c.anchors.max_iters,
    };
    let mut artifacts = Vec::new();
    let model = match c.anchors.k {
        Some(k) => fit_best(&values, k, space, c.anchors.restarts, opts)?,
        None => {
            let sweep = sweep_k(&values, &c.k_grid(), space, c.anchors.restarts, opts)?;
            info!("anchors: sweep chose K = {}", sweep.chosen_k);
            let mut table = Vec::new();
            write_sweep_table(&mut table, &sweep.table)?;
            artifacts.push((SWEEP.into(), table));
            let selection = serde_json::json!({
                "chosen_k": sweep.chosen_k,
                "rule": "smallest K with BIC within the stability band of the grid minimum",
                "band": BIC_STABILITY_BAND,
            });
            artifacts.push((SELECTION.into(), json(&selection)?));
            sweep.model
        }
    };
    let table = induce_anchors(&model);
    info!("anchors: {} anchors in {space} space", table.len());
    let mut out = Vec::new();
    table.write(&mut out)?;
    artifacts.push((ANCHORS.into(), out));
    artifacts.push((GMM.into(), json(&model)?));
    Ok(artifacts)
}

fn augment(p: &Pipeline) -> Result<Artifacts> {
    let docs = read_token_lines(p, TOKENS)?;
    let Some(strategy) = p.config.strategy()? else {
        return Ok(vec![
            (AUGMENTED.into(), write_token_lines(&docs)),
            (WARNINGS.into(), b"doc_id\ttoken_index\tvalue\n".to_vec()),
        ]);
    };
    let table = AnchorTable::read(open(p, ANCHORS)?)?;
    let augmenter = Augmenter::new(&table, strategy)?.with_log_rendering(p.config.anchors.log_rendering);
    let mut by_doc: BTreeMap<usize, Vec<NumeralOccurrence>> = BTreeMap::new();
    for o in read_occurrences(open(p, NUMERALS)?)? {
        by_doc.entry(o.doc_id).or_default().push(o);
    }
    let mut warnings = b"doc_id\ttoken_index\tvalue\n".to_vec();
    let mut out = Vec::with_capacity(docs.len());
    for (i, tokens) in docs.iter().enumerate() {
        let occ = by_doc.get(&i).map_or(&[][..], Vec::as_slice);
        let doc = augmenter.augment(tokens, occ)?;
        for w in &doc.warnings {
            warnings.extend_from_slice(format!("{i}\t{}\t{}\n", w.token_index, w.value).as_bytes());
        }
        out.push(doc.tokens);
    }
    Ok(vec![
        (AUGMENTED.into(), write_token_lines(&out)),
        (WARNINGS.into(), warnings),
    ])
}

fn train_stage(p: &Pipeline) -> Result<Artifacts> {
    let c = &p.config;
    let docs = read_token_lines(p, AUGMENTED)?;
    let vocab = build_vocab(&docs, c.train.min_frequency);
    let masking = match c.strategy()? {
        Some(_) => MaskingMode::Anchor,
        None => MaskingMode::Random {
            rate: c.train.random_mask_rate,
        },
    };
    info!("train: {} documents, vocabulary {}", docs.len(), vocab.len());
    let base = if c.train.base_epochs > 0 {
        let plain = docs.iter().map(|d| strip_augmentation(d)).collect::<Result<Vec<_>>>()?;
        let base_config = EncoderConfig {
            epochs: c.train.base_epochs,
            ..c.encoder.clone()
        };
        let options = TrainOptions {
            masking: MaskingMode::Random {
                rate: c.train.random_mask_rate,
            },
            max_steps: c.train.max_steps,
        };
        info!("train: base encoder, {} epochs of random masking", c.train.base_epochs);
        Some(train(&base_config, &plain, &vocab, options)?)
    } else {
        None
    };
    let ckpt = train_from(
        base.as_ref(),
        &c.encoder,
        &docs,
        &vocab,
        TrainOptions {
            masking,
            max_steps: c.train.max_steps,
        },
    )?;
    let mut bytes = Vec::new();
    ckpt.write(&mut bytes)?;
    let mut vocab_tsv = Vec::new();
    ckpt.vocab.write_tsv(&mut vocab_tsv)?;
    let mut loss = Vec::new();
    ckpt.log.write_tsv(&mut loss)?;
    let mut out = vec![
        (CHECKPOINT.into(), bytes),
        (VOCAB.into(), vocab_tsv),
        (LOSS.into(), loss),
    ];
    if let Some(b) = &base {
        let mut base_loss = Vec::new();
        b.log.write_tsv(&mut base_loss)?;
        out.push((BASE_LOSS.into(), base_loss));
    }
    Ok(out)
}

fn probe(p: &Pipeline) -> Result<Artifacts> {
    let ckpt = EncoderCheckpoint::read(read_bytes(p, CHECKPOINT)?.as_slice())?;
    let corpus = NumeralSet::new(read_occurrences(open(p, NUMERALS)?)?.iter().map(|o| o.value));
    let embedder = CachedEmbedder::new(CheckpointEmbedder {
        checkpoint: &ckpt,
        template_id: p.config.embedding.template_id,
        ood: p.config.embedding.ood,
    });
    let report = run_probe_plan(&p.config.probe, &embedder, &corpus)?;
    Ok(vec![(PROBE_REPORT.into(), json(&report)?)])
}

fn report(p: &Pipeline) -> Result<Artifacts> {
    let report: ProbeReport = serde_json::from_slice(&read_bytes(p, PROBE_REPORT)?)
        .map_err(|e| Error::format(PROBE_REPORT, e.to_string()))?;
    let mut metrics = Vec::new();
    report.write_cells(&mut metrics)?;
    let mut grid = Vec::new();
    report.write_grid(&mut grid)?;
    let mut scatter = Vec::new();
    report.write_scatter(&mut scatter)?;
    let mut out = vec![
        (METRICS.into(), metrics),
        (GRID.into(), grid),
        (SCATTER.into(), scatter),
    ];
    if let Some(h) = &report.heatmap {
        let mut buf = Vec::new();
        h.write(&mut buf)?;
        out.push((HEATMAP.into(), buf));
    }
    Ok(out)
}
