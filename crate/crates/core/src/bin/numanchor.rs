use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use numanchor::pipeline::{validate_config, write_atomic, Overrides, Pipeline, Stage, StageOutcome};
use numanchor::synth::{generate, SynthConfig};
use numanchor::Result;

#[derive(Parser)]
#[command(name = "numanchor", version, about = "Numeral anchors: induce, augment, train, probe")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Require an explicit seed and reproducible outputs.
    #[arg(long)]
    deterministic: bool,
    /// Output directory, overriding `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize the corpus and record numeral occurrences.
    Extract(Common),
    /// Fit the mixture model and write the anchor table.
    Anchors(Common),
    /// Insert priming groups into the corpus.
    Augment(Common),
    /// Train the encoder with masked-LM.
    Train(Common),
    /// Run the probing tasks on the trained encoder.
    Probe(Common),
    /// Emit metric grid, heatmap and scatter files.
    Report(Common),
    /// Run every stage in order.
    RunAll(Common),
    /// Validate the config and print its normalized form.
    Validate(Common),
    /// Write a synthetic corpus, one sentence per line.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20_000)]
        sentences: usize,
        #[arg(long, default_value_t = 2_000)]
        pool_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn pipeline(c: &Common) -> Result<Pipeline> {
    let overrides = Overrides {
        seed: c.seed,
        deterministic: c.deterministic,
        out_dir: c.out.clone(),
    };
    Ok(Pipeline::new(validate_config(&c.config, &overrides)?))
}

fn report(stage: Stage, outcome: StageOutcome) {
    match outcome {
        StageOutcome::Ran => println!("{stage}: done"),
        StageOutcome::Skipped => println!("{stage}: up to date"),
    }
}

fn run(cli: Cli) -> Result<()> {
    let stage = |c: &Common, s: Stage| -> Result<()> {
        report(s, pipeline(c)?.run_stage(s)?);
        Ok(())
    };
    match &cli.command {
        Command::Extract(c) => stage(c, Stage::Extract),
        Command::Anchors(c) => stage(c, Stage::Anchors),
        Command::Augment(c) => stage(c, Stage::Augment),
        Command::Train(c) => stage(c, Stage::Train),
        Command::Probe(c) => stage(c, Stage::Probe),
        Command::Report(c) => stage(c, Stage::Report),
        Command::RunAll(c) => {
            for (s, outcome) in pipeline(c)?.run_all()? {
                report(s, outcome);
            }
            Ok(())
        }
        Command::Validate(c) => {
            print!("{}", pipeline(c)?.config.to_toml()?);
            Ok(())
        }
        Command::Synth {
            out,
            sentences,
            pool_size,
            seed,
        } => {
            let corpus = generate(&SynthConfig {
                sentences: *sentences,
                pool_size: *pool_size,
                seed: *seed,
                ..SynthConfig::default()
            });
            let mut text = corpus.documents.join("\n");
            text.push('\n');
            write_atomic(out, text.as_bytes())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
