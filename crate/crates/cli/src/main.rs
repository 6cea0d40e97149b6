use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use hfr_cli::commands;
use hfr_cli::config::{parse_config, Overrides, RunConfig};
use hfr_cli::{exit_code, user, EXIT_INTERNAL, EXIT_USER};

/// Hybrid additive-subtractive machining feature recognition.
///
/// Every flag may also be set through an `HFR_<FLAG>` environment variable
/// (for example `HFR_SEED=7`) or a `key = value` line in the file given by
/// `--config`. Flags win over the environment, which wins over the file.
#[derive(Parser)]
#[command(name = "hfr", version)]
struct Cli {
    /// Line-oriented `key = value` settings file.
    #[arg(long, global = true, env = "HFR_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset (STEP + labels + ground truth + manifest).
    Generate(GenerateArgs),
    /// Build hierarchical graph batches for every split of a dataset.
    Graph(GraphArgs),
    /// Train the network on graph batches and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on one split.
    Eval(EvalArgs),
    /// Recognize features in a STEP file and report their dimensions.
    Infer(InferArgs),
    /// Report dimensions from a STEP file with known face labels.
    Extract(ExtractArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, env = "HFR_N")]
    n: Option<usize>,
    #[arg(long, env = "HFR_SEED")]
    seed: Option<u64>,
    /// Dataset directory [default: data]
    #[arg(long, env = "HFR_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "HFR_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args)]
struct GraphArgs {
    /// Dataset directory [default: data]
    #[arg(long, env = "HFR_DATA")]
    data: Option<PathBuf>,
    /// Output directory [default: <data>/graphs]
    #[arg(long, env = "HFR_OUT")]
    out: Option<PathBuf>,
    /// Batch shuffle seed.
    #[arg(long, env = "HFR_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "HFR_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Graph directory [default: data/graphs]
    #[arg(long, env = "HFR_DATA")]
    data: Option<PathBuf>,
    /// Checkpoint path [default: <data>/model.hgck]
    #[arg(long, env = "HFR_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "HFR_WIDTH")]
    width: Option<usize>,
    #[arg(long, env = "HFR_LAYERS")]
    layers: Option<usize>,
    #[arg(long, env = "HFR_EPOCHS")]
    epochs: Option<usize>,
    #[arg(long, env = "HFR_LR")]
    lr: Option<f64>,
    #[arg(long, env = "HFR_DECAY")]
    decay: Option<f64>,
    #[arg(long, env = "HFR_DROPOUT")]
    dropout: Option<f64>,
    #[arg(long, env = "HFR_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "HFR_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Graph directory [default: data/graphs]
    #[arg(long, env = "HFR_DATA")]
    data: Option<PathBuf>,
    /// Checkpoint [default: <data>/model.hgck]
    #[arg(long, env = "HFR_CHECKPOINT")]
    checkpoint: Option<PathBuf>,
    /// train, val or test [default: test]
    #[arg(long, env = "HFR_SPLIT")]
    split: Option<String>,
    /// Directory for report.txt, scores.json and confusion.json.
    #[arg(long, env = "HFR_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "HFR_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args)]
struct InferArgs {
    input: PathBuf,
    #[arg(long, env = "HFR_CHECKPOINT")]
    checkpoint: Option<PathBuf>,
    /// Label sidecar; bypasses the network.
    #[arg(long, env = "HFR_LABELS")]
    labels: Option<PathBuf>,
    /// Directory for the report, per-face classes and OBJ/MTL mesh.
    #[arg(long, env = "HFR_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "HFR_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args)]
struct ExtractArgs {
    input: PathBuf,
    #[arg(long, env = "HFR_LABELS")]
    labels: Option<PathBuf>,
    #[arg(long, env = "HFR_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "HFR_WORKERS")]
    workers: Option<usize>,
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| user(format!("cannot read {}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| user(format!("{}: {e}", p.display())))?
        }
        None => Default::default(),
    };
    let (name, o) = match cli.command {
        Command::Generate(a) => {
            ("generate", Overrides { n: a.n, seed: a.seed, out: a.out, workers: a.workers, ..Default::default() })
        }
        Command::Graph(a) => {
            ("graph", Overrides { data: a.data, out: a.out, seed: a.seed, workers: a.workers, ..Default::default() })
        }
        Command::Train(a) => (
            "train",
            Overrides {
                data: a.data,
                out: a.out,
                width: a.width,
                layers: a.layers,
                epochs: a.epochs,
                lr: a.lr,
                decay: a.decay,
                dropout: a.dropout,
                seed: a.seed,
                workers: a.workers,
                ..Default::default()
            },
        ),
        Command::Eval(a) => (
            "eval",
            Overrides {
                data: a.data,
                checkpoint: a.checkpoint,
                split: a.split,
                out: a.out,
                workers: a.workers,
                ..Default::default()
            },
        ),
        Command::Infer(a) => (
            "infer",
            Overrides {
                input: Some(a.input),
                checkpoint: a.checkpoint,
                labels: a.labels,
                out: a.out,
                workers: a.workers,
                ..Default::default()
            },
        ),
        Command::Extract(a) => {
            ("extract", Overrides { input: Some(a.input), labels: a.labels, out: a.out, workers: a.workers, ..Default::default() })
        }
    };
    let rc = RunConfig::resolve(name, o, &file)?;
    match name {
        "generate" => commands::generate(&rc),
        "graph" => commands::graph(&rc),
        "train" => commands::train_cmd(&rc),
        "eval" => commands::eval(&rc),
        "infer" => commands::infer(&rc),
        _ => commands::extract(&rc),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USER } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL as u8),
    }
}
