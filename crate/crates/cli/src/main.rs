//! `ternary-onn` experiment runner.
//!
//! Exit status: 0 on success, 2 on configuration errors, 3 on data errors,
//! 1 on anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ternary_onn::harness::{execute, output, Experiment, ExperimentConfig, TaskConfig};
use ternary_onn::Error;

#[derive(Parser)]
#[command(
    name = "ternary-onn",
    version,
    about = "In-situ readout training on a simulated VCSEL reservoir"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Boolean, ternary (laser off), ternary and ridge readouts on MNIST one-vs-all.
    Compare(Common),
    /// Learning curves for several alpha values.
    AlphaScan(Common),
    /// Header recognition; reports symbol error rate.
    Header(Common),
    /// Frozen-mask output consistency under gain drift.
    Stability(Common),
    /// A single training run.
    Train(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; missing fields take the subcommand defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed for substrate and training.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    mnist_images: Option<PathBuf>,
    #[arg(long)]
    mnist_labels: Option<PathBuf>,
    #[arg(long)]
    repeats: Option<usize>,
}

fn resolve(experiment: Experiment, args: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            let mut base =
                serde_json::to_value(ExperimentConfig::preset(experiment, &mnist_dir()))?;
            let user: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
            merge(&mut base, user);
            serde_json::from_value(base)
                .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?
        }
        None => ExperimentConfig::preset(experiment, &mnist_dir()),
    };
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
        cfg.substrate.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(r) = args.repeats {
        cfg.repeats = r;
    }
    if args.mnist_images.is_some() || args.mnist_labels.is_some() {
        let TaskConfig::Mnist { images, labels, .. } = &mut cfg.task else {
            return Err(Error::Config(
                "--mnist-images/--mnist-labels need an MNIST task".into(),
            ));
        };
        if let Some(p) = &args.mnist_images {
            *images = p.clone();
        }
        if let Some(p) = &args.mnist_labels {
            *labels = p.clone();
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Recursive object merge; `patch` wins. The tagged task is replaced whole
/// when its kind changes.
fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    use serde_json::Value;
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            let kind_changes =
                matches!((b.get("kind"), p.get("kind")), (Some(x), Some(y)) if x != y);
            if kind_changes {
                *b = p;
                return;
            }
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR").map_or_else(|| PathBuf::from("data/mnist"), PathBuf::from)
}

fn run(experiment: Experiment, args: &Common) -> Result<(), Error> {
    let cfg = resolve(experiment, args)?;
    let outcome = execute(experiment, &cfg)?;
    for line in output::summary_lines(&outcome) {
        println!("{line}");
    }
    let written = output::write_outcome(&cfg.output_dir, &cfg, experiment, &outcome)?;
    println!(
        "wrote {} files to {}",
        written.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match &cli.command {
        Command::Compare(a) => (Experiment::Compare, a),
        Command::AlphaScan(a) => (Experiment::AlphaScan, a),
        Command::Header(a) => (Experiment::Header, a),
        Command::Stability(a) => (Experiment::Stability, a),
        Command::Train(a) => (Experiment::Train, a),
    };
    match run(experiment, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() {
                2
            } else if e.is_data_error() {
                3
            } else {
                1
            })
        }
    }
}
