mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use error::EXIT_USAGE;

#[derive(Parser, Debug)]
#[command(name = "sidkit", version, about = "Synthetic-image detection on frozen embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file and generic `key=value` overrides shared by the configurable commands.
#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// TOML run configuration with [train], [projection] and [eval] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config value by dotted key, e.g. `--set train.epochs=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a bank of Gaussian clusters from a JSON or TOML spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a linear probe on a bank.
    Train {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        weight_decay: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// L2-normalize vectors before the affine map.
        #[arg(long)]
        l2_normalize: bool,
    },
    /// Evaluate a probe per generator and write a report.
    Eval {
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Report format; inferred from the report extension when omitted.
        #[arg(long)]
        format: Option<sidkit::ReportFormat>,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Concatenate banks over the same ids into one fused bank.
    Fuse {
        #[arg(long, num_args = 2.., required = true)]
        banks: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        allow_duplicate_backbones: bool,
        #[arg(long)]
        l2_per_bank: bool,
    },
    /// Project a bank to 2-D and write the coordinates as CSV.
    Project {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Stratified subsample of this many records before projecting.
        #[arg(long)]
        sample: Option<usize>,
        /// Seed for subsampling and the projection.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        n_neighbors: Option<usize>,
        #[arg(long)]
        min_dist: Option<f64>,
        #[arg(long)]
        n_epochs: Option<usize>,
        #[arg(long)]
        metric: Option<sidkit::Metric>,
    },
}

/// Turns a typed flag into a dotted-key override.
fn flag<T: ToString>(key: &str, value: Option<T>) -> Option<String> {
    value.map(|v| format!("{key}={}", toml_literal(&v.to_string())))
}

fn toml_literal(s: &str) -> String {
    if s.parse::<f64>().is_ok() || s == "true" || s == "false" {
        s.to_string()
    } else {
        format!("\"{s}\"")
    }
}

fn with_flags(mut cfg: ConfigArgs, flags: impl IntoIterator<Item = Option<String>>) -> ConfigArgs {
    cfg.set.extend(flags.into_iter().flatten());
    cfg
}

fn run(cli: Cli) -> Result<(), error::CliError> {
    match cli.command {
        Command::Synth { spec, out } => commands::synth(&spec, &out),
        Command::Train {
            bank,
            val,
            out,
            config,
            epochs,
            lr,
            batch_size,
            weight_decay,
            seed,
            l2_normalize,
        } => {
            let config = with_flags(
                config,
                [
                    flag("train.epochs", epochs),
                    flag("train.learning_rate", lr),
                    flag("train.batch_size", batch_size),
                    flag("train.weight_decay", weight_decay),
                    flag("train.seed", seed),
                    flag("train.l2_normalize", l2_normalize.then_some(true)),
                ],
            );
            commands::train(&bank, val.as_deref(), &out, &config)
        }
        Command::Eval {
            probe,
            bank,
            report,
            format,
            threshold,
            config,
        } => {
            let config = with_flags(config, [flag("eval.threshold", threshold)]);
            commands::eval(&probe, &bank, &report, format, &config)
        }
        Command::Fuse {
            banks,
            out,
            allow_duplicate_backbones,
            l2_per_bank,
        } => commands::fuse(&banks, &out, allow_duplicate_backbones, l2_per_bank),
        Command::Project {
            bank,
            out,
            sample,
            seed,
            config,
            n_neighbors,
            min_dist,
            n_epochs,
            metric,
        } => {
            let config = with_flags(
                config,
                [
                    flag("projection.seed", seed),
                    flag("projection.n_neighbors", n_neighbors),
                    flag("projection.min_dist", min_dist),
                    flag("projection.n_epochs", n_epochs),
                    flag("projection.metric", metric),
                ],
            );
            commands::project(&bank, &out, sample, &config)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
