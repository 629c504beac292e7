mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmfuse::synth::Signal;
use mmfuse::{Error, Result};

use crate::commands::EvalOptions;
use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "mmfuse", version, about = "Multimodal misogyny detection and rationale pipelines")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    omega: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    shots: Option<usize>,
    #[arg(long, global = true, value_parser = ["stub", "http"])]
    backend: Option<String>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    report_dir: Option<PathBuf>,
    /// Fail on the first per-item backend error instead of recording it.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print the resolved configuration in file format.
    Config,
    /// Per-category dataset statistics.
    Stats,
    /// Annotator score summary and Fleiss' kappa.
    Agreement {
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        ratings: Option<PathBuf>,
    },
    /// Write synthetic corpora.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
    /// Train a model and save a checkpoint.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Drop the image branch.
        #[arg(long)]
        text_only: bool,
    },
    /// Classify every meme in the manifest.
    Predict {
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate rationales for predictions.
    Explain {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render detection prompts.
    Prompts {
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions and rationales.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        rationales: PathBuf,
        /// JSONL of `{id, reference}` gold rationales.
        #[arg(long)]
        references: Option<PathBuf>,
        #[arg(long, default_value = "fine-tuned")]
        setup: String,
        #[arg(long, default_value = "mmfuse")]
        model_name: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SignalArg {
    Both,
    ImageOnly,
}

#[derive(Subcommand)]
enum SynthKind {
    /// The 2130-record WBMS category and text-kind mirror.
    Wbms {
        #[arg(long)]
        out: PathBuf,
    },
    /// Small corpus with a planted, learnable signal.
    Planted {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        signal: SignalArg,
        #[arg(long, default_value_t = 64)]
        memes: usize,
        #[arg(long, default_value_t = 0.5)]
        train_fraction: f64,
    },
}

fn overrides(g: &Global, extra: &[(&'static str, String)]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for kv in &g.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Argument(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let flags = [
        ("manifest", path(&g.manifest)),
        ("checkpoint", path(&g.checkpoint)),
        ("report_dir", path(&g.report_dir)),
        ("seed", g.seed.map(|v| v.to_string())),
        ("omega", g.omega.map(|v| v.to_string())),
        ("alpha", g.alpha.map(|v| v.to_string())),
        ("shots", g.shots.map(|v| v.to_string())),
        ("backend", g.backend.clone()),
        ("workers", g.workers.map(|v| v.to_string())),
    ];
    out.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
    out.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    Ok(out)
}

fn run(cli: Cli) -> Result<String> {
    let mut extra = Vec::new();
    if let Command::Train { epochs, lr, text_only } = &cli.command {
        extra.extend(epochs.map(|e| ("epochs", e.to_string())));
        extra.extend(lr.map(|l| ("lr", l.to_string())));
        if *text_only {
            extra.push(("modality", "text_only".to_string()));
        }
    }
    let pairs = overrides(&cli.global, &extra)?;
    let borrowed: Vec<(&str, String)> = pairs.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    let cfg = RunConfig::load(cli.global.config.as_deref(), &borrowed)?;

    match cli.command {
        Command::Config => Ok(cfg.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()),
        Command::Stats => commands::stats(&cfg),
        Command::Agreement { scores, ratings } => commands::agreement(scores.as_deref(), ratings.as_deref()),
        Command::Synth { kind: SynthKind::Wbms { out } } => commands::synth_wbms(&out),
        Command::Synth { kind: SynthKind::Planted { out_dir, signal, memes, train_fraction } } => {
            let signal = match signal {
                SignalArg::Both => Signal::Both,
                SignalArg::ImageOnly => Signal::ImageOnly,
            };
            commands::synth_planted(&cfg, &out_dir, signal, memes, train_fraction)
        }
        Command::Train { .. } => commands::train(&cfg),
        Command::Predict { out } => commands::predict(&cfg, &out),
        Command::Explain { predictions, out } => commands::explain(&cfg, &predictions, &out, cli.global.strict),
        Command::Prompts { out } => commands::prompts(&cfg, &out),
        Command::Evaluate { predictions, rationales, references, setup, model_name } => commands::evaluate(
            &cfg,
            &EvalOptions {
                predictions: &predictions,
                rationales: &rationales,
                references: references.as_deref(),
                setup: &setup,
                model_name: &model_name,
            },
        ),
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else if e.is_io() || matches!(e, Error::Backend(_)) {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
