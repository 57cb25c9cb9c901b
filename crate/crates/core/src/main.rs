use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use synthex_forge::augment::Level;
use synthex_forge::commands;
use synthex_forge::dataset::FoldMode;

#[derive(Parser)]
#[command(name = "synthex-forge", version, about = "Synthetic X-ray dataset generation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Regular,
    Strong,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitMode {
    Loso,
    Kfold,
}

#[derive(Subcommand)]
enum Command {
    /// Render a dataset from a generation config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write augmented copies of a dataset plus the plans used.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "strong")]
        level: LevelArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print cross-validation folds as JSON.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "loso")]
        mode: SplitMode,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against a dataset.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a manifest and its files.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn run(cli: Cli) -> synthex_forge::Result<ExitCode> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let m = commands::generate(&config, &out, seed)?;
            println!("wrote {} samples to {}", m.samples.len(), out.display());
        }
        Command::Augment { manifest, level, out, seed } => {
            let level = match level {
                LevelArg::Regular => Level::Regular,
                LevelArg::Strong => Level::Strong,
            };
            let m = commands::augment(&manifest, level, &out, seed)?;
            println!("augmented {} samples into {}", m.samples.len(), out.display());
        }
        Command::Split { manifest, mode, k, out } => {
            let mode = match mode {
                SplitMode::Loso => FoldMode::LeaveOneSubjectOut,
                SplitMode::Kfold => FoldMode::KFold { k },
            };
            let spec = commands::split(&manifest, mode)?;
            let text = serde_json::to_string_pretty(&spec).expect("folds serialize");
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| synthex_forge::Error::Io { path: p, source: e })?,
                None => println!("{text}"),
            }
        }
        Command::Evaluate { pred, gt, out } => {
            let r = commands::evaluate(&pred, &gt, &out)?;
            println!("evaluated {} samples ({} without predictions)", r.samples, r.missing_predictions.len());
        }
        Command::Validate { manifest } => {
            let r = commands::validate(&manifest)?;
            for v in &r.violations {
                println!("{:?} {}: {}", v.kind, v.sample_id.as_deref().unwrap_or("-"), v.message);
            }
            println!("{} samples, {} violations", r.samples, r.violations.len());
            if !r.is_ok() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli).context("synthex-forge failed") {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<synthex_forge::Error>()
                .map(commands::exit_code)
                .unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}
