//! Command-line driver for the scene-parsing pipeline.
//!
//! Scenes are PLY files in `--scenes`; labels live in `--labels` as
//! `<scene>.csv` (sparse annotations) and `<scene>.gt.csv` (dense ground
//! truth). Subcommands share one output layout, so stage commands compose
//! by pointing `--out` at the same directory.

mod commands;
mod data;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use vibus_core::pipeline::{PipelineConfig, Strategy};

#[derive(Parser)]
#[command(
    name = "vibus",
    version,
    about = "Data-efficient 3D scene parsing: viewpoint-bottleneck pretraining and uncertainty-spectrum pseudo-label harvesting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file mirroring the pipeline config; unknown keys
    /// are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override for the whole run.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory of scene PLY files.
    #[arg(long)]
    scenes: PathBuf,
    /// Directory of label CSVs (sparse: <scene>.csv, dense: <scene>.gt.csv).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output directory (also the artifact input for composed stages).
    #[arg(long)]
    out: PathBuf,
    /// Modeling strategy override: uncertainty | spectrum | joint.
    #[arg(long)]
    strategy: Option<Strategy>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                PipelineConfig::from_json(&text)?
            }
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(strategy) = self.strategy {
            cfg.strategy = strategy;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Stage A: self-supervised pretraining on unlabeled scenes.
    Pretrain {
        #[command(flatten)]
        common: Common,
    },
    /// Stages B/D: fine-tune a checkpoint on sparse or pseudo labels and
    /// write training-set predictions.
    Finetune {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to start from (e.g. checkpoint_a.bin).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Train on harvested pseudo labels (<scene>/pseudo.csv or
        /// <scene>.pseudo.csv under --labels) instead of sparse CSVs.
        #[arg(long)]
        pseudo: bool,
    },
    /// MC-dropout uncertainty per training scene.
    Uncertainty {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Spectral analysis per training scene: combined distances, embedding,
    /// seeded k-means, per-vertex spectrum distances.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Fit per-category mixtures and harvest pseudo labels from previously
    /// written predictions/uncertainty/spectrum artifacts in --out.
    Harvest {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint against dense ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Full A-E run.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pretrain { common } => commands::pretrain(&common),
        Command::Finetune {
            common,
            checkpoint,
            pseudo,
        } => commands::finetune(&common, &checkpoint, pseudo),
        Command::Uncertainty { common, checkpoint } => {
            commands::uncertainty(&common, &checkpoint)
        }
        Command::Spectrum { common } => commands::spectrum(&common),
        Command::Harvest { common } => commands::harvest(&common),
        Command::Evaluate { common, checkpoint } => commands::evaluate(&common, &checkpoint),
        Command::Pipeline { common } => commands::pipeline(&common),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
