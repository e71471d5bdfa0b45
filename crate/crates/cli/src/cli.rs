use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::config::{parse_assignment, Resolved, Source};
use crate::error::CliError;
use crate::json;

#[derive(Debug, Parser)]
#[command(name = "mtmc", version, about = "Offline multi-camera trajectory association")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic scenario (trajectory JSONL).
    Synth(Common),
    /// Train a model and write a checkpoint plus a per-batch log.
    Train(Common),
    /// Cluster trajectories into global identities with a trained model.
    Infer(Common),
    /// Score predicted clusters against labeled trajectories.
    Eval(Common),
    /// Train and score once per value of one parameter.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: AblateParam,
        /// Comma-separated values. `batch_size`: integers;
        /// `temporal_threshold`: integers or `none`;
        /// `loss`: full, no-fpr, no-weighting, none.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum AblateParam {
    BatchSize,
    TemporalThreshold,
    Loss,
}

/// Flags shared by every subcommand. Each maps onto a config field; the
/// remaining fields are reachable through `--set`.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Trajectory JSONL (training data, inference input or ground truth).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON config, or any artifact that embeds one.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for both data generation and training.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Identities per training batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Base learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Drop edges between trajectories more than this many frames apart.
    #[arg(long)]
    pub temporal_threshold: Option<u64>,
    /// Disable class weighting in the cross-entropy term.
    #[arg(long)]
    pub no_weighting: bool,
    /// Disable the false-positive-rate term.
    #[arg(long)]
    pub no_fpr: bool,
    /// Descriptor dimension (model input and synthetic data).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Held-out trajectories for `ablate`.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    /// Predicted clusters for `eval`.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Training log path.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Override any config field, e.g. `--set synth.identities=32`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    pub set: Vec<(String, Value)>,
}

fn path_value(p: &std::path::Path) -> Value {
    Value::String(p.display().to_string())
}

impl Common {
    /// Defaults, then `--config`, then flags.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let mut cfg = Resolved::defaults();
        if let Some(path) = &self.config {
            cfg.apply_file(&json::read(path)?)?;
        }
        let mut flags: Vec<(&str, Value)> = Vec::new();
        let paths = [
            ("paths.data", &self.data),
            ("paths.model", &self.model),
            ("paths.out", &self.out),
            ("paths.eval_data", &self.eval_data),
            ("paths.pred", &self.pred),
            ("paths.log", &self.log),
        ];
        for (key, p) in paths {
            if let Some(p) = p {
                flags.push((key, path_value(p)));
            }
        }
        if let Some(seed) = self.seed {
            flags.push(("train.seed", json!(seed)));
            flags.push(("synth.seed", json!(seed)));
        }
        if let Some(dim) = self.dim {
            flags.push(("train.model.dim", json!(dim)));
            flags.push(("synth.dim", json!(dim)));
        }
        if let Some(bs) = self.batch_size {
            flags.push(("train.batch_size_ids", json!(bs)));
        }
        if let Some(e) = self.epochs {
            flags.push(("train.epochs", json!(e)));
        }
        if let Some(lr) = self.lr {
            flags.push(("train.base_lr", json!(lr)));
        }
        if let Some(t) = self.temporal_threshold {
            flags.push(("train.temporal_threshold", json!(t)));
        }
        if self.no_weighting {
            flags.push(("train.loss.weighting", json!(false)));
        }
        if self.no_fpr {
            flags.push(("train.loss.fpr", json!(false)));
        }
        for (key, value) in flags {
            cfg.set(key, value, Source::Flag)?;
        }
        for (key, value) in &self.set {
            cfg.set(key, value.clone(), Source::Flag)?;
        }
        Ok(cfg)
    }
}
