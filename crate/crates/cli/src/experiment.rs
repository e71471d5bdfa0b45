//! Train-then-evaluate runs and the synthetic benchmark used by the
//! acceptance suite.

use mtmc_core::cluster::{infer_detailed, Inference};
use mtmc_core::gcn::ModelConfig;
use mtmc_core::{generate_scenario, id_metrics, train, MetricsReport, SynthConfig, TrainConfig, TrainOutcome, TrajectorySet};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub struct RunSummary {
    pub outcome: TrainOutcome,
    pub inference: Inference,
    pub metrics: MetricsReport,
}

impl RunSummary {
    pub fn final_epoch_mean(&self, f: impl Fn(&mtmc_core::BatchLog) -> f64) -> f64 {
        let last = self.outcome.log.last().map_or(0, |b| b.epoch);
        self.outcome.epoch_mean(last, f).unwrap_or(0.0)
    }
}

/// Trains on `train_set`, infers on `eval_set` with the same temporal
/// threshold, and scores the result.
pub fn run_experiment(train_set: &TrajectorySet, eval_set: &TrajectorySet, config: &TrainConfig) -> Result<RunSummary, CliError> {
    let outcome = train(train_set, config)?;
    let inference = infer_detailed(&outcome.params, eval_set, config.temporal_threshold)?;
    let metrics = id_metrics(&inference.output, eval_set)?;
    Ok(RunSummary {
        outcome,
        inference,
        metrics,
    })
}

/// Desk-scale benchmark: 4 cameras, 128 training and 32 held-out identities,
/// D = 64, separation 0.8 against noise 0.4, BS = 64, 100 epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub train_data: SynthConfig,
    pub eval_data: SynthConfig,
    pub train: TrainConfig,
}

pub const BENCHMARK_EVAL_SEED_OFFSET: u64 = 1000;

impl Benchmark {
    pub fn new(seed: u64) -> Self {
        let train_data = SynthConfig {
            identities: 128,
            cameras: 4,
            dim: 64,
            presence_prob: 0.8,
            intra_noise_sigma: 0.4,
            inter_class_min_sep: 0.8,
            frames_per_camera: 2110,
            unsync_max_offset: 0,
            seed,
        };
        let eval_data = SynthConfig {
            identities: 32,
            seed: seed + BENCHMARK_EVAL_SEED_OFFSET,
            ..train_data.clone()
        };
        let train = TrainConfig {
            batch_size_ids: 64,
            epochs: 100,
            base_lr: 0.1,
            seed,
            model: ModelConfig::with_dim(64),
            descriptor_noise_sigma: 0.3,
            ..TrainConfig::default()
        };
        Self {
            train_data,
            eval_data,
            train,
        }
    }

    pub fn datasets(&self) -> Result<(TrajectorySet, TrajectorySet), CliError> {
        Ok((generate_scenario(&self.train_data)?, generate_scenario(&self.eval_data)?))
    }

    pub fn run(&self) -> Result<RunSummary, CliError> {
        let (train_set, eval_set) = self.datasets()?;
        run_experiment(&train_set, &eval_set, &self.train)
    }
}
