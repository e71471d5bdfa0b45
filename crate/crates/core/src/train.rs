//! ID-level batch sampling, warmup + step-decay learning rate, plain SGD,
//! and the training loop.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{self, Gradients, ModelConfig, ModelParameters};
use crate::graph::{build_graph, AssociationGraph};
use crate::loss::{total_loss_from_logits, LossOptions};
use crate::math;
use crate::trajectory::TrajectorySet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Identities per batch.
    pub batch_size_ids: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub decay_epoch: usize,
    pub decay_factor: f64,
    pub seed: u64,
    pub temporal_threshold: Option<u64>,
    pub model: ModelConfig,
    pub loss: LossOptions,
    /// Std of Gaussian noise added to batch descriptors (norm scale, as in
    /// the synthetic generator). 0 disables the augmentation.
    pub descriptor_noise_sigma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size_ids: 100,
            epochs: 100,
            base_lr: 0.01,
            warmup_epochs: 5,
            decay_epoch: 50,
            decay_factor: 0.1,
            seed: 0,
            temporal_threshold: None,
            model: ModelConfig::default(),
            loss: LossOptions::default(),
            descriptor_noise_sigma: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.warmup_epochs < self.decay_epoch && self.decay_epoch <= self.epochs) {
            return bad("require warmup_epochs < decay_epoch <= epochs");
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return bad("base_lr must be positive");
        }
        if self.batch_size_ids < 2 {
            return bad("batch_size_ids must be at least 2");
        }
        if !(self.decay_factor.is_finite() && self.decay_factor > 0.0) {
            return bad("decay_factor must be positive");
        }
        if !(self.descriptor_noise_sigma.is_finite() && self.descriptor_noise_sigma >= 0.0) {
            return bad("descriptor_noise_sigma must be >= 0");
        }
        self.model.validate()
    }

    /// Learning rate after `progress` epochs: a linear ramp from 0 over the
    /// warmup, then `base_lr`, then `base_lr * decay_factor` from
    /// `decay_epoch` on.
    pub fn lr_at(&self, progress: f64) -> f64 {
        let warmup = self.warmup_epochs as f64;
        if progress < warmup {
            self.base_lr * progress / warmup
        } else if progress < self.decay_epoch as f64 {
            self.base_lr
        } else {
            self.base_lr * self.decay_factor
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    /// 1-based.
    pub epoch: usize,
    /// 0-based within the epoch.
    pub batch: usize,
    pub loss_total: f64,
    pub loss_wce: f64,
    pub fpr_soft: f64,
    pub fpr_hard: f64,
    pub n0: usize,
    pub n1: usize,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParameters,
    pub log: Vec<BatchLog>,
}

impl TrainOutcome {
    /// Edge-weighted mean of a logged quantity over one epoch.
    pub fn epoch_mean(&self, epoch: usize, f: impl Fn(&BatchLog) -> f64) -> Option<f64> {
        let rows: Vec<&BatchLog> = self.log.iter().filter(|b| b.epoch == epoch).collect();
        let weight: f64 = rows.iter().map(|b| (b.n0 + b.n1) as f64).sum();
        if rows.is_empty() || weight == 0.0 {
            return None;
        }
        Some(rows.iter().map(|b| f(b) * (b.n0 + b.n1) as f64).sum::<f64>() / weight)
    }
}

/// Shuffles the identities and cuts them into batches of `batch_size_ids`;
/// the last batch may be short.
pub fn epoch_batches<'a, R: Rng + ?Sized>(
    identities: &[&'a str],
    batch_size_ids: usize,
    rng: &mut R,
) -> Vec<Vec<&'a str>> {
    let mut order = identities.to_vec();
    order.shuffle(rng);
    order
        .chunks(batch_size_ids.max(1))
        .map(<[&str]>::to_vec)
        .collect()
}

/// Graph over every trajectory of the given identities.
pub fn sample_batch(
    dataset: &TrajectorySet,
    identities: &[&str],
    temporal_threshold: Option<u64>,
) -> Result<AssociationGraph> {
    let chosen: BTreeSet<&str> = identities.iter().copied().collect();
    build_graph(&dataset.restrict_to_identities(&chosen), temporal_threshold)
}

/// `p <- p - lr * g` for every parameter.
pub fn sgd_step(params: &mut ModelParameters, grads: &Gradients, lr: f64) -> Result<()> {
    if !params.same_shape(grads) {
        return Err(Error::InvalidConfig("gradient shape does not match parameters".into()));
    }
    for (p, g) in params.params_mut().zip(grads.params()) {
        *p -= lr * g;
    }
    Ok(())
}

fn augment(graph: &AssociationGraph, sigma: f64, rng: &mut ChaCha8Rng) -> Result<AssociationGraph> {
    let scale = sigma / math::sqrt(graph.dim().max(1) as f64);
    let features = graph
        .nodes()
        .iter()
        .map(|n| {
            n.feature
                .iter()
                .map(|&x| {
                    let z: f64 = rng.sample(StandardNormal);
                    x + scale * z
                })
                .collect()
        })
        .collect();
    graph.with_features(features)
}

pub fn train(dataset: &TrajectorySet, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(dataset, config, |_, _| {})
}

/// As [`train`], calling `on_epoch(epoch, params)` after every epoch.
pub fn train_with<F>(dataset: &TrajectorySet, config: &TrainConfig, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, &ModelParameters),
{
    config.validate()?;
    dataset.require_labels()?;
    if dataset.dim() != config.model.dim {
        return Err(Error::DimensionMismatch {
            context: "dataset descriptors vs model input",
            expected: config.model.dim,
            found: dataset.dim(),
        });
    }
    let mut params = ModelParameters::init(&config.model, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let identities: Vec<String> = dataset.identities().into_iter().map(String::from).collect();
    let identities: Vec<&str> = identities.iter().map(String::as_str).collect();

    let mut log = Vec::new();
    for epoch in 1..=config.epochs {
        let batches = epoch_batches(&identities, config.batch_size_ids, &mut rng);
        let per_epoch = batches.len() as f64;
        for (b, ids) in batches.iter().enumerate() {
            let progress = (epoch - 1) as f64 + (b + 1) as f64 / per_epoch;
            let lr = config.lr_at(progress);
            let mut graph = sample_batch(dataset, ids, config.temporal_threshold)?;
            if config.descriptor_noise_sigma > 0.0 {
                graph = augment(&graph, config.descriptor_noise_sigma, &mut rng)?;
            }
            let labels = graph.labels().unwrap_or(&[]);
            if labels.is_empty() {
                log.push(BatchLog {
                    epoch,
                    batch: b,
                    loss_total: 0.0,
                    loss_wce: 0.0,
                    fpr_soft: 0.0,
                    fpr_hard: 0.0,
                    n0: 0,
                    n1: 0,
                    lr,
                });
                continue;
            }
            let trace = gcn::forward(&graph, &params)?;
            let loss = total_loss_from_logits(trace.logits(), labels, config.loss)?;
            let summary = loss.breakdown;
            if !summary.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            let grads = gcn::backward_from_logits(&graph, &params, &trace, &loss.grad, None)?;
            sgd_step(&mut params, &grads, lr)?;
            log.push(BatchLog {
                epoch,
                batch: b,
                loss_total: summary.total,
                loss_wce: summary.weighted_ce,
                fpr_soft: summary.fpr,
                fpr_hard: summary.fpr_hard,
                n0: summary.counts.0,
                n1: summary.counts.1,
                lr,
            });
        }
        on_epoch(epoch, &params);
    }
    Ok(TrainOutcome { params, log })
}
