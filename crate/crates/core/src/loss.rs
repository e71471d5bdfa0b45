//! Batch-weighted cross-entropy plus a false-positive-rate penalty.
//!
//! Class weights are recomputed for every batch as the inverse class
//! frequency `(n0 + n1) / n_c`, and the weighted CE is normalized by the sum
//! of the weights. The FPR term is relaxed to soft counts (probability mass
//! over negative edges) so it has a gradient; it equals the hard FPR when
//! every prediction is exactly 0 or 1.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::CLASSES;
use crate::math;
use crate::mlp::softmax_vjp;

/// Probabilities are clamped to this before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Loss-term toggles, for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossOptions {
    /// Inverse-frequency class weights; `false` gives plain mean CE.
    pub weighting: bool,
    /// Adds the soft FPR to the total.
    pub fpr: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            weighting: true,
            fpr: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub weighted_ce: f64,
    /// Soft FPR; the value that enters `total`.
    pub fpr: f64,
    /// FPR with argmax predictions (ties predict class 0).
    pub fpr_hard: f64,
    pub total: f64,
    pub class_weights: (f64, f64),
    pub counts: (usize, usize),
}

/// Loss summary with its gradient. `grad` is per edge and is taken w.r.t.
/// probabilities or logits depending on the entry point.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWithGrad {
    pub breakdown: LossBreakdown,
    pub grad: Vec<f64>,
}

pub fn label_counts(labels: &[u8]) -> (usize, usize) {
    let n1 = labels.iter().filter(|&&l| l == 1).count();
    (labels.len() - n1, n1)
}

/// Inverse class frequencies `(w0, w1)`. The weight of a class absent from
/// the batch is never used and is reported as 0.
pub fn class_weights(labels: &[u8]) -> Result<(f64, f64)> {
    if labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (n0, n1) = label_counts(labels);
    let total = (n0 + n1) as f64;
    let weight = |n: usize| if n == 0 { 0.0 } else { total / n as f64 };
    Ok((weight(n0), weight(n1)))
}

fn check_lengths(predictions: usize, labels: usize) -> Result<()> {
    if predictions != labels {
        return Err(Error::LengthMismatch {
            context: "predictions vs labels",
            left: predictions,
            right: labels,
        });
    }
    if labels == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(())
}

fn weight_of(weights: (f64, f64), label: u8) -> f64 {
    if label == 1 {
        weights.1
    } else {
        weights.0
    }
}

/// `sum w_y * CE(y_hat, y) / sum w_y` with `CE = -ln y_hat[y]`.
pub fn weighted_ce(predictions: &[[f64; CLASSES]], labels: &[u8], weights: (f64, f64)) -> Result<f64> {
    check_lengths(predictions.len(), labels.len())?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, &y) in predictions.iter().zip(labels) {
        let w = weight_of(weights, y);
        num += w * -math::log(p[y as usize].max(PROB_FLOOR));
        den += w;
    }
    Ok(num / den)
}

fn soft_counts(predictions: &[[f64; CLASSES]], labels: &[u8]) -> (f64, f64) {
    let mut fp = 0.0;
    let mut tn = 0.0;
    for (p, &y) in predictions.iter().zip(labels) {
        if y == 0 {
            fp += p[1];
            tn += p[0];
        }
    }
    (fp, tn)
}

/// `FP / (FP + TN)` with soft counts over negative edges; 0 with no negatives.
pub fn soft_fpr(predictions: &[[f64; CLASSES]], labels: &[u8]) -> f64 {
    let (fp, tn) = soft_counts(predictions, labels);
    if fp + tn > 0.0 {
        fp / (fp + tn)
    } else {
        0.0
    }
}

/// FPR of argmax decisions, an edge counting as positive only when
/// `y_hat[1] > y_hat[0]`.
pub fn hard_fpr(predictions: &[[f64; CLASSES]], labels: &[u8]) -> f64 {
    let mut fp = 0usize;
    let mut negatives = 0usize;
    for (p, &y) in predictions.iter().zip(labels) {
        if y == 0 {
            negatives += 1;
            if p[1] > p[0] {
                fp += 1;
            }
        }
    }
    if negatives == 0 {
        0.0
    } else {
        fp as f64 / negatives as f64
    }
}

fn effective_weights(labels: &[u8], options: LossOptions) -> Result<(f64, f64)> {
    if options.weighting {
        class_weights(labels)
    } else {
        Ok((1.0, 1.0))
    }
}

/// `dFPR/dy_hat` for every edge.
fn soft_fpr_grad(predictions: &[[f64; CLASSES]], labels: &[u8]) -> Vec<[f64; CLASSES]> {
    let (fp, tn) = soft_counts(predictions, labels);
    let total = fp + tn;
    let mut grad = vec![[0.0; CLASSES]; labels.len()];
    if total > 0.0 {
        let sq = total * total;
        for (g, &y) in grad.iter_mut().zip(labels) {
            if y == 0 {
                *g = [-fp / sq, tn / sq];
            }
        }
    }
    grad
}

/// Total loss from probabilities, with its gradient w.r.t. the probabilities.
pub fn total_loss(
    predictions: &[[f64; CLASSES]],
    labels: &[u8],
    options: LossOptions,
) -> Result<LossWithGrad> {
    check_lengths(predictions.len(), labels.len())?;
    let weights = effective_weights(labels, options)?;
    let wce = weighted_ce(predictions, labels, weights)?;
    let fpr = soft_fpr(predictions, labels);
    let weight_sum: f64 = labels.iter().map(|&y| weight_of(weights, y)).sum();

    let mut grad = vec![0.0; labels.len() * CLASSES];
    for (k, (p, &y)) in predictions.iter().zip(labels).enumerate() {
        let py = p[y as usize];
        if py > PROB_FLOOR {
            grad[k * CLASSES + y as usize] = -weight_of(weights, y) / (weight_sum * py);
        }
    }
    if options.fpr {
        for (k, g) in soft_fpr_grad(predictions, labels).iter().enumerate() {
            grad[k * CLASSES] += g[0];
            grad[k * CLASSES + 1] += g[1];
        }
    }
    Ok(LossWithGrad {
        breakdown: breakdown(wce, fpr, predictions, labels, weights, options),
        grad,
    })
}

/// Total loss from classifier logits (`edges x 2`, row-major), with the
/// gradient w.r.t. the logits. The cross-entropy is computed as
/// `logsumexp(z) - z_y`, so it stays finite for saturated predictions.
pub fn total_loss_from_logits(logits: &[f64], labels: &[u8], options: LossOptions) -> Result<LossWithGrad> {
    if logits.len() != labels.len() * CLASSES {
        return Err(Error::LengthMismatch {
            context: "logits vs labels",
            left: logits.len() / CLASSES,
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let weights = effective_weights(labels, options)?;
    let weight_sum: f64 = labels.iter().map(|&y| weight_of(weights, y)).sum();

    let mut predictions = Vec::with_capacity(labels.len());
    let mut num = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (k, (z, &y)) in logits.chunks_exact(CLASSES).zip(labels).enumerate() {
        let mut p = [0.0; CLASSES];
        math::softmax_into(z, &mut p);
        let w = weight_of(weights, y);
        num += w * (math::log_sum_exp(z) - z[y as usize]);
        let scale = w / weight_sum;
        for c in 0..CLASSES {
            let target = if c == y as usize { 1.0 } else { 0.0 };
            grad[k * CLASSES + c] = scale * (p[c] - target);
        }
        predictions.push(p);
    }
    let wce = num / weight_sum;
    let fpr = soft_fpr(&predictions, labels);
    if options.fpr {
        for (k, (g, p)) in soft_fpr_grad(&predictions, labels)
            .iter()
            .zip(&predictions)
            .enumerate()
        {
            let dz = softmax_vjp(p, g);
            grad[k * CLASSES] += dz[0];
            grad[k * CLASSES + 1] += dz[1];
        }
    }
    Ok(LossWithGrad {
        breakdown: breakdown(wce, fpr, &predictions, labels, weights, options),
        grad,
    })
}

fn breakdown(
    wce: f64,
    fpr: f64,
    predictions: &[[f64; CLASSES]],
    labels: &[u8],
    weights: (f64, f64),
    options: LossOptions,
) -> LossBreakdown {
    LossBreakdown {
        weighted_ce: wce,
        fpr,
        fpr_hard: hard_fpr(predictions, labels),
        total: if options.fpr { wce + fpr } else { wce },
        class_weights: weights,
        counts: label_counts(labels),
    }
}
