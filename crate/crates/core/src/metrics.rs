//! Norms, perturbation size, accuracy and ROC-AUC.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagekit::Image;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("norm order must be >= 1, got {0}")]
    BadOrder(f64),
    #[error("clean image has zero L2 norm")]
    ZeroImage,
    #[error("empty set")]
    EmptySet,
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("ROC-AUC needs at least one positive and one negative label")]
    SingleClass,
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
}

/// Norm order for [`lp_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Norm {
    P(f64),
    Inf,
}

impl Norm {
    pub const L1: Norm = Norm::P(1.0);
    pub const L2: Norm = Norm::P(2.0);
}

/// `||a - b||_p`, with `Norm::Inf` the largest absolute difference.
pub fn lp_norm(a: &Image, b: &Image, p: Norm) -> Result<f64, MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::DimensionMismatch(a.dims(), b.dims()));
    }
    lp_norm_slices(a.data(), b.data(), p)
}

pub(crate) fn lp_norm_slices(a: &[f64], b: &[f64], p: Norm) -> Result<f64, MetricError> {
    let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
    match p {
        Norm::Inf => Ok(diffs.fold(0.0, f64::max)),
        Norm::P(order) if order >= 1.0 => {
            if order == 1.0 {
                Ok(diffs.sum())
            } else if order == 2.0 {
                Ok(diffs.map(|d| d * d).sum::<f64>().sqrt())
            } else {
                Ok(diffs.map(|d| d.powf(order)).sum::<f64>().powf(1.0 / order))
            }
        }
        Norm::P(order) => Err(MetricError::BadOrder(order)),
    }
}

/// `100 * ||adv - x||_2 / ||x||_2`.
pub fn perturbation_percent(x: &Image, adv: &Image) -> Result<f64, MetricError> {
    if x.dims() != adv.dims() {
        return Err(MetricError::DimensionMismatch(x.dims(), adv.dims()));
    }
    let base = x.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    if base == 0.0 {
        return Err(MetricError::ZeroImage);
    }
    Ok(100.0 * lp_norm_slices(adv.data(), x.data(), Norm::L2)? / base)
}

/// Fraction of predictions on the correct side of `threshold`
/// (prediction >= threshold means class 1).
pub fn accuracy(preds: &[f64], labels: &[u8], threshold: f64) -> Result<f64, MetricError> {
    if preds.len() != labels.len() {
        return Err(MetricError::LengthMismatch(preds.len(), labels.len()));
    }
    if preds.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let correct = preds
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= threshold) == (y == 1))
        .count();
    Ok(correct as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub score: f64,
    pub label: u8,
}

/// Mann-Whitney AUC: probability that a random positive outscores a random
/// negative, with ties counting one half. Runs in `O(n log n)` via midranks.
pub fn roc_auc(samples: &[ScoredSample]) -> Result<f64, MetricError> {
    if let Some(s) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(MetricError::NonFiniteScore(s.score));
    }
    let n_pos = samples.iter().filter(|s| s.label == 1).count();
    let n_neg = samples.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].score.total_cmp(&samples[b].score));

    // Sum of midranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && samples[order[j + 1]].score == samples[order[i]].score {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank
            * order[i..=j]
                .iter()
                .filter(|&&k| samples[k].label == 1)
                .count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}
