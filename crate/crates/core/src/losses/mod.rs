//! Training objectives.
//!
//! `L_total = L_rec + λ₁·L_sparse + λ₂·L_ent + λ₃·L_sal`, where the
//! reconstruction term mixes L1 and `1 − SSIM`. Every loss returns its value
//! together with an analytic gradient.

mod confidence;
mod image_loss;
mod ranking;

pub use confidence::{entropy_loss, sparsity_loss, EntropyLoss};
pub use image_loss::{l1_loss, reconstruction_loss, ssim, ImageLoss, SSIM_WINDOW};
pub use ranking::{sample_saliency_pairs, saliency_ranking_loss, PairSample};

use crate::scene::LossWeights;

/// Confidence threshold defining an "active" splat.
pub const ACTIVE_THRESHOLD: f64 = 0.5;

/// Raw loss terms before weighting.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub recon: f64,
    pub sparse: f64,
    pub entropy: f64,
    pub saliency: f64,
}

/// Raw and weighted loss terms of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub recon: f64,
    pub sparse: f64,
    pub entropy: f64,
    pub saliency: f64,
    pub weighted_sparse: f64,
    pub weighted_entropy: f64,
    pub weighted_saliency: f64,
}

/// Weighted sum of the loss terms.
pub fn total_loss(parts: LossParts, weights: &LossWeights) -> LossBreakdown {
    let weighted_sparse = weights.lambda_sparse * parts.sparse;
    let weighted_entropy = weights.lambda_entropy * parts.entropy;
    let weighted_saliency = weights.lambda_saliency * parts.saliency;
    LossBreakdown {
        total: parts.recon + weighted_sparse + weighted_entropy + weighted_saliency,
        recon: parts.recon,
        sparse: parts.sparse,
        entropy: parts.entropy,
        saliency: parts.saliency,
        weighted_sparse,
        weighted_entropy,
        weighted_saliency,
    }
}
