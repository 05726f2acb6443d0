//! Optimization loops.
//!
//! [`fit_2d`] learns a flat splat image jointly with its confidences;
//! [`fit_confidence`] freezes a scene and learns only the confidences.

mod adam;
mod config;
mod fit2d;
mod fit_conf;

pub use adam::{adam_step, AdamState};
pub use config::TrainConfig;
pub use fit2d::{fit_2d, init_2d_scene, Fit2d};
pub use fit_conf::{fit_confidence, self_supervised_views, FitConfidence};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::betaconf::confidence_with_grad;
use crate::compress::count_active;
use crate::error::Result;
use crate::losses::{
    entropy_loss, sample_saliency_pairs, saliency_ranking_loss, sparsity_loss, total_loss, LossBreakdown, LossParts,
};
use crate::scene::{ConfidenceField, LossWeights, SaliencyConfig};

/// One recorded training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub loss: LossBreakdown,
    pub active: usize,
    pub mean_confidence: f64,
}

/// The confidence regularizers of one step and their gradients with respect
/// to the raw Beta parameters.
pub(crate) struct Regularizers {
    pub sparse: f64,
    pub entropy: f64,
    pub saliency: f64,
    pub d_raw_alpha: Vec<f64>,
    pub d_raw_beta: Vec<f64>,
}

/// Sparsity, entropy and saliency-ranking terms, already weighted in the
/// gradients. Pairs are drawn with a seed taken from `rng`.
pub(crate) fn regularizers(
    field: &ConfidenceField,
    saliency: &[f64],
    weights: &LossWeights,
    cfg: &SaliencyConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Regularizers> {
    let n = field.len();
    let cs = field.confidences();
    let (sparse, d_sparse) = sparsity_loss(&cs)?;
    let ent = entropy_loss(field)?;
    let pair_seed: u64 = rng.random();
    let (rank, d_rank) = if n >= 2 {
        let pairs = sample_saliency_pairs(saliency, cfg, pair_seed)?;
        saliency_ranking_loss(&pairs.pairs, &cs)?
    } else {
        (0.0, vec![0.0; n])
    };
    let mut d_raw_alpha = Vec::with_capacity(n);
    let mut d_raw_beta = Vec::with_capacity(n);
    for i in 0..n {
        let cg = confidence_with_grad(field.raw_alpha[i], field.raw_beta[i]);
        let dc = weights.lambda_sparse * d_sparse[i] + weights.lambda_saliency * d_rank[i];
        d_raw_alpha.push(dc * cg.d_raw_alpha + weights.lambda_entropy * ent.d_raw_alpha[i]);
        d_raw_beta.push(dc * cg.d_raw_beta + weights.lambda_entropy * ent.d_raw_beta[i]);
    }
    Ok(Regularizers { sparse, entropy: ent.value, saliency: rank, d_raw_alpha, d_raw_beta })
}

pub(crate) fn breakdown(recon: f64, reg: &Regularizers, weights: &LossWeights) -> LossBreakdown {
    total_loss(LossParts { recon, sparse: reg.sparse, entropy: reg.entropy, saliency: reg.saliency }, weights)
}

pub(crate) fn history_entry(iteration: usize, loss: LossBreakdown, field: &ConfidenceField) -> HistoryEntry {
    HistoryEntry { iteration, loss, active: count_active(field), mean_confidence: loss.sparse }
}
