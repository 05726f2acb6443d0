use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{LossWeights, SaliencyConfig};

/// Optimization settings shared by both training loops.
///
/// Loss weights and saliency sampling live in their own config sections and
/// are attached here after loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Adam learning rate of the raw Beta parameters.
    pub lr_confidence: f64,
    /// 2D fitting only: splat centers, in pixels.
    pub lr_position: f64,
    /// 2D fitting only: log scales.
    pub lr_scale: f64,
    /// 2D fitting only: in-plane angle, in radians.
    pub lr_rotation: f64,
    /// 2D fitting only: SH coefficients.
    pub lr_color: f64,
    /// 2D fitting only: opacity logits.
    pub lr_opacity: f64,
    /// Per-iteration multiplicative decay applied to every learning rate;
    /// 1 keeps them constant.
    pub lr_decay: f64,
    pub seed: u64,
    /// Record a history entry every this many iterations (starting at 0).
    pub snapshot_every: usize,
    /// Confidence fitting only: cameras visited per iteration, round-robin.
    pub cameras_per_step: usize,
    #[serde(skip)]
    pub weights: LossWeights,
    #[serde(skip)]
    pub saliency: SaliencyConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            lr_confidence: 0.01,
            lr_position: 0.05,
            lr_scale: 0.01,
            lr_rotation: 0.01,
            lr_color: 0.01,
            lr_opacity: 0.02,
            lr_decay: 1.0,
            seed: 42,
            snapshot_every: 10,
            cameras_per_step: 1,
            weights: LossWeights::default(),
            saliency: SaliencyConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("train.lr_confidence", self.lr_confidence),
            ("train.lr_position", self.lr_position),
            ("train.lr_scale", self.lr_scale),
            ("train.lr_rotation", self.lr_rotation),
            ("train.lr_color", self.lr_color),
            ("train.lr_opacity", self.lr_opacity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config { key: key.into(), message: format!("must be positive, got {v}") });
            }
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config {
                key: "train.lr_decay".into(),
                message: format!("must lie in (0, 1], got {}", self.lr_decay),
            });
        }
        if self.snapshot_every == 0 {
            return Err(Error::Config { key: "train.snapshot_every".into(), message: "must be positive".into() });
        }
        if self.cameras_per_step == 0 {
            return Err(Error::Config { key: "train.cameras_per_step".into(), message: "must be positive".into() });
        }
        self.weights.validate()?;
        self.saliency.validate()
    }
}
