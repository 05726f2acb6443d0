//! CPU splat rasterizer with confidence-modulated opacity.
//!
//! Splats are projected to screen-space Gaussians, depth sorted and alpha
//! composited front to back. Each splat's opacity is `σ(logit) · cᵢ`. The
//! forward pass records every surviving `(splat, pixel)` contribution in a
//! [`RenderAux`] so that [`render_backward`] and [`accumulate_saliency`] can
//! replay it exactly.

mod backward;
mod forward;
mod heatmap;
mod project;
mod saliency;
mod sh;

pub use backward::{render_backward, GeometryGrads, GradientSet};
pub use forward::{render_forward, Contribution, RenderAux};
pub use heatmap::{colormap, render_heatmap};
pub use project::{project_scene, project_splat, project_splat_2d, ProjectedScene};
pub use saliency::{accumulate_saliency, SaliencyTracker};
pub use sh::{evaluate_sh, sh_basis};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scene::{Camera, ConfidenceField, SplatSet};

/// Screen-space Gaussian produced by projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected2D {
    /// Pixel coordinates; pixel `(x, y)` has its center at `(x + 0.5, y + 0.5)`.
    pub mean2d: [f64; 2],
    /// Symmetric covariance `[[a, b], [b, c]]` stored as `[a, b, c]`.
    pub cov2d: [f64; 3],
    /// View-space z in 3D mode, splat index in 2D mode.
    pub depth: f64,
    pub view_color: [f64; 3],
    /// Direction used for SH evaluation (needed to chain color gradients).
    pub view_dir: [f64; 3],
    /// Channels whose SH sum was clamped at zero.
    pub color_clamped: [bool; 3],
}

/// Rasterizer constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSettings {
    pub background: [f64; 3],
    /// Contributions with alpha below this are skipped.
    pub alpha_min: f64,
    /// Per-splat alpha is clamped to this.
    pub alpha_max: f64,
    /// Compositing stops once transmittance drops below this.
    pub transmittance_floor: f64,
    /// Added to the diagonal of projected 3D covariances.
    pub cov_dilation: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            background: [0.0; 3],
            alpha_min: 1.0 / 255.0,
            alpha_max: 0.999,
            transmittance_floor: 1e-4,
            cov_dilation: 0.3,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::Config { key: format!("render.{key}"), message });
        if !(self.alpha_min > 0.0 && self.alpha_min < self.alpha_max && self.alpha_max <= 1.0) {
            return bad("alpha_min", "need 0 < alpha_min < alpha_max <= 1".into());
        }
        if !(self.transmittance_floor > 0.0 && self.transmittance_floor < 0.1) {
            return bad("transmittance_floor", format!("must lie in (0, 0.1), got {}", self.transmittance_floor));
        }
        if !(self.cov_dilation >= 0.0 && self.cov_dilation.is_finite()) {
            return bad("cov_dilation", "must be finite and >= 0".into());
        }
        if self.background.iter().any(|v| !v.is_finite()) {
            return bad("background", "must be finite".into());
        }
        Ok(())
    }
}

/// Project and render a scene. `field = None` renders without confidence
/// modulation (plain `σ(logit)` opacity).
pub fn render_scene(
    scene: &SplatSet,
    camera: Option<&Camera>,
    field: Option<&ConfidenceField>,
    settings: &RenderSettings,
) -> Result<(Image, RenderAux, ProjectedScene)> {
    let projected = project_scene(scene, camera, settings)?;
    let confidences = match field {
        Some(f) => {
            f.check_matches(scene)?;
            Some(f.confidences())
        }
        None => None,
    };
    let (image, aux) = render_forward(&projected, confidences.as_deref(), &scene.opacity_logits(), settings)?;
    Ok((image, aux, projected))
}
