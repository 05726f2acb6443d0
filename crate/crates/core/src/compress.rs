//! Post-training knob: threshold pruning, sweeps and quality/size metrics.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::losses::{self, ACTIVE_THRESHOLD};
use crate::raster::{render_heatmap, render_scene, RenderSettings};
use crate::scene::{Camera, ConfidenceField, SplatSet, SweepRow, View};

/// Result of a threshold prune.
#[derive(Debug, Clone, PartialEq)]
pub struct Pruned {
    pub scene: SplatSet,
    pub field: ConfidenceField,
    /// Indices of the kept splats in the original scene.
    pub kept_indices: Vec<usize>,
}

/// Keep exactly the splats with `cᵢ ≥ tau`, preserving order.
pub fn prune(scene: &SplatSet, field: &ConfidenceField, tau: f64) -> Result<Pruned> {
    field.check_matches(scene)?;
    let kept_indices: Vec<usize> = (0..field.len()).filter(|&i| field.confidence(i) >= tau).collect();
    Ok(Pruned { scene: scene.select(&kept_indices), field: field.select(&kept_indices), kept_indices })
}

/// Render the scene pruned at `tau`, or its confidence heatmap.
///
/// Without a field nothing is pruned and the render is unmodulated; a
/// heatmap then has nothing to show and is an error.
pub fn render_at_threshold(
    scene: &SplatSet,
    field: Option<&ConfidenceField>,
    camera: Option<&Camera>,
    tau: f64,
    heatmap: bool,
    settings: &RenderSettings,
) -> Result<Image> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidInput(format!("threshold must lie in [0, 1], got {tau}")));
    }
    let Some(field) = field else {
        if heatmap {
            return Err(Error::InvalidInput("a heatmap needs confidence scores".into()));
        }
        return Ok(render_scene(scene, camera, None, settings)?.0);
    };
    let pruned = prune(scene, field, tau)?;
    if heatmap {
        render_heatmap(&pruned.scene, camera, &pruned.field, settings)
    } else {
        Ok(render_scene(&pruned.scene, camera, Some(&pruned.field), settings)?.0)
    }
}

/// `10·log₁₀(1 / MSE)` for images in `[0, 1]`; `+∞` for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    if a.data.is_empty() {
        return Err(Error::InvalidInput("PSNR of an empty image".into()));
    }
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Default SQR scale: `10^⌊log₁₀ n⌋` of the unpruned splat count.
pub fn sqr_scale(original_count: usize) -> f64 {
    if original_count == 0 {
        return 1.0;
    }
    10f64.powi((original_count as f64).log10().floor() as i32)
}

/// Splats-to-quality ratio `n / (n + psnr · scale)`; lower is better.
///
/// An infinite PSNR yields 0.
pub fn sqr(num_splats: usize, psnr_db: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidInput(format!("SQR scale must be positive, got {scale}")));
    }
    if psnr_db.is_nan() || psnr_db < 0.0 {
        return Err(Error::InvalidInput(format!("SQR needs a nonnegative PSNR, got {psnr_db}")));
    }
    if psnr_db.is_infinite() {
        return Ok(0.0);
    }
    let n = num_splats as f64;
    let denom = n + psnr_db * scale;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok(n / denom)
}

/// Average confidence score.
pub fn acs(field: &ConfidenceField) -> Result<f64> {
    if field.is_empty() {
        return Err(Error::InvalidInput("ACS of an empty field".into()));
    }
    Ok(losses::sparsity_loss(&field.confidences())?.0)
}

/// Number of splats with `cᵢ ≥ 0.5`.
pub fn count_active(field: &ConfidenceField) -> usize {
    (0..field.len()).filter(|&i| field.confidence(i) >= ACTIVE_THRESHOLD).count()
}

/// Mean PSNR and SSIM of a scene over a set of views.
pub fn evaluate_views(
    scene: &SplatSet,
    field: Option<&ConfidenceField>,
    views: &[View],
    settings: &RenderSettings,
) -> Result<(f64, f64)> {
    if views.is_empty() {
        return Err(Error::InvalidInput("evaluation needs at least one view".into()));
    }
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    for view in views {
        let (img, _, _) = render_scene(scene, view.camera.as_ref(), field, settings)?;
        psnr_sum += psnr(&img, &view.target)?;
        ssim_sum += losses::ssim(&img, &view.target)?.value;
    }
    let n = views.len() as f64;
    Ok((psnr_sum / n, ssim_sum / n))
}

/// Prune at every `tau`, render every view and report quality/size rows
/// in `tau` order.
pub fn sweep(
    scene: &SplatSet,
    field: &ConfidenceField,
    views: &[View],
    taus: &[f64],
    settings: &RenderSettings,
) -> Result<Vec<SweepRow>> {
    field.check_matches(scene)?;
    if taus.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("sweep thresholds must be sorted ascending".into()));
    }
    let scale = sqr_scale(scene.len());
    taus.par_iter()
        .map(|&tau| {
            let pruned = prune(scene, field, tau)?;
            let (psnr_db, ssim) = evaluate_views(&pruned.scene, Some(&pruned.field), views, settings)?;
            let kept = pruned.kept_indices.len();
            Ok(SweepRow {
                tau,
                kept,
                psnr: psnr_db,
                ssim,
                sqr: sqr(kept, psnr_db.max(0.0), scale)?,
                acs: if kept == 0 { 0.0 } else { acs(&pruned.field)? },
            })
        })
        .collect()
}
