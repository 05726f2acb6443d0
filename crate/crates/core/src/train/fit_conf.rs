use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, breakdown, history_entry, regularizers, AdamState, HistoryEntry, TrainConfig};
use crate::error::{Error, Result};
use crate::losses::reconstruction_loss;
use crate::raster::{accumulate_saliency, render_backward, render_scene, RenderSettings, SaliencyTracker};
use crate::scene::{Camera, ConfidenceField, Mode, SplatSet, View};

/// Output of confidence-only fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfidence {
    pub field: ConfidenceField,
    pub history: Vec<HistoryEntry>,
}

/// Targets rendered from the scene itself with every confidence at 1.
///
/// For 2D scenes pass no cameras; a single canvas view is produced.
pub fn self_supervised_views(scene: &SplatSet, cameras: &[Camera], settings: &RenderSettings) -> Result<Vec<View>> {
    match scene.mode {
        Mode::TwoD { .. } => {
            let (target, _, _) = render_scene(scene, None, None, settings)?;
            Ok(vec![View { camera: None, target }])
        }
        Mode::ThreeD => cameras
            .iter()
            .map(|cam| {
                let (target, _, _) = render_scene(scene, Some(cam), None, settings)?;
                Ok(View { camera: Some(cam.clone()), target })
            })
            .collect(),
    }
}

fn check_views(scene: &SplatSet, views: &[View]) -> Result<()> {
    if views.is_empty() {
        return Err(Error::InvalidInput("confidence fitting needs at least one view".into()));
    }
    for (i, v) in views.iter().enumerate() {
        let (w, h) = match (scene.mode, &v.camera) {
            (Mode::TwoD { width, height }, None) => (width, height),
            (Mode::ThreeD, Some(cam)) => (cam.width, cam.height),
            (Mode::TwoD { .. }, Some(_)) => {
                return Err(Error::InvalidInput(format!("view {i}: 2D scenes take no camera")))
            }
            (Mode::ThreeD, None) => return Err(Error::InvalidInput(format!("view {i}: 3D scenes need a camera"))),
        };
        if (v.target.width, v.target.height) != (w, h) {
            return Err(Error::shape(
                format!("view {i} target of {w}x{h}"),
                format!("{}x{}", v.target.width, v.target.height),
            ));
        }
    }
    Ok(())
}

/// Fit only the raw Beta parameters of a frozen scene.
///
/// Views are visited round-robin, `cfg.cameras_per_step` per iteration.
/// Starts from `init` when given, otherwise from Beta(1, 1) everywhere.
pub fn fit_confidence(
    scene: &SplatSet,
    views: &[View],
    init: Option<&ConfidenceField>,
    cfg: &TrainConfig,
    settings: &RenderSettings,
) -> Result<FitConfidence> {
    cfg.validate()?;
    settings.validate()?;
    if scene.is_empty() {
        return Err(Error::InvalidInput("cannot fit confidences of an empty scene".into()));
    }
    check_views(scene, views)?;
    let n = scene.len();
    let mut field = match init {
        Some(f) => {
            f.check_matches(scene)?;
            f.clone()
        }
        None => ConfidenceField::uniform(n),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tracker = SaliencyTracker::new(n, cfg.saliency.ema_decay);
    let mut opt_ra = AdamState::new(n, cfg.lr_confidence);
    let mut opt_rb = AdamState::new(n, cfg.lr_confidence);
    let per_step = cfg.cameras_per_step.min(views.len());
    let inv = 1.0 / per_step as f64;

    let mut history = Vec::with_capacity(cfg.iterations.div_ceil(cfg.snapshot_every));
    for it in 0..cfg.iterations {
        let mut recon = 0.0;
        let mut saliency = vec![0.0; n];
        let mut g_ra = vec![0.0; n];
        let mut g_rb = vec![0.0; n];
        for j in 0..per_step {
            let view = &views[(it * per_step + j) % views.len()];
            let (img, aux, projected) = render_scene(scene, view.camera.as_ref(), Some(&field), settings)?;
            let mut rec = reconstruction_loss(&img, &view.target, cfg.weights.recon_ssim_mix)?;
            rec.grad.data.iter_mut().for_each(|g| *g *= inv);
            recon += rec.value * inv;
            for (s, v) in saliency.iter_mut().zip(accumulate_saliency(&aux, &rec.grad)?) {
                *s += v;
            }
            let grads = render_backward(&aux, &rec.grad, scene, &projected, Some(&field), settings)?;
            for i in 0..n {
                g_ra[i] += grads.raw_alpha[i];
                g_rb[i] += grads.raw_beta[i];
            }
        }
        tracker.update(&saliency)?;
        let reg = regularizers(&field, &tracker.values, &cfg.weights, &cfg.saliency, &mut rng)?;
        let loss = breakdown(recon, &reg, &cfg.weights);
        if !loss.total.is_finite() {
            return Err(Error::Divergence { iteration: it });
        }
        if it % cfg.snapshot_every == 0 {
            history.push(history_entry(it, loss, &field));
        }
        for i in 0..n {
            g_ra[i] += reg.d_raw_alpha[i];
            g_rb[i] += reg.d_raw_beta[i];
        }
        adam_step(&mut opt_ra, &mut field.raw_alpha, &g_ra)?;
        adam_step(&mut opt_rb, &mut field.raw_beta, &g_rb)?;
        if cfg.lr_decay < 1.0 {
            opt_ra.lr *= cfg.lr_decay;
            opt_rb.lr *= cfg.lr_decay;
        }
    }
    Ok(FitConfidence { field, history })
}
