use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{adam_step, breakdown, history_entry, regularizers, AdamState, HistoryEntry, TrainConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::losses::reconstruction_loss;
use crate::raster::{accumulate_saliency, render_backward, render_scene, RenderSettings, SaliencyTracker};
use crate::scene::{quat_from_angle_z, ConfidenceField, Mode, Splat, SplatSet};

/// Output of a 2D fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit2d {
    pub scene: SplatSet,
    pub field: ConfidenceField,
    pub history: Vec<HistoryEntry>,
}

/// Smallest log scale a 2D splat may shrink to during fitting (σ ≈ 0.14 px).
const MIN_LOG_SCALE: f64 = -2.0;
const INIT_OPACITY_LOGIT: f64 = 2.0;

/// Splats on a jittered grid covering the canvas, colored by the target
/// pixel under each center.
pub fn init_2d_scene(target: &Image, n_splats: usize, rng: &mut ChaCha8Rng) -> Result<SplatSet> {
    if n_splats == 0 {
        return Err(Error::InvalidInput("need at least one splat".into()));
    }
    let (w, h) = (target.width as f64, target.height as f64);
    let gx = ((n_splats as f64 * w / h).sqrt().ceil() as usize).max(1);
    let gy = n_splats.div_ceil(gx);
    let (cell_w, cell_h) = (w / gx as f64, h / gy as f64);
    let log_scale = (0.6 * cell_w.max(cell_h)).ln().max(MIN_LOG_SCALE);
    let mut splats = Vec::with_capacity(n_splats);
    for k in 0..n_splats {
        let jx: f64 = rng.random_range(-0.25..0.25);
        let jy: f64 = rng.random_range(-0.25..0.25);
        let x = ((k % gx) as f64 + 0.5 + jx) * cell_w;
        let y = ((k / gx) as f64 + 0.5 + jy) * cell_h;
        let rgb = target.pixel((x as usize).min(target.width - 1), (y as usize).min(target.height - 1));
        splats.push(Splat::new_2d([x, y], [log_scale, log_scale], 0.0, rgb, INIT_OPACITY_LOGIT));
    }
    SplatSet::new(splats, Mode::TwoD { width: target.width, height: target.height })
}

/// Jointly fit splat geometry, color, opacity and confidence to `target`.
pub fn fit_2d(target: &Image, n_splats: usize, cfg: &TrainConfig, settings: &RenderSettings) -> Result<Fit2d> {
    cfg.validate()?;
    settings.validate()?;
    if target.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInput("target values must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scene = init_2d_scene(target, n_splats, &mut rng)?;
    let mut field = ConfidenceField::uniform(n_splats);
    let mut tracker = SaliencyTracker::new(n_splats, cfg.saliency.ema_decay);
    let max_log_scale = (target.width.max(target.height) as f64).ln();
    let n_sh = scene.splats[0].sh.len();

    let mut opt_pos = AdamState::new(2 * n_splats, cfg.lr_position);
    let mut opt_scale = AdamState::new(2 * n_splats, cfg.lr_scale);
    let mut opt_angle = AdamState::new(n_splats, cfg.lr_rotation);
    let mut opt_color = AdamState::new(n_sh * n_splats, cfg.lr_color);
    let mut opt_opacity = AdamState::new(n_splats, cfg.lr_opacity);
    let mut opt_ra = AdamState::new(n_splats, cfg.lr_confidence);
    let mut opt_rb = AdamState::new(n_splats, cfg.lr_confidence);

    let mut history = Vec::with_capacity(cfg.iterations.div_ceil(cfg.snapshot_every));
    for it in 0..cfg.iterations {
        let (img, aux, projected) = render_scene(&scene, None, Some(&field), settings)?;
        let rec = reconstruction_loss(&img, target, cfg.weights.recon_ssim_mix)?;
        tracker.update(&accumulate_saliency(&aux, &rec.grad)?)?;
        let reg = regularizers(&field, &tracker.values, &cfg.weights, &cfg.saliency, &mut rng)?;
        let loss = breakdown(rec.value, &reg, &cfg.weights);
        if !loss.total.is_finite() {
            return Err(Error::Divergence { iteration: it });
        }
        if it % cfg.snapshot_every == 0 {
            history.push(history_entry(it, loss, &field));
        }

        let grads = render_backward(&aux, &rec.grad, &scene, &projected, Some(&field), settings)?;
        let geo = grads.geometry.as_ref().ok_or_else(|| Error::InvalidInput("2D fit needs geometry gradients".into()))?;

        let mut pos: Vec<f64> = scene.splats.iter().flat_map(|s| [s.position[0], s.position[1]]).collect();
        let g_pos: Vec<f64> = geo.mean.iter().flatten().copied().collect();
        adam_step(&mut opt_pos, &mut pos, &g_pos)?;

        let mut scales: Vec<f64> = scene.splats.iter().flat_map(|s| [s.log_scale[0], s.log_scale[1]]).collect();
        let g_scales: Vec<f64> = geo.log_scale.iter().flatten().copied().collect();
        adam_step(&mut opt_scale, &mut scales, &g_scales)?;

        let mut angles: Vec<f64> = scene.splats.iter().map(|s| s.angle_2d()).collect();
        adam_step(&mut opt_angle, &mut angles, &geo.angle)?;

        let mut colors: Vec<f64> = scene.splats.iter().flat_map(|s| s.sh.iter().copied()).collect();
        let g_colors: Vec<f64> = grads.sh.iter().flatten().copied().collect();
        adam_step(&mut opt_color, &mut colors, &g_colors)?;

        let mut logits = scene.opacity_logits();
        adam_step(&mut opt_opacity, &mut logits, &grads.opacity_logit)?;

        let g_ra: Vec<f64> = grads.raw_alpha.iter().zip(&reg.d_raw_alpha).map(|(a, b)| a + b).collect();
        let g_rb: Vec<f64> = grads.raw_beta.iter().zip(&reg.d_raw_beta).map(|(a, b)| a + b).collect();
        adam_step(&mut opt_ra, &mut field.raw_alpha, &g_ra)?;
        adam_step(&mut opt_rb, &mut field.raw_beta, &g_rb)?;

        for (i, s) in scene.splats.iter_mut().enumerate() {
            s.position[0] = pos[2 * i];
            s.position[1] = pos[2 * i + 1];
            s.log_scale[0] = scales[2 * i].clamp(MIN_LOG_SCALE, max_log_scale);
            s.log_scale[1] = scales[2 * i + 1].clamp(MIN_LOG_SCALE, max_log_scale);
            s.rotation = quat_from_angle_z(angles[i]);
            s.sh.copy_from_slice(&colors[i * n_sh..(i + 1) * n_sh]);
            s.opacity_logit = logits[i];
        }
        if cfg.lr_decay < 1.0 {
            for opt in [
                &mut opt_pos,
                &mut opt_scale,
                &mut opt_angle,
                &mut opt_color,
                &mut opt_opacity,
                &mut opt_ra,
                &mut opt_rb,
            ] {
                opt.lr *= cfg.lr_decay;
            }
        }
    }
    Ok(Fit2d { scene, field, history })
}
