//! Reverse-mode pass through front-to-back compositing.
//!
//! Per pixel, `C = Σᵢ colorᵢ aᵢ Tᵢ + T_final · bg` with `Tᵢ = Πⱼ<ᵢ (1 − aⱼ)`.
//! Walking the contributions back to front while accumulating the suffix
//! `Sᵢ = Σⱼ>ᵢ colorⱼ aⱼ Tⱼ + T_final · bg` gives
//! `∂C/∂aᵢ = Tᵢ colorᵢ − Sᵢ / (1 − aᵢ)` without any division by `Tᵢ`.

use rayon::prelude::*;

use super::forward::{check_inputs, falloff_at, prepare_for_backward, RenderAux};
use super::project::ProjectedScene;
use super::sh::sh_basis;
use super::RenderSettings;
use crate::betaconf::{confidence_with_grad, sigmoid};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scene::{sh_coeffs_for_degree, ConfidenceField, Mode, SplatSet};

/// Gradients of 2D-mode geometry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeometryGrads {
    /// `∂L/∂mean2d`, identical to `∂L/∂position[0..2]` in 2D mode.
    pub mean: Vec<[f64; 2]>,
    /// `∂L/∂[a, b, c]` of the covariance `[[a, b], [b, c]]`; `b` counts both
    /// off-diagonal entries.
    pub cov: Vec<[f64; 3]>,
    pub log_scale: Vec<[f64; 2]>,
    pub angle: Vec<f64>,
}

/// Loss gradients for every trainable splat parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub opacity_logit: Vec<f64>,
    pub confidence: Vec<f64>,
    pub raw_alpha: Vec<f64>,
    pub raw_beta: Vec<f64>,
    /// Same layout as [`crate::Splat::sh`].
    pub sh: Vec<Vec<f64>>,
    /// Only populated for 2D scenes.
    pub geometry: Option<GeometryGrads>,
}

struct PixelGrads {
    d_alpha: Vec<f64>,
    d_color: Vec<[f64; 3]>,
}

/// Backpropagate per-pixel loss gradients (`∂L/∂C(p)`, image shaped) to the
/// splat parameters.
///
/// `aux` must come from [`super::render_forward`] on the same `projected`,
/// `field` and `scene`. Without a field the render is treated as
/// unmodulated and the confidence gradients are reported against `c = 1`.
pub fn render_backward(
    aux: &RenderAux,
    pixel_grads: &Image,
    scene: &SplatSet,
    projected: &ProjectedScene,
    field: Option<&ConfidenceField>,
    settings: &RenderSettings,
) -> Result<GradientSet> {
    let n = scene.len();
    if aux.n_splats != n || projected.items.len() != n {
        return Err(Error::AuxMismatch(format!(
            "aux has {} splats, projection {}, scene {n}",
            aux.n_splats,
            projected.items.len()
        )));
    }
    if aux.width != pixel_grads.width || aux.height != pixel_grads.height {
        return Err(Error::AuxMismatch(format!(
            "aux is {}x{}, gradient image {}x{}",
            aux.width, aux.height, pixel_grads.width, pixel_grads.height
        )));
    }
    if let Some(f) = field {
        f.check_matches(scene)?;
    }
    let confidences = field.map(|f| f.confidences());
    let logits = scene.opacity_logits();
    check_inputs(projected, confidences.as_deref(), &logits)?;
    let prepared = prepare_for_backward(projected, confidences.as_deref(), &logits, settings);
    let bg = aux.background;

    // Reverse sweep per pixel, in parallel over rows.
    let width = aux.width;
    let rows: Vec<PixelGrads> = (0..aux.height)
        .into_par_iter()
        .map(|py| {
            let start = aux.pixel_offsets[py * width];
            let end = aux.pixel_offsets[(py + 1) * width];
            let mut out = PixelGrads { d_alpha: vec![0.0; end - start], d_color: vec![[0.0; 3]; end - start] };
            for px in 0..width {
                let p = py * width + px;
                let g = pixel_grads.pixel(px, py);
                let t_final = aux.final_transmittance[p];
                let mut suffix = [t_final * bg[0], t_final * bg[1], t_final * bg[2]];
                let (lo, hi) = (aux.pixel_offsets[p], aux.pixel_offsets[p + 1]);
                for k in (lo..hi).rev() {
                    let rec = &aux.contributions[k];
                    let color = prepared[rec.splat as usize]
                        .as_ref()
                        .map(|pp| pp.color)
                        .unwrap_or([0.0; 3]);
                    let w = rec.alpha * rec.transmittance;
                    let inv = 1.0 / (1.0 - rec.alpha);
                    let mut d_alpha = 0.0;
                    let mut d_color = [0.0; 3];
                    for c in 0..3 {
                        d_color[c] = g[c] * w;
                        d_alpha += g[c] * (rec.transmittance * color[c] - suffix[c] * inv);
                        suffix[c] += color[c] * w;
                    }
                    out.d_alpha[k - start] = d_alpha;
                    out.d_color[k - start] = d_color;
                }
            }
            out
        })
        .collect();

    // Ordered reduction into per-splat accumulators.
    let mut d_opacity = vec![0.0; n];
    let mut d_color = vec![[0.0; 3]; n];
    let mut d_mean = vec![[0.0; 2]; n];
    let mut d_conic = vec![[0.0; 3]; n];
    let mut k = 0;
    for (py, row) in rows.iter().enumerate() {
        for px in 0..width {
            let p = py * width + px;
            for _ in aux.pixel_offsets[p]..aux.pixel_offsets[p + 1] {
                let rec = &aux.contributions[k];
                let local = k - aux.pixel_offsets[py * width];
                let i = rec.splat as usize;
                let pp = prepared[i]
                    .as_ref()
                    .ok_or_else(|| Error::AuxMismatch(format!("splat {i} has no projection")))?;
                let dc = row.d_color[local];
                for c in 0..3 {
                    d_color[i][c] += dc[c];
                }
                if !rec.clamped {
                    let da = row.d_alpha[local];
                    let (falloff, d) = falloff_at(pp, px, py);
                    d_opacity[i] += da * falloff;
                    let d_power = da * pp.opacity * falloff;
                    // power = −½ dᵀQd with d = pixel − mean
                    let q = pp.conic;
                    d_mean[i][0] += d_power * (q[0] * d[0] + q[1] * d[1]);
                    d_mean[i][1] += d_power * (q[1] * d[0] + q[2] * d[1]);
                    d_conic[i][0] += -0.5 * d_power * d[0] * d[0];
                    d_conic[i][1] += -0.5 * d_power * d[0] * d[1];
                    d_conic[i][2] += -0.5 * d_power * d[1] * d[1];
                }
                k += 1;
            }
        }
    }

    let n_coeffs = sh_coeffs_for_degree(scene.sh_degree);
    let mut grads = GradientSet {
        opacity_logit: vec![0.0; n],
        confidence: vec![0.0; n],
        raw_alpha: vec![0.0; n],
        raw_beta: vec![0.0; n],
        sh: vec![vec![0.0; 3 * n_coeffs]; n],
        geometry: None,
    };
    for i in 0..n {
        let sig = sigmoid(logits[i]);
        let c = confidences.as_ref().map_or(1.0, |cs| cs[i]);
        grads.opacity_logit[i] = d_opacity[i] * c * sig * (1.0 - sig);
        grads.confidence[i] = d_opacity[i] * sig;
        if let Some(f) = field {
            let cg = confidence_with_grad(f.raw_alpha[i], f.raw_beta[i]);
            grads.raw_alpha[i] = grads.confidence[i] * cg.d_raw_alpha;
            grads.raw_beta[i] = grads.confidence[i] * cg.d_raw_beta;
        }
        if let Some(p) = &projected.items[i] {
            let basis = sh_basis(p.view_dir, scene.sh_degree);
            for (kk, y) in basis.iter().enumerate() {
                for c in 0..3 {
                    if !p.color_clamped[c] {
                        grads.sh[i][3 * kk + c] = d_color[i][c] * y;
                    }
                }
            }
        }
    }

    if let Mode::TwoD { .. } = scene.mode {
        let mut geo = GeometryGrads {
            mean: d_mean,
            cov: vec![[0.0; 3]; n],
            log_scale: vec![[0.0; 2]; n],
            angle: vec![0.0; n],
        };
        for i in 0..n {
            let Some(pp) = &prepared[i] else { continue };
            // ∂L/∂Σ = −Q G Q for the full symmetric conic gradient G.
            let q = [[pp.conic[0], pp.conic[1]], [pp.conic[1], pp.conic[2]]];
            let g = [[d_conic[i][0], d_conic[i][1]], [d_conic[i][1], d_conic[i][2]]];
            let mut qg = [[0.0; 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    qg[r][c] = q[r][0] * g[0][c] + q[r][1] * g[1][c];
                }
            }
            let mut ds = [[0.0; 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    ds[r][c] = -(qg[r][0] * q[0][c] + qg[r][1] * q[1][c]);
                }
            }
            let d_cov = [ds[0][0], ds[0][1] + ds[1][0], ds[1][1]];
            geo.cov[i] = d_cov;

            let splat = &scene.splats[i];
            let s0 = (2.0 * splat.log_scale[0]).exp();
            let s1 = (2.0 * splat.log_scale[1]).exp();
            let (sin, cos) = splat.angle_2d().sin_cos();
            // a = s0 cos² + s1 sin², b = (s0 − s1) cos sin, c = s0 sin² + s1 cos²
            geo.log_scale[i] = [
                2.0 * s0 * (d_cov[0] * cos * cos + d_cov[1] * cos * sin + d_cov[2] * sin * sin),
                2.0 * s1 * (d_cov[0] * sin * sin - d_cov[1] * cos * sin + d_cov[2] * cos * cos),
            ];
            let sin2 = 2.0 * sin * cos;
            let cos2 = cos * cos - sin * sin;
            geo.angle[i] = (s0 - s1) * (-d_cov[0] * sin2 + d_cov[1] * cos2 + d_cov[2] * sin2);
        }
        grads.geometry = Some(geo);
    }
    Ok(grads)
}
