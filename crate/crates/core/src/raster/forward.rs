use rayon::prelude::*;

use super::project::{max_eigenvalue, ProjectedScene};
use super::RenderSettings;
use crate::betaconf::sigmoid;
use crate::error::{Error, Result};
use crate::image::Image;

const TILE: usize = 16;
const SINGULAR_DET: f64 = 1e-12;

/// One surviving splat contribution to one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub splat: u32,
    /// Clamped alpha `aᵢ(p)`.
    pub alpha: f64,
    /// Transmittance in front of the splat, `Tᵢ`.
    pub transmittance: f64,
    /// Gaussian falloff `exp(-½ dᵀΣ⁻¹d)`.
    pub falloff: f64,
    /// Whether `alpha` hit `alpha_max`.
    pub clamped: bool,
}

impl Contribution {
    /// Blend weight `wᵢ(p) = aᵢ Tᵢ`.
    pub fn weight(&self) -> f64 {
        self.alpha * self.transmittance
    }
}

/// Everything the backward pass and saliency accumulation need from a
/// forward render. Contributions are grouped per pixel (row-major) and
/// ordered front to back within a pixel.
#[derive(Debug, Clone)]
pub struct RenderAux {
    pub width: usize,
    pub height: usize,
    pub n_splats: usize,
    /// Splat indices front to back.
    pub depth_order: Vec<usize>,
    /// `pixel_offsets[p]..pixel_offsets[p + 1]` indexes `contributions`.
    pub pixel_offsets: Vec<usize>,
    pub contributions: Vec<Contribution>,
    pub final_transmittance: Vec<f64>,
    pub background: [f64; 3],
    /// Effective opacity `σ(logit)·c` per splat.
    pub effective_opacity: Vec<f64>,
    /// Splats skipped because their covariance was singular.
    pub singular_skipped: usize,
}

impl RenderAux {
    pub fn pixel_contributions(&self, pixel: usize) -> &[Contribution] {
        &self.contributions[self.pixel_offsets[pixel]..self.pixel_offsets[pixel + 1]]
    }
}

/// Per-splat quantities prepared once per render.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Prepared {
    pub mean: [f64; 2],
    /// Inverse covariance `[A, B, C]`.
    pub conic: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
    /// Inclusive pixel bounds `[x0, x1] x [y0, y1]`.
    pub bounds: [i64; 4],
}

/// Gaussian falloff of a prepared splat at a pixel center.
#[inline]
pub(crate) fn falloff_at(p: &Prepared, px: usize, py: usize) -> (f64, [f64; 2]) {
    let d = [px as f64 + 0.5 - p.mean[0], py as f64 + 0.5 - p.mean[1]];
    let power = -0.5 * (p.conic[0] * d[0] * d[0] + 2.0 * p.conic[1] * d[0] * d[1] + p.conic[2] * d[1] * d[1]);
    (power.exp(), d)
}

pub(crate) fn check_inputs(projected: &ProjectedScene, confidences: Option<&[f64]>, opacity_logits: &[f64]) -> Result<()> {
    let n = projected.items.len();
    if opacity_logits.len() != n {
        return Err(Error::shape(format!("{n} opacity logits"), opacity_logits.len()));
    }
    if let Some(c) = confidences {
        if c.len() != n {
            return Err(Error::shape(format!("{n} confidences"), c.len()));
        }
    }
    Ok(())
}

fn prepare(
    projected: &ProjectedScene,
    confidences: Option<&[f64]>,
    opacity_logits: &[f64],
    settings: &RenderSettings,
) -> (Vec<Option<Prepared>>, Vec<f64>, usize) {
    let mut singular = 0;
    let mut opacities = Vec::with_capacity(projected.items.len());
    let prepared = projected
        .items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let opacity = match confidences {
                Some(c) => sigmoid(opacity_logits[i]) * c[i],
                None => sigmoid(opacity_logits[i]),
            };
            opacities.push(opacity);
            let p = item.as_ref()?;
            let [a, b, c] = p.cov2d;
            let det = a * c - b * b;
            if !(det >= SINGULAR_DET) || !det.is_finite() {
                singular += 1;
                return None;
            }
            // Below alpha_min everywhere.
            if opacity.min(settings.alpha_max) < settings.alpha_min {
                return None;
            }
            // Pixels further out than this cannot reach alpha_min.
            let power_limit = 2.0 * (opacity / settings.alpha_min).ln();
            let radius = (power_limit * max_eigenvalue(p.cov2d)).sqrt();
            let bounds = [
                (p.mean2d[0] - radius - 0.5).ceil() as i64,
                (p.mean2d[0] + radius - 0.5).floor() as i64,
                (p.mean2d[1] - radius - 0.5).ceil() as i64,
                (p.mean2d[1] + radius - 0.5).floor() as i64,
            ];
            Some(Prepared {
                mean: p.mean2d,
                conic: [c / det, -b / det, a / det],
                opacity,
                color: p.view_color,
                bounds,
            })
        })
        .collect();
    (prepared, opacities, singular)
}

/// Stable front-to-back order; equal depths keep index order.
pub(crate) fn depth_order(projected: &ProjectedScene) -> Vec<usize> {
    let mut order: Vec<usize> = (0..projected.items.len()).filter(|&i| projected.items[i].is_some()).collect();
    order.sort_by(|&a, &b| {
        let da = projected.items[a].as_ref().map_or(0.0, |p| p.depth);
        let db = projected.items[b].as_ref().map_or(0.0, |p| p.depth);
        da.total_cmp(&db)
    });
    order
}

struct RowOutput {
    colors: Vec<f64>,
    counts: Vec<usize>,
    contributions: Vec<Contribution>,
    final_t: Vec<f64>,
}

/// Composite projected splats front to back with opacity `σ(logit)·cᵢ`.
///
/// `confidences = None` renders with plain `σ(logit)` opacity.
pub fn render_forward(
    projected: &ProjectedScene,
    confidences: Option<&[f64]>,
    opacity_logits: &[f64],
    settings: &RenderSettings,
) -> Result<(Image, RenderAux)> {
    check_inputs(projected, confidences, opacity_logits)?;
    let (width, height) = (projected.width, projected.height);
    let (prepared, effective_opacity, singular_skipped) = prepare(projected, confidences, opacity_logits, settings);
    if singular_skipped > 0 {
        log::debug!("skipped {singular_skipped} splats with singular covariance");
    }
    let order: Vec<usize> = depth_order(projected);

    // Bin into tiles in depth order so each tile list is already sorted.
    let tiles_x = width.div_ceil(TILE);
    let tiles_y = height.div_ceil(TILE);
    let mut tiles: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for &i in &order {
        let Some(p) = &prepared[i] else { continue };
        let [x0, x1, y0, y1] = p.bounds;
        if x1 < 0 || y1 < 0 || x0 >= width as i64 || y0 >= height as i64 || x0 > x1 || y0 > y1 {
            continue;
        }
        let tx0 = x0.max(0) as usize / TILE;
        let tx1 = (x1 as usize).min(width - 1) / TILE;
        let ty0 = y0.max(0) as usize / TILE;
        let ty1 = (y1 as usize).min(height - 1) / TILE;
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                tiles[ty * tiles_x + tx].push(i as u32);
            }
        }
    }

    let bg = settings.background;
    let rows: Vec<RowOutput> = (0..height)
        .into_par_iter()
        .map(|py| {
            let mut out = RowOutput {
                colors: Vec::with_capacity(3 * width),
                counts: Vec::with_capacity(width),
                contributions: Vec::new(),
                final_t: Vec::with_capacity(width),
            };
            for px in 0..width {
                let list = &tiles[(py / TILE) * tiles_x + px / TILE];
                let mut t = 1.0;
                let mut rgb = [0.0; 3];
                let mut count = 0;
                for &idx in list {
                    let p = prepared[idx as usize].as_ref().expect("binned splats are prepared");
                    let [x0, x1, y0, y1] = p.bounds;
                    let (xi, yi) = (px as i64, py as i64);
                    if xi < x0 || xi > x1 || yi < y0 || yi > y1 {
                        continue;
                    }
                    let (falloff, _) = falloff_at(p, px, py);
                    let raw = p.opacity * falloff;
                    let clamped = raw > settings.alpha_max;
                    let alpha = if clamped { settings.alpha_max } else { raw };
                    if alpha < settings.alpha_min {
                        continue;
                    }
                    let w = alpha * t;
                    for c in 0..3 {
                        rgb[c] += p.color[c] * w;
                    }
                    out.contributions.push(Contribution { splat: idx, alpha, transmittance: t, falloff, clamped });
                    count += 1;
                    t *= 1.0 - alpha;
                    if t < settings.transmittance_floor {
                        break;
                    }
                }
                for c in 0..3 {
                    out.colors.push(rgb[c] + t * bg[c]);
                }
                out.counts.push(count);
                out.final_t.push(t);
            }
            out
        })
        .collect();

    let mut data = Vec::with_capacity(3 * width * height);
    let mut pixel_offsets = Vec::with_capacity(width * height + 1);
    let total: usize = rows.iter().map(|r| r.contributions.len()).sum();
    let mut contributions = Vec::with_capacity(total);
    let mut final_transmittance = Vec::with_capacity(width * height);
    pixel_offsets.push(0);
    for row in rows {
        data.extend_from_slice(&row.colors);
        let mut offset = *pixel_offsets.last().expect("non-empty");
        for c in row.counts {
            offset += c;
            pixel_offsets.push(offset);
        }
        contributions.extend_from_slice(&row.contributions);
        final_transmittance.extend_from_slice(&row.final_t);
    }

    let aux = RenderAux {
        width,
        height,
        n_splats: projected.items.len(),
        depth_order: order,
        pixel_offsets,
        contributions,
        final_transmittance,
        background: bg,
        effective_opacity,
        singular_skipped,
    };
    Ok((Image { width, height, data }, aux))
}

pub(crate) fn prepare_for_backward(
    projected: &ProjectedScene,
    confidences: Option<&[f64]>,
    opacity_logits: &[f64],
    settings: &RenderSettings,
) -> Vec<Option<Prepared>> {
    prepare(projected, confidences, opacity_logits, settings).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Projected2D;

    fn item(mean: [f64; 2], var: f64, depth: f64, color: [f64; 3]) -> Option<Projected2D> {
        Some(Projected2D {
            mean2d: mean,
            cov2d: [var, 0.0, var],
            depth,
            view_color: color,
            view_dir: [0.0, 0.0, 1.0],
            color_clamped: [false; 3],
        })
    }

    fn scene(items: Vec<Option<Projected2D>>, w: usize, h: usize) -> ProjectedScene {
        ProjectedScene { items, width: w, height: h, sh_degree: 0 }
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn single_splat_on_pixel_center() {
        let s = scene(vec![item([1.5, 1.5], 1.0, 1.0, [0.2, 0.6, 1.0])], 3, 3);
        let settings = RenderSettings { background: [0.1, 0.1, 0.1], ..Default::default() };
        let a = 0.7;
        let (img, aux) = render_forward(&s, Some(&[1.0]), &[logit(a)], &settings).unwrap();
        let px = img.pixel(1, 1);
        for c in 0..3 {
            let want = a * [0.2, 0.6, 1.0][c] + (1.0 - a) * 0.1;
            assert!((px[c] - want).abs() < 1e-12);
        }
        assert_eq!(aux.pixel_contributions(4).len(), 1);
    }

    #[test]
    fn two_coincident_splats() {
        let (c1, c2, bg) = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]);
        let s = scene(vec![item([0.5, 0.5], 1.0, 2.0, c2), item([0.5, 0.5], 1.0, 1.0, c1)], 1, 1);
        let settings = RenderSettings { background: bg, ..Default::default() };
        let (a1, a2) = (0.6, 0.3);
        let (img, aux) = render_forward(&s, None, &[logit(a2), logit(a1)], &settings).unwrap();
        let px = img.pixel(0, 0);
        for c in 0..3 {
            let want = a1 * c1[c] + (1.0 - a1) * a2 * c2[c] + (1.0 - a1) * (1.0 - a2) * bg[c];
            assert!((px[c] - want).abs() < 1e-12);
        }
        assert_eq!(aux.depth_order, vec![1, 0]);
    }

    #[test]
    fn unit_confidence_is_bit_identical_to_unmodulated() {
        let items = (0..6)
            .map(|i| item([i as f64 * 1.3, 3.0 + 0.2 * i as f64], 2.0 + i as f64, i as f64, [0.1 * i as f64, 0.5, 0.9]))
            .collect();
        let s = scene(items, 9, 7);
        let logits: Vec<f64> = (0..6).map(|i| -1.0 + 0.5 * i as f64).collect();
        let settings = RenderSettings::default();
        let (a, _) = render_forward(&s, None, &logits, &settings).unwrap();
        let (b, _) = render_forward(&s, Some(&[1.0; 6]), &logits, &settings).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn depth_ties_follow_index() {
        let s = scene(vec![item([0.5, 0.5], 1.0, 1.0, [1.0; 3]), item([0.5, 0.5], 1.0, 1.0, [0.0; 3])], 1, 1);
        assert_eq!(depth_order(&s), vec![0, 1]);
    }

    #[test]
    fn singular_covariance_is_tallied() {
        let mut bad = item([0.5, 0.5], 1.0, 1.0, [1.0; 3]);
        bad.as_mut().unwrap().cov2d = [1.0, 1.0, 1.0];
        let s = scene(vec![bad, item([0.5, 0.5], 1.0, 2.0, [1.0; 3])], 2, 2);
        let (_, aux) = render_forward(&s, None, &[0.0, 0.0], &RenderSettings::default()).unwrap();
        assert_eq!(aux.singular_skipped, 1);
        assert!(aux.contributions.iter().all(|c| c.splat == 1));
    }

    #[test]
    fn length_mismatch_rejected() {
        let s = scene(vec![item([0.5, 0.5], 1.0, 1.0, [1.0; 3])], 1, 1);
        assert!(render_forward(&s, None, &[0.0, 0.0], &RenderSettings::default()).is_err());
        assert!(render_forward(&s, Some(&[]), &[0.0], &RenderSettings::default()).is_err());
    }
}
