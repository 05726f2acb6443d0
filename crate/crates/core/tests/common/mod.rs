//! Scene builders and oracles shared by the integration tests.
#![allow(dead_code)]

use confsplat::raster::{render_backward, render_forward, project_scene, GradientSet, RenderSettings};
use confsplat::scene::quat_from_angle_z;
use confsplat::train::{self_supervised_views, TrainConfig};
use confsplat::{Camera, ConfidenceField, Image, Mode, Splat, SplatSet, View};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random field with confidences spread over most of `(0, 1)`.
pub fn random_field(n: usize, rng: &mut ChaCha8Rng) -> ConfidenceField {
    let ra = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let rb = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    ConfidenceField::new(ra, rb).unwrap()
}

pub fn random_scene_2d(n: usize, w: usize, h: usize, rng: &mut ChaCha8Rng) -> SplatSet {
    let splats = (0..n)
        .map(|_| {
            let xy = [rng.random_range(2.0..w as f64 - 2.0), rng.random_range(2.0..h as f64 - 2.0)];
            let ls = [rng.random_range(0.3..1.3), rng.random_range(0.3..1.3)];
            let rgb = [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
            Splat::new_2d(xy, ls, rng.random_range(-1.5..1.5), rgb, rng.random_range(-1.0..2.0))
        })
        .collect();
    SplatSet::new(splats, Mode::TwoD { width: w, height: h }).unwrap()
}

/// Random degree-1 splats in front of a `w×h` camera at the origin looking
/// down +z.
pub fn random_scene_3d(n: usize, w: usize, h: usize, rng: &mut ChaCha8Rng) -> (SplatSet, Camera) {
    let cam = Camera::looking_down_z(w, h, w as f64);
    let splats = (0..n)
        .map(|_| {
            let z = rng.random_range(3.0..6.0);
            let pos = [rng.random_range(-0.3..0.3) * z, rng.random_range(-0.3..0.3) * z, z];
            let ls = [0; 3].map(|_| rng.random_range(-2.0..-1.2));
            let q = [rng.random_range(0.5..1.0), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            let rgb = [rng.random_range(0.3..0.7), rng.random_range(0.3..0.7), rng.random_range(0.3..0.7)];
            let mut s = Splat::with_rgb(pos, ls, q, rgb, rng.random_range(-1.0..2.0));
            s.sh.extend((0..9).map(|_| rng.random_range(-0.1..0.1)));
            s
        })
        .collect();
    (SplatSet::new(splats, Mode::ThreeD).unwrap(), cam)
}

fn f32ish(r: &mut rand_chacha::ChaCha8Rng, lo: f32, hi: f32) -> f64 {
    r.random_range(lo..hi) as f64
}

/// Random scene whose every value is representable in 32 bits.
pub fn random_f32_scene(n: usize, degree: u8, seed: u64) -> (SplatSet, ConfidenceField) {
    let mut r = rng(seed);
    let coeffs = 3 * confsplat::scene::sh_coeffs_for_degree(degree);
    let splats = (0..n)
        .map(|_| Splat {
            position: [0; 3].map(|_| f32ish(&mut r, -50.0, 50.0)),
            log_scale: [0; 3].map(|_| f32ish(&mut r, -6.0, 1.0)),
            rotation: [0; 4].map(|_| f32ish(&mut r, -1.0, 1.0)),
            sh: (0..coeffs).map(|_| f32ish(&mut r, -2.0, 2.0)).collect(),
            opacity_logit: f32ish(&mut r, -8.0, 8.0),
        })
        .collect();
    let field = ConfidenceField::new(
        (0..n).map(|_| f32ish(&mut r, -10.0, 10.0)).collect(),
        (0..n).map(|_| f32ish(&mut r, -10.0, 10.0)).collect(),
    )
    .unwrap();
    (SplatSet::new(splats, Mode::ThreeD).unwrap(), field)
}

/// `Σ_p g(p)·C(p)` for a fixed weight image `g`.
pub fn probe_loss(scene: &SplatSet, cam: Option<&Camera>, field: &ConfidenceField, g: &Image, s: &RenderSettings) -> f64 {
    let projected = project_scene(scene, cam, s).unwrap();
    let (img, _) = render_forward(&projected, Some(&field.confidences()), &scene.opacity_logits(), s).unwrap();
    img.data.iter().zip(&g.data).map(|(a, b)| a * b).sum()
}

pub fn analytic_grads(scene: &SplatSet, cam: Option<&Camera>, field: &ConfidenceField, g: &Image, s: &RenderSettings) -> GradientSet {
    let projected = project_scene(scene, cam, s).unwrap();
    let (_, aux) = render_forward(&projected, Some(&field.confidences()), &scene.opacity_logits(), s).unwrap();
    render_backward(&aux, g, scene, &projected, Some(field), s).unwrap()
}

pub fn random_weights(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image {
    Image::from_data(w, h, (0..3 * w * h).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn close(analytic: f64, numeric: f64, rel: f64, abs: f64) -> bool {
    (analytic - numeric).abs() <= abs + rel * analytic.abs().max(numeric.abs())
}

/// One mismatch between an analytic gradient and its central difference.
#[derive(Debug)]
pub struct Mismatch {
    pub what: String,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compare every raster gradient against central differences; returns the
/// mismatches and the number of entries checked.
pub fn raster_fd_check(scene: &SplatSet, cam: Option<&Camera>, field: &ConfidenceField, g: &Image) -> (Vec<Mismatch>, usize) {
    let s = RenderSettings::default();
    let grads = analytic_grads(scene, cam, field, g, &s);
    let h = 1e-6;
    let mut bad = Vec::new();
    let mut checked = 0;
    let mut check = |what: String, analytic: f64, plus: f64, minus: f64| {
        let numeric = (plus - minus) / (2.0 * h);
        checked += 1;
        if !close(analytic, numeric, 1e-4, 1e-6) {
            bad.push(Mismatch { what, analytic, numeric });
        }
    };
    let loss_scene = |sc: &SplatSet| probe_loss(sc, cam, field, g, &s);
    let loss_field = |f: &ConfidenceField| probe_loss(scene, cam, f, g, &s);
    let nudged = |i: usize, d: f64, edit: &dyn Fn(&mut Splat, f64)| {
        let mut sc = scene.clone();
        edit(&mut sc.splats[i], d);
        loss_scene(&sc)
    };
    for i in 0..scene.len() {
        let logit = |sp: &mut Splat, d: f64| sp.opacity_logit += d;
        check(format!("opacity_logit[{i}]"), grads.opacity_logit[i], nudged(i, h, &logit), nudged(i, -h, &logit));
        for k in 0..scene.splats[i].sh.len() {
            let coef = |sp: &mut Splat, d: f64| sp.sh[k] += d;
            check(format!("sh[{i}][{k}]"), grads.sh[i][k], nudged(i, h, &coef), nudged(i, -h, &coef));
        }
        for (which, analytic) in [("raw_alpha", grads.raw_alpha[i]), ("raw_beta", grads.raw_beta[i])] {
            let at = |d: f64| {
                let mut f = field.clone();
                if which == "raw_alpha" { f.raw_alpha[i] += d } else { f.raw_beta[i] += d }
                loss_field(&f)
            };
            check(format!("{which}[{i}]"), analytic, at(h), at(-h));
        }
        if let Some(geo) = &grads.geometry {
            for a in 0..2 {
                let pos = |sp: &mut Splat, d: f64| sp.position[a] += d;
                check(format!("mean[{i}][{a}]"), geo.mean[i][a], nudged(i, h, &pos), nudged(i, -h, &pos));
                let ls = |sp: &mut Splat, d: f64| sp.log_scale[a] += d;
                check(format!("log_scale[{i}][{a}]"), geo.log_scale[i][a], nudged(i, h, &ls), nudged(i, -h, &ls));
            }
            let angle = |sp: &mut Splat, d: f64| sp.rotation = quat_from_angle_z(sp.angle_2d() + d);
            check(format!("angle[{i}]"), geo.angle[i], nudged(i, h, &angle), nudged(i, -h, &angle));
        }
    }
    (bad, checked)
}

/// Synthetic 64×64 target: smooth gradients and blobs plus hard-edged
/// disc, rotated square and thin stripe.
pub fn mode_a_target() -> Image {
    let (w, h) = (64usize, 64usize);
    let mut img = Image::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = ((x as f64 + 0.5) / w as f64, (y as f64 + 0.5) / h as f64);
            let blob = |cx: f64, cy: f64, s: f64| (-((u - cx).powi(2) + (v - cy).powi(2)) / (2.0 * s * s)).exp();
            let b1 = blob(0.3, 0.35, 0.12);
            let b2 = blob(0.7, 0.65, 0.15);
            let mut px = [
                0.15 + 0.5 * u + 0.3 * b1,
                0.2 + 0.3 * v + 0.4 * b2,
                0.4 + 0.1 * (6.0 * u).sin() + 0.3 * b1 * b2,
            ];
            if (u - 0.62).powi(2) + (v - 0.3).powi(2) < 0.18f64.powi(2) {
                px = [0.9, 0.8, 0.2];
            }
            let (ru, rv) = (0.7 * (u - 0.3) + 0.7 * (v - 0.72), -0.7 * (u - 0.3) + 0.7 * (v - 0.72));
            if ru.abs() < 0.13 && rv.abs() < 0.13 {
                px = [0.1, 0.25, 0.7];
            }
            if (0.05..0.95).contains(&u) && (v - 0.92).abs() < 0.02 {
                px = [1.0; 3];
            }
            img.set_pixel(x, y, px.map(|c| c.clamp(0.0, 1.0)));
        }
    }
    img
}

/// Mode A settings for the 500-splat fit: stronger sparsity and ranking
/// pressure than the defaults so that confidence separates the splats the
/// image actually needs from redundant ones.
pub fn mode_a_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig { iterations: 3000, snapshot_every: 100, seed, ..TrainConfig::default() };
    cfg.weights.lambda_sparse = 0.1;
    cfg.weights.lambda_saliency = 0.1;
    cfg.saliency.quantile = 0.4;
    cfg
}

/// Frozen 3D scene whose second half are copies of the first half pushed
/// far back along each camera ray, fully hidden behind their twins.
pub struct DuplicateScene {
    pub scene: SplatSet,
    pub n_visible: usize,
    /// Renders of the visible half only, from four slightly shifted cameras.
    pub views: Vec<View>,
}

pub fn duplicate_scene() -> DuplicateScene {
    let mut rng = rng(5);
    let (grid, half, scale, logit, back) = (6, 1.5, 0.3f64, 9.0, 45.0);
    let mut visible = Vec::new();
    for j in 0..grid {
        for i in 0..grid {
            let x = -half + 2.0 * half * i as f64 / (grid - 1) as f64;
            let y = -half + 2.0 * half * j as f64 / (grid - 1) as f64;
            let z = 5.0 + rng.random_range(-0.05..0.05);
            let rgb = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            visible.push(Splat::with_rgb([x, y, z], [scale.ln(); 3], [1.0, 0.0, 0.0, 0.0], rgb, logit));
        }
    }
    let hidden: Vec<Splat> = visible
        .iter()
        .map(|s| {
            let mut d = s.clone();
            let f = (s.position[2] + back) / s.position[2];
            d.position = s.position.map(|v| v * f);
            d
        })
        .collect();
    let n_visible = visible.len();
    let clean = SplatSet::new(visible.clone(), Mode::ThreeD).unwrap();
    let mut all = visible;
    all.extend(hidden);
    let scene = SplatSet::new(all, Mode::ThreeD).unwrap();
    let cams: Vec<Camera> = [(0.0, 0.0), (0.05, 0.0), (0.0, 0.05), (-0.05, -0.05)]
        .into_iter()
        .map(|(dx, dy)| {
            let mut c = Camera::looking_down_z(48, 48, 60.0);
            c.translation = [dx, dy, 0.0];
            c
        })
        .collect();
    let views = self_supervised_views(&clean, &cams, &RenderSettings::default()).unwrap();
    DuplicateScene { scene, n_visible, views }
}

pub fn duplicate_config() -> TrainConfig {
    let mut cfg = TrainConfig { iterations: 500, snapshot_every: 50, lr_confidence: 0.05, ..TrainConfig::default() };
    cfg.weights.lambda_sparse = 0.1;
    cfg
}
