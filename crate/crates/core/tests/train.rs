mod common;

use common::*;
use confsplat::betaconf::confidence_with_grad;
use confsplat::compress::psnr;
use confsplat::io::encode_ply;
use confsplat::losses::{entropy_loss, l1_loss, reconstruction_loss, saliency_ranking_loss, sparsity_loss};
use confsplat::raster::{render_backward, render_scene, RenderSettings};
use confsplat::train::{fit_2d, fit_confidence, self_supervised_views, TrainConfig};
use confsplat::{ConfidenceField, Error, Image, LossWeights, View};

fn quick(iterations: usize) -> TrainConfig {
    TrainConfig { iterations, snapshot_every: 7, ..TrainConfig::default() }
}

fn small_3d(seed: u64) -> (confsplat::SplatSet, Vec<View>) {
    let mut r = rng(seed);
    let (scene, cam) = random_scene_3d(15, 16, 16, &mut r);
    let mut cam2 = cam.clone();
    cam2.translation = [0.2, 0.0, 0.0];
    let views = self_supervised_views(&scene, &[cam, cam2], &RenderSettings::default()).unwrap();
    (scene, views)
}

#[test]
fn single_splat_fills_a_constant_image() {
    let color = [0.6, 0.3, 0.2];
    let target = Image::filled(16, 16, color);
    let settings = RenderSettings { background: color, ..RenderSettings::default() };
    let fit = fit_2d(&target, 1, &quick(300), &settings).unwrap();
    let (img, _, _) = render_scene(&fit.scene, None, Some(&fit.field), &settings).unwrap();
    let l1 = l1_loss(&img, &target).unwrap().value;
    assert!(l1 < 0.01, "L1 {l1}");
}

#[test]
fn fit_2d_improves_reconstruction() {
    let mut r = rng(12);
    let truth = random_scene_2d(30, 24, 24, &mut r);
    let target = self_supervised_views(&truth, &[], &RenderSettings::default()).unwrap().remove(0).target;
    let fit = fit_2d(&target, 40, &quick(150), &RenderSettings::default()).unwrap();
    let first = fit.history.first().unwrap().loss.recon;
    let last = fit.history.last().unwrap().loss.recon;
    assert!(last < 0.5 * first, "{first} -> {last}");
    let (img, _, _) = render_scene(&fit.scene, None, Some(&fit.field), &RenderSettings::default()).unwrap();
    assert!(psnr(&img, &target).unwrap() > 20.0);
}

#[test]
fn stronger_sparsity_lowers_mean_confidence() {
    let target = mode_a_target();
    let mean_after = |lambda: f64| {
        let mut cfg = quick(100);
        cfg.weights.lambda_sparse = lambda;
        let fit = fit_2d(&target, 60, &cfg, &RenderSettings::default()).unwrap();
        fit.field.confidences().iter().sum::<f64>() / 60.0
    };
    let (weak, strong) = (mean_after(0.01), mean_after(1.0));
    assert!(strong < weak, "{strong} vs {weak}");
}

#[test]
fn fits_are_deterministic() {
    let target = mode_a_target();
    let a = fit_2d(&target, 40, &quick(20), &RenderSettings::default()).unwrap();
    let b = fit_2d(&target, 40, &quick(20), &RenderSettings::default()).unwrap();
    assert_eq!(a, b);
    let (scene, views) = small_3d(1);
    let cfg = TrainConfig { cameras_per_step: 1, ..quick(20) };
    let x = fit_confidence(&scene, &views, None, &cfg, &RenderSettings::default()).unwrap();
    let y = fit_confidence(&scene, &views, None, &cfg, &RenderSettings::default()).unwrap();
    assert_eq!(x, y);
    let other = fit_2d(&target, 40, &TrainConfig { seed: 43, ..quick(20) }, &RenderSettings::default()).unwrap();
    assert_ne!(a.scene, other.scene);
}

#[test]
fn history_has_one_row_per_snapshot() {
    let (scene, views) = small_3d(2);
    for (iterations, every) in [(1, 1), (10, 3), (9, 3), (20, 50), (0, 5)] {
        let cfg = TrainConfig { iterations, snapshot_every: every, ..TrainConfig::default() };
        let fit = fit_confidence(&scene, &views, None, &cfg, &RenderSettings::default()).unwrap();
        assert_eq!(fit.history.len(), iterations.div_ceil(every));
        assert!(fit.history.iter().enumerate().all(|(k, h)| h.iteration == k * every));
    }
    let fit = fit_2d(&mode_a_target(), 20, &TrainConfig { iterations: 11, snapshot_every: 4, ..TrainConfig::default() }, &RenderSettings::default()).unwrap();
    assert_eq!(fit.history.len(), 3);
}

#[test]
fn confidence_fitting_leaves_geometry_untouched() {
    let (scene, views) = small_3d(3);
    let before = encode_ply(&scene, None, false).unwrap();
    let snapshot = scene.clone();
    let fit = fit_confidence(&scene, &views, None, &quick(30), &RenderSettings::default()).unwrap();
    assert_eq!(scene, snapshot);
    assert_eq!(encode_ply(&scene, None, false).unwrap(), before);
    assert_ne!(fit.field, ConfidenceField::uniform(scene.len()));
}

#[test]
fn zero_iterations_return_the_initial_field() {
    let (scene, views) = small_3d(4);
    let init = random_field(scene.len(), &mut rng(5));
    let fit = fit_confidence(&scene, &views, Some(&init), &quick(0), &RenderSettings::default()).unwrap();
    assert_eq!(fit.field, init);
    assert!(fit.history.is_empty());
    let fit = fit_confidence(&scene, &views, None, &quick(0), &RenderSettings::default()).unwrap();
    assert_eq!(fit.field, ConfidenceField::uniform(scene.len()));
}

#[test]
fn unregularized_fit_stays_finite() {
    let (scene, views) = small_3d(6);
    let mut cfg = quick(1000);
    cfg.snapshot_every = 100;
    cfg.weights = LossWeights { lambda_sparse: 0.0, lambda_entropy: 0.0, lambda_saliency: 0.0, ..LossWeights::default() };
    let fit = fit_confidence(&scene, &views, None, &cfg, &RenderSettings::default()).unwrap();
    assert!(fit.field.raw_alpha.iter().chain(&fit.field.raw_beta).all(|v| v.is_finite()));
    assert!(fit.history.iter().all(|h| h.loss.total.is_finite()));
    // self-supervised targets are c = 1 renders, so confidence can only rise
    let mean = fit.field.confidences().iter().sum::<f64>() / scene.len() as f64;
    assert!(mean >= 0.5, "{mean}");
    assert!(fit.history.last().unwrap().loss.recon <= fit.history[0].loss.recon);
}

#[test]
fn mismatched_inputs_are_rejected() {
    let (scene, mut views) = small_3d(7);
    let wrong = ConfidenceField::uniform(3);
    assert!(fit_confidence(&scene, &views, Some(&wrong), &quick(1), &RenderSettings::default()).is_err());
    assert!(fit_confidence(&scene, &[], None, &quick(1), &RenderSettings::default()).is_err());
    views[0].target = Image::new(4, 4);
    assert!(matches!(
        fit_confidence(&scene, &views, None, &quick(1), &RenderSettings::default()),
        Err(Error::ShapeMismatch { .. })
    ));
    assert!(fit_2d(&Image::filled(4, 4, [2.0; 3]), 1, &quick(1), &RenderSettings::default()).is_err());
    assert!(fit_2d(&Image::new(4, 4), 0, &quick(1), &RenderSettings::default()).is_err());
}

/// Total loss with fixed ranking pairs, as a function of the field.
fn total(scene: &confsplat::SplatSet, field: &ConfidenceField, target: &Image, pairs: &[(usize, usize)], w: &LossWeights) -> f64 {
    let s = RenderSettings::default();
    let (img, _, _) = render_scene(scene, None, Some(field), &s).unwrap();
    let cs = field.confidences();
    reconstruction_loss(&img, target, w.recon_ssim_mix).unwrap().value
        + w.lambda_sparse * sparsity_loss(&cs).unwrap().0
        + w.lambda_entropy * entropy_loss(field).unwrap().value
        + w.lambda_saliency * saliency_ranking_loss(pairs, &cs).unwrap().0
}

#[test]
fn total_loss_gradient_matches_finite_differences() {
    let mut r = rng(21);
    let scene = random_scene_2d(20, 16, 16, &mut r);
    let target = Image::from_data(16, 16, random_weights(16, 16, &mut r).data.iter().map(|v| 0.5 + 0.5 * v).collect()).unwrap();
    let field = random_field(20, &mut r);
    let pairs: Vec<(usize, usize)> = (0..10).map(|k| (k, 19 - k)).collect();
    let w = LossWeights { lambda_sparse: 0.3, lambda_entropy: 0.2, lambda_saliency: 0.5, ..LossWeights::default() };
    let s = RenderSettings::default();

    let (img, aux, projected) = render_scene(&scene, None, Some(&field), &s).unwrap();
    let rec = reconstruction_loss(&img, &target, w.recon_ssim_mix).unwrap();
    let g = render_backward(&aux, &rec.grad, &scene, &projected, Some(&field), &s).unwrap();
    let cs = field.confidences();
    let (_, d_sparse) = sparsity_loss(&cs).unwrap();
    let (_, d_rank) = saliency_ranking_loss(&pairs, &cs).unwrap();
    let ent = entropy_loss(&field).unwrap();

    let h = 1e-6;
    for i in 0..20 {
        let cg = confidence_with_grad(field.raw_alpha[i], field.raw_beta[i]);
        let dc = w.lambda_sparse * d_sparse[i] + w.lambda_saliency * d_rank[i];
        let analytic = [
            g.raw_alpha[i] + dc * cg.d_raw_alpha + w.lambda_entropy * ent.d_raw_alpha[i],
            g.raw_beta[i] + dc * cg.d_raw_beta + w.lambda_entropy * ent.d_raw_beta[i],
        ];
        for (which, a) in analytic.into_iter().enumerate() {
            let at = |d: f64| {
                let mut f = field.clone();
                if which == 0 { f.raw_alpha[i] += d } else { f.raw_beta[i] += d }
                total(&scene, &f, &target, &pairs, &w)
            };
            let numeric = (at(h) - at(-h)) / (2.0 * h);
            assert!(close(a, numeric, 1e-4, 1e-8), "splat {i} param {which}: {a} vs {numeric}");
        }
    }
}

#[test]
fn beta_one_one_minimizes_negative_entropy_on_the_diagonal() {
    let at = |k: f64| {
        let raw = confsplat::betaconf::softplus_inv(k - confsplat::betaconf::CONFIDENCE_EPS);
        entropy_loss(&ConfidenceField::new(vec![raw], vec![raw]).unwrap()).unwrap().value
    };
    let init = entropy_loss(&ConfidenceField::uniform(1)).unwrap().value;
    assert!(init.abs() < 1e-3);
    for k in [0.6, 0.8, 0.9, 0.99, 1.01, 1.1, 1.5, 2.0, 5.0, 20.0] {
        assert!(at(k) > init, "k = {k}");
    }
}
