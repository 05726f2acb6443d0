mod common;

use std::path::{Path, PathBuf};

use common::*;
use confsplat::io::{
    encode_ply, load_cameras, load_config, load_ply, parse_config, parse_ply, read_image, save_cameras, save_ply,
    sweep_csv, write_image, CameraEntry, Config,
};
use confsplat::scene::quat_from_angle_z;
use confsplat::{Camera, Error, Image, Mode, SplatSet, SweepRow};
use proptest::prelude::*;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

#[test]
fn golden_file_decodes_to_known_values() {
    let loaded = load_ply(data("two_splats_conf.ply")).unwrap();
    let scene = &loaded.scene;
    assert_eq!((scene.len(), scene.sh_degree, scene.mode), (2, 1, Mode::ThreeD));
    let s = &scene.splats[0];
    assert_eq!(s.position, [1.0, 2.0, 3.0]);
    assert_eq!(s.log_scale, [-1.0, -2.0, -3.0]);
    assert_eq!(s.rotation, [1.0, 0.0, 0.0, 0.0]);
    assert_eq!(s.opacity_logit, 0.75);
    // interleaved rgb per basis function; the file stores red first
    assert_eq!(s.sh, vec![0.5, -0.25, 1.0, 0.125, -0.125, 0.0625, 0.25, -0.25, 0.0, 0.375, -0.375, -0.0625]);
    assert_eq!(scene.splats[1].sh[3..], [1.0, 4.0, 7.0, 2.0, 5.0, 8.0, 3.0, 6.0, 9.0]);
    let field = loaded.field.unwrap();
    assert_eq!(field.raw_alpha, vec![0.5, 2.0]);
    assert_eq!(field.raw_beta, vec![-1.5, 2.0]);
    assert_eq!(field.confidence(1), 0.5);
}

#[test]
fn golden_file_re_encodes_byte_for_byte() {
    let bytes = std::fs::read(data("two_splats_conf.ply")).unwrap();
    let loaded = parse_ply(&bytes).unwrap();
    assert_eq!(encode_ply(&loaded.scene, loaded.field.as_ref(), false).unwrap(), bytes);
}

#[test]
fn reference_layout_without_confidence_loads() {
    let loaded = load_ply(data("reference_deg3.ply")).unwrap();
    assert!(loaded.field.is_none());
    assert_eq!(loaded.scene.sh_degree, 3);
    let s = &loaded.scene.splats[1];
    assert_eq!(s.position, [0.25, -1.0, 4.0]);
    assert_eq!(s.rotation, [0.0, 0.0, 0.0, 1.0]);
    for c in 0..3 {
        for k in 0..15 {
            assert_eq!(s.sh[3 * (k + 1) + c], (0.01 * (c * 15 + k) as f64) as f32 as f64);
        }
    }
}

#[test]
fn thousand_splats_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.ply");
    let (scene, field) = random_f32_scene(1000, 3, 8);
    save_ply(&scene, Some(&field), &path, true).unwrap();
    let back = load_ply(&path).unwrap();
    assert_eq!(back.scene, scene);
    assert_eq!(back.field.unwrap(), field);
}

#[test]
fn truncated_file_names_the_missing_vertex() {
    let bytes = std::fs::read(data("two_splats_conf.ply")).unwrap();
    let err = parse_ply(&bytes[..bytes.len() - 10]).unwrap_err();
    assert!(matches!(err, Error::Ply { .. }));
    assert!(err.to_string().contains("vertex element 1 of 2"), "{err}");
}

#[test]
fn two_d_scene_round_trips_with_its_canvas() {
    let mut r = rng(4);
    let scene = random_scene_2d(5, 20, 10, &mut r);
    let scene = SplatSet::new(
        scene
            .splats
            .into_iter()
            .map(|mut s| {
                s.position = s.position.map(|v| v as f32 as f64);
                s.log_scale = s.log_scale.map(|v| v as f32 as f64);
                s.rotation = quat_from_angle_z(0.0);
                s.sh = s.sh.iter().map(|&v| v as f32 as f64).collect();
                s.opacity_logit = s.opacity_logit as f32 as f64;
                s
            })
            .collect(),
        scene.mode,
    )
    .unwrap();
    let back = parse_ply(&encode_ply(&scene, None, false).unwrap()).unwrap();
    assert_eq!(back.scene, scene);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn round_trip_any_degree(seed in 0u64..100_000, degree in 0u8..=3, n in 1usize..20, conf: bool) {
        let (scene, field) = random_f32_scene(n, degree, seed);
        let back = parse_ply(&encode_ply(&scene, conf.then_some(&field), false).unwrap()).unwrap();
        prop_assert_eq!(back.scene, scene);
        prop_assert_eq!(back.field, conf.then_some(field));
    }
}

#[test]
fn cameras_round_trip_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let mut cam = Camera::looking_down_z(32, 24, 30.0);
    cam.rotation_world_to_cam = confsplat::scene::quat_to_matrix([0.9, 0.1, -0.3, 0.2]);
    cam.translation = [0.5, -1.0, 2.0];
    let entries = vec![
        CameraEntry { id: 3, camera: cam.clone(), image: Some(PathBuf::from("views/a.png")) },
        CameraEntry { id: 7, camera: Camera::looking_down_z(8, 8, 10.0), image: None },
    ];
    let path = dir.path().join("cams.json");
    save_cameras(&entries, &path).unwrap();
    let back = load_cameras(&path).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0].id, 3);
    assert_eq!(back[0].image.as_deref(), Some(dir.path().join("views/a.png").as_path()));
    for i in 0..3 {
        for j in 0..3 {
            assert!((back[0].camera.rotation_world_to_cam[i][j] - cam.rotation_world_to_cam[i][j]).abs() < 1e-12);
        }
    }
    assert_eq!(back[0].camera.translation, cam.translation);
    assert_eq!(back[1].image, None);
}

#[test]
fn duplicate_camera_ids_and_reflections_are_rejected() {
    let cam = r#"{"id": 1, "width": 4, "height": 4, "fx": 5, "fy": 5, "cx": 2, "cy": 2,
        "rotation": [1,0,0, 0,1,0, 0,0,1], "translation": [0,0,0]}"#;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, format!("[{cam}, {cam}]")).unwrap();
    assert!(load_cameras(&path).unwrap_err().to_string().contains("duplicate"));
    std::fs::write(&path, format!("[{}]", cam.replace("0,0,1]", "0,0,-1]"))).unwrap();
    assert!(load_cameras(&path).unwrap_err().to_string().contains("reflection"));
}

#[test]
fn config_files_override_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "[train]\niterations = 7\n[loss]\nlambda_sparse = 0.5\n[render]\nbackground = [1.0, 1.0, 1.0]\n").unwrap();
    let cfg = load_config(&path).unwrap();
    assert_eq!(cfg.train.iterations, 7);
    assert_eq!(cfg.train.weights.lambda_sparse, 0.5);
    assert_eq!(cfg.render.background, [1.0; 3]);
    assert_ne!(cfg.hash, Config::default().hash);
    assert_eq!(cfg.hash, parse_config(&std::fs::read_to_string(&path).unwrap()).unwrap().hash);
}

#[test]
fn config_errors_name_the_key() {
    let err = parse_config("[train]\nlearning_rate = 1\n").unwrap_err().to_string();
    assert!(err.contains("learning_rate"), "{err}");
    let err = parse_config("[saliency]\nquantile = 0.9\n").unwrap_err().to_string();
    assert!(err.contains("saliency.quantile"), "{err}");
    let err = parse_config("[render]\nalpha_max = 2.0\n").unwrap_err().to_string();
    assert!(err.contains("alpha_max"), "{err}");
}

#[test]
fn png_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("img.png");
    let mut img = Image::new(5, 3);
    img.set_pixel(4, 2, [1.0, 0.5, 0.0]);
    write_image(&img, &path).unwrap();
    let back = read_image(&path).unwrap();
    assert_eq!(back.pixel(4, 2), [1.0, 128.0 / 255.0, 0.0]);
    assert!(read_image(dir.path().join("missing.png")).is_err());
}

#[test]
fn sweep_csv_writes_inf() {
    let rows = [SweepRow { tau: 0.0, kept: 4, psnr: f64::INFINITY, ssim: 1.0, sqr: 0.0, acs: 0.625 }];
    assert_eq!(sweep_csv(&rows), "tau,kept,psnr_db,ssim,sqr,acs\n0.000000,4,inf,1.000000,0.000000,0.625000\n");
}
