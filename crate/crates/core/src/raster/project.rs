use super::sh::evaluate_sh;
use super::{Projected2D, RenderSettings};
use crate::error::{Error, Result};
use crate::scene::{quat_to_matrix, Camera, Mode, Splat, SplatSet};

/// Splats below this view-space depth are culled.
pub const NEAR_PLANE: f64 = 0.01;

/// Projected splats (`None` = culled) plus the canvas they land on.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedScene {
    pub items: Vec<Option<Projected2D>>,
    pub width: usize,
    pub height: usize,
    pub sh_degree: u8,
}

/// 2×2 covariance of a 2D splat: `R(θ) diag(s₀², s₁²) R(θ)ᵀ`.
pub(crate) fn cov_2d_from_params(log_scale: [f64; 2], theta: f64) -> [f64; 3] {
    let s0 = (2.0 * log_scale[0]).exp();
    let s1 = (2.0 * log_scale[1]).exp();
    let (sin, cos) = theta.sin_cos();
    [s0 * cos * cos + s1 * sin * sin, (s0 - s1) * cos * sin, s0 * sin * sin + s1 * cos * cos]
}

/// Identity projection used by 2D scenes.
pub fn project_splat_2d(splat: &Splat, index: usize, sh_degree: u8) -> Result<Projected2D> {
    let view_dir = [0.0, 0.0, 1.0];
    let (view_color, color_clamped) = evaluate_sh(&splat.sh, view_dir, sh_degree)?;
    Ok(Projected2D {
        mean2d: [splat.position[0], splat.position[1]],
        cov2d: cov_2d_from_params([splat.log_scale[0], splat.log_scale[1]], splat.angle_2d()),
        depth: index as f64,
        view_color,
        view_dir,
        color_clamped,
    })
}

/// EWA projection of a 3D splat through a pinhole camera. Returns `None`
/// when the splat is behind the near plane or its mean lies more than 3σ
/// outside the image.
pub fn project_splat(
    splat: &Splat,
    camera: &Camera,
    settings: &RenderSettings,
    sh_degree: u8,
) -> Result<Option<Projected2D>> {
    let [x, y, z] = camera.world_to_cam(splat.position);
    if z <= NEAR_PLANE {
        return Ok(None);
    }
    let mean2d = [camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy];

    // Σ = M Mᵀ with M = R diag(s)
    let r = quat_to_matrix(splat.rotation);
    let s = splat.log_scale.map(f64::exp);
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[i][j] * s[j];
        }
    }
    // T = J W M, a 2×3 matrix; cov2d = T Tᵀ.
    let w = &camera.rotation_world_to_cam;
    let j = [[camera.fx / z, 0.0, -camera.fx * x / (z * z)], [0.0, camera.fy / z, -camera.fy * y / (z * z)]];
    let mut jw = [[0.0; 3]; 2];
    for a in 0..2 {
        for b in 0..3 {
            jw[a][b] = (0..3).map(|k| j[a][k] * w[k][b]).sum();
        }
    }
    let mut t = [[0.0; 3]; 2];
    for a in 0..2 {
        for b in 0..3 {
            t[a][b] = (0..3).map(|k| jw[a][k] * m[k][b]).sum();
        }
    }
    let dot = |p: &[f64; 3], q: &[f64; 3]| p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
    let cov2d = [
        dot(&t[0], &t[0]) + settings.cov_dilation,
        dot(&t[0], &t[1]),
        dot(&t[1], &t[1]) + settings.cov_dilation,
    ];

    let sigma = max_eigenvalue(cov2d).max(0.0).sqrt();
    let (w_img, h_img) = (camera.width as f64, camera.height as f64);
    if mean2d[0] < -3.0 * sigma
        || mean2d[0] > w_img + 3.0 * sigma
        || mean2d[1] < -3.0 * sigma
        || mean2d[1] > h_img + 3.0 * sigma
    {
        return Ok(None);
    }

    let center = camera.center();
    let d = [splat.position[0] - center[0], splat.position[1] - center[1], splat.position[2] - center[2]];
    let n = dot(&d, &d).sqrt();
    let view_dir = if n > 0.0 { [d[0] / n, d[1] / n, d[2] / n] } else { [0.0, 0.0, 1.0] };
    let (view_color, color_clamped) = evaluate_sh(&splat.sh, view_dir, sh_degree)?;
    Ok(Some(Projected2D { mean2d, cov2d, depth: z, view_color, view_dir, color_clamped }))
}

pub(crate) fn max_eigenvalue(cov: [f64; 3]) -> f64 {
    let [a, b, c] = cov;
    let mid = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    mid + disc
}

/// Project every splat of a scene. 2D scenes ignore `camera`; 3D scenes
/// require one.
pub fn project_scene(scene: &SplatSet, camera: Option<&Camera>, settings: &RenderSettings) -> Result<ProjectedScene> {
    match scene.mode {
        Mode::TwoD { width, height } => {
            let items = scene
                .splats
                .iter()
                .enumerate()
                .map(|(i, s)| project_splat_2d(s, i, scene.sh_degree).map(Some))
                .collect::<Result<Vec<_>>>()?;
            Ok(ProjectedScene { items, width, height, sh_degree: scene.sh_degree })
        }
        Mode::ThreeD => {
            let camera = camera.ok_or_else(|| Error::InvalidInput("3D scenes need a camera to render".into()))?;
            camera.validate()?;
            let items = scene
                .splats
                .iter()
                .map(|s| project_splat(s, camera, settings, scene.sh_degree))
                .collect::<Result<Vec<_>>>()?;
            Ok(ProjectedScene { items, width: camera.width, height: camera.height, sh_degree: scene.sh_degree })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn splat_at(p: [f64; 3], sigma: f64) -> Splat {
        Splat::with_rgb(p, [sigma.ln(); 3], [1.0, 0.0, 0.0, 0.0], [0.5; 3], 0.0)
    }

    #[test]
    fn on_axis_lands_on_principal_point() {
        let cam = Camera::looking_down_z(64, 48, 50.0);
        let p = project_splat(&splat_at([0.0, 0.0, 4.0], 0.1), &cam, &RenderSettings::default(), 0)
            .unwrap()
            .unwrap();
        assert_eq!(p.mean2d, [32.0, 24.0]);
        assert_eq!(p.depth, 4.0);
    }

    #[test]
    fn behind_camera_is_culled() {
        let cam = Camera::looking_down_z(64, 48, 50.0);
        let s = RenderSettings::default();
        assert!(project_splat(&splat_at([0.0, 0.0, -1.0], 0.1), &cam, &s, 0).unwrap().is_none());
        assert!(project_splat(&splat_at([0.0, 0.0, 0.005], 0.1), &cam, &s, 0).unwrap().is_none());
        // Far off to the side.
        assert!(project_splat(&splat_at([100.0, 0.0, 1.0], 0.01), &cam, &s, 0).unwrap().is_none());
    }

    /// Numeric Jacobian of the pinhole map, pushed through Σ.
    fn numeric_cov2d(cam: &Camera, p: [f64; 3], cov3: [[f64; 3]; 3]) -> [f64; 3] {
        let proj = |q: [f64; 3]| {
            let c = cam.world_to_cam(q);
            [cam.fx * c[0] / c[2] + cam.cx, cam.fy * c[1] / c[2] + cam.cy]
        };
        let h = 1e-6;
        let mut jac = [[0.0; 3]; 2];
        for k in 0..3 {
            let mut a = p;
            let mut b = p;
            a[k] += h;
            b[k] -= h;
            let (pa, pb) = (proj(a), proj(b));
            jac[0][k] = (pa[0] - pb[0]) / (2.0 * h);
            jac[1][k] = (pa[1] - pb[1]) / (2.0 * h);
        }
        let mut out = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                for i in 0..3 {
                    for j in 0..3 {
                        out[r][c] += jac[r][i] * cov3[i][j] * jac[c][j];
                    }
                }
            }
        }
        [out[0][0], out[0][1], out[1][1]]
    }

    #[test]
    fn isotropic_covariance_matches_numeric_jacobian() {
        let cam = Camera::looking_down_z(64, 64, 40.0);
        let settings = RenderSettings { cov_dilation: 0.3, ..Default::default() };
        let sigma = 0.2;
        let z = 5.0;
        let p = project_splat(&splat_at([0.0, 0.0, z], sigma), &cam, &settings, 0).unwrap().unwrap();
        let expected = (40.0 * sigma / z).powi(2) + 0.3;
        assert!((p.cov2d[0] - expected).abs() < 1e-12);
        assert!((p.cov2d[2] - expected).abs() < 1e-12);
        assert!(p.cov2d[1].abs() < 1e-12);

        // Off-axis, anisotropic, rotated: compare against the numeric Jacobian.
        let mut s = splat_at([0.7, -0.4, 3.0], 0.1);
        s.log_scale = [0.3f64.ln(), 0.1f64.ln(), 0.05f64.ln()];
        s.rotation = [0.9, 0.2, -0.3, 0.1];
        let mut cam = cam;
        cam.rotation_world_to_cam = quat_to_matrix([0.98, 0.05, 0.1, -0.02]);
        cam.translation = [0.1, 0.0, 0.5];
        let settings = RenderSettings { cov_dilation: 0.0, ..Default::default() };
        let got = project_splat(&s, &cam, &settings, 0).unwrap().unwrap().cov2d;
        let r = quat_to_matrix(s.rotation);
        let sc = s.log_scale.map(|v| (2.0 * v).exp());
        let mut cov3 = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                cov3[i][j] = (0..3).map(|k| r[i][k] * sc[k] * r[j][k]).sum();
            }
        }
        let want = numeric_cov2d(&cam, s.position, cov3);
        for k in 0..3 {
            assert!((got[k] - want[k]).abs() < 1e-5 * want[0].abs().max(1.0), "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn cov_2d_params() {
        let c = cov_2d_from_params([2f64.ln(), 0.0], std::f64::consts::FRAC_PI_2);
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[2] - 4.0).abs() < 1e-12 && c[1].abs() < 1e-12);
    }
}
