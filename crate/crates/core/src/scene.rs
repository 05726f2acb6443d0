//! Domain types shared across the crate.

use serde::{Deserialize, Serialize};

use crate::betaconf;
use crate::error::{Error, Result};

/// Highest supported spherical-harmonics degree.
pub const MAX_SH_DEGREE: u8 = 3;

/// Number of SH coefficients per channel for a degree.
pub fn sh_coeffs_for_degree(degree: u8) -> usize {
    let d = degree as usize + 1;
    d * d
}

/// Zeroth-order SH basis constant.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

/// Convert a plain RGB value to the DC coefficient that reproduces it.
pub fn rgb_to_sh_dc(rgb: f64) -> f64 {
    (rgb - 0.5) / SH_C0
}

pub fn sh_dc_to_rgb(dc: f64) -> f64 {
    dc * SH_C0 + 0.5
}

/// Whether a scene is a flat image (identity projection) or a 3D scene
/// viewed through pinhole cameras.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Positions are pixel coordinates on a `width x height` canvas.
    TwoD { width: usize, height: usize },
    ThreeD,
}

/// One anisotropic Gaussian primitive.
///
/// Colors are always stored as an SH block; plain RGB is the degree-0 case
/// (see [`Splat::set_rgb`]). Coefficients are coefficient-major:
/// `sh[3 * k + channel]`.
///
/// In 2D mode `position[2]` is 0, `log_scale[2]` is unused and the rotation
/// is a quaternion about +z whose angle is the in-plane orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat {
    pub position: [f64; 3],
    pub log_scale: [f64; 3],
    /// Quaternion `(w, x, y, z)`, normalized on use.
    pub rotation: [f64; 4],
    pub sh: Vec<f64>,
    pub opacity_logit: f64,
}

impl Splat {
    /// A degree-0 splat with the given RGB color.
    pub fn with_rgb(position: [f64; 3], log_scale: [f64; 3], rotation: [f64; 4], rgb: [f64; 3], opacity_logit: f64) -> Self {
        Self {
            position,
            log_scale,
            rotation,
            sh: rgb.iter().map(|&c| rgb_to_sh_dc(c)).collect(),
            opacity_logit,
        }
    }

    /// A 2D splat at pixel position `(x, y)` with in-plane angle `theta`.
    pub fn new_2d(xy: [f64; 2], log_scale: [f64; 2], theta: f64, rgb: [f64; 3], opacity_logit: f64) -> Self {
        Self::with_rgb(
            [xy[0], xy[1], 0.0],
            [log_scale[0], log_scale[1], 0.0],
            quat_from_angle_z(theta),
            rgb,
            opacity_logit,
        )
    }

    pub fn set_rgb(&mut self, rgb: [f64; 3]) {
        for (c, v) in rgb.iter().enumerate() {
            self.sh[c] = rgb_to_sh_dc(*v);
        }
    }

    /// Color of the DC term alone.
    pub fn base_rgb(&self) -> [f64; 3] {
        [sh_dc_to_rgb(self.sh[0]), sh_dc_to_rgb(self.sh[1]), sh_dc_to_rgb(self.sh[2])]
    }

    pub fn normalized_rotation(&self) -> [f64; 4] {
        normalize_quat(self.rotation)
    }

    /// In-plane angle of a 2D splat.
    pub fn angle_2d(&self) -> f64 {
        let q = self.normalized_rotation();
        2.0 * q[3].atan2(q[0])
    }

    pub fn opacity(&self) -> f64 {
        betaconf::sigmoid(self.opacity_logit)
    }

    pub fn sh_degree(&self) -> Option<u8> {
        (0..=MAX_SH_DEGREE).find(|&d| 3 * sh_coeffs_for_degree(d) == self.sh.len())
    }
}

pub fn quat_from_angle_z(theta: f64) -> [f64; 4] {
    let h = 0.5 * theta;
    [h.cos(), 0.0, 0.0, h.sin()]
}

pub fn normalize_quat(q: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return [1.0, 0.0, 0.0, 0.0];
    }
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_to_matrix(q: [f64; 4]) -> [[f64; 3]; 3] {
    let [w, x, y, z] = normalize_quat(q);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// An ordered collection of splats sharing one color representation.
///
/// An empty set is representable (a prune may remove everything); loaders,
/// savers and the training loops reject it.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatSet {
    pub splats: Vec<Splat>,
    pub mode: Mode,
    pub sh_degree: u8,
}

impl SplatSet {
    pub fn new(splats: Vec<Splat>, mode: Mode) -> Result<Self> {
        let sh_degree = match splats.first() {
            Some(s) => s
                .sh_degree()
                .ok_or_else(|| Error::InvalidInput(format!("splat 0 has {} SH values", s.sh.len())))?,
            None => 0,
        };
        let expected = 3 * sh_coeffs_for_degree(sh_degree);
        for (i, s) in splats.iter().enumerate() {
            if s.sh.len() != expected {
                return Err(Error::InvalidInput(format!(
                    "splat {i} has {} SH values, expected {expected} (homogeneous color representation)",
                    s.sh.len()
                )));
            }
            if s.log_scale.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("splat {i} has a non-finite log scale")));
            }
        }
        if let Mode::TwoD { width, height } = mode {
            if width == 0 || height == 0 {
                return Err(Error::InvalidInput("2D canvas must be at least 1x1".into()));
            }
        }
        Ok(Self { splats, mode, sh_degree })
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    pub fn opacity_logits(&self) -> Vec<f64> {
        self.splats.iter().map(|s| s.opacity_logit).collect()
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            splats: indices.iter().map(|&i| self.splats[i].clone()).collect(),
            mode: self.mode,
            sh_degree: self.sh_degree,
        }
    }
}

/// Raw, pre-softplus Beta parameters for every splat.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceField {
    pub raw_alpha: Vec<f64>,
    pub raw_beta: Vec<f64>,
}

impl ConfidenceField {
    pub fn new(raw_alpha: Vec<f64>, raw_beta: Vec<f64>) -> Result<Self> {
        if raw_alpha.len() != raw_beta.len() {
            return Err(Error::shape(raw_alpha.len(), raw_beta.len()));
        }
        if raw_alpha.iter().chain(&raw_beta).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("confidence parameters must be finite".into()));
        }
        Ok(Self { raw_alpha, raw_beta })
    }

    /// Every splat at Beta(1, 1): confidence 0.5, maximal entropy.
    pub fn uniform(n: usize) -> Self {
        let raw = betaconf::softplus_inv(1.0);
        Self { raw_alpha: vec![raw; n], raw_beta: vec![raw; n] }
    }

    /// Field whose every confidence is `c` (with `alpha + beta = 2`).
    pub fn constant(n: usize, c: f64) -> Self {
        let a = 2.0 * c;
        let b = 2.0 - a;
        let ra = betaconf::softplus_inv((a - betaconf::CONFIDENCE_EPS).max(1e-12));
        let rb = betaconf::softplus_inv((b - betaconf::CONFIDENCE_EPS).max(1e-12));
        Self { raw_alpha: vec![ra; n], raw_beta: vec![rb; n] }
    }

    pub fn len(&self) -> usize {
        self.raw_alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_alpha.is_empty()
    }

    pub fn confidence(&self, i: usize) -> f64 {
        betaconf::confidence(self.raw_alpha[i], self.raw_beta[i])
    }

    pub fn confidences(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.confidence(i)).collect()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            raw_alpha: indices.iter().map(|&i| self.raw_alpha[i]).collect(),
            raw_beta: indices.iter().map(|&i| self.raw_beta[i]).collect(),
        }
    }

    pub(crate) fn check_matches(&self, scene: &SplatSet) -> Result<()> {
        if self.len() != scene.len() {
            return Err(Error::shape(format!("{} confidence entries", scene.len()), self.len()));
        }
        Ok(())
    }
}

/// Pinhole camera. World-to-camera transform `x_cam = R x_world + t`;
/// +z looks forward, +y points down the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub rotation_world_to_cam: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Identity pose with the principal point at the image center.
    pub fn looking_down_z(width: usize, height: usize, focal: f64) -> Self {
        Self {
            rotation_world_to_cam: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("camera width and height must be >= 1".into()));
        }
        if orthonormality_error(&self.rotation_world_to_cam) > 1e-6 {
            return Err(Error::InvalidInput("camera rotation is not orthonormal".into()));
        }
        Ok(())
    }

    pub fn world_to_cam(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation_world_to_cam;
        let mut out = self.translation;
        for (row, o) in r.iter().zip(out.iter_mut()) {
            *o += row[0] * p[0] + row[1] * p[1] + row[2] * p[2];
        }
        out
    }

    /// Camera center in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> [f64; 3] {
        let r = &self.rotation_world_to_cam;
        let t = self.translation;
        let mut c = [0.0; 3];
        for (j, cj) in c.iter_mut().enumerate() {
            *cj = -(r[0][j] * t[0] + r[1][j] * t[1] + r[2][j] * t[2]);
        }
        c
    }
}

/// Max absolute entry of `RᵀR - I`.
pub fn orthonormality_error(r: &[[f64; 3]; 3]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

/// A camera (absent for 2D scenes) paired with the image it should see.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub camera: Option<Camera>,
    pub target: crate::image::Image,
}

/// Weights of the confidence regularizers in the total objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_sparse: f64,
    pub lambda_entropy: f64,
    pub lambda_saliency: f64,
    /// Share of `1 - SSIM` in the reconstruction loss; the rest is L1.
    pub recon_ssim_mix: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_sparse: 0.01, lambda_entropy: 0.001, lambda_saliency: 0.01, recon_ssim_mix: 0.2 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("loss.lambda_sparse", self.lambda_sparse),
            ("loss.lambda_entropy", self.lambda_entropy),
            ("loss.lambda_saliency", self.lambda_saliency),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config { key: key.into(), message: format!("must be finite and >= 0, got {v}") });
            }
        }
        if !(0.0..=1.0).contains(&self.recon_ssim_mix) {
            return Err(Error::Config {
                key: "loss.recon_ssim_mix".into(),
                message: format!("must lie in [0, 1], got {}", self.recon_ssim_mix),
            });
        }
        Ok(())
    }
}

/// Pair sampling for the saliency ranking loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaliencyConfig {
    pub pairs_per_step: usize,
    /// Fraction of splats in each of the top and bottom pools.
    pub quantile: f64,
    /// EMA decay of the per-splat saliency accumulator; 0 disables smoothing.
    pub ema_decay: f64,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self { pairs_per_step: 256, quantile: 0.25, ema_decay: 0.9 }
    }
}

impl SaliencyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pairs_per_step == 0 {
            return Err(Error::Config { key: "saliency.pairs_per_step".into(), message: "must be positive".into() });
        }
        if !(self.quantile > 0.0 && self.quantile <= 0.5) {
            return Err(Error::Config {
                key: "saliency.quantile".into(),
                message: format!("must lie in (0, 0.5], got {}", self.quantile),
            });
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config {
                key: "saliency.ema_decay".into(),
                message: format!("must lie in [0, 1), got {}", self.ema_decay),
            });
        }
        Ok(())
    }
}

/// One threshold of a quality/size sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub kept: usize,
    /// `f64::INFINITY` when the render matches its target exactly.
    #[serde(with = "crate::io::report::inf_as_string")]
    pub psnr: f64,
    pub ssim: f64,
    pub sqr: f64,
    pub acs: f64,
}
