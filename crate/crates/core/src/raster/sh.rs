use crate::error::{Error, Result};
use crate::scene::{sh_coeffs_for_degree, MAX_SH_DEGREE, SH_C0};

const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Real SH basis values up to `degree` for a unit direction, in the
/// conventional 3DGS ordering.
pub fn sh_basis(dir: [f64; 3], degree: u8) -> Vec<f64> {
    let [x, y, z] = dir;
    let mut out = Vec::with_capacity(sh_coeffs_for_degree(degree.min(MAX_SH_DEGREE)));
    out.push(SH_C0);
    if degree >= 1 {
        out.extend_from_slice(&[-SH_C1 * y, SH_C1 * z, -SH_C1 * x]);
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        out.extend_from_slice(&[
            SH_C2[0] * x * y,
            SH_C2[1] * y * z,
            SH_C2[2] * (2.0 * zz - xx - yy),
            SH_C2[3] * x * z,
            SH_C2[4] * (xx - yy),
        ]);
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        out.extend_from_slice(&[
            SH_C3[0] * y * (3.0 * xx - yy),
            SH_C3[1] * x * y * z,
            SH_C3[2] * y * (4.0 * zz - xx - yy),
            SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            SH_C3[4] * x * (4.0 * zz - xx - yy),
            SH_C3[5] * z * (xx - yy),
            SH_C3[6] * x * (xx - 3.0 * yy),
        ]);
    }
    out
}

/// `Σ cₗₘ Yₗₘ(dir) + 0.5`, clamped at zero. Also reports which channels
/// were clamped.
pub fn evaluate_sh(coeffs: &[f64], dir: [f64; 3], degree: u8) -> Result<([f64; 3], [bool; 3])> {
    if degree > MAX_SH_DEGREE {
        return Err(Error::InvalidInput(format!("SH degree {degree} exceeds {MAX_SH_DEGREE}")));
    }
    let n = sh_coeffs_for_degree(degree);
    if coeffs.len() != 3 * n {
        return Err(Error::shape(3 * n, coeffs.len()));
    }
    let basis = sh_basis(dir, degree);
    let mut rgb = [0.5; 3];
    for (k, y) in basis.iter().enumerate() {
        for (c, v) in rgb.iter_mut().enumerate() {
            *v += coeffs[3 * k + c] * y;
        }
    }
    let mut clamped = [false; 3];
    for (v, cl) in rgb.iter_mut().zip(clamped.iter_mut()) {
        if *v < 0.0 {
            *v = 0.0;
            *cl = true;
        }
    }
    Ok((rgb, clamped))
}
