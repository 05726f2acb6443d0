//! Camera JSON: an array of
//! `{id, width, height, fx, fy, cx, cy, rotation: [9], translation: [3], image?}`.
//!
//! `rotation` is the row-major world-to-camera matrix; +z looks forward and
//! +y points down the image. `image` is relative to the JSON file.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::scene::{orthonormality_error, Camera};

/// Rotations drifting further than this from orthonormal are rejected.
pub const MAX_ROTATION_DRIFT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraEntry {
    pub id: u64,
    pub camera: Camera,
    /// Target image, already resolved against the JSON file's directory.
    pub image: Option<PathBuf>,
}

type Mat3 = [[f64; 3]; 3];

fn mat_inverse_transpose(m: &Mat3) -> Option<Mat3> {
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let c = [
        [cof(1, 2, 1, 2), -cof(1, 2, 0, 2), cof(1, 2, 0, 1)],
        [-cof(0, 2, 1, 2), cof(0, 2, 0, 2), -cof(0, 2, 0, 1)],
        [cof(0, 1, 1, 2), -cof(0, 1, 0, 2), cof(0, 1, 0, 1)],
    ];
    let det = m[0][0] * c[0][0] + m[0][1] * c[0][1] + m[0][2] * c[0][2];
    if det.abs() < 1e-12 {
        return None;
    }
    // inverse = adj / det and adj = cofᵀ, so (inverse)ᵀ = cof / det.
    Some(c.map(|row| row.map(|v| v / det)))
}

/// Nearest orthonormal matrix via the Newton polar iteration
/// `R ← (R + R⁻ᵀ) / 2`.
pub fn reorthonormalize(r: &Mat3) -> Option<Mat3> {
    let mut m = *r;
    for _ in 0..30 {
        let it = mat_inverse_transpose(&m)?;
        let mut next = m;
        for i in 0..3 {
            for j in 0..3 {
                next[i][j] = 0.5 * (m[i][j] + it[i][j]);
            }
        }
        m = next;
        if orthonormality_error(&m) < 1e-15 {
            break;
        }
    }
    Some(m)
}

fn cam_err(path: &Path, message: String) -> Error {
    Error::Cameras { path: path.display().to_string(), message }
}

fn field<'a>(obj: &'a Value, i: usize, key: &str, file: &Path) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| cam_err(file, format!("$[{i}].{key}: missing")))
}

fn number(obj: &Value, i: usize, key: &str, file: &Path) -> Result<f64> {
    let v = field(obj, i, key, file)?;
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| cam_err(file, format!("$[{i}].{key}: expected a finite number, got {v}")))
}

fn positive_int(obj: &Value, i: usize, key: &str, file: &Path) -> Result<u64> {
    let v = field(obj, i, key, file)?;
    v.as_u64()
        .filter(|&x| x > 0)
        .ok_or_else(|| cam_err(file, format!("$[{i}].{key}: expected a positive integer, got {v}")))
}

fn numbers<const N: usize>(obj: &Value, i: usize, key: &str, file: &Path) -> Result<[f64; N]> {
    let v = field(obj, i, key, file)?;
    let arr = v
        .as_array()
        .filter(|a| a.len() == N)
        .ok_or_else(|| cam_err(file, format!("$[{i}].{key}: expected an array of {N} numbers")))?;
    let mut out = [0.0; N];
    for (k, (o, x)) in out.iter_mut().zip(arr).enumerate() {
        *o = x
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| cam_err(file, format!("$[{i}].{key}[{k}]: expected a finite number, got {x}")))?;
    }
    Ok(out)
}

/// Parse camera JSON text. `file` is used for diagnostics and to resolve
/// image paths.
pub fn parse_cameras(text: &str, file: &Path) -> Result<Vec<CameraEntry>> {
    let root: Value = serde_json::from_str(text).map_err(|e| cam_err(file, format!("$: {e}")))?;
    let items = root.as_array().ok_or_else(|| cam_err(file, "$: expected an array of cameras".into()))?;
    let base = file.parent().unwrap_or(Path::new(""));
    let mut out = Vec::with_capacity(items.len());
    for (i, obj) in items.iter().enumerate() {
        if !obj.is_object() {
            return Err(cam_err(file, format!("$[{i}]: expected an object")));
        }
        let id = field(obj, i, "id", file)?
            .as_u64()
            .ok_or_else(|| cam_err(file, format!("$[{i}].id: expected a nonnegative integer")))?;
        if out.iter().any(|e: &CameraEntry| e.id == id) {
            return Err(cam_err(file, format!("$[{i}].id: duplicate camera id {id}")));
        }
        let width = positive_int(obj, i, "width", file)? as usize;
        let height = positive_int(obj, i, "height", file)? as usize;
        let fx = number(obj, i, "fx", file)?;
        let fy = number(obj, i, "fy", file)?;
        if fx <= 0.0 || fy <= 0.0 {
            return Err(cam_err(file, format!("$[{i}]: focal lengths must be positive")));
        }
        let cx = number(obj, i, "cx", file)?;
        let cy = number(obj, i, "cy", file)?;
        let flat: [f64; 9] = numbers(obj, i, "rotation", file)?;
        let translation: [f64; 3] = numbers(obj, i, "translation", file)?;
        let raw = [[flat[0], flat[1], flat[2]], [flat[3], flat[4], flat[5]], [flat[6], flat[7], flat[8]]];
        let drift = orthonormality_error(&raw);
        if drift > MAX_ROTATION_DRIFT {
            return Err(cam_err(file, format!("$[{i}].rotation: not orthonormal (drift {drift:.3e})")));
        }
        let rotation = reorthonormalize(&raw)
            .ok_or_else(|| cam_err(file, format!("$[{i}].rotation: singular matrix")))?;
        if determinant(&rotation) < 0.0 {
            return Err(cam_err(file, format!("$[{i}].rotation: reflection, not a rotation")));
        }
        let image = match obj.get("image") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(base.join(s)),
            Some(other) => return Err(cam_err(file, format!("$[{i}].image: expected a string, got {other}"))),
        };
        let camera = Camera { rotation_world_to_cam: rotation, translation, fx, fy, cx, cy, width, height };
        out.push(CameraEntry { id, camera, image });
    }
    Ok(out)
}

fn determinant(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| cam_err(path, e.to_string()))?;
    parse_cameras(&text, path)
}

/// Write cameras in the same schema. `image` paths are written as given.
pub fn save_cameras(entries: &[CameraEntry], path: impl AsRef<Path>) -> Result<()> {
    let items: Vec<Value> = entries
        .iter()
        .map(|e| {
            let c = &e.camera;
            let mut v = json!({
                "id": e.id,
                "width": c.width,
                "height": c.height,
                "fx": c.fx,
                "fy": c.fy,
                "cx": c.cx,
                "cy": c.cy,
                "rotation": c.rotation_world_to_cam.iter().flatten().collect::<Vec<_>>(),
                "translation": c.translation,
            });
            if let Some(img) = &e.image {
                v["image"] = json!(img.to_string_lossy());
            }
            v
        })
        .collect();
    let text = serde_json::to_string_pretty(&items).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}
