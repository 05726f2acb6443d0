use super::forward::render_forward;
use super::project::project_scene;
use super::RenderSettings;
use crate::error::Result;
use crate::image::Image;
use crate::scene::{Camera, ConfidenceField, SplatSet};

// Samples of the viridis colormap at 0, 1/8, ..., 1.
const VIRIDIS: [[f64; 3]; 9] = [
    [0.267_004, 0.004_874, 0.329_415],
    [0.282_623, 0.140_926, 0.457_517],
    [0.253_935, 0.265_254, 0.529_983],
    [0.206_756, 0.371_758, 0.553_117],
    [0.163_625, 0.471_133, 0.558_148],
    [0.127_568, 0.566_949, 0.550_556],
    [0.134_692, 0.658_636, 0.517_649],
    [0.266_941, 0.748_751, 0.440_573],
    [0.993_248, 0.906_157, 0.143_936],
];

/// Viridis-style color for a value in `[0, 1]`: dark at 0, bright at 1.
pub fn colormap(value: f64) -> [f64; 3] {
    let v = value.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let i = (v.floor() as usize).min(VIRIDIS.len() - 2);
    let t = v - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
}

/// Render with each splat's color replaced by the colormap of its
/// confidence. Compositing (including opacity modulation) is unchanged.
pub fn render_heatmap(
    scene: &SplatSet,
    camera: Option<&Camera>,
    field: &ConfidenceField,
    settings: &RenderSettings,
) -> Result<Image> {
    field.check_matches(scene)?;
    let mut projected = project_scene(scene, camera, settings)?;
    let confidences = field.confidences();
    for (item, &c) in projected.items.iter_mut().zip(&confidences) {
        if let Some(p) = item {
            p.view_color = colormap(c);
        }
    }
    let (img, _) = render_forward(&projected, Some(&confidences), &scene.opacity_logits(), settings)?;
    Ok(img)
}
