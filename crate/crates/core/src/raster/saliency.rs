use super::forward::RenderAux;
use crate::error::{Error, Result};
use crate::image::Image;

/// Per-splat saliency of one render: `sᵢ = Σ_p wᵢ(p) · ‖∂L_rec/∂C(p)‖₁`.
///
/// The result is a plain value; nothing is differentiated through it.
pub fn accumulate_saliency(aux: &RenderAux, recon_grads: &Image) -> Result<Vec<f64>> {
    if aux.width != recon_grads.width || aux.height != recon_grads.height {
        return Err(Error::AuxMismatch("gradient image does not match the render".into()));
    }
    let mut s = vec![0.0; aux.n_splats];
    for p in 0..aux.width * aux.height {
        let g = &recon_grads.data[3 * p..3 * p + 3];
        let mag = g[0].abs() + g[1].abs() + g[2].abs();
        if mag == 0.0 {
            continue;
        }
        for rec in aux.pixel_contributions(p) {
            s[rec.splat as usize] += rec.weight() * mag;
        }
    }
    Ok(s)
}

/// Exponential moving average of per-splat saliency across steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyTracker {
    pub values: Vec<f64>,
    pub decay: f64,
    seeded: bool,
}

impl SaliencyTracker {
    pub fn new(n: usize, decay: f64) -> Self {
        Self { values: vec![0.0; n], decay, seeded: false }
    }

    /// Merge a fresh observation. The first observation seeds the average.
    pub fn update(&mut self, fresh: &[f64]) -> Result<()> {
        if fresh.len() != self.values.len() {
            return Err(Error::shape(self.values.len(), fresh.len()));
        }
        if !self.seeded {
            self.values.copy_from_slice(fresh);
            self.seeded = true;
            return Ok(());
        }
        for (v, f) in self.values.iter_mut().zip(fresh) {
            *v = self.decay * *v + (1.0 - self.decay) * f;
        }
        Ok(())
    }
}
