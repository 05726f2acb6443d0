use crate::error::{Error, Result};
use crate::image::Image;

/// Side length of the SSIM Gaussian window.
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// A scalar image loss and its gradient with respect to the first image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageLoss {
    pub value: f64,
    pub grad: Image,
}

/// Mean absolute difference over all pixels and channels.
pub fn l1_loss(a: &Image, b: &Image) -> Result<ImageLoss> {
    a.check_same_shape(b)?;
    let n = a.data.len() as f64;
    let mut value = 0.0;
    let mut grad = Image::new(a.width, a.height);
    for ((g, x), y) in grad.data.iter_mut().zip(&a.data).zip(&b.data) {
        let d = x - y;
        value += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok(ImageLoss { value: value / n, grad })
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Valid-mode separable correlation of one `w x h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters an `ow x oh` map back to `w x h`.
fn filter_valid_adjoint(map: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = map[y * ow + x];
            for i in 0..SSIM_WINDOW {
                tmp[(y + i) * ow + x] += k[i] * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = tmp[y * ow + x];
            for i in 0..SSIM_WINDOW {
                out[y * w + x + i] += k[i] * v;
            }
        }
    }
    out
}

fn channel(img: &Image, c: usize) -> Vec<f64> {
    img.data.iter().skip(c).step_by(3).copied().collect()
}

/// Mean SSIM over all valid 11×11 windows (Gaussian σ = 1.5) and channels,
/// with its analytic gradient with respect to `a`.
pub fn ssim(a: &Image, b: &Image) -> Result<ImageLoss> {
    a.check_same_shape(b)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {w}x{h}")));
    }
    let k = gaussian_kernel();
    let windows = (w + 1 - SSIM_WINDOW) * (h + 1 - SSIM_WINDOW);
    let scale = 1.0 / (3 * windows) as f64;
    let mut total = 0.0;
    let mut grad = Image::new(w, h);
    for c in 0..3 {
        let x = channel(a, c);
        let y = channel(b, c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mu_x = filter_valid(&x, w, h, &k);
        let mu_y = filter_valid(&y, w, h, &k);
        let e_xx = filter_valid(&xx, w, h, &k);
        let e_yy = filter_valid(&yy, w, h, &k);
        let e_xy = filter_valid(&xy, w, h, &k);

        let mut d_mu = vec![0.0; windows];
        let mut d_exx = vec![0.0; windows];
        let mut d_exy = vec![0.0; windows];
        for i in 0..windows {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = e_xx[i] - mx * mx;
            let var_y = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            let a1 = 2.0 * mx * my + SSIM_C1;
            let a2 = 2.0 * cov + SSIM_C2;
            let b1 = mx * mx + my * my + SSIM_C1;
            let b2 = var_x + var_y + SSIM_C2;
            let s = (a1 * a2) / (b1 * b2);
            total += s;
            d_mu[i] = scale * s * (2.0 * my / a1 - 2.0 * my / a2 - 2.0 * mx / b1 + 2.0 * mx / b2);
            d_exx[i] = -scale * s / b2;
            d_exy[i] = scale * s * 2.0 / a2;
        }
        let g_mu = filter_valid_adjoint(&d_mu, w, h, &k);
        let g_xx = filter_valid_adjoint(&d_exx, w, h, &k);
        let g_xy = filter_valid_adjoint(&d_exy, w, h, &k);
        for p in 0..w * h {
            grad.data[3 * p + c] = g_mu[p] + 2.0 * x[p] * g_xx[p] + y[p] * g_xy[p];
        }
    }
    Ok(ImageLoss { value: total * scale, grad })
}

/// `(1 − mix)·L1 + mix·(1 − SSIM)`.
pub fn reconstruction_loss(render: &Image, target: &Image, mix: f64) -> Result<ImageLoss> {
    if !(0.0..=1.0).contains(&mix) {
        return Err(Error::InvalidInput(format!("SSIM mix must lie in [0, 1], got {mix}")));
    }
    let l1 = l1_loss(render, target)?;
    if mix == 0.0 {
        return Ok(l1);
    }
    let s = ssim(render, target)?;
    let mut grad = l1.grad;
    for (g, sg) in grad.data.iter_mut().zip(&s.grad.data) {
        *g = (1.0 - mix) * *g - mix * sg;
    }
    Ok(ImageLoss { value: (1.0 - mix) * l1.value + mix * (1.0 - s.value), grad })
}
