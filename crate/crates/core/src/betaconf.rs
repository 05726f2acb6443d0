//! Beta-distribution numerics behind per-splat confidence.
//!
//! A splat's confidence is the mean of `Beta(α, β)` where
//! `α = softplus(raw_alpha) + ε` and `β = softplus(raw_beta) + ε`.
//! The entropy regularizer needs the differential entropy of that
//! distribution and its derivative, which in turn need `ln Γ`, `ψ` and `ψ₁`;
//! all of them live here.

use crate::error::{Error, Result};

/// Floor added after softplus so that α and β never reach zero.
pub const CONFIDENCE_EPS: f64 = 1e-4;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow. Its derivative is [`sigmoid`].
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_grad(x: f64) -> f64 {
    sigmoid(x)
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} requires a finite positive argument, got {x}")))
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn log_gamma(x: f64) -> Result<f64> {
    check_positive("log_gamma", x)?;
    Ok(log_gamma_unchecked(x))
}

fn log_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // Γ(x) = Γ(x + 1) / x keeps the series in its accurate range.
        return log_gamma_unchecked(x + 1.0) - x.ln();
    }
    let z = x - 1.0;
    let mut sum = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        sum += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + sum.ln()
}

// Shift arguments up to this point before using the asymptotic series.
const ASYMPTOTIC_START: f64 = 10.0;

/// Digamma `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma", x)?;
    Ok(digamma_unchecked(x))
}

fn digamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < ASYMPTOTIC_START {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // ln x - 1/(2x) - Σ B₂ₖ / (2k x²ᵏ)
    let series = inv2
        * (1.0 / 12.0
            - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    acc + x.ln() - 0.5 * inv - series
}

/// Trigamma `ψ₁(x) = ψ'(x)` for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64> {
    check_positive("trigamma", x)?;
    Ok(trigamma_unchecked(x))
}

fn trigamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < ASYMPTOTIC_START {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/x + 1/(2x²) + Σ B₂ₖ / x²ᵏ⁺¹
    let series = inv2
        * inv
        * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0)))));
    acc + inv + 0.5 * inv2 + series
}

/// Activated Beta parameters (post-softplus, post-ε).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_positive("Beta alpha", alpha)?;
        check_positive("Beta beta", beta)?;
        Ok(Self { alpha, beta })
    }

    pub fn from_raw(raw_alpha: f64, raw_beta: f64) -> Self {
        Self { alpha: softplus(raw_alpha) + CONFIDENCE_EPS, beta: softplus(raw_beta) + CONFIDENCE_EPS }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Confidence `α / (α + β)` of raw parameters.
pub fn confidence(raw_alpha: f64, raw_beta: f64) -> f64 {
    BetaParams::from_raw(raw_alpha, raw_beta).mean()
}

/// Confidence together with its partials with respect to both raw inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceGrad {
    pub value: f64,
    pub d_raw_alpha: f64,
    pub d_raw_beta: f64,
}

pub fn confidence_with_grad(raw_alpha: f64, raw_beta: f64) -> ConfidenceGrad {
    let p = BetaParams::from_raw(raw_alpha, raw_beta);
    let s = p.alpha + p.beta;
    let s2 = s * s;
    ConfidenceGrad {
        value: p.alpha / s,
        d_raw_alpha: sigmoid(raw_alpha) * p.beta / s2,
        d_raw_beta: -sigmoid(raw_beta) * p.alpha / s2,
    }
}

/// Differential entropy of `Beta(α, β)`:
/// `ln B(α,β) − (α−1)ψ(α) − (β−1)ψ(β) + (α+β−2)ψ(α+β)`.
pub fn beta_entropy(p: BetaParams) -> Result<f64> {
    let BetaParams { alpha: a, beta: b } = BetaParams::new(p.alpha, p.beta)?;
    let ln_b = log_gamma_unchecked(a) + log_gamma_unchecked(b) - log_gamma_unchecked(a + b);
    Ok(ln_b - (a - 1.0) * digamma_unchecked(a) - (b - 1.0) * digamma_unchecked(b)
        + (a + b - 2.0) * digamma_unchecked(a + b))
}

/// `(∂H/∂α, ∂H/∂β)`; chaining through softplus is left to the caller.
pub fn beta_entropy_grad(p: BetaParams) -> Result<(f64, f64)> {
    let BetaParams { alpha: a, beta: b } = BetaParams::new(p.alpha, p.beta)?;
    let shared = (a + b - 2.0) * trigamma_unchecked(a + b);
    Ok((-(a - 1.0) * trigamma_unchecked(a) + shared, -(b - 1.0) * trigamma_unchecked(b) + shared))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GumbelMode {
    Multiplicative,
    Additive,
}

/// Noisy confidence ablation: `σ(c · g / T)` or `σ(c + g / T)`.
///
/// `noise` is a Gumbel sample supplied by the caller (see [`gumbel_from_uniform`]).
pub fn gumbel_confidence_variant(
    raw_alpha: f64,
    raw_beta: f64,
    noise: f64,
    temperature: f64,
    mode: GumbelMode,
) -> Result<f64> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Domain(format!("Gumbel temperature must be positive, got {temperature}")));
    }
    let c = confidence(raw_alpha, raw_beta);
    Ok(match mode {
        GumbelMode::Multiplicative => sigmoid(c * noise / temperature),
        GumbelMode::Additive => sigmoid(c + noise / temperature),
    })
}

/// Gumbel sample `−ln(−ln u)` for `u ∈ (0, 1)`.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    -(-u.ln()).ln()
}

/// ψ(1), exposed for tests and documentation.
pub const DIGAMMA_ONE: f64 = -EULER_GAMMA;
