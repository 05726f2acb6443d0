use crate::betaconf::{beta_entropy, beta_entropy_grad, softplus_grad, BetaParams};
use crate::error::{Error, Result};
use crate::scene::ConfidenceField;

/// Mean confidence and its (constant) per-splat gradient `1/N`.
///
/// Shares its summation with [`crate::compress::acs`], so both agree bit for bit.
pub fn sparsity_loss(confidences: &[f64]) -> Result<(f64, Vec<f64>)> {
    if confidences.is_empty() {
        return Err(Error::InvalidInput("sparsity loss of an empty confidence list".into()));
    }
    let n = confidences.len() as f64;
    Ok((mean(confidences), vec![1.0 / n; confidences.len()]))
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyLoss {
    pub value: f64,
    pub d_raw_alpha: Vec<f64>,
    pub d_raw_beta: Vec<f64>,
}

/// Mean negative Beta entropy over splats, with gradients chained through
/// softplus to the raw parameters.
pub fn entropy_loss(field: &ConfidenceField) -> Result<EntropyLoss> {
    let n = field.len();
    if n == 0 {
        return Err(Error::InvalidInput("entropy loss of an empty field".into()));
    }
    let inv_n = 1.0 / n as f64;
    let mut value = 0.0;
    let mut d_raw_alpha = Vec::with_capacity(n);
    let mut d_raw_beta = Vec::with_capacity(n);
    for (&ra, &rb) in field.raw_alpha.iter().zip(&field.raw_beta) {
        let p = BetaParams::from_raw(ra, rb);
        value -= beta_entropy(p)?;
        let (ga, gb) = beta_entropy_grad(p)?;
        d_raw_alpha.push(-ga * softplus_grad(ra) * inv_n);
        d_raw_beta.push(-gb * softplus_grad(rb) * inv_n);
    }
    Ok(EntropyLoss { value: value * inv_n, d_raw_alpha, d_raw_beta })
}
