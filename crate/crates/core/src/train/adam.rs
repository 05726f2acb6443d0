use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bias-corrected Adam moments for one parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::shape(format!("{} parameters", state.m.len()), params.len()));
    }
    if grads.len() != params.len() {
        return Err(Error::shape(format!("{} gradients", params.len()), grads.len()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = AdamState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 3.0];
        adam_step(&mut s, &mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::new(2, 0.01);
        let mut p = vec![0.5, 0.5];
        adam_step(&mut s, &mut p, &[1.0, 1.0]).unwrap();
        assert!((p[0] - 0.49).abs() < 1e-9);
        assert_eq!(p[0], p[1]);
        let mut p = vec![0.0];
        let mut s = AdamState::new(1, 0.01);
        adam_step(&mut s, &mut p, &[-250.0]).unwrap();
        assert!((p[0] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut s = AdamState::new(1, 0.05);
        let mut p = vec![3.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0)];
            adam_step(&mut s, &mut p, &g).unwrap();
        }
        assert!((p[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn shape_errors() {
        let mut s = AdamState::new(2, 0.1);
        assert!(adam_step(&mut s, &mut [0.0; 3], &[0.0; 3]).is_err());
        assert!(adam_step(&mut s, &mut [0.0; 2], &[0.0; 1]).is_err());
        assert_eq!(s.step, 0);
    }
}
