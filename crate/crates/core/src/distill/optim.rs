use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;
use crate::{Error, Result};

pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

fn check_shapes(params: &[f64], grad: &[f64]) -> Result<()> {
    if params.len() != grad.len() {
        return Err(Error::Dimension { expected: params.len(), got: grad.len() });
    }
    Ok(())
}

/// One Adam update with bias correction.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, lr: f64, betas: (f64, f64)) -> Result<()> {
    check_shapes(params, grad)?;
    if state.m.len() != params.len() {
        return Err(Error::Dimension { expected: params.len(), got: state.m.len() });
    }
    let (b1, b2) = betas;
    state.t += 1;
    let bc1 = 1.0 - libm::pow(b1, state.t as f64);
    let bc2 = 1.0 - libm::pow(b2, state.t as f64);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (sqrt(v_hat) + ADAM_EPSILON);
    }
    Ok(())
}

/// `params -= lr * grad`.
pub fn sgd_step(params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
    check_shapes(params, grad)?;
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut params = vec![0.5, -1.0, 2.0];
        let before = params.clone();
        let mut state = AdamState::new(3);
        for _ in 0..5 {
            adam_step(&mut params, &[0.0; 3], &mut state, 0.1, (0.9, 0.999)).unwrap();
            sgd_step(&mut params, &[0.0; 3], 0.1).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn sgd_unit_rate() {
        let mut params = vec![1.0, 2.0];
        sgd_step(&mut params, &[0.25, -0.5], 1.0).unwrap();
        assert_eq!(params, vec![0.75, 2.5]);
        assert!(sgd_step(&mut params, &[1.0], 1.0).is_err());
    }

    #[test]
    fn adam_first_step_moves_each_coordinate_by_lr() {
        // m_hat = g and v_hat = g^2 at t = 1, so the step is lr * g / (|g| + eps)
        let grad = [3.0, -0.02, 1e-3];
        let mut params = vec![0.0; 3];
        let mut state = AdamState::new(3);
        adam_step(&mut params, &grad, &mut state, 0.01, (0.9, 0.999)).unwrap();
        for (p, g) in params.iter().zip(grad) {
            let expected = -0.01 * g / (g.abs() + ADAM_EPSILON);
            assert!((p - expected).abs() < 1e-15);
            assert!((p.abs() - 0.01).abs() < 1e-7);
        }
        assert_eq!(state.steps(), 1);
    }

    #[test]
    fn adam_state_shape_is_checked() {
        let mut params = vec![0.0; 2];
        let mut state = AdamState::new(3);
        assert!(adam_step(&mut params, &[0.0; 2], &mut state, 0.1, (0.9, 0.999)).is_err());
    }
}
