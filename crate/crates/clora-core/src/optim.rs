//! Adam optimizer state and update step.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-parameter Adam state: first/second moment estimates plus step count.
///
/// Moments are shape-congruent with the parameter they track. The state is
/// mutated in place and must stay confined to one logical thread of control
/// per parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Matrix,
    second_moment: Matrix,
    step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Fresh state with the standard defaults (beta1=0.9, beta2=0.999,
    /// eps=1e-8) for a `rows x cols` parameter.
    pub fn new(rows: usize, cols: usize, lr: f64) -> Self {
        AdamState {
            first_moment: Matrix::zeros(rows, cols),
            second_moment: Matrix::zeros(rows, cols),
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn with_hyperparams(mut self, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::Config(format!(
                "adam betas must lie in [0, 1): got beta1={beta1}, beta2={beta2}"
            )));
        }
        if eps <= 0.0 {
            return Err(Error::Config(format!(
                "adam eps must be positive: got {eps}"
            )));
        }
        self.beta1 = beta1;
        self.beta2 = beta2;
        self.eps = eps;
        Ok(self)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &Matrix {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &Matrix {
        &self.second_moment
    }

    /// One bias-corrected Adam update of `param` in place.
    pub fn step(&mut self, param: &mut Matrix, grad: &Matrix) -> Result<()> {
        if param.shape() != grad.shape() {
            return Err(Error::shape(
                "adam_step",
                param.shape_str(),
                grad.shape_str(),
            ));
        }
        if param.shape() != self.first_moment.shape() {
            return Err(Error::shape(
                "adam_step state",
                self.first_moment.shape_str(),
                param.shape_str(),
            ));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let m = self.first_moment.data_mut();
        let v = self.second_moment.data_mut();
        let p = param.data_mut();
        let g = grad.data();
        for i in 0..p.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_fresh_param_unchanged() {
        let mut param = Matrix::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
        let before = param.clone();
        let grad = Matrix::zeros(1, 3);
        let mut state = AdamState::new(1, 3, 0.01);
        for _ in 0..5 {
            state.step(&mut param, &grad).unwrap();
        }
        assert_eq!(param, before);
        assert_eq!(state.step_count(), 5);
    }

    #[test]
    fn moments_decay_toward_zero_without_gradient() {
        let mut param = Matrix::zeros(1, 1);
        let one = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let zero = Matrix::zeros(1, 1);
        let mut state = AdamState::new(1, 1, 0.0);
        state.step(&mut param, &one).unwrap();
        let m1 = state.first_moment().get(0, 0).abs();
        for _ in 0..50 {
            state.step(&mut param, &zero).unwrap();
        }
        let m2 = state.first_moment().get(0, 0).abs();
        assert!(m2 < m1 * 1e-2, "first moment {m1} did not decay: {m2}");
    }

    #[test]
    fn first_step_matches_hand_evaluated_formula() {
        // scalar param=0, grad=1, lr=0.1, defaults:
        // m_hat = 1, v_hat = 1 => param = -0.1 / (1 + 1e-8)
        let mut param = Matrix::zeros(1, 1);
        let grad = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let mut state = AdamState::new(1, 1, 0.1);
        state.step(&mut param, &grad).unwrap();
        assert!(
            (param.get(0, 0) - (-0.1)).abs() < 1e-6,
            "got {}",
            param.get(0, 0)
        );
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn step_count_changes_successive_updates() {
        let grad = Matrix::from_vec(1, 1, vec![1.0]).unwrap();

        let mut p_once = Matrix::zeros(1, 1);
        let mut s_once = AdamState::new(1, 1, 0.1);
        s_once.step(&mut p_once, &grad).unwrap();

        let mut p_twice = Matrix::zeros(1, 1);
        let mut s_twice = AdamState::new(1, 1, 0.1);
        s_twice.step(&mut p_twice, &grad).unwrap();
        s_twice.step(&mut p_twice, &grad).unwrap();

        assert_ne!(p_once, p_twice);
        assert_ne!(
            p_twice.get(0, 0),
            2.0 * p_once.get(0, 0),
            "second step must not be a plain repeat of the first"
        );
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut param = Matrix::zeros(2, 2);
        let grad = Matrix::zeros(2, 3);
        let mut state = AdamState::new(2, 2, 0.1);
        assert!(state.step(&mut param, &grad).is_err());
    }
}
