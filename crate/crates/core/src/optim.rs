//! Bias-corrected Adam, shared by the text classifier and the expression GAN.

use num_traits::Float;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam { lr, beta1, beta2, eps: 1e-8 }
    }

    /// Classifier defaults: lr 1e-3, betas (0.9, 0.999).
    pub fn classifier() -> Self {
        Adam::new(1e-3, 0.9, 0.999)
    }

    /// GAN defaults: lr 1e-4, betas (0.5, 0.999).
    pub fn gan() -> Self {
        Adam::new(1e-4, 0.5, 0.999)
    }

    /// Applies one update to `params` in place and advances `state`.
    ///
    /// # Panics
    ///
    /// Panics if `params`, `grads` and the state moments differ in length.
    pub fn step<F: Float>(&self, params: &mut [F], grads: &[F], state: &mut AdamState<F>) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
        assert_eq!(params.len(), state.m.len(), "optimizer state length mismatch");
        state.t += 1;
        let t = state.t as i32;
        let c = |v: f64| F::from(v).expect("finite constant");
        let b1 = c(self.beta1);
        let b2 = c(self.beta2);
        let one = F::one();
        let bc1 = c(1.0 - self.beta1.powi(t));
        let bc2 = c(1.0 - self.beta2.powi(t));
        let lr = c(self.lr);
        let eps = c(self.eps);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<F> {
    pub m: Vec<F>,
    pub v: Vec<F>,
    pub t: u64,
}

impl<F: Float> AdamState<F> {
    pub fn zeros(len: usize) -> Self {
        AdamState { m: vec![F::zero(); len], v: vec![F::zero(); len], t: 0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let adam = Adam::new(0.01, 0.9, 0.999);
        let mut p = [1.0f64];
        let mut s = AdamState::zeros(1);
        adam.step(&mut p, &[1.0], &mut s);
        assert!((p[0] - (1.0 - 0.01)).abs() < 1e-8);
        let mut p = [1.0f64];
        let mut s = AdamState::zeros(1);
        adam.step(&mut p, &[-3.0], &mut s);
        assert!((p[0] - 1.01).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let adam = Adam::gan();
        let mut p = [0.5f32, -2.0];
        let mut s = AdamState::zeros(2);
        adam.step(&mut p, &[0.0, 0.0], &mut s);
        assert_eq!(p, [0.5, -2.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn two_steps_match_hand_unroll() {
        let (lr, b1, b2, eps) = (0.1f64, 0.9f64, 0.999f64, 1e-8f64);
        let adam = Adam { lr, beta1: b1, beta2: b2, eps };
        let mut p = [0.0f64, 0.0];
        let mut s = AdamState::zeros(2);
        adam.step(&mut p, &[1.0, -1.0], &mut s);
        adam.step(&mut p, &[1.0, -1.0], &mut s);

        // Scalar unroll for g = +1 twice.
        let m1 = (1.0 - b1) * 1.0;
        let v1 = (1.0 - b2) * 1.0;
        let x1 = -lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + (1.0 - b1);
        let v2 = b2 * v1 + (1.0 - b2);
        let x2 = x1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);
        assert!((p[0] - x2).abs() < 1e-12);
        assert!((p[1] + x2).abs() < 1e-12);
    }
}
