//! Adam optimizer with bias correction.

use crate::{Error, Result, Scalar};

/// Optimizer state for one flat parameter vector. Moment buffers live in the
/// weight scalar type; hyperparameters and bias corrections are computed in
/// `f64` and cast once per step.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh state with the standard moment decays (0.9, 0.999) and 1e-8
    /// denominator offset.
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }

    /// Completed update steps.
    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one bias-corrected update in place. Rejects gradients holding
    /// NaN or infinity.
    pub fn step(&mut self, weights: &mut [T], grad: &[T]) -> Result<()> {
        if weights.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                context: "adam step",
                expected: vec![self.m.len()],
                got: vec![weights.len(), grad.len()],
            });
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: "adam gradient",
                index,
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let b1 = T::from64(self.beta1);
        let b2 = T::from64(self.beta2);
        let one_m_b1 = T::from64(1.0 - self.beta1);
        let one_m_b2 = T::from64(1.0 - self.beta2);
        let corr1 = T::from64(1.0 / (1.0 - self.beta1.powi(t)));
        let corr2 = T::from64(1.0 / (1.0 - self.beta2.powi(t)));
        let lr = T::from64(self.learning_rate);
        let eps = T::from64(self.epsilon);
        for i in 0..grad.len() {
            let g = grad[i];
            let m = b1 * self.m[i] + one_m_b1 * g;
            let v = b2 * self.v[i] + one_m_b2 * g * g;
            self.m[i] = m;
            self.v[i] = v;
            let m_hat = m * corr1;
            let v_hat = v * corr2;
            weights[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
