use serde::{Deserialize, Serialize};

use super::store::ParameterStore;
use crate::error::{Error, Result};

/// Adaptive-moment optimizer state for one parameter store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new(0.9, 0.999, 1e-8)
    }
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update from the accumulated gradients and
    /// zeroes them. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParameterStore, learning_rate: f64) -> Result<()> {
        if let Some(t) = store
            .tensors()
            .iter()
            .find(|t| t.grad.iter().any(|g| !g.is_finite()))
        {
            return Err(Error::Numeric {
                name: t.name.clone(),
                message: "non-finite gradient".into(),
            });
        }
        if self.first.is_empty() {
            self.first = store.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != store.len()
            || self.first.iter().zip(store.tensors()).any(|(m, t)| m.len() != t.len())
        {
            return Err(Error::Shape("optimizer state does not match parameter store".into()));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powf(self.step as f64);
        let bc2 = 1.0 - self.beta2.powf(self.step as f64);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for ((t, m), v) in store
            .tensors_mut()
            .iter_mut()
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((w, g), mi), vi) in t.value.iter_mut().zip(&mut t.grad).zip(m).zip(v) {
                *mi = b1 * *mi + (1.0 - b1) * *g;
                *vi = b2 * *vi + (1.0 - b2) * *g * *g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + eps);
                *g = 0.0;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn scalar(value: f64) -> ParameterStore {
        let mut t = Tensor::zeros("w", vec![1]);
        t.value[0] = value;
        ParameterStore::from_tensors(vec![t], 0).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = scalar(0.7);
        Adam::default().step(&mut s, 0.1).unwrap();
        assert_eq!(s.tensors()[0].value[0], 0.7);
    }

    #[test]
    fn moves_against_a_fixed_gradient() {
        for g in [2.5, -0.3] {
            let mut s = scalar(1.0);
            let mut adam = Adam::default();
            for _ in 0..100 {
                s.tensors_mut()[0].grad[0] = g;
                adam.step(&mut s, 0.01).unwrap();
            }
            let moved = s.tensors()[0].value[0] - 1.0;
            assert!(moved * g < 0.0);
            assert_eq!(s.tensors()[0].grad[0], 0.0);
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut s = scalar(-2.0);
        let mut adam = Adam::default();
        for _ in 0..5 {
            s.tensors_mut()[0].grad[0] = 3.0;
            adam.step(&mut s, 0.0).unwrap();
        }
        assert_eq!(s.tensors()[0].value[0], -2.0);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut s = scalar(1.0);
        s.tensors_mut()[0].grad[0] = f64::NAN;
        match Adam::default().step(&mut s, 0.1) {
            Err(Error::Numeric { name, .. }) => assert_eq!(name, "w"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(s.tensors()[0].value[0], 1.0);
    }
}
