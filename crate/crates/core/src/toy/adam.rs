//! Adam with a cosine learning-rate schedule.

use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamCosine {
    pub lr0: f64,
    pub total_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamCosine {
    pub fn new(len: usize, lr0: f64, total_steps: usize) -> Self {
        AdamCosine {
            lr0,
            total_steps,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// `lr₀ · ½ (1 + cos(π t / T))`.
    pub fn learning_rate(&self, step: usize) -> f64 {
        let t = (step as f64 / self.total_steps.max(1) as f64).min(1.0);
        self.lr0 * 0.5 * (1.0 + libm::cos(PI * t))
    }

    /// One update at zero-based `step`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], step: usize) {
        debug_assert_eq!(params.len(), grads.len());
        debug_assert_eq!(params.len(), self.m.len());
        let lr = self.learning_rate(step);
        let t = (step + 1) as i32;
        let c1 = 1.0 - libm::pow(self.beta1, t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
    }
}
