//! A small evidential MLP for the 1-D cubic diagnostic.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamCosine;
use super::data::CubicDataset;
use super::layers::Plane;
use super::net::{Init, LayerSpec, Stack};
use super::params::ParamSet;
use super::{nig_head_loss, TrainLog};
use crate::nig::{activate, NigParams, DEFAULT_LAMBDA};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicConfig {
    pub hidden: usize,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for CubicConfig {
    fn default() -> Self {
        CubicConfig {
            hidden: 64,
            steps: 5000,
            batch: 128,
            lr: 1e-3,
            lambda: DEFAULT_LAMBDA,
            seed: 0,
        }
    }
}

/// `1 → hidden → hidden → 4` ReLU MLP with a NIG head.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicNet {
    params: ParamSet,
    stack: Stack,
    steps: usize,
}

fn plane(n: usize) -> Plane {
    Plane {
        width: n,
        height: 1,
    }
}

impl CubicNet {
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut params = ParamSet::new();
        let stack = Stack::register(
            "dense",
            &[
                LayerSpec::point(1, hidden, true),
                LayerSpec::point(hidden, hidden, true),
                LayerSpec::point(hidden, 4, false),
            ],
            &mut params,
        );
        stack.init(
            &mut params,
            &[Init::He, Init::He, Init::Zero],
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        CubicNet {
            params,
            stack,
            steps: 0,
        }
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `f32` inference for each input.
    pub fn predict(&self, xs: &[f64]) -> Result<Vec<NigParams>> {
        let theta: Vec<f32> = self.params.values().iter().map(|&v| v as f32).collect();
        let input: Vec<f32> = xs.iter().map(|&x| x as f32).collect();
        let raw = self.stack.forward(&theta, &input, plane(xs.len()));
        let n = xs.len();
        (0..n)
            .map(|i| {
                activate([
                    raw[i] as f64,
                    raw[n + i] as f64,
                    raw[2 * n + i] as f64,
                    raw[3 * n + i] as f64,
                ])
            })
            .collect()
    }

    /// Mean total loss and gradient on `(x, y)` pairs at `theta`.
    pub fn loss_grad(&self, theta: &[f64], x: &[f64], y: &[f64], lambda: f64) -> (f64, Vec<f64>) {
        let n = x.len();
        let acts = self.stack.forward_train(theta, x, plane(n));
        let raw = &acts[acts.len() - 1];
        let mut g = vec![0.0; raw.len()];
        let scale = 1.0 / n as f64;
        let sum = nig_head_loss(raw, y, lambda, scale, &mut g);
        let mut grads = vec![0.0; theta.len()];
        self.stack.backward(theta, &acts, g, plane(n), &mut grads);
        (sum * scale, grads)
    }

    /// Minibatch Adam with a cosine schedule on the rescaled targets.
    pub fn train(&mut self, data: &CubicDataset, cfg: &CubicConfig) -> Result<TrainLog> {
        if data.x.is_empty() {
            return Err(Error::Empty("cubic training set"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut adam = AdamCosine::new(self.params.len(), cfg.lr, cfg.steps);
        let mut log = TrainLog::default();
        let b = cfg.batch.clamp(1, data.x.len());
        let (mut xb, mut yb) = (vec![0.0; b], vec![0.0; b]);
        for step in 0..cfg.steps {
            for k in 0..b {
                let i = rng.random_range(0..data.x.len());
                xb[k] = data.x[i];
                yb[k] = data.y[i];
            }
            let (loss, grads) = self.loss_grad(self.params.values(), &xb, &yb, cfg.lambda);
            log.record(step, loss)?;
            adam.step(self.params.values_mut(), &grads, step);
            self.steps += 1;
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::data::gen_cubic;

    #[test]
    fn gradient_matches_finite_differences() {
        let mut net = CubicNet::new(8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for v in net.params.values_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
        let d = gen_cubic(16, (-4.0, 4.0), 3.0, 1);
        let theta = net.params.values().to_vec();
        let (_, g) = net.loss_grad(&theta, &d.x, &d.y, 0.01);
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            tp[i] += h;
            let mut tm = theta.clone();
            tm[i] -= h;
            let fd = (net.loss_grad(&tp, &d.x, &d.y, 0.01).0
                - net.loss_grad(&tm, &d.x, &d.y, 0.01).0)
                / (2.0 * h);
            assert!(
                (fd - g[i]).abs() <= 1e-5 * (1.0 + fd.abs()),
                "θ[{i}] {fd} vs {}",
                g[i]
            );
        }
    }

    #[test]
    fn short_training_fits_the_trend() {
        let d = gen_cubic(512, (-4.0, 4.0), 3.0, 3);
        let mut net = CubicNet::new(32, 1);
        let cfg = CubicConfig {
            hidden: 32,
            steps: 800,
            lr: 5e-3,
            ..CubicConfig::default()
        };
        let log = net.train(&d, &cfg).unwrap();
        assert!(log.losses.last().unwrap() < &log.losses[0]);
        let pred = net.predict(&d.x).unwrap();
        let mse: f64 = pred
            .iter()
            .zip(&d.y)
            .map(|(p, y)| (p.gamma - y).powi(2))
            .sum::<f64>()
            / d.x.len() as f64;
        assert!(mse.sqrt() < 0.1, "rmse {}", mse.sqrt());
    }
}
