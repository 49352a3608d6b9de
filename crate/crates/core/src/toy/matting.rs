//! The toy NIG matting network and its stage-1 training loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::adam::AdamCosine;
use super::data::{gen_train_usermap_with, MattingSample};
use super::layers::Plane;
use super::net::{Init, LayerSpec, Stack};
use super::params::ParamSet;
use super::{nig_head_loss, AuxLoss, TrainLog};
use crate::interaction::{Predictor, UserMap, ORACLE_DELTA};
use crate::nig::{activate, NigMap, NigParams, DEFAULT_LAMBDA};
use crate::raster::Raster;
use crate::{Error, Result};

pub const TRUNK_LAYERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MattingConfig {
    pub image_channels: usize,
    pub features: usize,
    pub seed: u64,
}

impl Default for MattingConfig {
    fn default() -> Self {
        MattingConfig {
            image_channels: 3,
            features: 16,
            seed: 0,
        }
    }
}

impl MattingConfig {
    fn layers(&self) -> Vec<LayerSpec> {
        let f = self.features;
        let mut l = vec![LayerSpec::conv3(self.image_channels + 1, f, true)];
        l.extend((1..TRUNK_LAYERS).map(|_| LayerSpec::conv3(f, f, true)));
        // Four independent linear heads (γ, ω, α, β) on shared features,
        // stored as the rows of one 1×1 layer.
        l.push(LayerSpec::point(f, 4, false));
        l
    }
}

/// Four 3×3 ReLU conv layers over image + user map, then a 1×1 NIG head.
#[derive(Debug, Clone, PartialEq)]
pub struct MattingNet {
    config: MattingConfig,
    params: ParamSet,
    stack: Stack,
    steps: usize,
}

/// One training crop with its planar network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub plane: Plane,
}

impl Example {
    pub fn new(image: &Raster, user_map: &UserMap, alpha: &Raster) -> Result<Self> {
        image.ensure_same_size(alpha)?;
        Ok(Example {
            input: network_input(image, user_map)?,
            target: alpha.plane(0).iter().map(|&v| v as f64).collect(),
            plane: Plane {
                width: image.width(),
                height: image.height(),
            },
        })
    }
}

fn network_input<T: super::layers::Real>(image: &Raster, user_map: &UserMap) -> Result<Vec<T>> {
    if user_map.width() != image.width() || user_map.height() != image.height() {
        return Err(Error::dims(
            (image.width(), image.height()),
            (user_map.width(), user_map.height()),
        ));
    }
    Ok(image
        .data()
        .iter()
        .chain(user_map.raster().data())
        .map(|&v| T::from_f64(v as f64))
        .collect())
}

impl MattingNet {
    /// He-initialised trunk, zero head weights and biases.
    pub fn new(config: MattingConfig) -> Self {
        let mut params = ParamSet::new();
        let stack = Stack::register("layer", &config.layers(), &mut params);
        let mut inits = vec![Init::He; TRUNK_LAYERS];
        inits.push(Init::Zero);
        stack.init(
            &mut params,
            &inits,
            &mut ChaCha8Rng::seed_from_u64(config.seed),
        );
        MattingNet {
            config,
            params,
            stack,
            steps: 0,
        }
    }

    /// Rebuilds a network from stored parameters; tensor names and shapes
    /// must match the architecture implied by `config`.
    pub fn from_params(config: MattingConfig, params: ParamSet, steps: usize) -> Result<Self> {
        let fresh = MattingNet::new(config);
        if fresh.params.specs() != params.specs() {
            return Err(Error::InvalidParameter(format!(
                "checkpoint tensors do not match a {}-channel, {}-feature matting net",
                config.image_channels, config.features
            )));
        }
        Ok(MattingNet {
            params,
            steps,
            ..fresh
        })
    }

    pub fn config(&self) -> &MattingConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Optimiser steps taken so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn checksum(&self) -> u64 {
        self.params.checksum()
    }

    fn check_image(&self, image: &Raster) -> Result<()> {
        if image.channels() != self.config.image_channels {
            return Err(Error::DimensionMismatch {
                expected: format!("{} image channels", self.config.image_channels),
                actual: format!("{}", image.channels()),
            });
        }
        Ok(())
    }

    /// Raw planar `4 × n` head output in `f32`.
    pub fn raw_output(&self, image: &Raster, user_map: &UserMap) -> Result<Vec<f32>> {
        self.check_image(image)?;
        let input: Vec<f32> = network_input(image, user_map)?;
        let theta: Vec<f32> = self.params.values().iter().map(|&v| v as f32).collect();
        let plane = Plane {
            width: image.width(),
            height: image.height(),
        };
        Ok(self.stack.forward(&theta, &input, plane))
    }

    /// Mean total loss of `batch` at parameters `theta`.
    pub fn batch_loss(&self, theta: &[f64], batch: &[Example], lambda: f64) -> f64 {
        let total: usize = batch.iter().map(|e| e.target.len()).sum();
        let mut sum = 0.0;
        for e in batch {
            let raw = self.stack.forward(theta, &e.input, e.plane);
            let mut scratch = vec![0.0; raw.len()];
            sum += nig_head_loss(&raw, &e.target, lambda, 0.0, &mut scratch);
        }
        sum / total as f64
    }

    /// Mean total loss of `batch` and its gradient with respect to `theta`.
    pub fn batch_loss_grad(
        &self,
        theta: &[f64],
        batch: &[Example],
        lambda: f64,
        aux: Option<&dyn AuxLoss>,
    ) -> (f64, Vec<f64>) {
        let total: usize = batch.iter().map(|e| e.target.len()).sum();
        let scale = 1.0 / total as f64;
        let mut grads = vec![0.0; theta.len()];
        let mut sum = 0.0;
        for e in batch {
            let acts = self.stack.forward_train(theta, &e.input, e.plane);
            let raw = &acts[acts.len() - 1];
            let n = e.target.len();
            let mut g = vec![0.0; raw.len()];
            sum += nig_head_loss(raw, &e.target, lambda, scale, &mut g);
            if let Some(aux) = aux {
                let gamma: Vec<f64> = raw[..n]
                    .iter()
                    .map(|&r| 1.0 / (1.0 + libm::exp(-r)))
                    .collect();
                let mut gg = vec![0.0; n];
                sum += aux.loss_grad(&gamma, &e.target, &mut gg);
                for i in 0..n {
                    g[i] += scale * gg[i] * gamma[i] * (1.0 - gamma[i]);
                }
            }
            self.stack.backward(theta, &acts, g, e.plane, &mut grads);
        }
        (sum * scale, grads)
    }
}

impl Predictor for MattingNet {
    fn predict(&self, image: &Raster, user_map: &UserMap) -> Result<NigMap> {
        let raw = self.raw_output(image, user_map)?;
        let n = image.pixel_count();
        let params = (0..n)
            .map(|i| {
                activate([
                    raw[i] as f64,
                    raw[n + i] as f64,
                    raw[2 * n + i] as f64,
                    raw[3 * n + i] as f64,
                ])
            })
            .collect::<Result<Vec<NigParams>>>()?;
        NigMap::from_params(image.width(), image.height(), &params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1Config {
    pub steps: usize,
    pub batch: usize,
    /// Side of the random square training crops.
    pub crop: usize,
    pub lr: f64,
    pub lambda: f64,
    pub oracle_delta: f64,
    /// Standard deviation of Gaussian jitter added to training targets.
    /// Exact 0/1 targets let β collapse to its floor and drag α to 1, which
    /// leaves `Var[σ²]` infinite everywhere; a little jitter prevents that.
    pub target_noise: f64,
    pub seed: u64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            steps: 2500,
            batch: 4,
            crop: 32,
            lr: 1e-3,
            lambda: DEFAULT_LAMBDA,
            oracle_delta: ORACLE_DELTA,
            target_noise: 0.05,
            seed: 0,
        }
    }
}

/// Random crop plus a fresh random user map labeled from the crop's alpha.
pub fn training_example(
    sample: &MattingSample,
    crop: usize,
    delta: f64,
    rng: &mut impl Rng,
) -> Result<Example> {
    let (w, h) = (sample.alpha.width(), sample.alpha.height());
    let (cw, ch) = (crop.min(w), crop.min(h));
    let x0 = rng.random_range(0..=w - cw);
    let y0 = rng.random_range(0..=h - ch);
    let image = sample.image.crop(x0, y0, cw, ch)?;
    let alpha = sample.alpha.crop(x0, y0, cw, ch)?;
    let user = gen_train_usermap_with(&alpha, delta, rng);
    Example::new(&image, &user, &alpha)
}

/// Minimises the mean NIG total loss (plus `aux`, if any) with Adam and a
/// cosine schedule. Every example gets a fresh random user map.
pub fn train_stage1_with(
    net: &mut MattingNet,
    data: &[MattingSample],
    cfg: &Stage1Config,
    aux: Option<&dyn AuxLoss>,
) -> Result<TrainLog> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if cfg.batch == 0 || cfg.crop == 0 {
        return Err(Error::InvalidParameter(
            "batch and crop must be positive".into(),
        ));
    }
    for s in data {
        net.check_image(&s.image)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamCosine::new(net.params.len(), cfg.lr, cfg.steps);
    let mut log = TrainLog::default();
    for step in 0..cfg.steps {
        let batch = (0..cfg.batch)
            .map(|_| {
                let s = &data[rng.random_range(0..data.len())];
                let mut e = training_example(s, cfg.crop, cfg.oracle_delta, &mut rng)?;
                if cfg.target_noise > 0.0 {
                    for t in &mut e.target {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *t += cfg.target_noise * z;
                    }
                }
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        let (loss, grads) = net.batch_loss_grad(net.params.values(), &batch, cfg.lambda, aux);
        log.record(step, loss)?;
        adam.step(net.params.values_mut(), &grads, step);
        net.steps += 1;
    }
    Ok(log)
}

/// [`train_stage1_with`] without an auxiliary loss.
pub fn train_stage1(
    net: &mut MattingNet,
    data: &[MattingSample],
    cfg: &Stage1Config,
) -> Result<TrainLog> {
    train_stage1_with(net, data, cfg, None)
}
