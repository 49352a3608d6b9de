//! The 32×32 patch refiner and its stage-2 training loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::adam::AdamCosine;
use super::data::MattingSample;
use super::layers::Plane;
use super::net::{Init, LayerSpec, Stack};
use super::params::ParamSet;
use super::TrainLog;
use crate::interaction::{Predictor, UserMap};
use crate::nig::NigMap;
use crate::raster::Raster;
use crate::refine::{refine_windows, select_pixels_or_empty, PatchRefiner, WINDOW};
use crate::{Error, Result};

pub const REFINER_FEATURES: usize = 8;

/// Three 3×3 conv layers predicting a residual on the coarse matte:
/// `clamp(coarse + R(image, coarse), 0, 1)`. The last layer starts at zero,
/// so an untrained refiner is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Refiner {
    image_channels: usize,
    params: ParamSet,
    stack: Stack,
    steps: usize,
}

impl Refiner {
    pub fn new(image_channels: usize, seed: u64) -> Self {
        let f = REFINER_FEATURES;
        let mut params = ParamSet::new();
        let stack = Stack::register(
            "refine",
            &[
                LayerSpec::conv3(image_channels + 1, f, true),
                LayerSpec::conv3(f, f, true),
                LayerSpec::conv3(f, 1, false),
            ],
            &mut params,
        );
        stack.init(
            &mut params,
            &[Init::He, Init::He, Init::Zero],
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        Refiner {
            image_channels,
            params,
            stack,
            steps: 0,
        }
    }

    pub fn from_params(image_channels: usize, params: ParamSet, steps: usize) -> Result<Self> {
        let fresh = Refiner::new(image_channels, 0);
        if fresh.params.specs() != params.specs() {
            return Err(Error::InvalidParameter(format!(
                "checkpoint tensors do not match a {image_channels}-channel refiner"
            )));
        }
        Ok(Refiner {
            params,
            steps,
            ..fresh
        })
    }

    pub fn image_channels(&self) -> usize {
        self.image_channels
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn input<T: super::layers::Real>(image: &Raster, coarse: &Raster) -> Vec<T> {
        image
            .data()
            .iter()
            .chain(coarse.data())
            .map(|&v| T::from_f64(v as f64))
            .collect()
    }

    /// Training-path loss and gradient for one window at `theta`.
    fn window_loss_grad(
        &self,
        theta: &[f64],
        w: &Window,
        grads: Option<&mut [f64]>,
        scale: f64,
    ) -> f64 {
        let plane = Plane {
            width: WINDOW,
            height: WINDOW,
        };
        let input: Vec<f64> = Self::input(&w.image, &w.coarse);
        let acts = self.stack.forward_train(theta, &input, plane);
        let out = &acts[acts.len() - 1];
        let coarse = w.coarse.data();
        let pred: Vec<f64> = out
            .iter()
            .zip(coarse)
            .map(|(&o, &c)| (c as f64 + o).clamp(0.0, 1.0))
            .collect();
        let target: Vec<f64> = w.alpha.data().iter().map(|&v| v as f64).collect();
        let mut g = vec![0.0; pred.len()];
        let loss = stage2_loss(&pred, &target, plane, Some(&mut g));
        if let Some(grads) = grads {
            for (i, gi) in g.iter_mut().enumerate() {
                let v = coarse[i] as f64 + out[i];
                *gi = if (0.0..=1.0).contains(&v) {
                    *gi * scale
                } else {
                    0.0
                };
            }
            self.stack.backward(theta, &acts, g, plane, grads);
        }
        loss
    }
}

impl PatchRefiner for Refiner {
    fn refine_patch(&self, image: &Raster, coarse: &Raster) -> Result<Raster> {
        image.ensure_same_size(coarse)?;
        if image.channels() != self.image_channels || coarse.channels() != 1 {
            return Err(Error::DimensionMismatch {
                expected: format!(
                    "{} image channels and a one-channel matte",
                    self.image_channels
                ),
                actual: format!("{} and {}", image.channels(), coarse.channels()),
            });
        }
        let theta: Vec<f32> = self.params.values().iter().map(|&v| v as f32).collect();
        let plane = Plane {
            width: image.width(),
            height: image.height(),
        };
        let out = self
            .stack
            .forward(&theta, &Self::input::<f32>(image, coarse), plane);
        let data = out
            .iter()
            .zip(coarse.data())
            .map(|(o, c)| (c + o).clamp(0.0, 1.0))
            .collect();
        Raster::from_vec(image.width(), image.height(), 1, data)
    }
}

// Forward-difference gradient magnitude with a replicate border (the
// difference across the last row / column is zero).
fn grad_components(v: &[f64], plane: Plane) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (plane.width, plane.height);
    let mut dx = vec![0.0; w * h];
    let mut dy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                dx[i] = v[i + 1] - v[i];
            }
            if y + 1 < h {
                dy[i] = v[i + w] - v[i];
            }
        }
    }
    (dx, dy)
}

/// Forward-difference gradient magnitude of a planar map.
pub fn gradient_map(v: &[f64], plane: Plane) -> Vec<f64> {
    let (dx, dy) = grad_components(v, plane);
    dx.iter()
        .zip(&dy)
        .map(|(a, b)| libm::sqrt(a * a + b * b))
        .collect()
}

/// `mean |pred − target| + mean | |∇pred| − |∇target| |`.
///
/// When `grad` is given it receives `∂loss/∂pred` (subgradient 0 at kinks).
pub fn stage2_loss(pred: &[f64], target: &[f64], plane: Plane, grad: Option<&mut [f64]>) -> f64 {
    let n = pred.len() as f64;
    let (dx, dy) = grad_components(pred, plane);
    let mt = gradient_map(target, plane);
    let mut l1 = 0.0;
    let mut lg = 0.0;
    for i in 0..pred.len() {
        l1 += (pred[i] - target[i]).abs();
        lg += (libm::sqrt(dx[i] * dx[i] + dy[i] * dy[i]) - mt[i]).abs();
    }
    if let Some(g) = grad {
        let w = plane.width;
        g.fill(0.0);
        for i in 0..pred.len() {
            g[i] += sign(pred[i] - target[i]) / n;
            let m = libm::sqrt(dx[i] * dx[i] + dy[i] * dy[i]);
            if m > 0.0 {
                let s = sign(m - mt[i]) / n;
                let (x, y) = (i % w, i / w);
                if x + 1 < w {
                    let d = s * dx[i] / m;
                    g[i + 1] += d;
                    g[i] -= d;
                }
                if y + 1 < plane.height {
                    let d = s * dy[i] / m;
                    g[i + w] += d;
                    g[i] -= d;
                }
            }
        }
    }
    (l1 + lg) / n
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One 32×32 training crop.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub image: Raster,
    pub coarse: Raster,
    pub alpha: Raster,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage2Config {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            steps: 800,
            batch: 4,
            lr: 1e-3,
            seed: 0,
        }
    }
}

// Frozen stage-1 output for one training image plus its candidate windows.
struct Prepared<'a> {
    sample: &'a MattingSample,
    map: NigMap,
    windows: Vec<(usize, usize)>,
}

/// Draws a window around a selected pixel (or anywhere, when nothing was
/// selected) with a fresh coarse sample `clamp(γ + ε)`, `ε ~ N(0, E[σ²])`.
fn draw_window(p: &Prepared, rng: &mut impl Rng) -> Result<Window> {
    let (w, h) = (p.map.width(), p.map.height());
    let (x0, y0) = if p.windows.is_empty() {
        (
            rng.random_range(0..=w - WINDOW),
            rng.random_range(0..=h - WINDOW),
        )
    } else {
        p.windows[rng.random_range(0..p.windows.len())]
    };
    let mut coarse = Raster::zeros(WINDOW, WINDOW, 1);
    for dy in 0..WINDOW {
        for dx in 0..WINDOW {
            let q = p.map.params((y0 + dy) * w + x0 + dx);
            let z: f64 = StandardNormal.sample(rng);
            let sd = libm::sqrt(q.beta / (q.alpha - 1.0));
            coarse.set(0, dx, dy, (q.gamma + sd * z).clamp(0.0, 1.0) as f32);
        }
    }
    Ok(Window {
        image: p.sample.image.crop(x0, y0, WINDOW, WINDOW)?,
        coarse,
        alpha: p.sample.alpha.crop(x0, y0, WINDOW, WINDOW)?,
    })
}

/// Trains a refiner against a frozen stage-1 predictor. Windows are
/// centred on the pixels the refinement stage would select on each
/// training image (empty user map); the coarse input is resampled every
/// step. `frozen` is only read.
pub fn train_stage2(
    frozen: &impl Predictor,
    data: &[MattingSample],
    cfg: &Stage2Config,
) -> Result<(Refiner, TrainLog)> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let channels = data[0].image.channels();
    let mut prepared = Vec::with_capacity(data.len());
    for s in data {
        let (w, h) = (s.image.width(), s.image.height());
        if w < WINDOW || h < WINDOW || s.image.channels() != channels {
            return Err(Error::InvalidParameter(format!(
                "stage-2 images need {channels} channels and at least {WINDOW}x{WINDOW} pixels"
            )));
        }
        let map = frozen.predict(&s.image, &UserMap::empty(w, h))?;
        let mask = select_pixels_or_empty(&map.aleatoric(), &map.var_sigma2())?;
        prepared.push(Prepared {
            sample: s,
            windows: refine_windows(&mask),
            map,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut refiner = Refiner::new(channels, rng.next_u64());
    let mut adam = AdamCosine::new(refiner.params.len(), cfg.lr, cfg.steps);
    let mut log = TrainLog::default();
    let batch = cfg.batch.max(1);
    for step in 0..cfg.steps {
        let windows = (0..batch)
            .map(|_| {
                let p = &prepared[rng.random_range(0..prepared.len())];
                draw_window(p, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let (loss, grads) = refiner.batch_loss_grad(refiner.params.values(), &windows);
        log.record(step, loss)?;
        adam.step(refiner.params.values_mut(), &grads, step);
        refiner.steps += 1;
    }
    Ok((refiner, log))
}

impl Refiner {
    /// Mean stage-2 loss over `windows` at `theta`.
    pub fn batch_loss(&self, theta: &[f64], windows: &[Window]) -> f64 {
        windows
            .iter()
            .map(|w| self.window_loss_grad(theta, w, None, 0.0))
            .sum::<f64>()
            / windows.len() as f64
    }

    pub fn batch_loss_grad(&self, theta: &[f64], windows: &[Window]) -> (f64, Vec<f64>) {
        let mut grads = vec![0.0; theta.len()];
        let scale = 1.0 / windows.len() as f64;
        let loss = windows
            .iter()
            .map(|w| self.window_loss_grad(theta, w, Some(&mut grads), scale))
            .sum::<f64>();
        (loss * scale, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::data::gen_composites;
    use crate::toy::matting::{MattingConfig, MattingNet};

    fn window(seed: u64) -> Window {
        let s = &gen_composites(1, 64, seed).unwrap()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = s.alpha.crop(16, 16, WINDOW, WINDOW).unwrap();
        let mut coarse = alpha.clone();
        for v in coarse.data_mut() {
            *v = (*v + rng.random_range(-0.2f32..0.2)).clamp(0.0, 1.0);
        }
        Window {
            image: s.image.crop(16, 16, WINDOW, WINDOW).unwrap(),
            coarse,
            alpha,
        }
    }

    #[test]
    fn untrained_refiner_is_identity() {
        let r = Refiner::new(3, 1);
        let w = window(3);
        assert_eq!(r.refine_patch(&w.image, &w.coarse).unwrap(), w.coarse);
        let plane = Plane {
            width: WINDOW,
            height: WINDOW,
        };
        let c: Vec<f64> = w.coarse.data().iter().map(|&v| v as f64).collect();
        let a: Vec<f64> = w.alpha.data().iter().map(|&v| v as f64).collect();
        let coarse_loss = stage2_loss(&c, &a, plane, None);
        assert_eq!(r.batch_loss(r.params().values(), &[w]), coarse_loss);
    }

    #[test]
    fn stage2_loss_gradient() {
        let plane = Plane {
            width: 5,
            height: 4,
        };
        let p: Vec<f64> = (0..20)
            .map(|i| ((i * 13) % 7) as f64 * 0.11 + 0.013 * i as f64)
            .collect();
        let t: Vec<f64> = (0..20).map(|i| ((i * 5) % 9) as f64 * 0.07).collect();
        let mut g = vec![0.0; 20];
        stage2_loss(&p, &t, plane, Some(&mut g));
        let h = 1e-7;
        for i in 0..20 {
            let mut a = p.clone();
            a[i] += h;
            let mut b = p.clone();
            b[i] -= h;
            let fd =
                (stage2_loss(&a, &t, plane, None) - stage2_loss(&b, &t, plane, None)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn gradient_map_of_ramp() {
        let plane = Plane {
            width: 4,
            height: 2,
        };
        let v = [0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 2.0, 3.0];
        assert_eq!(
            gradient_map(&v, plane),
            vec![1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]
        );
    }

    #[test]
    fn network_gradient_matches_finite_differences() {
        let mut r = Refiner::new(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for v in r.params.values_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
        let ws = [window(5)];
        let theta = r.params().values().to_vec();
        let (_, g) = r.batch_loss_grad(&theta, &ws);
        let h = 1e-7;
        let mut worst: f64 = 0.0;
        for i in (0..theta.len()).step_by(5) {
            let mut a = theta.clone();
            a[i] += h;
            let mut b = theta.clone();
            b[i] -= h;
            let fd = (r.batch_loss(&a, &ws) - r.batch_loss(&b, &ws)) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / (fd.abs() + g[i].abs()).max(1e-4));
        }
        // L1 kinks make a few coordinates noisy; most must agree closely.
        assert!(worst < 5e-2, "worst {worst}");
    }

    #[test]
    fn stage2_leaves_stage1_untouched() {
        let data = gen_composites(2, 64, 1).unwrap();
        let net = MattingNet::new(MattingConfig {
            features: 4,
            ..MattingConfig::default()
        });
        let before = net.checksum();
        let cfg = Stage2Config {
            steps: 5,
            batch: 1,
            ..Stage2Config::default()
        };
        let (r, log) = train_stage2(&net, &data, &cfg).unwrap();
        assert_eq!(net.checksum(), before);
        assert_eq!(log.losses.len(), 5);
        assert_eq!(r.steps(), 5);
        let (r2, _) = train_stage2(&net, &data, &cfg).unwrap();
        assert_eq!(r.params().checksum(), r2.params().checksum());
    }
}
