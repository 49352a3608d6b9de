//! Desk-scale trainable models: the NIG matting network, a cubic
//! regressor, the patch refiner, their synthetic data and the optimiser.

pub mod adam;
pub mod data;
pub mod layers;
pub mod matting;
pub mod net;
pub mod params;
pub mod refiner;
pub mod regression;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::nig::{activate_with_grad, total_loss, total_loss_grad};
use crate::{Error, Result};

pub use adam::AdamCosine;
pub use data::{gen_composites, gen_cubic, gen_train_usermap, CubicDataset, MattingSample};
pub use matting::{train_stage1, MattingConfig, MattingNet, Stage1Config};
pub use params::{ParamSet, TensorSpec};
pub use refiner::{train_stage2, Refiner, Stage2Config};
pub use regression::{CubicConfig, CubicNet};

/// Per-step training losses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub losses: Vec<f64>,
}

impl TrainLog {
    pub(crate) fn record(&mut self, step: usize, loss: f64) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        self.losses.push(loss);
        Ok(())
    }
}

/// Extra loss on the predicted mean, added to the NIG objective.
///
/// Returns the summed loss over the `gamma` entries and accumulates the
/// summed gradient into `grad_gamma`; the trainer averages both.
pub trait AuxLoss {
    fn loss_grad(&self, gamma: &[f64], target: &[f64], grad_gamma: &mut [f64]) -> f64;
}

/// Summed NIG total loss over `n = targets.len()` positions of a planar
/// `4 × n` raw head output. Writes `scale · ∂loss/∂raw` into `grad` and
/// returns the unscaled sum.
pub(crate) fn nig_head_loss(
    raw: &[f64],
    targets: &[f64],
    lambda: f64,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let n = targets.len();
    debug_assert_eq!(raw.len(), 4 * n);
    let mut sum = 0.0;
    for (i, &y) in targets.iter().enumerate() {
        let r = [raw[i], raw[n + i], raw[2 * n + i], raw[3 * n + i]];
        let (p, d) = activate_with_grad(r);
        sum += total_loss(y, &p, lambda);
        let g = total_loss_grad(y, &p, lambda);
        for k in 0..4 {
            grad[k * n + i] = scale * g[k] * d[k];
        }
    }
    sum
}
