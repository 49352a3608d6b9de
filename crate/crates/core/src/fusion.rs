//! Closed-form NIG summation `⊕` for combining predictions across rounds.
//!
//! `γ` is the ω-weighted mean of the inputs, `ω` and `α` accumulate, and `β`
//! collects both input scales and each input's ω-weighted squared distance
//! from the fused mean. Because that last term is a weighted sum of squares
//! about the weighted mean, `⊕` is associative up to rounding.

use alloc::vec::Vec;

use crate::nig::{NigMap, NigParams};
use crate::{Error, Result};

pub fn fuse_pair(a: &NigParams, b: &NigParams) -> NigParams {
    let omega = a.omega + b.omega;
    let gamma = (a.omega * a.gamma + b.omega * b.gamma) / omega;
    let da = a.gamma - gamma;
    let db = b.gamma - gamma;
    NigParams {
        gamma,
        omega,
        alpha: a.alpha + b.alpha + 0.5,
        beta: (a.beta + b.beta) + 0.5 * (a.omega * da * da + b.omega * db * db),
    }
}

/// Per-pixel left fold of [`fuse_pair`] over `maps` in order.
pub fn fuse_fold(maps: &[NigMap]) -> Result<NigMap> {
    let (first, rest) = maps
        .split_first()
        .ok_or(Error::Empty("fuse_fold needs at least one map"))?;
    if rest.is_empty() {
        return Ok(first.clone());
    }
    for m in rest {
        first.gamma.ensure_same_size(&m.gamma)?;
    }
    let fused: Vec<NigParams> = (0..first.pixel_count())
        .map(|i| {
            rest.iter()
                .fold(first.params(i), |acc, m| fuse_pair(&acc, &m.params(i)))
        })
        .collect();
    debug_assert!(fused.iter().all(|p| p.is_valid()));
    NigMap::from_params(first.width(), first.height(), &fused)
}
