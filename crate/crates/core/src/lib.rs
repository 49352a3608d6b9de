//! Evidential interactive matting.
//!
//! A regressor predicts a Normal-Inverse-Gamma distribution `NIG(γ, ω, α, β)`
//! per pixel. The decomposed uncertainties drive two stages:
//!
//! 1. **Interaction** – epistemic uncertainty `Var[γ]` ranks grid patches that
//!    a user (or an oracle) labels as foreground, background or transition.
//!    Predictions from successive rounds are combined with the closed-form
//!    NIG summation in [`fusion`].
//! 2. **Refinement** – aleatoric uncertainty `E[σ²]`, filtered by `Var[σ²]`,
//!    selects pixels whose surrounding 32×32 windows are re-predicted by a
//!    small refiner.
//!
//! The crate is `no_std` (with `alloc`). File formats, the CLI and the HTTP
//! service live in the `nigmat` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod fusion;
pub mod interaction;
pub mod metrics;
pub mod nig;
pub mod raster;
pub mod refine;
pub mod special;
pub mod toy;

pub use error::{Error, Result};
pub use fusion::{fuse_fold, fuse_pair};
pub use interaction::{
    InteractionConfig, InteractionSession, Label, PatchGrid, PatchProposal, Predictor, UserMap,
};
pub use metrics::{CalibrationCurve, MetricReport};
pub use nig::{NigMap, NigParams, UncertaintyTriple};
pub use raster::Raster;
pub use refine::{PatchRefiner, RefineMask};
