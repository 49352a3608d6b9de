//! Uncertainty-guided interaction.
//!
//! Each round the fused epistemic map is averaged over a `K × K` grid, the
//! most uncertain cells above a threshold become proposals, the user (or
//! [`oracle_label`]) assigns each one a label, the user map is updated and
//! the predictor is re-run. The new prediction is appended to the history and
//! the whole history is re-fused.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fusion::fuse_fold;
use crate::nig::NigMap;
use crate::raster::Raster;
use crate::{Error, Result};

/// Default tolerance used when deciding a patch's true label from a matte.
pub const ORACLE_DELTA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    #[serde(rename = "fg")]
    Foreground,
    #[serde(rename = "bg")]
    Background,
    Transition,
}

impl Label {
    /// User-map code of the label.
    pub fn code(self) -> f32 {
        match self {
            Label::Foreground => 1.0,
            Label::Background => -1.0,
            Label::Transition => 0.5,
        }
    }

    /// Label whose pixels all satisfy the `δ` rule: foreground when every
    /// `α ≥ 1 − δ`, background when every `α ≤ δ`, transition otherwise.
    pub fn from_alphas(alphas: impl IntoIterator<Item = f32>, delta: f64) -> Label {
        let (mut all_fg, mut all_bg) = (true, true);
        for a in alphas {
            let a = a as f64;
            all_fg &= a >= 1.0 - delta;
            all_bg &= a <= delta;
        }
        match (all_fg, all_bg) {
            (true, _) => Label::Foreground,
            (false, true) => Label::Background,
            _ => Label::Transition,
        }
    }
}

/// Interaction raster with codes fg = 1, bg = −1, transition = 0.5, unknown = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct UserMap(Raster);

impl UserMap {
    pub const UNKNOWN: f32 = 0.0;

    /// All-unknown map.
    pub fn empty(width: usize, height: usize) -> Self {
        UserMap(Raster::zeros(width, height, 1))
    }

    /// Validates that `raster` is single-channel and holds only legal codes.
    pub fn from_raster(raster: Raster) -> Result<Self> {
        if raster.channels() != 1 {
            return Err(Error::InvalidParameter(alloc::format!(
                "user map needs 1 channel, got {}",
                raster.channels()
            )));
        }
        if let Some(&v) = raster
            .data()
            .iter()
            .find(|&&v| !matches!(v, -1.0 | 0.0 | 0.5 | 1.0))
        {
            return Err(Error::UnknownCode(v));
        }
        Ok(UserMap(raster))
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn is_empty(&self) -> bool {
        self.0.data().iter().all(|&v| v == Self::UNKNOWN)
    }

    /// Writes `label`'s code over the pixels of `rect`. Later writes win.
    pub fn apply_label(&mut self, rect: &PatchProposal, label: Label) -> Result<()> {
        rect.check_within(self.width(), self.height())?;
        let w = self.width();
        let code = label.code();
        let data = self.0.data_mut();
        for y in rect.y0..rect.y1 {
            data[y * w + rect.x0..y * w + rect.x1].fill(code);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchProposal {
    pub grid_row: usize,
    pub grid_col: usize,
    /// Half-open pixel bounds `[x0, x1) × [y0, y1)`.
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub mean_uncertainty: f64,
}

impl PatchProposal {
    fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.x0 >= self.x1 || self.y0 >= self.y1 || self.x1 > width || self.y1 > height {
            return Err(Error::OutOfBounds(alloc::format!(
                "patch [{}, {}) x [{}, {}) in {width}x{height}",
                self.x0,
                self.x1,
                self.y0,
                self.y1
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }
}

/// Patch-level mean uncertainty over a `k × k` partition of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    k: usize,
    width: usize,
    height: usize,
    means: Vec<f64>,
}

// Cell `i` of `k` along an axis of length `n`; the last cell absorbs the
// remainder.
fn cell_span(i: usize, k: usize, n: usize) -> (usize, usize) {
    let base = n / k;
    let start = i * base;
    let end = if i + 1 == k { n } else { start + base };
    (start, end)
}

impl PatchGrid {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Row-major cell means.
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn mean(&self, row: usize, col: usize) -> f64 {
        self.means[row * self.k + col]
    }

    /// Mean over all cells.
    pub fn global_mean(&self) -> f64 {
        self.means.iter().sum::<f64>() / self.means.len() as f64
    }

    pub fn cell(&self, row: usize, col: usize) -> PatchProposal {
        let (x0, x1) = cell_span(col, self.k, self.width);
        let (y0, y1) = cell_span(row, self.k, self.height);
        PatchProposal {
            grid_row: row,
            grid_col: col,
            x0,
            y0,
            x1,
            y1,
            mean_uncertainty: self.mean(row, col),
        }
    }
}

/// Averages `epistemic` over a `k × k` grid of cells.
pub fn patch_means(epistemic: &Raster, k: usize) -> Result<PatchGrid> {
    let (width, height) = (epistemic.width(), epistemic.height());
    if k == 0 || k > width || k > height {
        return Err(Error::InvalidParameter(alloc::format!(
            "grid size {k} does not fit a {width}x{height} image"
        )));
    }
    let plane = epistemic.plane(0);
    let mut means = Vec::with_capacity(k * k);
    for row in 0..k {
        let (y0, y1) = cell_span(row, k, height);
        for col in 0..k {
            let (x0, x1) = cell_span(col, k, width);
            let mut sum = 0.0f64;
            for y in y0..y1 {
                sum += plane[y * width + x0..y * width + x1]
                    .iter()
                    .map(|&v| v as f64)
                    .sum::<f64>();
            }
            means.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    Ok(PatchGrid {
        k,
        width,
        height,
        means,
    })
}

/// Cells with mean above `threshold`, most uncertain first, at most
/// `max_proposals`. Equal means keep row-major order.
pub fn propose(grid: &PatchGrid, threshold: f64, max_proposals: usize) -> Vec<PatchProposal> {
    let mut idx: Vec<usize> = (0..grid.means.len())
        .filter(|&i| grid.means[i] > threshold)
        .collect();
    // Stable sort keeps the row-major tie-break.
    idx.sort_by(|&a, &b| grid.means[b].total_cmp(&grid.means[a]));
    idx.truncate(max_proposals);
    idx.into_iter()
        .map(|i| grid.cell(i / grid.k, i % grid.k))
        .collect()
}

/// Simulated user: labels a patch from the ground-truth matte.
pub fn oracle_label(gt: &Raster, patch: &PatchProposal, delta: f64) -> Label {
    let w = gt.width();
    let plane = gt.plane(0);
    Label::from_alphas(
        (patch.y0..patch.y1)
            .flat_map(|y| plane[y * w + patch.x0..y * w + patch.x1].iter().copied()),
        delta,
    )
}

/// Anything that maps an image and a user map to a NIG map of the same size.
pub trait Predictor {
    fn predict(&self, image: &Raster, user_map: &UserMap) -> Result<NigMap>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict(&self, image: &Raster, user_map: &UserMap) -> Result<NigMap> {
        (**self).predict(image, user_map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionConfig {
    /// Grid size `K` (the image is split into `K × K` cells).
    pub grid: usize,
    /// Maximum proposals per round.
    pub top_n: usize,
    /// Threshold as a multiple of the global mean patch uncertainty.
    pub threshold_scale: f64,
    pub oracle_delta: f64,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        InteractionConfig {
            grid: 16,
            top_n: 10,
            threshold_scale: 1.5,
            oracle_delta: ORACLE_DELTA,
        }
    }
}

/// One image's interaction state.
///
/// `history` holds one prediction per round (round 0 is the unassisted
/// prediction) and `fused` is always `fuse_fold(history)`.
#[derive(Debug, Clone)]
pub struct InteractionSession {
    image: Raster,
    gt: Option<Raster>,
    user_map: UserMap,
    history: Vec<NigMap>,
    fused: NigMap,
    round: usize,
}

impl InteractionSession {
    /// Runs the round-0 prediction with an empty user map.
    pub fn start(image: Raster, gt: Option<Raster>, predictor: &impl Predictor) -> Result<Self> {
        if let Some(gt) = &gt {
            image.ensure_same_size(gt)?;
        }
        let user_map = UserMap::empty(image.width(), image.height());
        let first = predict_checked(predictor, &image, &user_map)?;
        Ok(InteractionSession {
            image,
            gt,
            user_map,
            fused: first.clone(),
            history: alloc::vec![first],
            round: 0,
        })
    }

    pub fn image(&self) -> &Raster {
        &self.image
    }

    pub fn gt(&self) -> Option<&Raster> {
        self.gt.as_ref()
    }

    pub fn user_map(&self) -> &UserMap {
        &self.user_map
    }

    pub fn history(&self) -> &[NigMap] {
        &self.history
    }

    pub fn fused(&self) -> &NigMap {
        &self.fused
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Proposals from the fused epistemic map.
    pub fn proposals(&self, cfg: &InteractionConfig) -> Result<Vec<PatchProposal>> {
        let grid = patch_means(&self.fused.epistemic(), cfg.grid)?;
        let threshold = cfg.threshold_scale * grid.global_mean();
        Ok(propose(&grid, threshold, cfg.top_n))
    }

    /// Oracle labels for `proposals`; `None` without a ground truth.
    pub fn oracle_labels(
        &self,
        proposals: &[PatchProposal],
        delta: f64,
    ) -> Option<Vec<(PatchProposal, Label)>> {
        let gt = self.gt.as_ref()?;
        Some(
            proposals
                .iter()
                .map(|p| (*p, oracle_label(gt, p, delta)))
                .collect(),
        )
    }

    /// Applies `labels`, re-predicts, appends to the history and re-fuses.
    pub fn run_round(
        &mut self,
        predictor: &impl Predictor,
        labels: &[(PatchProposal, Label)],
    ) -> Result<()> {
        let mut user_map = self.user_map.clone();
        for (patch, label) in labels {
            user_map.apply_label(patch, *label)?;
        }
        let next = predict_checked(predictor, &self.image, &user_map)?;
        self.history.push(next);
        match fuse_fold(&self.history) {
            Ok(fused) => {
                self.fused = fused;
                self.user_map = user_map;
                self.round += 1;
                Ok(())
            }
            Err(e) => {
                self.history.pop();
                Err(e)
            }
        }
    }
}

fn predict_checked(
    predictor: &impl Predictor,
    image: &Raster,
    user_map: &UserMap,
) -> Result<NigMap> {
    let map = predictor.predict(image, user_map)?;
    image.ensure_same_size(&map.gamma)?;
    Ok(map)
}
