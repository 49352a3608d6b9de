//! Aleatoric-uncertainty-guided detail refinement.
//!
//! A coarse matte is drawn once from `N(γ, E[σ²])`. Pixels whose aleatoric
//! uncertainty is high (above its OTSU threshold) and whose `Var[σ²]` is low
//! (at or below its own OTSU threshold) are selected; 32×32 windows around a
//! thinned subset of them are passed through a refiner and written back,
//! averaging where windows overlap.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nig::NigMap;
use crate::raster::Raster;
use crate::{Error, Result};

/// Side of the square refinement window.
pub const WINDOW: usize = 32;
/// Selected pixels are thinned to one per `THIN_STRIDE × THIN_STRIDE` block.
pub const THIN_STRIDE: usize = 8;
/// Histogram resolution used by [`otsu`].
pub const OTSU_BINS: usize = 256;

/// Boolean selection over a matte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefineMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl RefineMask {
    pub fn empty(width: usize, height: usize) -> Self {
        RefineMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::dims((width, height), (bits.len(), 1)));
        }
        Ok(RefineMask {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// One representative per `stride × stride` block: the first selected
    /// pixel in row-major order within the block.
    pub fn thinned(&self, stride: usize) -> Vec<(usize, usize)> {
        let bw = self.width.div_ceil(stride);
        let bh = self.height.div_ceil(stride);
        let mut picked = vec![None; bw * bh];
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    let slot = &mut picked[(y / stride) * bw + x / stride];
                    if slot.is_none() {
                        *slot = Some((x, y));
                    }
                }
            }
        }
        picked.into_iter().flatten().collect()
    }

    pub fn to_raster(&self) -> Raster {
        Raster::from_fn(self.width, self.height, |x, y| {
            if self.get(x, y) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Draws the coarse matte `clamp(γ + ε, 0, 1)`, `ε ~ N(0, E[σ²])`, per pixel
/// in row-major order from a ChaCha8 stream seeded with `seed`.
pub fn sample_coarse(map: &NigMap, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = map
        .iter()
        .map(|p| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let sd = libm::sqrt(p.beta / (p.alpha - 1.0));
            (p.gamma + sd * z).clamp(0.0, 1.0) as f32
        })
        .collect();
    Raster::from_vec(map.width(), map.height(), 1, data).expect("size preserved")
}

/// A 256-bin min–max histogram of a float sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub min: f64,
    pub max: f64,
    pub counts: [u64; OTSU_BINS],
}

impl Histogram {
    pub fn build(values: impl IntoIterator<Item = f64> + Clone) -> Result<Self> {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.clone() {
            if !v.is_finite() {
                return Err(Error::NonFinite("histogram input"));
            }
            min = min.min(v);
            max = max.max(v);
        }
        if !(max > min) {
            return Err(Error::NoThreshold);
        }
        let mut counts = [0u64; OTSU_BINS];
        let scale = OTSU_BINS as f64 / (max - min);
        for v in values {
            let bin = (((v - min) * scale) as usize).min(OTSU_BINS - 1);
            counts[bin] += 1;
        }
        Ok(Histogram { min, max, counts })
    }

    /// Upper edge of `bin`.
    pub fn upper_edge(&self, bin: usize) -> f64 {
        self.min + (bin + 1) as f64 * (self.max - self.min) / OTSU_BINS as f64
    }
}

/// Split index maximizing between-class variance: classes are bins `0..=k`
/// and `k+1..`. Ties resolve to the lowest `k`.
pub fn otsu_split(counts: &[u64; OTSU_BINS]) -> usize {
    let total: u64 = counts.iter().sum();
    let total_sum: u64 = counts.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    let (mut w0, mut s0) = (0u64, 0u64);
    let mut best = (f64::NEG_INFINITY, 0);
    for (k, &c) in counts.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += c;
        s0 += k as u64 * c;
        let w1 = total - w0;
        let score = if w0 == 0 || w1 == 0 {
            0.0
        } else {
            between_class_variance(w0, s0, w1, total_sum - s0, total)
        };
        if score > best.0 {
            best = (score, k);
        }
    }
    best.1
}

// w0 w1 (μ0 − μ1)² / N² with class means over bin indices.
#[inline]
pub(crate) fn between_class_variance(w0: u64, s0: u64, w1: u64, s1: u64, total: u64) -> f64 {
    let n = total as f64;
    let (p0, p1) = (w0 as f64 / n, w1 as f64 / n);
    let d = s0 as f64 / w0 as f64 - s1 as f64 / w1 as f64;
    p0 * p1 * d * d
}

/// OTSU threshold of a float sample: the upper edge of the best split bin
/// over a 256-bin histogram spanning `[min, max]`.
pub fn otsu(values: &[f32]) -> Result<f64> {
    let hist = Histogram::build(values.iter().map(|&v| v as f64))?;
    Ok(hist.upper_edge(otsu_split(&hist.counts)))
}

/// Pixels of high and reliable aleatoric uncertainty.
///
/// Selected iff `aleatoric > otsu(aleatoric)` and `var_sigma2` is finite and
/// `≤ otsu(finite var_sigma2)`.
pub fn select_pixels(aleatoric: &Raster, var_sigma2: &Raster) -> Result<RefineMask> {
    aleatoric.ensure_same_size(var_sigma2)?;
    let a_thresh = otsu(aleatoric.plane(0))?;
    let finite: Vec<f32> = var_sigma2
        .plane(0)
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    let v_thresh = otsu(&finite)?;
    let bits = aleatoric
        .plane(0)
        .iter()
        .zip(var_sigma2.plane(0))
        .map(|(&a, &v)| a as f64 > a_thresh && v.is_finite() && v as f64 <= v_thresh)
        .collect();
    RefineMask::from_bits(aleatoric.width(), aleatoric.height(), bits)
}

/// Selection plus the threshold fallbacks used in practice: a constant map
/// (no OTSU split) selects nothing.
pub fn select_pixels_or_empty(aleatoric: &Raster, var_sigma2: &Raster) -> Result<RefineMask> {
    match select_pixels(aleatoric, var_sigma2) {
        Err(Error::NoThreshold) => Ok(RefineMask::empty(aleatoric.width(), aleatoric.height())),
        other => other,
    }
}

/// Re-predicts a window of the coarse matte from the matching image window.
pub trait PatchRefiner {
    fn is_trained(&self) -> bool {
        true
    }

    /// `image` has the image's channels, `coarse` one channel; both are
    /// `WINDOW × WINDOW`. Returns a one-channel window.
    fn refine_patch(&self, image: &Raster, coarse: &Raster) -> Result<Raster>;
}

/// Returns the coarse window unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityRefiner;

impl PatchRefiner for IdentityRefiner {
    fn refine_patch(&self, _image: &Raster, coarse: &Raster) -> Result<Raster> {
        Ok(coarse.clone())
    }
}

/// Top-left corner of the `WINDOW`-wide window centred on `c`, clamped to
/// stay inside an axis of length `n`.
pub fn window_origin(c: usize, n: usize) -> usize {
    c.saturating_sub(WINDOW / 2).min(n - WINDOW)
}

/// Pixel windows `(x0, y0)` refined for `mask`, in write-back order.
pub fn refine_windows(mask: &RefineMask) -> Vec<(usize, usize)> {
    mask.thinned(THIN_STRIDE)
        .into_iter()
        .map(|(x, y)| {
            (
                window_origin(x, mask.width()),
                window_origin(y, mask.height()),
            )
        })
        .collect()
}

/// Refines the windows around `mask` and writes them back into a copy of
/// `coarse`. Overlapping outputs are averaged; pixels outside every window
/// keep their coarse value.
pub fn refine_matte(
    coarse: &Raster,
    mask: &RefineMask,
    refiner: &impl PatchRefiner,
    image: &Raster,
) -> Result<Raster> {
    coarse.ensure_same_size(image)?;
    if mask.width() != coarse.width() || mask.height() != coarse.height() {
        return Err(Error::dims(
            (coarse.width(), coarse.height()),
            (mask.width(), mask.height()),
        ));
    }
    if !refiner.is_trained() {
        return Err(Error::Untrained);
    }
    let (w, h) = (coarse.width(), coarse.height());
    if mask.count() == 0 {
        return Ok(coarse.clone());
    }
    if w < WINDOW || h < WINDOW {
        return Err(Error::InvalidParameter(alloc::format!(
            "refinement needs at least {WINDOW}x{WINDOW} pixels, got {w}x{h}"
        )));
    }
    let mut sum = vec![0.0f64; w * h];
    let mut hits = vec![0u32; w * h];
    for (x0, y0) in refine_windows(mask) {
        let img = image.crop(x0, y0, WINDOW, WINDOW)?;
        let crs = coarse.crop(x0, y0, WINDOW, WINDOW)?;
        let out = refiner.refine_patch(&img, &crs)?;
        if out.width() != WINDOW || out.height() != WINDOW || out.channels() != 1 {
            return Err(Error::dims((WINDOW, WINDOW), (out.width(), out.height())));
        }
        for dy in 0..WINDOW {
            for dx in 0..WINDOW {
                let i = (y0 + dy) * w + x0 + dx;
                sum[i] += out.get(0, dx, dy).clamp(0.0, 1.0) as f64;
                hits[i] += 1;
            }
        }
    }
    let mut refined = coarse.clone();
    for (i, v) in refined.data_mut().iter_mut().enumerate() {
        if hits[i] > 0 {
            *v = (sum[i] / hits[i] as f64) as f32;
        }
    }
    Ok(refined)
}
