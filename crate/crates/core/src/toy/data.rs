//! Synthetic datasets: a noisy cubic for 1-D uncertainty diagnostics,
//! procedurally composited matting samples, and random training user maps.

use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::interaction::{Label, PatchProposal, UserMap, ORACLE_DELTA};
use crate::raster::Raster;
use crate::special::normal_cdf;
use crate::{Error, Result};

/// `scaled = (y − offset) · scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineRescale {
    pub offset: f64,
    pub scale: f64,
}

impl AffineRescale {
    pub fn apply(&self, y: f64) -> f64 {
        (y - self.offset) * self.scale
    }

    pub fn invert(&self, s: f64) -> f64 {
        s / self.scale + self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubicDataset {
    pub x: Vec<f64>,
    /// Rescaled targets.
    pub y: Vec<f64>,
    pub rescale: AffineRescale,
}

/// `n` draws of `y = x³ + ε`, `x` uniform on `x_range`, `ε ~ N(0, σ²)`.
/// Targets are mapped so that the noise-free cubic spans `[0, 1]` on
/// `x_range`.
pub fn gen_cubic(n: usize, x_range: (f64, f64), noise_sigma: f64, seed: u64) -> CubicDataset {
    let (lo, hi) = x_range;
    let rescale = AffineRescale {
        offset: lo * lo * lo,
        scale: 1.0 / (hi * hi * hi - lo * lo * lo),
    };
    gen_cubic_rescaled(n, x_range, noise_sigma, seed, rescale)
}

/// [`gen_cubic`] with a given target transform, for held-out and
/// out-of-range splits.
pub fn gen_cubic_rescaled(
    n: usize,
    x_range: (f64, f64),
    noise_sigma: f64,
    seed: u64,
    rescale: AffineRescale,
) -> CubicDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = rng.random_range(x_range.0..x_range.1);
        let z: f64 = StandardNormal.sample(&mut rng);
        x.push(xi);
        y.push(rescale.apply(xi * xi * xi + noise_sigma * z));
    }
    CubicDataset { x, y, rescale }
}

/// One composited matting example; `image = α·fg + (1 − α)·bg` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct MattingSample {
    pub image: Raster,
    pub alpha: Raster,
    pub fg: Raster,
    pub bg: Raster,
}

pub const IMAGE_CHANNELS: usize = 3;
pub const MIN_COMPOSITE_SIZE: usize = 64;

/// Composites the planes of `fg` and `bg` with `alpha`.
pub fn composite(alpha: &Raster, fg: &Raster, bg: &Raster) -> Result<Raster> {
    alpha.ensure_same_size(fg)?;
    alpha.ensure_same_size(bg)?;
    let mut out = Raster::zeros(alpha.width(), alpha.height(), fg.channels());
    let a = alpha.plane(0);
    for c in 0..fg.channels() {
        let (f, b) = (fg.plane(c), bg.plane(c));
        for (i, o) in out.plane_mut(c).iter_mut().enumerate() {
            *o = a[i] * f[i] + (1.0 - a[i]) * b[i];
        }
    }
    Ok(out)
}

struct Palette {
    base: [f32; 3],
}

impl Palette {
    fn warm(rng: &mut impl Rng) -> Self {
        Palette {
            base: [
                rng.random_range(0.6..0.9),
                rng.random_range(0.35..0.6),
                rng.random_range(0.1..0.3),
            ],
        }
    }

    fn cool(rng: &mut impl Rng) -> Self {
        Palette {
            base: [
                rng.random_range(0.1..0.35),
                rng.random_range(0.3..0.55),
                rng.random_range(0.55..0.9),
            ],
        }
    }
}

// Smooth random field: a few oriented sinusoids plus per-pixel noise.
fn texture(size: usize, palette: &Palette, rng: &mut impl Rng) -> Raster {
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let theta = rng.random_range(0.0..core::f64::consts::PI);
            let freq = rng.random_range(0.05..0.4);
            let phase = rng.random_range(0.0..core::f64::consts::TAU);
            let amp = rng.random_range(0.02..0.06);
            (libm::cos(theta) * freq, libm::sin(theta) * freq, phase, amp)
        })
        .collect();
    let mut out = Raster::zeros(size, size, IMAGE_CHANNELS);
    for c in 0..IMAGE_CHANNELS {
        let tint = rng.random_range(0.6..1.4);
        for y in 0..size {
            for x in 0..size {
                let wave: f64 = waves
                    .iter()
                    .map(|&(kx, ky, ph, amp)| amp * libm::sin(kx * x as f64 + ky * y as f64 + ph))
                    .sum();
                let noise = rng.random_range(-0.03..0.03);
                let v = palette.base[c] as f64 + tint * wave + noise;
                out.set(c, x, y, v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    out
}

/// Rotated ellipse with a Gaussian-feathered rim.
struct Shape {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    feather: f64,
}

impl Shape {
    fn random(size: usize, feather: (f64, f64), radius: (f64, f64), rng: &mut impl Rng) -> Self {
        let s = size as f64;
        let theta = rng.random_range(0.0..core::f64::consts::PI);
        Shape {
            cx: rng.random_range(0.25 * s..0.75 * s),
            cy: rng.random_range(0.25 * s..0.75 * s),
            a: rng.random_range(radius.0 * s..radius.1 * s),
            b: rng.random_range(radius.0 * s..radius.1 * s),
            cos: libm::cos(theta),
            sin: libm::sin(theta),
            feather: rng.random_range(feather.0..feather.1),
        }
    }

    // Approximate signed distance to the rim, negative inside.
    fn signed_distance(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        let rho = libm::sqrt((u / self.a) * (u / self.a) + (v / self.b) * (v / self.b));
        (rho - 1.0) * libm::sqrt(self.a * self.b)
    }

    /// Coverage in `[0, 1]`, exactly 0 or 1 beyond three feather widths.
    fn coverage(&self, x: f64, y: f64) -> f64 {
        let d = self.signed_distance(x, y);
        if d >= 3.0 * self.feather {
            0.0
        } else if d <= -3.0 * self.feather {
            1.0
        } else {
            normal_cdf(-d / self.feather)
        }
    }
}

/// Generator settings for [`gen_composites_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeConfig {
    pub size: usize,
    /// Probability that the background carries foreground-coloured blobs.
    /// Without them appearance alone separates the layers and there is
    /// little for a user to resolve.
    pub distractor_prob: f64,
    /// Feather width range in pixels.
    pub feather: (f64, f64),
}

impl CompositeConfig {
    pub fn with_size(size: usize) -> Self {
        CompositeConfig {
            size,
            distractor_prob: 1.0,
            feather: (0.7, 2.5),
        }
    }
}

/// `n` composites of `size × size` pixels; see [`gen_composites_with`].
pub fn gen_composites(n: usize, size: usize, seed: u64) -> Result<Vec<MattingSample>> {
    gen_composites_with(n, &CompositeConfig::with_size(size), seed)
}

/// Procedural composites: one to three feathered ellipses of textured warm
/// foreground over a textured cool background. Backgrounds may contain
/// warm distractor blobs so that appearance alone is ambiguous.
pub fn gen_composites_with(
    n: usize,
    cfg: &CompositeConfig,
    seed: u64,
) -> Result<Vec<MattingSample>> {
    if n == 0 {
        return Err(Error::Empty("composite count"));
    }
    if cfg.size < MIN_COMPOSITE_SIZE {
        return Err(Error::InvalidParameter(alloc::format!(
            "composite size {} is below {MIN_COMPOSITE_SIZE}",
            cfg.size
        )));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut rng = ChaCha8Rng::seed_from_u64(master.next_u64());
            gen_one(cfg, &mut rng)
        })
        .collect()
}

fn gen_one(cfg: &CompositeConfig, rng: &mut ChaCha8Rng) -> Result<MattingSample> {
    let size = cfg.size;
    let shapes: Vec<Shape> = (0..rng.random_range(1..=3))
        .map(|_| Shape::random(size, cfg.feather, (0.1, 0.28), rng))
        .collect();
    let alpha = Raster::from_fn(size, size, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        shapes
            .iter()
            .map(|s| s.coverage(px, py))
            .fold(0.0, f64::max) as f32
    });
    let fg = texture(size, &Palette::warm(rng), rng);
    let mut bg = texture(size, &Palette::cool(rng), rng);
    if rng.random_bool(cfg.distractor_prob) {
        let decoy = texture(size, &Palette::warm(rng), rng);
        let blobs: Vec<Shape> = (0..rng.random_range(1..=2))
            .map(|_| Shape::random(size, (0.7, 1.5), (0.06, 0.14), rng))
            .collect();
        for y in 0..size {
            for x in 0..size {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let m = blobs.iter().map(|s| s.coverage(px, py)).fold(0.0, f64::max) as f32;
                if m > 0.0 {
                    for c in 0..IMAGE_CHANNELS {
                        let v = m * decoy.get(c, x, y) + (1.0 - m) * bg.get(c, x, y);
                        bg.set(c, x, y, v);
                    }
                }
            }
        }
    }
    let image = composite(&alpha, &fg, &bg)?;
    Ok(MattingSample {
        image,
        alpha,
        fg,
        bg,
    })
}

/// Side of the square patches placed in training user maps.
pub const TRAIN_PATCH: usize = 15;
/// Success probability of the geometric patch count.
pub const TRAIN_PATCH_P: f64 = 1.0 / 6.0;

/// Random training user map: `L ~ Geometric(1/6)` patches (`P(L = l) =
/// p (1 − p)^l`, so the empty map is possible) of 15×15 pixels placed
/// uniformly, each labeled from `gt` with the δ rule.
pub fn gen_train_usermap_with(gt: &Raster, delta: f64, rng: &mut impl Rng) -> UserMap {
    let (w, h) = (gt.width(), gt.height());
    let mut map = UserMap::empty(w, h);
    let count = Geometric::new(TRAIN_PATCH_P)
        .expect("valid probability")
        .sample(rng);
    let (pw, ph) = (TRAIN_PATCH.min(w), TRAIN_PATCH.min(h));
    for _ in 0..count {
        let x0 = rng.random_range(0..=w - pw);
        let y0 = rng.random_range(0..=h - ph);
        let rect = PatchProposal {
            grid_row: 0,
            grid_col: 0,
            x0,
            y0,
            x1: x0 + pw,
            y1: y0 + ph,
            mean_uncertainty: 0.0,
        };
        let plane = gt.plane(0);
        let label = Label::from_alphas(
            (y0..y0 + ph).flat_map(|y| plane[y * w + x0..y * w + x0 + pw].iter().copied()),
            delta,
        );
        map.apply_label(&rect, label).expect("patch inside image");
    }
    map
}

pub fn gen_train_usermap(gt: &Raster, seed: u64) -> UserMap {
    gen_train_usermap_with(gt, ORACLE_DELTA, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_noise_free_is_exact() {
        let d = gen_cubic(100, (-4.0, 4.0), 0.0, 1);
        for (x, y) in d.x.iter().zip(&d.y) {
            assert!((y - (x * x * x + 64.0) / 128.0).abs() < 1e-15);
            assert!((0.0..=1.0).contains(y));
        }
        assert_eq!(d.rescale.invert(d.rescale.apply(5.0)), 5.0);
    }

    #[test]
    fn cubic_is_seeded() {
        assert_eq!(
            gen_cubic(50, (-4.0, 4.0), 3.0, 7),
            gen_cubic(50, (-4.0, 4.0), 3.0, 7)
        );
        assert_ne!(
            gen_cubic(50, (-4.0, 4.0), 3.0, 7),
            gen_cubic(50, (-4.0, 4.0), 3.0, 8)
        );
    }

    #[test]
    fn cubic_residual_variance() {
        let sigma = 3.0;
        let d = gen_cubic(20_000, (-4.0, 4.0), sigma, 3);
        let n = d.x.len() as f64;
        let res: Vec<f64> =
            d.x.iter()
                .zip(&d.y)
                .map(|(x, y)| d.rescale.invert(*y) - x * x * x)
                .collect();
        let mean = res.iter().sum::<f64>() / n;
        let var = res.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn composites_reconstruct_exactly() {
        let set = gen_composites(3, 64, 5).unwrap();
        for s in &set {
            assert_eq!(s.image, composite(&s.alpha, &s.fg, &s.bg).unwrap());
            for i in 0..s.alpha.pixel_count() {
                let a = s.alpha.data()[i];
                assert!((0.0..=1.0).contains(&a));
                for c in 0..IMAGE_CHANNELS {
                    let (img, f, b) = (s.image.plane(c)[i], s.fg.plane(c)[i], s.bg.plane(c)[i]);
                    if a == 1.0 {
                        assert_eq!(img, f);
                    }
                    if a == 0.0 {
                        assert_eq!(img, b);
                    }
                }
            }
            let fg = s.alpha.data().iter().filter(|&&a| a == 1.0).count();
            let bg = s.alpha.data().iter().filter(|&&a| a == 0.0).count();
            assert!(fg > 0 && bg > 0);
        }
        assert_eq!(gen_composites(2, 64, 5).unwrap()[1], set[1]);
    }

    #[test]
    fn composites_reject_small_sizes() {
        assert!(gen_composites(1, 32, 0).is_err());
        assert!(gen_composites(0, 64, 0).is_err());
    }

    #[test]
    fn usermap_patch_count_is_geometric() {
        let gt = Raster::filled(64, 64, 1, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trials = 12_000;
        let empty = (0..trials)
            .filter(|_| gen_train_usermap_with(&gt, 0.05, &mut rng).is_empty())
            .count();
        let p = empty as f64 / trials as f64;
        assert!((p - 1.0 / 6.0).abs() < 0.015, "P(L=0) ≈ {p}");
    }

    #[test]
    fn usermap_labels_follow_gt() {
        let fg = Raster::filled(40, 40, 1, 1.0);
        let bg = Raster::filled(40, 40, 1, 0.0);
        for seed in 0..20 {
            let u = gen_train_usermap(&fg, seed);
            assert!(u.raster().data().iter().all(|&v| v == 0.0 || v == 1.0));
            let u = gen_train_usermap(&bg, seed);
            assert!(u.raster().data().iter().all(|&v| v == 0.0 || v == -1.0));
        }
        let mixed = Raster::from_fn(40, 40, |x, _| if x < 20 { 1.0 } else { 0.0 });
        assert_eq!(gen_train_usermap(&mixed, 3), gen_train_usermap(&mixed, 3));
    }
}
