//! Matting error metrics and uncertainty diagnostics.
//!
//! Grad and Conn follow the usual matting-benchmark formulations: Grad
//! compares Gaussian-derivative gradient magnitudes (σ = 1.4) raised to the
//! power 1.4, Conn compares connectivity degradation over thresholds
//! 0.1, 0.2, …, 0.9 against the largest 4-connected component.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::nig::{NigMap, NigParams};
use crate::raster::Raster;
use crate::special::student_t_central_mass;
use crate::{Error, Result};

pub const GRAD_SIGMA: f64 = 1.4;
pub const GRAD_EXPONENT: f64 = 1.4;
pub const CONN_STEP: f64 = 0.1;
pub const CONN_MIN_DISTANCE: f64 = 0.15;

/// Trimap codes for region metrics.
pub const TRIMAP_BG: f32 = 0.0;
pub const TRIMAP_TRANSITION: f32 = 0.5;
pub const TRIMAP_FG: f32 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub sad: f64,
    pub mse: f64,
    pub mad: f64,
}

/// All metrics for one prediction in natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sad: f64,
    pub mse: f64,
    pub mad: f64,
    pub grad: f64,
    pub conn: f64,
    pub sad_bf: Option<f64>,
    pub sad_t: Option<f64>,
}

impl MetricReport {
    /// Report with table scaling applied: SAD in thousands, MSE in thousandths.
    pub fn scaled(&self) -> MetricReport {
        MetricReport {
            sad: self.sad / 1e3,
            mse: self.mse * 1e3,
            ..*self
        }
    }
}

fn check_same(pred: &Raster, gt: &Raster) -> Result<()> {
    pred.ensure_same_size(gt)
}

pub fn error_metrics(pred: &Raster, gt: &Raster) -> Result<ErrorMetrics> {
    check_same(pred, gt)?;
    let (mut sad, mut sq) = (0.0f64, 0.0f64);
    for (&p, &g) in pred.plane(0).iter().zip(gt.plane(0)) {
        let d = p as f64 - g as f64;
        sad += d.abs();
        sq += d * d;
    }
    let n = pred.pixel_count() as f64;
    Ok(ErrorMetrics {
        sad,
        mse: sq / n,
        mad: sad / n,
    })
}

/// Trimap from a ground-truth matte: 0 and 1 stay, anything fractional is
/// transition.
pub fn trimap_from_alpha(gt: &Raster) -> Raster {
    gt.map(|a| {
        if a <= 0.0 {
            TRIMAP_BG
        } else if a >= 1.0 {
            TRIMAP_FG
        } else {
            TRIMAP_TRANSITION
        }
    })
}

/// `(sad_bf, sad_t)`: SAD over foreground ∪ background and over transition.
pub fn region_sad(pred: &Raster, gt: &Raster, trimap: &Raster) -> Result<(f64, f64)> {
    check_same(pred, gt)?;
    check_same(pred, trimap)?;
    let (mut bf, mut t) = (0.0f64, 0.0f64);
    for ((&p, &g), &code) in pred.plane(0).iter().zip(gt.plane(0)).zip(trimap.plane(0)) {
        let d = (p as f64 - g as f64).abs();
        if code == TRIMAP_TRANSITION {
            t += d;
        } else if code == TRIMAP_BG || code == TRIMAP_FG {
            bf += d;
        } else {
            return Err(Error::UnknownCode(code));
        }
    }
    Ok((bf, t))
}

/// Normalized 2-D Gaussian-derivative kernel along x, `(2r+1)²` taps with
/// `r = ⌈3σ⌉`, row-major over `(ky, kx)`.
pub fn gaussian_derivative_kernel(sigma: f64) -> (usize, Vec<f64>) {
    let r = libm::ceil(3.0 * sigma) as usize;
    let size = 2 * r + 1;
    let g = |t: f64| libm::exp(-t * t / (2.0 * sigma * sigma));
    let mut k = Vec::with_capacity(size * size);
    for ky in 0..size {
        let ty = ky as f64 - r as f64;
        for kx in 0..size {
            let tx = kx as f64 - r as f64;
            k.push(-tx / (sigma * sigma) * g(tx) * g(ty));
        }
    }
    let norm = libm::sqrt(k.iter().map(|v| v * v).sum::<f64>());
    k.iter_mut().for_each(|v| *v /= norm);
    (r, k)
}

/// Gradient magnitude with the Gaussian-derivative filters, replicate border.
pub fn gradient_magnitude(img: &Raster, sigma: f64) -> Vec<f64> {
    let (r, kx) = gaussian_derivative_kernel(sigma);
    let size = 2 * r + 1;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let plane = img.plane(0);
    let clamp = |v: isize, n: isize| v.clamp(0, n - 1) as usize;
    let mut out = Vec::with_capacity(plane.len());
    for y in 0..h {
        for x in 0..w {
            let (mut gx, mut gy) = (0.0f64, 0.0f64);
            let at = |sx: isize, sy: isize| plane[clamp(sy, h) * w as usize + clamp(sx, w)] as f64;
            // The kernel is exactly antisymmetric in x, so taps are paired:
            // flat regions then cancel exactly. The y filter is the
            // transpose of the x filter.
            for a in 0..size {
                let da = a as isize - r as isize;
                for j in 1..=r {
                    let k = kx[a * size + r + j];
                    let j = j as isize;
                    gx += k * (at(x + j, y + da) - at(x - j, y + da));
                    gy += k * (at(x + da, y + j) - at(x + da, y - j));
                }
            }
            out.push(libm::sqrt(gx * gx + gy * gy));
        }
    }
    out
}

/// `Σ |‖∇pred‖ − ‖∇gt‖|^1.4`.
pub fn grad_metric(pred: &Raster, gt: &Raster) -> Result<f64> {
    check_same(pred, gt)?;
    let gp = gradient_magnitude(pred, GRAD_SIGMA);
    let gg = gradient_magnitude(gt, GRAD_SIGMA);
    Ok(gp
        .iter()
        .zip(&gg)
        .map(|(a, b)| libm::pow((a - b).abs(), GRAD_EXPONENT))
        .sum())
}

/// Largest 4-connected component of `on`; ties go to the component found
/// first in row-major order.
pub fn largest_component(on: &[bool], width: usize, height: usize) -> Vec<bool> {
    let mut label = vec![0u32; on.len()];
    let mut best = (0usize, 0u32);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..on.len() {
        if !on[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % width, i / width);
            let mut visit = |j: usize| {
                if on[j] && label[j] == 0 {
                    label[j] = next;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        if size > best.0 {
            best = (size, next);
        }
    }
    label.iter().map(|&l| best.0 > 0 && l == best.1).collect()
}

/// Connectivity error.
pub fn conn_metric(pred: &Raster, gt: &Raster) -> Result<f64> {
    check_same(pred, gt)?;
    let (w, h) = (pred.width(), pred.height());
    let p = pred.plane(0);
    let g = gt.plane(0);
    let steps = libm::round(1.0 / CONN_STEP) as usize;
    let mut level = vec![-1.0f64; p.len()];
    for i in 1..steps {
        let t = i as f64 * CONN_STEP;
        let on: Vec<bool> = p
            .iter()
            .zip(g)
            .map(|(&a, &b)| a as f64 >= t && b as f64 >= t)
            .collect();
        let omega = largest_component(&on, w, h);
        let prev = (i - 1) as f64 * CONN_STEP;
        for (l, &inside) in level.iter_mut().zip(&omega) {
            if *l == -1.0 && !inside {
                *l = prev;
            }
        }
    }
    let phi = |a: f32, l: f64| {
        let d = a as f64 - l;
        if d >= CONN_MIN_DISTANCE {
            1.0 - d
        } else {
            1.0
        }
    };
    Ok(level
        .iter()
        .map(|&l| if l == -1.0 { 1.0 } else { l })
        .zip(p.iter().zip(g))
        .map(|(l, (&a, &b))| (phi(a, l) - phi(b, l)).abs())
        .sum())
}

/// Every metric; region SADs when a trimap is given.
pub fn evaluate(pred: &Raster, gt: &Raster, trimap: Option<&Raster>) -> Result<MetricReport> {
    let e = error_metrics(pred, gt)?;
    let regions = trimap.map(|t| region_sad(pred, gt, t)).transpose()?;
    Ok(MetricReport {
        sad: e.sad,
        mse: e.mse,
        mad: e.mad,
        grad: grad_metric(pred, gt)?,
        conn: conn_metric(pred, gt)?,
        sad_bf: regions.map(|r| r.0),
        sad_t: regions.map(|r| r.1),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub levels: Vec<f64>,
    pub coverage: Vec<f64>,
}

impl CalibrationCurve {
    /// Largest `|coverage − level|`.
    pub fn max_deviation(&self) -> f64 {
        self.levels
            .iter()
            .zip(&self.coverage)
            .map(|(l, c)| (l - c).abs())
            .fold(0.0, f64::max)
    }
}

/// Mass of the Student-t marginal of `p` strictly closer to `γ` than `y`.
pub fn central_interval_mass(y: f64, p: &NigParams) -> f64 {
    let nu = 2.0 * p.alpha;
    let scale = libm::sqrt(p.beta * (1.0 + p.omega) / (p.omega * p.alpha));
    student_t_central_mass((y - p.gamma) / scale, nu)
}

/// Fraction of targets inside the central `c`-interval of each prediction's
/// Student-t marginal, for each level `c`.
pub fn calibration(
    params: &[NigParams],
    targets: &[f64],
    levels: &[f64],
) -> Result<CalibrationCurve> {
    if params.is_empty() {
        return Err(Error::Empty("calibration data"));
    }
    if params.len() != targets.len() {
        return Err(Error::dims((params.len(), 1), (targets.len(), 1)));
    }
    if levels.windows(2).any(|w| w[0] > w[1]) || levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::InvalidParameter(
            "calibration levels must be ascending in [0, 1]".into(),
        ));
    }
    let masses: Vec<f64> = params
        .iter()
        .zip(targets)
        .map(|(p, &y)| central_interval_mass(y, p))
        .collect();
    let n = masses.len() as f64;
    let coverage = levels
        .iter()
        .map(|&c| {
            if c >= 1.0 {
                1.0
            } else {
                masses.iter().filter(|&&m| m < c).count() as f64 / n
            }
        })
        .collect();
    Ok(CalibrationCurve {
        levels: levels.to_vec(),
        coverage,
    })
}

/// [`calibration`] over every pixel of a map.
pub fn calibration_map(map: &NigMap, gt: &Raster, levels: &[f64]) -> Result<CalibrationCurve> {
    map.gamma.ensure_same_size(gt)?;
    let params: Vec<NigParams> = map.iter().collect();
    let targets: Vec<f64> = gt.plane(0).iter().map(|&v| v as f64).collect();
    calibration(&params, &targets, levels)
}

/// Area under the ROC curve of `scores` as a detector of `positive`,
/// via the rank-sum statistic with averaged ranks for ties.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::dims((scores.len(), 1), (positive.len(), 1)));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("roc scores"));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// One equal-width uncertainty bin of [`region_histogram`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionBin {
    pub lo: f64,
    pub hi: f64,
    /// Pixels in foreground or background.
    pub fg_bg: usize,
    pub transition: usize,
}

impl RegionBin {
    pub fn fg_bg_proportion(&self) -> f64 {
        let n = self.fg_bg + self.transition;
        if n == 0 {
            0.0
        } else {
            self.fg_bg as f64 / n as f64
        }
    }
}

/// Region composition of equal-width uncertainty bins over `[min, max]`.
pub fn region_histogram(
    uncertainty: &Raster,
    trimap: &Raster,
    bins: usize,
) -> Result<Vec<RegionBin>> {
    check_same(uncertainty, trimap)?;
    if bins == 0 {
        return Err(Error::InvalidParameter("bins must be positive".into()));
    }
    let u = uncertainty.plane(0);
    let (lo, hi) = u
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        });
    if !(lo <= hi) {
        return Err(Error::Empty("finite uncertainty values"));
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<RegionBin> = (0..bins)
        .map(|b| RegionBin {
            lo: lo + b as f64 * width,
            hi: lo + (b + 1) as f64 * width,
            fg_bg: 0,
            transition: 0,
        })
        .collect();
    for (&v, &code) in u.iter().zip(trimap.plane(0)) {
        if !v.is_finite() {
            continue;
        }
        let b = if width > 0.0 {
            (((v as f64 - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        if code == TRIMAP_TRANSITION {
            out[b].transition += 1;
        } else if code == TRIMAP_BG || code == TRIMAP_FG {
            out[b].fg_bg += 1;
        } else {
            return Err(Error::UnknownCode(code));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_raster(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Raster {
        Raster::from_fn(w, h, |_, _| match rng.random_range(0..4) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f32>(),
        })
    }

    #[test]
    fn error_metrics_cases() {
        let gt = Raster::filled(10, 10, 1, 1.0);
        assert_eq!(
            error_metrics(&gt, &gt).unwrap(),
            ErrorMetrics {
                sad: 0.0,
                mse: 0.0,
                mad: 0.0
            }
        );
        let pred = Raster::filled(10, 10, 1, 0.5);
        assert_eq!(
            error_metrics(&pred, &gt).unwrap(),
            ErrorMetrics {
                sad: 50.0,
                mse: 0.25,
                mad: 0.5
            }
        );
        assert!(error_metrics(&pred, &Raster::zeros(9, 10, 1)).is_err());
    }

    #[test]
    fn report_scaling() {
        let r = MetricReport {
            sad: 2500.0,
            mse: 0.004,
            mad: 0.1,
            grad: 3.0,
            conn: 4.0,
            sad_bf: None,
            sad_t: None,
        };
        let s = r.scaled();
        assert_eq!(s.sad, 2.5);
        assert_eq!(s.mse, 4.0);
        assert_eq!(s.grad, 3.0);
    }

    #[test]
    fn region_sad_all_transition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pred = random_raster(8, 8, &mut rng);
        let gt = random_raster(8, 8, &mut rng);
        let tri = Raster::filled(8, 8, 1, TRIMAP_TRANSITION);
        let sad = error_metrics(&pred, &gt).unwrap().sad;
        assert_eq!(region_sad(&pred, &gt, &tri).unwrap(), (0.0, sad));
        assert_eq!(
            region_sad(&gt, &gt, &trimap_from_alpha(&gt)).unwrap(),
            (0.0, 0.0)
        );
        let bad = Raster::filled(8, 8, 1, 0.25);
        assert_eq!(region_sad(&pred, &gt, &bad), Err(Error::UnknownCode(0.25)));
    }

    #[test]
    fn grad_zero_cases() {
        let a = Raster::filled(16, 16, 1, 0.2);
        let b = Raster::filled(16, 16, 1, 0.9);
        assert_eq!(grad_metric(&a, &b).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = random_raster(16, 16, &mut rng);
        assert_eq!(grad_metric(&r, &r).unwrap(), 0.0);
    }

    #[test]
    fn conn_zero_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = random_raster(16, 16, &mut rng);
        assert_eq!(conn_metric(&r, &r).unwrap(), 0.0);
        let u = Raster::filled(8, 8, 1, 0.7);
        assert_eq!(conn_metric(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn largest_component_tie_and_shape() {
        // Two components of size 2; the first in scan order wins.
        let on = [true, true, false, false, false, true, false, true, false];
        let lc = largest_component(&on, 3, 3);
        assert_eq!(
            lc,
            [true, true, false, false, false, false, false, false, false]
        );
        assert!(largest_component(&[false; 4], 2, 2).iter().all(|&b| !b));
    }

    fn nig(gamma: f64, omega: f64, alpha: f64, beta: f64) -> NigParams {
        NigParams::new(gamma, omega, alpha, beta).unwrap()
    }

    #[test]
    fn calibration_endpoints_and_far_targets() {
        let p = alloc::vec![nig(0.5, 2.0, 3.0, 0.1); 100];
        let t: Vec<f64> = (0..100).map(|i| 0.3 + 0.004 * i as f64).collect();
        let c = calibration(&p, &t, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(c.coverage[0], 0.0);
        assert_eq!(c.coverage[2], 1.0);
        let far = alloc::vec![1e6; 100];
        let c = calibration(&p, &far, &[0.0, 0.3, 0.9, 0.999]).unwrap();
        assert!(c.coverage.iter().all(|&v| v == 0.0));
        assert!(calibration(&[], &[], &[0.5]).is_err());
        assert!(calibration(&p, &t, &[0.5, 0.2]).is_err());
    }

    #[test]
    fn calibration_self_consistent() {
        // Targets drawn from each prediction's own Student-t marginal via
        // the NIG hierarchy: σ² ~ InvGamma(α, β), μ ~ N(γ, σ²/ω), y ~ N(μ, σ²).
        use rand_distr::{Distribution, Gamma, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut params = Vec::new();
        let mut targets = Vec::new();
        for i in 0..10_000 {
            let p = nig(
                0.1 + 0.8 * (i % 7) as f64 / 6.0,
                0.5 + (i % 5) as f64,
                1.5 + (i % 3) as f64,
                0.01 + 0.02 * (i % 4) as f64,
            );
            let precision: f64 = Gamma::new(p.alpha, 1.0 / p.beta).unwrap().sample(&mut rng);
            let var = 1.0 / precision;
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let mu = p.gamma + libm::sqrt(var / p.omega) * z1;
            targets.push(mu + libm::sqrt(var) * z2);
            params.push(p);
        }
        let levels: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let c = calibration(&params, &targets, &levels).unwrap();
        assert!(c.max_deviation() < 0.03, "{:?}", c.coverage);
    }

    #[test]
    fn auc_cases() {
        let labels = [false, false, true, true];
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5; 4], &labels).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::SingleClass));
    }

    #[test]
    fn auc_random_scores_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let scores: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let labels: Vec<bool> = (0..10_000).map(|_| rng.random_bool(0.3)).collect();
        let auc = roc_auc(&scores, &labels).unwrap();
        assert!((auc - 0.5).abs() < 0.02, "{auc}");
    }

    #[test]
    fn region_histogram_counts() {
        let unc = Raster::from_fn(4, 1, |x, _| x as f32);
        let tri = Raster::from_vec(4, 1, 1, alloc::vec![0.0, 0.5, 1.0, 0.5]).unwrap();
        let h = region_histogram(&unc, &tri, 2).unwrap();
        assert_eq!((h[0].fg_bg, h[0].transition), (1, 1));
        assert_eq!((h[1].fg_bg, h[1].transition), (1, 1));
        assert_eq!(h[1].fg_bg_proportion(), 0.5);
    }

    proptest! {
        #[test]
        fn auc_inversion_and_monotone_invariance(
            scores in proptest::collection::vec(-5.0..5.0f64, 20..60),
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut labels: Vec<bool> = scores.iter().map(|_| rng.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let auc = roc_auc(&scores, &labels).unwrap();
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            prop_assert!((roc_auc(&neg, &labels).unwrap() - (1.0 - auc)).abs() < 1e-12);
            let warped: Vec<f64> = scores.iter().map(|s| libm::exp(*s) * 3.0 + 1.0).collect();
            prop_assert!((roc_auc(&warped, &labels).unwrap() - auc).abs() < 1e-12);
        }

        #[test]
        fn sad_partition(seed in 0u64..1000, w in 8usize..40, h in 8usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pred = random_raster(w, h, &mut rng);
            let gt = random_raster(w, h, &mut rng);
            let tri = trimap_from_alpha(&gt);
            let (bf, t) = region_sad(&pred, &gt, &tri).unwrap();
            let sad = error_metrics(&pred, &gt).unwrap().sad;
            prop_assert!((bf + t - sad).abs() <= 1e-12 * sad.max(1.0));
        }
    }
}
