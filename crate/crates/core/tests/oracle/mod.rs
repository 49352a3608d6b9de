//! Reference implementations the library is checked against. Each one is
//! written the slow, obvious way and shares no code with the crate.
#![allow(dead_code)]

use statrs::distribution::{Continuous, StudentsT};

/// log St(y; γ, β(1+ω)/(ωα), 2α) via statrs.
pub fn student_t_logpdf(y: f64, gamma: f64, omega: f64, alpha: f64, beta: f64) -> f64 {
    let scale = (beta * (1.0 + omega) / (omega * alpha)).sqrt();
    StudentsT::new(gamma, scale, 2.0 * alpha).unwrap().ln_pdf(y)
}

/// Central difference of `f` at `x` along each coordinate.
pub fn central_diff<const N: usize>(f: impl Fn([f64; N]) -> f64, x: [f64; N], h: f64) -> [f64; N] {
    let mut g = [0.0; N];
    for k in 0..N {
        let (mut hi, mut lo) = (x, x);
        hi[k] += h;
        lo[k] -= h;
        g[k] = (f(hi) - f(lo)) / (2.0 * h);
    }
    g
}

/// Best split by exhaustive search in exact integer arithmetic.
///
/// Between-class variance for split `k` is proportional to
/// `(N·S₀ − S·W₀)² / (W₀·W₁)`; candidates are compared by cross
/// multiplication in `u128`, so there is no rounding at all. Ties and
/// empty classes resolve to the lowest `k`.
pub fn otsu_exhaustive(counts: &[u64]) -> usize {
    let n: u128 = counts.iter().map(|&c| c as u128).sum();
    let s: u128 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u128 * c as u128)
        .sum();
    // (numerator, denominator) of the best score so far; 0/1 for "no split"
    let mut best = (0u128, 1u128, 0usize);
    for k in 0..counts.len() - 1 {
        let w0: u128 = counts[..=k].iter().map(|&c| c as u128).sum();
        let s0: u128 = counts[..=k]
            .iter()
            .enumerate()
            .map(|(i, &c)| i as u128 * c as u128)
            .sum();
        let w1 = n - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let a = (n * s0).abs_diff(s * w0);
        let (num, den) = (a * a, w0 * w1);
        if num * best.1 > best.0 * den {
            best = (num, den, k);
        }
    }
    best.2
}

pub fn sad(p: &[f32], g: &[f32]) -> f64 {
    let mut t = 0.0;
    for i in 0..p.len() {
        t += (p[i] as f64 - g[i] as f64).abs();
    }
    t
}

pub fn mse(p: &[f32], g: &[f32]) -> f64 {
    let mut t = 0.0;
    for i in 0..p.len() {
        let d = p[i] as f64 - g[i] as f64;
        t += d * d;
    }
    t / p.len() as f64
}

/// SAD inside and outside the fractional part of `g`.
pub fn region_sad(p: &[f32], g: &[f32]) -> (f64, f64) {
    let (mut bf, mut t) = (0.0, 0.0);
    for i in 0..p.len() {
        let d = (p[i] as f64 - g[i] as f64).abs();
        if g[i] > 0.0 && g[i] < 1.0 {
            t += d;
        } else {
            bf += d;
        }
    }
    (bf, t)
}

/// Gradient magnitude by direct 2-D convolution with the full x and y
/// first-derivative-of-Gaussian kernels (unit L2 norm), replicate border.
pub fn gradient_magnitude(img: &[f32], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let mut kx = Vec::new();
    for j in -r..=r {
        for i in -r..=r {
            let (x, y) = (i as f64, j as f64);
            let gauss = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
            kx.push(-x / (sigma * sigma) * gauss);
        }
    }
    let norm = kx.iter().map(|v| v * v).sum::<f64>().sqrt();
    let size = (2 * r + 1) as usize;
    let px = |x: i64, y: i64| {
        img[(y.clamp(0, h as i64 - 1) as usize) * w + x.clamp(0, w as i64 - 1) as usize] as f64
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in -r..=r {
                for i in -r..=r {
                    // kx at (i, j); the y kernel is its transpose
                    let kxv = kx[((j + r) as usize) * size + (i + r) as usize] / norm;
                    let kyv = kx[((i + r) as usize) * size + (j + r) as usize] / norm;
                    // correlation, matching the usual benchmark convention
                    gx += kxv * px(x + i, y + j);
                    gy += kyv * px(x + i, y + j);
                }
            }
            out[(y as usize) * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

pub fn grad(p: &[f32], g: &[f32], w: usize, h: usize) -> f64 {
    let a = gradient_magnitude(p, w, h, 1.4);
    let b = gradient_magnitude(g, w, h, 1.4);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs().powf(1.4)).sum()
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut i = i;
        while self.0[i] != r {
            let n = self.0[i];
            self.0[i] = r;
            i = n;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // keep the smaller index as root so the root is the first pixel in
        // row-major order
        if ra < rb {
            self.0[rb] = ra;
        } else if rb < ra {
            self.0[ra] = rb;
        }
    }
}

/// Largest 4-connected component by union–find; ties go to the component
/// whose first pixel comes first in row-major order.
pub fn largest_component(on: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut d = Dsu((0..on.len()).collect());
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !on[i] {
                continue;
            }
            if x + 1 < w && on[i + 1] {
                d.union(i, i + 1);
            }
            if y + 1 < h && on[i + w] {
                d.union(i, i + w);
            }
        }
    }
    let mut size = vec![0usize; on.len()];
    for i in 0..on.len() {
        if on[i] {
            let r = d.find(i);
            size[r] += 1;
        }
    }
    let mut best = None;
    for (root, &s) in size.iter().enumerate() {
        if s > 0 && best.is_none_or(|(bs, _)| s > bs) {
            best = Some((s, root));
        }
    }
    (0..on.len())
        .map(|i| on[i] && best.is_some_and(|(_, r)| d.find(i) == r))
        .collect()
}

/// Connectivity error with thresholds 0.1..0.9 and the 0.15 distance cut.
pub fn conn(p: &[f32], g: &[f32], w: usize, h: usize) -> f64 {
    let n = p.len();
    // l_i: the last threshold at which pixel i was still connected
    let mut l: Vec<Option<f64>> = vec![None; n];
    for step in 1..10 {
        let t = step as f64 * 0.1;
        let on: Vec<bool> = (0..n)
            .map(|i| p[i] as f64 >= t && g[i] as f64 >= t)
            .collect();
        let comp = largest_component(&on, w, h);
        for i in 0..n {
            if l[i].is_none() && !comp[i] {
                l[i] = Some((step - 1) as f64 * 0.1);
            }
        }
    }
    let phi = |a: f32, li: f64| {
        let d = a as f64 - li;
        if d >= 0.15 {
            1.0 - d
        } else {
            1.0
        }
    };
    let mut total = 0.0;
    for i in 0..n {
        let li = l[i].unwrap_or(1.0);
        total += (phi(p[i], li) - phi(g[i], li)).abs();
    }
    total
}

/// Mann–Whitney AUC by counting all positive/negative pairs.
pub fn auc_pairs(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        if !positive[i] {
            continue;
        }
        for j in 0..scores.len() {
            if positive[j] {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}
