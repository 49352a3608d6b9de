//! Dense and 3×3 convolution kernels with hand-written backward passes.
//!
//! Feature maps are planar `channels × height × width`. Convolutions use
//! zero padding and keep the spatial size. Forward kernels are generic over
//! [`Real`] so inference can run in `f32` while training runs in `f64`.

use core::ops::{Add, AddAssign, Mul};

pub trait Real:
    Copy + Default + PartialOrd + Add<Output = Self> + Mul<Output = Self> + AddAssign
{
    const ZERO: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Shape of a planar feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
}

impl Plane {
    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

// Valid output range along one axis for tap offset `d ∈ {-1, 0, 1}`.
#[inline]
fn span(d: isize, n: usize) -> (usize, usize) {
    let lo = if d < 0 { 1 } else { 0 };
    let hi = if d > 0 { n.saturating_sub(1) } else { n };
    (lo, hi)
}

/// `out[co] = bias[co] + Σ_ci w[co, ci] ⋆ input[ci]` with 3×3 kernels.
///
/// `weights` is `cout × cin × 3 × 3`.
pub fn conv3x3_forward<T: Real>(
    input: &[T],
    cin: usize,
    plane: Plane,
    weights: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let cout = bias.len();
    let (w, h, n) = (plane.width, plane.height, plane.len());
    debug_assert_eq!(input.len(), cin * n);
    debug_assert_eq!(out.len(), cout * n);
    debug_assert_eq!(weights.len(), cout * cin * 9);
    for co in 0..cout {
        let o = &mut out[co * n..(co + 1) * n];
        o.fill(bias[co]);
        for ci in 0..cin {
            let src = &input[ci * n..(ci + 1) * n];
            let k = &weights[(co * cin + ci) * 9..(co * cin + ci + 1) * 9];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = span(dy, h);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = span(dx, w);
                    let wv = k[ky * 3 + kx];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let dst = &mut o[y * w + x0..y * w + x1];
                        let s0 = (sy * w + x0) as isize + dx;
                        let s = &src[s0 as usize..s0 as usize + (x1 - x0)];
                        for (d, &v) in dst.iter_mut().zip(s) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }
}

/// Backward pass of [`conv3x3_forward`]. Accumulates into `grad_w` and
/// `grad_b`; overwrites `grad_in` when given.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward(
    input: &[f64],
    cin: usize,
    plane: Plane,
    weights: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    mut grad_in: Option<&mut [f64]>,
) {
    let cout = grad_b.len();
    let (w, h, n) = (plane.width, plane.height, plane.len());
    if let Some(gi) = grad_in.as_deref_mut() {
        gi.fill(0.0);
    }
    for co in 0..cout {
        let go = &grad_out[co * n..(co + 1) * n];
        grad_b[co] += go.iter().sum::<f64>();
        for ci in 0..cin {
            let src = &input[ci * n..(ci + 1) * n];
            let base = (co * cin + ci) * 9;
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = span(dy, h);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = span(dx, w);
                    let len = x1 - x0;
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let g = &go[y * w + x0..y * w + x1];
                        let s0 = ((sy * w + x0) as isize + dx) as usize;
                        let s = &src[s0..s0 + len];
                        acc += g.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                    }
                    grad_w[base + ky * 3 + kx] += acc;
                    if let Some(gi) = grad_in.as_deref_mut() {
                        let wv = weights[base + ky * 3 + kx];
                        let gi = &mut gi[ci * n..(ci + 1) * n];
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let g = &go[y * w + x0..y * w + x1];
                            let s0 = ((sy * w + x0) as isize + dx) as usize;
                            for (d, &v) in gi[s0..s0 + len].iter_mut().zip(g) {
                                *d += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Per-pixel linear map `out[co] = bias[co] + Σ_ci w[co, ci] input[ci]`.
pub fn pointwise_forward<T: Real>(
    input: &[T],
    cin: usize,
    n: usize,
    weights: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let cout = bias.len();
    for co in 0..cout {
        let o = &mut out[co * n..(co + 1) * n];
        o.fill(bias[co]);
        for ci in 0..cin {
            let wv = weights[co * cin + ci];
            for (d, &v) in o.iter_mut().zip(&input[ci * n..(ci + 1) * n]) {
                *d += wv * v;
            }
        }
    }
}

/// Backward pass of [`pointwise_forward`]; overwrites `grad_in`.
#[allow(clippy::too_many_arguments)]
pub fn pointwise_backward(
    input: &[f64],
    cin: usize,
    n: usize,
    weights: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    grad_in: &mut [f64],
) {
    let cout = grad_b.len();
    grad_in.fill(0.0);
    for co in 0..cout {
        let go = &grad_out[co * n..(co + 1) * n];
        grad_b[co] += go.iter().sum::<f64>();
        for ci in 0..cin {
            let src = &input[ci * n..(ci + 1) * n];
            grad_w[co * cin + ci] += go.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
            let wv = weights[co * cin + ci];
            for (d, &g) in grad_in[ci * n..(ci + 1) * n].iter_mut().zip(go) {
                *d += wv * g;
            }
        }
    }
}

#[inline]
pub fn relu_in_place<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
}

/// Zeroes `grad` wherever the (post-ReLU) activation is not positive.
#[inline]
pub fn relu_backward(activation: &[f64], grad: &mut [f64]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn seq(n: usize, scale: f64) -> Vec<f64> {
        (0..n)
            .map(|i| (((i * 7919) % 101) as f64 / 101.0 - 0.5) * scale)
            .collect()
    }

    // Direct definition with explicit zero padding.
    fn conv_reference(
        input: &[f64],
        cin: usize,
        p: Plane,
        weights: &[f64],
        bias: &[f64],
    ) -> Vec<f64> {
        let cout = bias.len();
        let mut out = vec![0.0; cout * p.len()];
        for co in 0..cout {
            for y in 0..p.height as isize {
                for x in 0..p.width as isize {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                let (sx, sy) = (x + kx - 1, y + ky - 1);
                                if sx < 0
                                    || sy < 0
                                    || sx >= p.width as isize
                                    || sy >= p.height as isize
                                {
                                    continue;
                                }
                                let v = input[ci * p.len() + sy as usize * p.width + sx as usize];
                                acc += weights[(co * cin + ci) * 9 + (ky * 3 + kx) as usize] * v;
                            }
                        }
                    }
                    out[co * p.len() + y as usize * p.width + x as usize] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_reference() {
        let p = Plane {
            width: 5,
            height: 4,
        };
        let (cin, cout) = (2, 3);
        let input = seq(cin * p.len(), 2.0);
        let weights = seq(cout * cin * 9, 1.0);
        let bias = [0.1, -0.2, 0.3];
        let mut out = vec![0.0; cout * p.len()];
        conv3x3_forward(&input, cin, p, &weights, &bias, &mut out);
        let want = conv_reference(&input, cin, p, &weights, &bias);
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let p = Plane {
            width: 4,
            height: 3,
        };
        let (cin, cout) = (2, 2);
        let input = seq(cin * p.len(), 2.0);
        let weights = seq(cout * cin * 9, 1.0);
        let bias = [0.05, -0.1];
        // Loss = Σ c_i out_i with fixed coefficients.
        let coef = seq(cout * p.len(), 3.0);
        let loss = |inp: &[f64], w: &[f64]| -> f64 {
            conv_reference(inp, cin, p, w, &bias)
                .iter()
                .zip(&coef)
                .map(|(a, b)| a * b)
                .sum()
        };
        let mut gw = vec![0.0; weights.len()];
        let mut gb = vec![0.0; 2];
        let mut gi = vec![0.0; input.len()];
        conv3x3_backward(
            &input,
            cin,
            p,
            &weights,
            &coef,
            &mut gw,
            &mut gb,
            Some(&mut gi),
        );
        let h = 1e-6;
        for k in 0..weights.len() {
            let (mut hi, mut lo) = (weights.clone(), weights.clone());
            hi[k] += h;
            lo[k] -= h;
            let fd = (loss(&input, &hi) - loss(&input, &lo)) / (2.0 * h);
            assert!((fd - gw[k]).abs() < 1e-6, "w{k}");
        }
        for k in 0..input.len() {
            let (mut hi, mut lo) = (input.clone(), input.clone());
            hi[k] += h;
            lo[k] -= h;
            let fd = (loss(&hi, &weights) - loss(&lo, &weights)) / (2.0 * h);
            assert!((fd - gi[k]).abs() < 1e-6, "x{k}");
        }
        let sum0: f64 = coef[..p.len()].iter().sum();
        assert!((gb[0] - sum0).abs() < 1e-12);
    }

    #[test]
    fn pointwise_backward_matches_finite_differences() {
        let n = 6;
        let (cin, cout) = (3, 2);
        let input = seq(cin * n, 1.0);
        let weights = seq(cout * cin, 1.0);
        let bias = [0.3, -0.1];
        let coef = seq(cout * n, 2.0);
        let loss = |inp: &[f64], w: &[f64]| -> f64 {
            let mut out = vec![0.0; cout * n];
            pointwise_forward(inp, cin, n, w, &bias, &mut out);
            out.iter().zip(&coef).map(|(a, b)| a * b).sum()
        };
        let mut gw = vec![0.0; weights.len()];
        let mut gb = vec![0.0; 2];
        let mut gi = vec![0.0; input.len()];
        pointwise_backward(&input, cin, n, &weights, &coef, &mut gw, &mut gb, &mut gi);
        let h = 1e-6;
        for k in 0..weights.len() {
            let (mut hi, mut lo) = (weights.clone(), weights.clone());
            hi[k] += h;
            lo[k] -= h;
            assert!(((loss(&input, &hi) - loss(&input, &lo)) / (2.0 * h) - gw[k]).abs() < 1e-6);
        }
        for k in 0..input.len() {
            let (mut hi, mut lo) = (input.clone(), input.clone());
            hi[k] += h;
            lo[k] -= h;
            assert!(((loss(&hi, &weights) - loss(&lo, &weights)) / (2.0 * h) - gi[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn f32_forward_tracks_f64() {
        let p = Plane {
            width: 6,
            height: 6,
        };
        let input = seq(2 * p.len(), 1.0);
        let weights = seq(2 * 2 * 9, 1.0);
        let bias = [0.0, 0.1];
        let mut out64 = vec![0.0; 2 * p.len()];
        conv3x3_forward(&input, 2, p, &weights, &bias, &mut out64);
        let to32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
        let mut out32 = vec![0.0f32; 2 * p.len()];
        conv3x3_forward(
            &to32(&input),
            2,
            p,
            &to32(&weights),
            &to32(&bias),
            &mut out32,
        );
        for (a, b) in out64.iter().zip(&out32) {
            assert!((a - *b as f64).abs() < 1e-5);
        }
    }
}
