//! A plain feed-forward stack of 3×3 / 1×1 convolutions with optional ReLU.
//!
//! Dense MLPs are the 1×1 case with the batch laid out as "pixels".

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv3x3_backward, conv3x3_forward, pointwise_backward, pointwise_forward, relu_backward,
    relu_in_place, Plane, Real,
};
use super::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    Point,
    Conv3,
}

impl Kernel {
    fn taps(self) -> usize {
        match self {
            Kernel::Point => 1,
            Kernel::Conv3 => 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub cin: usize,
    pub cout: usize,
    pub kernel: Kernel,
    pub relu: bool,
}

impl LayerSpec {
    pub const fn conv3(cin: usize, cout: usize, relu: bool) -> Self {
        LayerSpec {
            cin,
            cout,
            kernel: Kernel::Conv3,
            relu,
        }
    }

    pub const fn point(cin: usize, cout: usize, relu: bool) -> Self {
        LayerSpec {
            cin,
            cout,
            kernel: Kernel::Point,
            relu,
        }
    }

    fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel.taps()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stack {
    layers: Vec<LayerSpec>,
    // (weight offset, bias offset) into the owning ParamSet
    offsets: Vec<(usize, usize)>,
}

/// How to initialise a layer's weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `N(0, 2 / fan_in)`.
    He,
    Zero,
}

impl Stack {
    /// Registers `{prefix}{i}.w` / `{prefix}{i}.b` tensors in `params`.
    pub fn register(prefix: &str, layers: &[LayerSpec], params: &mut ParamSet) -> Self {
        let offsets = layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let shape: Vec<usize> = match l.kernel {
                    Kernel::Point => vec![l.cout, l.cin],
                    Kernel::Conv3 => vec![l.cout, l.cin, 3, 3],
                };
                let w = params.push(&format!("{prefix}{i}.w"), &shape);
                let b = params.push(&format!("{prefix}{i}.b"), &[l.cout]);
                (w, b)
            })
            .collect();
        Stack {
            layers: layers.to_vec(),
            offsets,
        }
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].cin
    }

    pub fn out_channels(&self) -> usize {
        self.layers[self.layers.len() - 1].cout
    }

    /// Initialises every layer; biases are zero.
    pub fn init(&self, params: &mut ParamSet, inits: &[Init], rng: &mut impl Rng) {
        for ((l, &(w, _)), init) in self.layers.iter().zip(&self.offsets).zip(inits) {
            let n = l.weight_len();
            match init {
                Init::He => {
                    let fan_in = (l.cin * l.kernel.taps()) as f64;
                    params.fill_normal(w, n, libm::sqrt(2.0 / fan_in), rng);
                }
                Init::Zero => params.values_mut()[w..w + n].fill(0.0),
            }
        }
    }

    fn layer_forward<T: Real>(
        &self,
        i: usize,
        theta: &[T],
        input: &[T],
        plane: Plane,
        out: &mut [T],
    ) {
        let l = &self.layers[i];
        let (w, b) = self.offsets[i];
        let weights = &theta[w..w + l.weight_len()];
        let bias = &theta[b..b + l.cout];
        match l.kernel {
            Kernel::Point => pointwise_forward(input, l.cin, plane.len(), weights, bias, out),
            Kernel::Conv3 => conv3x3_forward(input, l.cin, plane, weights, bias, out),
        }
        if l.relu {
            relu_in_place(out);
        }
    }

    /// Inference pass; returns the planar output.
    pub fn forward<T: Real>(&self, theta: &[T], input: &[T], plane: Plane) -> Vec<T> {
        let mut cur = input.to_vec();
        for i in 0..self.layers.len() {
            let mut out = vec![T::ZERO; self.layers[i].cout * plane.len()];
            self.layer_forward(i, theta, &cur, plane, &mut out);
            cur = out;
        }
        cur
    }

    /// Training pass keeping every activation; `acts[0]` is the input and
    /// the last entry is the output.
    pub fn forward_train(&self, theta: &[f64], input: &[f64], plane: Plane) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for i in 0..self.layers.len() {
            let mut out = vec![0.0; self.layers[i].cout * plane.len()];
            self.layer_forward(i, theta, &acts[i], plane, &mut out);
            acts.push(out);
        }
        acts
    }

    /// Accumulates `∂loss/∂θ` into `grads` given `∂loss/∂output`.
    pub fn backward(
        &self,
        theta: &[f64],
        acts: &[Vec<f64>],
        grad_out: Vec<f64>,
        plane: Plane,
        grads: &mut [f64],
    ) {
        let mut g = grad_out;
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            if l.relu {
                relu_backward(&acts[i + 1], &mut g);
            }
            let (w, b) = self.offsets[i];
            let wl = l.weight_len();
            let (gw, gb) = split_two(grads, (w, wl), (b, l.cout));
            let weights = &theta[w..w + wl];
            // The network input needs no gradient.
            let mut gin = if i > 0 {
                vec![0.0; l.cin * plane.len()]
            } else {
                Vec::new()
            };
            match l.kernel {
                Kernel::Point => {
                    if i > 0 {
                        pointwise_backward(
                            &acts[i],
                            l.cin,
                            plane.len(),
                            weights,
                            &g,
                            gw,
                            gb,
                            &mut gin,
                        );
                    } else {
                        // grad_in is overwritten, so hand it scratch space.
                        let mut scratch = vec![0.0; l.cin * plane.len()];
                        pointwise_backward(
                            &acts[i],
                            l.cin,
                            plane.len(),
                            weights,
                            &g,
                            gw,
                            gb,
                            &mut scratch,
                        );
                    }
                }
                Kernel::Conv3 => {
                    let gi = if i > 0 {
                        Some(gin.as_mut_slice())
                    } else {
                        None
                    };
                    conv3x3_backward(&acts[i], l.cin, plane, weights, &g, gw, gb, gi);
                }
            }
            g = gin;
        }
    }
}

// Two disjoint mutable sub-slices; the weight block always precedes the bias.
fn split_two(v: &mut [f64], a: (usize, usize), b: (usize, usize)) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.0 + a.1 <= b.0);
    let (lo, hi) = v.split_at_mut(b.0);
    (&mut lo[a.0..a.0 + a.1], &mut hi[..b.1])
}
