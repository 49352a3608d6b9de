//! The Normal-Inverse-Gamma evidential head.
//!
//! A prediction `NIG(γ, ω, α, β)` places a Gaussian prior on the target mean
//! and an inverse-gamma prior on its variance. From it we read
//!
//! * aleatoric uncertainty `E[σ²] = β / (α − 1)`,
//! * epistemic uncertainty `Var[γ] = β / (ω (α − 1))`,
//! * the spread of the aleatoric estimate `Var[σ²] = β² / ((α − 1)² (α − 2))`,
//!   defined only for `α > 2`.
//!
//! Training minimizes the negative log marginal likelihood, a Student-t with
//! `2α` degrees of freedom, plus an evidence penalty `|y − γ| (2ω + α)`.

use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::raster::Raster;
use crate::special::{digamma, ln_gamma};
use crate::{Error, Result};

/// Added after each softplus so `ω, β > 0` and `α > 1` hold strictly.
pub const EVIDENCE_FLOOR: f64 = 1e-6;

/// Default weight of the evidence regularizer.
pub const DEFAULT_LAMBDA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigParams {
    pub gamma: f64,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NigParams {
    /// Validating constructor; `gamma` may be any finite real.
    pub fn new(gamma: f64, omega: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = NigParams {
            gamma,
            omega,
            alpha,
            beta,
        };
        if !p.is_valid() {
            return Err(Error::InvalidParameter(alloc::format!(
                "NIG({gamma}, {omega}, {alpha}, {beta}) needs ω > 0, α > 1, β > 0"
            )));
        }
        Ok(p)
    }

    pub fn is_valid(&self) -> bool {
        self.gamma.is_finite()
            && self.omega.is_finite()
            && self.alpha.is_finite()
            && self.beta.is_finite()
            && self.omega > 0.0
            && self.alpha > 1.0
            && self.beta > 0.0
    }

    pub fn moments(&self) -> UncertaintyTriple {
        moments(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyTriple {
    /// `E[σ²]`.
    pub aleatoric: f64,
    /// `Var[γ]`.
    pub epistemic: f64,
    /// `Var[σ²]`, or `+∞` when `α ≤ 2`.
    pub var_sigma2: f64,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

/// Maps four raw network outputs to valid NIG parameters with
/// sigmoid / softplus / softplus + 1 / softplus.
pub fn activate(raw: [f64; 4]) -> Result<NigParams> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("raw NIG head output"));
    }
    Ok(activate_unchecked(raw))
}

#[inline]
pub(crate) fn activate_unchecked(raw: [f64; 4]) -> NigParams {
    NigParams {
        gamma: sigmoid(raw[0]),
        omega: softplus(raw[1]) + EVIDENCE_FLOOR,
        alpha: 1.0 + softplus(raw[2]) + EVIDENCE_FLOOR,
        beta: softplus(raw[3]) + EVIDENCE_FLOOR,
    }
}

/// Activation plus the elementwise derivative `d param / d raw`.
#[inline]
pub fn activate_with_grad(raw: [f64; 4]) -> (NigParams, [f64; 4]) {
    let p = activate_unchecked(raw);
    let g = p.gamma;
    // softplus'(x) = sigmoid(x)
    (
        p,
        [
            g * (1.0 - g),
            sigmoid(raw[1]),
            sigmoid(raw[2]),
            sigmoid(raw[3]),
        ],
    )
}

pub fn moments(p: &NigParams) -> UncertaintyTriple {
    let am1 = p.alpha - 1.0;
    let aleatoric = p.beta / am1;
    let epistemic = p.beta / (p.omega * am1);
    let var_sigma2 = if p.alpha > 2.0 {
        p.beta * p.beta / (am1 * am1 * (p.alpha - 2.0))
    } else {
        f64::INFINITY
    };
    UncertaintyTriple {
        aleatoric,
        epistemic,
        var_sigma2,
    }
}

/// Negative log marginal likelihood of `y`.
///
/// `½ log(π/ω) − α log Ω + (α + ½) log((y − γ)² ω + Ω) + log Γ(α) − log Γ(α + ½)`
/// with `Ω = 2β(1 + ω)`.
pub fn nll(y: f64, p: &NigParams) -> f64 {
    let big_omega = 2.0 * p.beta * (1.0 + p.omega);
    let r = y - p.gamma;
    0.5 * libm::log(PI / p.omega) - p.alpha * libm::log(big_omega)
        + (p.alpha + 0.5) * libm::log(r * r * p.omega + big_omega)
        + ln_gamma(p.alpha)
        - ln_gamma(p.alpha + 0.5)
}

/// Evidence penalty `|y − γ| (2ω + α)`.
pub fn regularizer(y: f64, p: &NigParams) -> f64 {
    (y - p.gamma).abs() * (2.0 * p.omega + p.alpha)
}

pub fn total_loss(y: f64, p: &NigParams, lambda: f64) -> f64 {
    nll(y, p) + lambda * regularizer(y, p)
}

/// Analytic `(∂/∂γ, ∂/∂ω, ∂/∂α, ∂/∂β)` of [`nll`].
pub fn nll_grad(y: f64, p: &NigParams) -> [f64; 4] {
    let NigParams {
        gamma,
        omega,
        alpha,
        beta,
    } = *p;
    let r = y - gamma;
    let big_omega = 2.0 * beta * (1.0 + omega);
    let denom = r * r * omega + big_omega;
    let a_half = alpha + 0.5;
    let d_gamma = -2.0 * a_half * r * omega / denom;
    let d_omega =
        -0.5 / omega - alpha * 2.0 * beta / big_omega + a_half * (r * r + 2.0 * beta) / denom;
    let d_alpha = libm::log(denom) - libm::log(big_omega) + digamma(alpha) - digamma(a_half);
    let d_beta = -alpha / beta + a_half * 2.0 * (1.0 + omega) / denom;
    [d_gamma, d_omega, d_alpha, d_beta]
}

/// Gradient of [`total_loss`]; the `|y − γ|` kink uses subgradient 0.
pub fn total_loss_grad(y: f64, p: &NigParams, lambda: f64) -> [f64; 4] {
    let mut g = nll_grad(y, p);
    let r = p.gamma - y;
    let sign = if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    };
    g[0] += lambda * sign * (2.0 * p.omega + p.alpha);
    g[1] += lambda * 2.0 * r.abs();
    g[2] += lambda * r.abs();
    g
}

/// Log-density of the NIG marginal, a Student-t with location `γ`,
/// squared scale `β(1 + ω) / (ωα)` and `2α` degrees of freedom.
pub fn student_t_logpdf(y: f64, p: &NigParams) -> f64 {
    let nu = 2.0 * p.alpha;
    let scale2 = p.beta * (1.0 + p.omega) / (p.omega * p.alpha);
    let z2 = (y - p.gamma) * (y - p.gamma) / scale2;
    ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * libm::log(nu * PI * scale2)
        - 0.5 * (nu + 1.0) * libm::log1p(z2 / nu)
}

/// Per-pixel NIG parameters stored as four single-channel rasters.
#[derive(Debug, Clone, PartialEq)]
pub struct NigMap {
    pub gamma: Raster,
    pub omega: Raster,
    pub alpha: Raster,
    pub beta: Raster,
}

impl NigMap {
    pub fn from_params(width: usize, height: usize, params: &[NigParams]) -> Result<Self> {
        if params.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: alloc::format!("{} pixels", width * height),
                actual: alloc::format!("{} pixels", params.len()),
            });
        }
        let plane = |f: fn(&NigParams) -> f64| {
            Raster::from_vec(
                width,
                height,
                1,
                params.iter().map(|p| f(p) as f32).collect(),
            )
        };
        Ok(NigMap {
            gamma: plane(|p| p.gamma)?,
            omega: plane(|p| p.omega)?,
            alpha: plane(|p| p.alpha)?,
            beta: plane(|p| p.beta)?,
        })
    }

    /// Builds a map from four rasters, checking sizes and parameter ranges.
    pub fn from_rasters(gamma: Raster, omega: Raster, alpha: Raster, beta: Raster) -> Result<Self> {
        for r in [&omega, &alpha, &beta] {
            gamma.ensure_same_size(r)?;
        }
        let map = NigMap {
            gamma,
            omega,
            alpha,
            beta,
        };
        if let Some(i) = (0..map.pixel_count()).find(|&i| !map.params(i).is_valid()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "pixel {i}: {:?}",
                map.params(i)
            )));
        }
        Ok(map)
    }

    pub fn width(&self) -> usize {
        self.gamma.width()
    }

    pub fn height(&self) -> usize {
        self.gamma.height()
    }

    pub fn pixel_count(&self) -> usize {
        self.gamma.pixel_count()
    }

    #[inline]
    pub fn params(&self, i: usize) -> NigParams {
        NigParams {
            gamma: self.gamma.data()[i] as f64,
            omega: self.omega.data()[i] as f64,
            alpha: self.alpha.data()[i] as f64,
            beta: self.beta.data()[i] as f64,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = NigParams> + '_ {
        (0..self.pixel_count()).map(|i| self.params(i))
    }

    pub fn is_valid(&self) -> bool {
        self.iter().all(|p| p.is_valid())
    }

    fn moment_map(&self, f: impl Fn(&UncertaintyTriple) -> f64) -> Raster {
        let data = self.iter().map(|p| f(&moments(&p)) as f32).collect();
        Raster::from_vec(self.width(), self.height(), 1, data).expect("size preserved")
    }

    pub fn aleatoric(&self) -> Raster {
        self.moment_map(|m| m.aleatoric)
    }

    pub fn epistemic(&self) -> Raster {
        self.moment_map(|m| m.epistemic)
    }

    /// `Var[σ²]`, with `+∞` where `α ≤ 2`.
    pub fn var_sigma2(&self) -> Raster {
        self.moment_map(|m| m.var_sigma2)
    }
}
