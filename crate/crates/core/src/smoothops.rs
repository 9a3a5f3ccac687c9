//! Temperature-controlled smooth stand-ins for comparison, relu, clip, max and
//! argmax.
//!
//! Each operator comes in two forms: a generic kernel over [`Real`] used inside
//! the SDF and contact code, and a checked `f64` entry point that validates its
//! input. All temperatures live in [`SmoothParams`]; nothing here hard-codes one.

use serde::{Deserialize, Serialize};

use crate::diffcore::Real;
use crate::error::{Error, Result};

/// Temperatures of the smooth relaxations, in length units.
///
/// * `tau_cmp`: sharpness of comparisons `⟦x > a⟧` (activity indicators, trace
///   gating, branch blending).
/// * `tau_min`: sharpness of logsumexp / softmax (boolean combinators, contact
///   fusion weights).
/// * `tau_clip`: sharpness of softplus and soft clipping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothParams {
    pub tau_cmp: f64,
    pub tau_min: f64,
    pub tau_clip: f64,
}

impl Default for SmoothParams {
    fn default() -> Self {
        Self {
            tau_cmp: 1e-3,
            tau_min: 1e-2,
            tau_clip: 1e-3,
        }
    }
}

impl SmoothParams {
    pub fn new(tau_cmp: f64, tau_min: f64, tau_clip: f64) -> Result<Self> {
        let p = Self {
            tau_cmp,
            tau_min,
            tau_clip,
        };
        p.validate("smoothing")?;
        Ok(p)
    }

    /// Same temperature for every relaxation.
    pub fn uniform(tau: f64) -> Result<Self> {
        Self::new(tau, tau, tau)
    }

    /// Checks every temperature is finite and strictly positive. `prefix` is the
    /// field path used in the error.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (name, v) in [
            ("tau_cmp", self.tau_cmp),
            ("tau_min", self.tau_min),
            ("tau_clip", self.tau_clip),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(
                    format!("{prefix}.{name}"),
                    format!("temperature must be finite and > 0, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Generic kernels
// ---------------------------------------------------------------------------

/// Logistic function `1 / (1 + e^{-z})`, overflow-safe for any `z`.
#[inline]
pub fn sigmoid<T: Real>(z: T) -> T {
    let m = z.shift_max(T::zero());
    let a = (-m).exp();
    let b = (z - m).exp();
    b / (a + b)
}

/// Smoothed `⟦x > a⟧ = σ((x − a)/τ)`.
#[inline]
pub fn soft_gt<T: Real>(x: T, a: T, tau: f64) -> T {
    sigmoid((x - a) / tau)
}

/// `τ log(1 + e^{x/τ})`, evaluated as `m + τ log1p(e^{−|x|/τ})` with
/// `m = max(x, 0)`.
#[inline]
pub fn soft_plus<T: Real>(x: T, tau: f64) -> T {
    let m = x.shift_max(T::zero());
    m + ((x - m * 2.0) / tau).exp().ln_1p() * tau
}

/// `lo + s₊(x − lo) − s₊(x − hi)`. Saturates to `lo` and `hi` exactly in the
/// limit and always lies strictly inside `(lo, hi)`.
#[inline]
pub fn soft_clip<T: Real>(x: T, lo: T, hi: T, tau: f64) -> T {
    lo + soft_plus(x - lo, tau) - soft_plus(x - hi, tau)
}

/// `τ log Σ exp(xᵢ/τ)` with a max-shift. A single operand is returned as is.
///
/// Panics on an empty slice.
#[inline]
pub fn logsumexp<T: Real>(xs: &[T], tau: f64) -> T {
    if xs.len() == 1 {
        return xs[0];
    }
    let m = xs[1..].iter().fold(xs[0], |m, &x| m.shift_max(x));
    let mut s = T::zero();
    for &x in xs {
        s += ((x - m) / tau).exp();
    }
    m + s.ln() * tau
}

/// Smooth minimum `−LSE(−x)`.
#[inline]
pub fn soft_min<T: Real>(xs: &[T], tau: f64) -> T {
    let neg: smallvec::SmallVec<[T; 8]> = xs.iter().map(|&x| -x).collect();
    -logsumexp(&neg, tau)
}

/// Softmax weights `exp(xᵢ/τ) / Σⱼ exp(xⱼ/τ)` written into `out`.
#[inline]
pub fn soft_argmax_into<T: Real>(xs: &[T], tau: f64, out: &mut [T]) {
    let m = xs[1..].iter().fold(xs[0], |m, &x| m.shift_max(x));
    let mut s = T::zero();
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = ((x - m) / tau).exp();
        s += *o;
    }
    let inv = s.recip();
    for o in out.iter_mut() {
        *o *= inv;
    }
}

// ---------------------------------------------------------------------------
// Checked f64 entry points
// ---------------------------------------------------------------------------

fn finite(op: &'static str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

/// `σ((x − a)/τ_cmp)`, a weight in `(0, 1)` (saturating to the endpoints in
/// floating point far from `a`).
pub fn sigmoid_cmp(x: f64, a: f64, params: &SmoothParams) -> Result<f64> {
    finite("sigmoid_cmp", &[x, a])?;
    Ok(soft_gt(x, a, params.tau_cmp))
}

/// `τ_clip log(1 + exp(x/τ_clip))`.
pub fn softplus(x: f64, params: &SmoothParams) -> Result<f64> {
    finite("softplus", &[x])?;
    Ok(soft_plus(x, params.tau_clip))
}

/// Smooth clip of `x` into `(lo, hi)` at temperature `τ_clip`.
pub fn softclip(x: f64, lo: f64, hi: f64, params: &SmoothParams) -> Result<f64> {
    finite("softclip", &[x, lo, hi])?;
    if lo >= hi {
        return Err(Error::InvalidInterval { lo, hi });
    }
    if hi - lo < 10.0 * params.tau_clip {
        log::warn!(
            "softclip interval width {} is not much larger than tau_clip {}",
            hi - lo,
            params.tau_clip
        );
    }
    Ok(soft_clip(x, lo, hi, params.tau_clip))
}

/// `τ_min log Σ exp(xᵢ/τ_min)`.
pub fn lse(xs: &[f64], params: &SmoothParams) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput { op: "lse" });
    }
    finite("lse", xs)?;
    Ok(logsumexp(xs, params.tau_min))
}

/// Softmax over `xs` at temperature `τ_min`.
pub fn softargmax(xs: &[f64], params: &SmoothParams) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::EmptyInput { op: "softargmax" });
    }
    finite("softargmax", xs)?;
    let mut out = vec![0.0; xs.len()];
    soft_argmax_into(xs, params.tau_min, &mut out);
    Ok(out)
}
