use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Scalar abstraction every SDF, projection and contact kernel is written against.
///
/// Implemented for `f64`, for forward-mode [`Dual`](super::Dual) numbers over any
/// `Real`, and for the 4-wide SIMD [`Lane4`](super::Lane4) used by batched
/// manifold generation. The primitive set is deliberately smooth: there is no
/// hard `min`/`max`/`abs`. The only value-dependent operations are
/// [`Real::select`] and [`Real::shift_max`], and callers may only use them where
/// both branches are the same analytic function (e.g. the shift in a
/// logsumexp), so derivatives stay exact.
pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    /// Broadcasts a constant (zero partials, all lanes equal).
    fn cst(v: f64) -> Self;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
    fn sqrt(self) -> Self;
    /// Real cube root, defined for negative arguments.
    fn cbrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// Four-quadrant arctangent of `self / x`.
    fn atan2(self, x: Self) -> Self;

    /// Picks `a` where `cond >= 0` and `b` elsewhere, lane by lane.
    fn select(cond: Self, a: Self, b: Self) -> Self;

    /// True if the primal value (every lane) is finite.
    fn all_finite(&self) -> bool;

    #[inline]
    fn zero() -> Self {
        Self::cst(0.0)
    }

    #[inline]
    fn one() -> Self {
        Self::cst(1.0)
    }

    /// Larger of two values, for numerically stabilising shifts only.
    #[inline]
    fn shift_max(self, other: Self) -> Self {
        Self::select(self - other, self, other)
    }

    #[inline]
    fn powf(self, p: Self) -> Self {
        (self.ln() * p).exp()
    }

    #[inline]
    fn recip(self) -> Self {
        Self::one() / self
    }

    #[inline]
    fn sq(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn cbrt(self) -> Self {
        f64::cbrt(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    #[inline]
    fn select(cond: Self, a: Self, b: Self) -> Self {
        if cond >= 0.0 {
            a
        } else {
            b
        }
    }
    #[inline]
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

/// A `Real` whose value is a fixed-width bundle of independent lanes.
///
/// Lanes never interact: every operation is applied lane by lane, so the result
/// in one lane is bitwise independent of what the other lanes hold.
pub trait Lanes: Real {
    const WIDTH: usize;

    /// Packs up to `WIDTH` values; missing lanes repeat the last given value.
    fn pack(values: &[f64]) -> Self;

    fn lane(&self, i: usize) -> f64;
}

impl Lanes for f64 {
    const WIDTH: usize = 1;

    #[inline]
    fn pack(values: &[f64]) -> Self {
        values[0]
    }

    #[inline]
    fn lane(&self, _i: usize) -> f64 {
        *self
    }
}
