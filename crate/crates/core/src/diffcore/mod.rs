//! Forward-mode differentiation substrate.
//!
//! Every kernel in the crate is generic over [`Real`]. Evaluating with `f64`
//! gives values, with [`Dual`] gives exact first derivatives through the chain
//! rule, and with [`Lane4`] evaluates four configurations per instruction.
//! A scalar field that cannot be expressed with the `Real` primitive set does
//! not type-check, so "unsupported operation" is a compile-time error.

mod dual;
mod lane;
mod real;
mod vec;

pub use dual::Dual;
pub use lane::Lane4;
pub use real::{Lanes, Real};
pub use vec::{Mat3, Vec3, V3};

/// A scalar field `ℝ³ → ℝ` that can be evaluated at any [`Real`].
pub trait ScalarField {
    fn eval<T: Real>(&self, x: V3<T>) -> T;
}

impl<F: ScalarField + ?Sized> ScalarField for &F {
    fn eval<T: Real>(&self, x: V3<T>) -> T {
        (**self).eval(x)
    }
}

/// Lifts a point into spatial duals whose partials form the identity.
#[inline]
pub fn seed_point<T: Real>(x: V3<T>) -> V3<Dual<T, 3>> {
    V3::new(
        Dual::variable(x.x, 0),
        Dual::variable(x.y, 1),
        Dual::variable(x.z, 2),
    )
}

/// Value and spatial gradient of `f` at `x`, for any primal type.
#[inline]
pub fn value_and_gradient<T: Real, F: ScalarField + ?Sized>(f: &F, x: V3<T>) -> (T, V3<T>) {
    let out = f.eval(seed_point(x));
    (out.re, V3::from_array(out.eps))
}

/// Value and gradient `∇f(x)`.
pub fn gradient<F: ScalarField + ?Sized>(f: &F, x: Vec3) -> (f64, Vec3) {
    value_and_gradient(f, x)
}

/// Central finite-difference gradient, used as an oracle in tests.
pub fn finite_difference_gradient<F: ScalarField + ?Sized>(f: &F, x: Vec3, step: f64) -> Vec3 {
    let mut g = [0.0; 3];
    for (i, gi) in g.iter_mut().enumerate() {
        let mut lo = x.to_array();
        let mut hi = x.to_array();
        lo[i] -= step;
        hi[i] += step;
        *gi = (f.eval(Vec3::from_array(hi)) - f.eval(Vec3::from_array(lo))) / (2.0 * step);
    }
    Vec3::from_array(g)
}
