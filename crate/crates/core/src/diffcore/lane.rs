use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use wide::f64x4;

use super::{Lanes, Real};

/// Four independent `f64` lanes evaluated with SIMD instructions.
///
/// Batched manifold generation packs four configurations into one `Lane4` and
/// runs the scalar algorithm once; single-configuration calls run the same
/// kernel with the configuration replicated, which keeps batched and serial
/// output bitwise identical.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lane4(pub f64x4);

impl Lane4 {
    #[inline]
    pub fn new(values: [f64; 4]) -> Self {
        Self(f64x4::new(values))
    }

    #[inline]
    pub fn to_array(self) -> [f64; 4] {
        self.0.to_array()
    }
}

macro_rules! lane_binop {
    ($tr:ident, $f:ident, $op:tt, $atr:ident, $af:ident) => {
        impl $tr for Lane4 {
            type Output = Self;
            #[inline]
            fn $f(self, rhs: Self) -> Self {
                Self(self.0 $op rhs.0)
            }
        }
        impl $tr<f64> for Lane4 {
            type Output = Self;
            #[inline]
            fn $f(self, rhs: f64) -> Self {
                Self(self.0 $op f64x4::splat(rhs))
            }
        }
        impl $atr for Lane4 {
            #[inline]
            fn $af(&mut self, rhs: Self) {
                self.0 = self.0 $op rhs.0;
            }
        }
    };
}

lane_binop!(Add, add, +, AddAssign, add_assign);
lane_binop!(Sub, sub, -, SubAssign, sub_assign);
lane_binop!(Mul, mul, *, MulAssign, mul_assign);

impl Div for Lane4 {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        Self(self.0 / rhs.0)
    }
}

impl Div<f64> for Lane4 {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        Self(self.0 / f64x4::splat(rhs))
    }
}

impl Neg for Lane4 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self(-self.0)
    }
}

impl Real for Lane4 {
    #[inline]
    fn cst(v: f64) -> Self {
        Self(f64x4::splat(v))
    }
    #[inline]
    fn exp(self) -> Self {
        Self(self.0.exp())
    }
    #[inline]
    fn ln(self) -> Self {
        Self(self.0.ln())
    }
    #[inline]
    fn ln_1p(self) -> Self {
        Self(self.0.ln_1p())
    }
    #[inline]
    fn sqrt(self) -> Self {
        Self(self.0.sqrt())
    }
    #[inline]
    fn cbrt(self) -> Self {
        Self(self.0.cbrt())
    }
    #[inline]
    fn sin(self) -> Self {
        Self(self.0.sin_cos().0)
    }
    #[inline]
    fn cos(self) -> Self {
        Self(self.0.sin_cos().1)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        Self(self.0.atan2(x.0))
    }
    #[inline]
    fn select(cond: Self, a: Self, b: Self) -> Self {
        let mask = cond.0.simd_ge(f64x4::ZERO);
        Self(mask.bitselect(a.0, b.0))
    }
    #[inline]
    fn all_finite(&self) -> bool {
        self.0.to_array().iter().all(|v| v.is_finite())
    }
}

impl Lanes for Lane4 {
    const WIDTH: usize = 4;

    fn pack(values: &[f64]) -> Self {
        let last = *values.last().expect("pack needs at least one value");
        let mut a = [last; 4];
        for (slot, v) in a.iter_mut().zip(values) {
            *slot = *v;
        }
        Self::new(a)
    }

    #[inline]
    fn lane(&self, i: usize) -> f64 {
        self.0.to_array()[i]
    }
}
