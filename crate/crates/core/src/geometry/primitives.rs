use smallvec::SmallVec;

use crate::diffcore::{Real, Vec3, V3};
use crate::error::{Error, Result};
use crate::smoothops::{logsumexp, SmoothParams};

/// Guard added to squared coordinates and radii so fractional powers stay
/// finite at the origin.
pub const SQ_GUARD: f64 = 1e-12;

pub const EPS_MIN: f64 = 0.1;
pub const EPS_MAX: f64 = 2.0;

/// Half-space `{x : x·n + h ≤ 0}` with SDF `x·n + h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfSpace<T = f64> {
    pub normal: V3<T>,
    pub offset: T,
}

impl HalfSpace<f64> {
    /// Normalizes `normal`; rejects zero or non-finite input.
    pub fn new(normal: Vec3, offset: f64) -> Result<Self> {
        let n = normal.norm();
        if !(n.is_finite() && n > 1e-12 && offset.is_finite()) {
            return Err(Error::param(
                "normal",
                "plane normal must be finite and non-zero",
            ));
        }
        Ok(Self {
            normal: normal.scale(1.0 / n),
            offset,
        })
    }

    pub fn lift<T: Real>(&self) -> HalfSpace<T> {
        HalfSpace {
            normal: V3::cst(self.normal),
            offset: T::cst(self.offset),
        }
    }

    /// `[n_x, n_y, n_z, h]`.
    pub fn row(&self) -> [f64; 4] {
        [self.normal.x, self.normal.y, self.normal.z, self.offset]
    }
}

#[inline]
pub fn halfspace_sdf<T: Real>(hs: &HalfSpace<T>, x: V3<T>) -> T {
    x.dot(hs.normal) + hs.offset
}

/// Superquadric with roundness `eps1`, pointedness `eps2` and per-axis scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Superquadric<T = f64> {
    pub eps1: T,
    pub eps2: T,
    pub scale: V3<T>,
}

impl Superquadric<f64> {
    /// Clamps `eps1`, `eps2` into `[0.1, 2.0]`; scales must be positive.
    pub fn new(eps1: f64, eps2: f64, scale: Vec3) -> Result<Self> {
        for (name, e) in [("eps1", eps1), ("eps2", eps2)] {
            if !e.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        for (axis, a) in ["x", "y", "z"].iter().zip(scale.to_array()) {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::param(
                    format!("scale.{axis}"),
                    format!("must be > 0, got {a}"),
                ));
            }
        }
        let clamp = |name: &str, e: f64| {
            let c = e.clamp(EPS_MIN, EPS_MAX);
            if c != e {
                log::warn!("superquadric {name} = {e} clamped to {c}");
            }
            c
        };
        Ok(Self {
            eps1: clamp("eps1", eps1),
            eps2: clamp("eps2", eps2),
            scale,
        })
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        Self::new(1.0, 1.0, Vec3::new(radius, radius, radius))
    }

    pub fn lift<T: Real>(&self) -> Superquadric<T> {
        Superquadric {
            eps1: T::cst(self.eps1),
            eps2: T::cst(self.eps2),
            scale: V3::cst(self.scale),
        }
    }
}

/// Inside–outside function
/// `f = ((x/a_x)^{2/ε₂} + (y/a_y)^{2/ε₂})^{ε₂/ε₁} + (z/a_z)^{2/ε₁}`.
///
/// Even powers are taken as `((x/a)² + g)^{1/ε}` with `g = SQ_GUARD`.
#[inline]
pub fn sq_inside_outside<T: Real>(sq: &Superquadric<T>, x: V3<T>) -> T {
    let inv1 = sq.eps1.recip();
    let inv2 = sq.eps2.recip();
    let ux = (x.x / sq.scale.x).sq() + SQ_GUARD;
    let uy = (x.y / sq.scale.y).sq() + SQ_GUARD;
    let uz = (x.z / sq.scale.z).sq() + SQ_GUARD;
    let xy = (ux.ln() * inv2).exp() + (uy.ln() * inv2).exp();
    (xy.ln() * (sq.eps2 * inv1)).exp() + (uz.ln() * inv1).exp()
}

/// Radial approximate SDF `‖x‖ (1 − f^{−ε₁/2})`; exact for a sphere.
#[inline]
pub fn sq_sdf<T: Real>(sq: &Superquadric<T>, x: V3<T>) -> T {
    let f = sq_inside_outside(sq, x);
    let r = (x.norm_sq() + SQ_GUARD).sqrt();
    r * (T::one() - (f.ln() * (sq.eps1 * -0.5)).exp())
}

pub type Planes<T> = SmallVec<[HalfSpace<T>; 6]>;

/// Superquadric smoothly intersected with `N ≥ 0` half-spaces, all expressed in
/// the PSQ base frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Psq<T = f64> {
    pub sq: Superquadric<T>,
    pub planes: Planes<T>,
}

impl Psq<f64> {
    pub fn new(sq: Superquadric, planes: impl IntoIterator<Item = HalfSpace>) -> Self {
        Self {
            sq,
            planes: planes.into_iter().collect(),
        }
    }

    pub fn lift<T: Real>(&self) -> Psq<T> {
        Psq {
            sq: self.sq.lift(),
            planes: self.planes.iter().map(HalfSpace::lift).collect(),
        }
    }
}

/// `LSE_τmin([φ_sq, φ_plane₁, …])`; with no planes this is exactly `sq_sdf`.
#[inline]
pub fn psq_sdf<T: Real>(psq: &Psq<T>, x: V3<T>, params: &SmoothParams) -> T {
    let mut phis: SmallVec<[T; 8]> = SmallVec::new();
    phis.push(sq_sdf(&psq.sq, x));
    phis.extend(psq.planes.iter().map(|p| halfspace_sdf(p, x)));
    logsumexp(&phis, params.tau_min)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineOp {
    Union,
    Intersection,
    /// `φ₁ ⊖ φ₂`, binary and ordered.
    Subtraction,
}

impl CombineOp {
    pub fn check_arity(self, n: usize) -> Result<()> {
        let ok = match self {
            CombineOp::Subtraction => n == 2,
            _ => n >= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Arity {
                op: self.name(),
                expected: if self == CombineOp::Subtraction {
                    "exactly 2"
                } else {
                    "at least 2"
                },
                got: n,
            })
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CombineOp::Union => "union",
            CombineOp::Intersection => "intersection",
            CombineOp::Subtraction => "subtraction",
        }
    }
}

/// Smooth boolean of already-evaluated operands; arity must have been checked.
#[inline]
pub fn combine<T: Real>(op: CombineOp, phis: &mut [T], tau: f64) -> T {
    match op {
        CombineOp::Union => {
            for p in phis.iter_mut() {
                *p = -*p;
            }
            -logsumexp(phis, tau)
        }
        CombineOp::Intersection => logsumexp(phis, tau),
        CombineOp::Subtraction => {
            phis[1] = -phis[1];
            logsumexp(phis, tau)
        }
    }
}

/// Checked smooth union / intersection / subtraction at temperature `τ_min`.
pub fn combine_sdf(op: CombineOp, phis: &[f64], params: &SmoothParams) -> Result<f64> {
    op.check_arity(phis.len())?;
    if phis.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite { op: "combine_sdf" });
    }
    let mut v = phis.to_vec();
    Ok(combine(op, &mut v, params.tau_min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{finite_difference_gradient, gradient, ScalarField};
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn unit_sphere() -> Superquadric {
        Superquadric::sphere(1.0).unwrap()
    }

    #[test]
    fn inside_outside_examples() {
        let s = unit_sphere();
        assert!((sq_inside_outside(&s, Vec3::X) - 1.0).abs() < 1e-11);
        assert!((sq_inside_outside(&s, Vec3::new(0.0, 0.0, 2.0)) - 4.0).abs() < 1e-11);
        let boxy = Superquadric::new(0.2, 0.2, Vec3::new(1.0, 1.0, 1.0)).unwrap();
        // ((1)^10 + (1)^10)^1 + 1^10 = 3
        let f = sq_inside_outside(&boxy, Vec3::new(1.0, 1.0, 1.0));
        assert!((f - 3.0).abs() < 1e-9 && f > 1.0);
        assert!(sq_inside_outside(&boxy, Vec3::zero()) >= 0.0);
        assert!(sq_sdf(&boxy, Vec3::zero()).is_finite());
    }

    #[test]
    fn sphere_sdf_examples() {
        let s = unit_sphere();
        assert!((sq_sdf(&s, Vec3::new(2.0, 0.0, 0.0)) - 1.0).abs() < 1e-9);
        assert!((sq_sdf(&s, Vec3::new(0.5, 0.0, 0.0)) + 0.5).abs() < 1e-9);
        assert!(sq_sdf(&s, Vec3::zero()) < 0.0);
    }

    #[test]
    fn eps_clamped_and_scale_validated() {
        let sq = Superquadric::new(0.01, 5.0, Vec3::new(1.0, 1.0, 1.0)).unwrap();
        assert_eq!((sq.eps1, sq.eps2), (EPS_MIN, EPS_MAX));
        assert!(Superquadric::new(1.0, 1.0, Vec3::new(1.0, 0.0, 1.0)).is_err());
        assert!(HalfSpace::new(Vec3::zero(), 0.0).is_err());
    }

    #[test]
    fn halfspace_examples() {
        let hs = HalfSpace::new(Vec3::Z, 0.0).unwrap();
        assert_eq!(halfspace_sdf(&hs, Vec3::new(0.0, 0.0, 2.0)), 2.0);
        assert_eq!(halfspace_sdf(&hs, Vec3::zero()), 0.0);
        let hs = HalfSpace::new(Vec3::Z, -1.0).unwrap();
        assert_eq!(halfspace_sdf(&hs, Vec3::zero()), -1.0);
    }

    #[test]
    fn combine_examples() {
        let pr = SmoothParams::default();
        let tau = pr.tau_min;
        let u = combine_sdf(CombineOp::Union, &[0.4, 0.4], &pr).unwrap();
        assert!((u - (0.4 - tau * LN_2)).abs() < 1e-15);
        let i = combine_sdf(CombineOp::Intersection, &[-3.0, 5.0], &pr).unwrap();
        assert!(i >= 5.0 && i <= 5.0 + tau * LN_2);
        let s = combine_sdf(CombineOp::Subtraction, &[2.0, -1.0], &pr).unwrap();
        let want = combine_sdf(CombineOp::Intersection, &[2.0, 1.0], &pr).unwrap();
        assert_eq!(s, want);
        assert!(matches!(
            combine_sdf(CombineOp::Subtraction, &[1.0, 2.0, 3.0], &pr),
            Err(Error::Arity { .. })
        ));
        assert!(combine_sdf(CombineOp::Union, &[1.0], &pr).is_err());
    }

    #[test]
    fn psq_examples() {
        let pr = SmoothParams::default();
        let tau = pr.tau_min;
        let bare = Psq::new(unit_sphere(), []);
        let x = Vec3::new(0.3, -0.8, 1.7);
        assert_eq!(psq_sdf(&bare, x, &pr), sq_sdf(&bare.sq, x));
        let hemi = Psq::new(unit_sphere(), [HalfSpace::new(Vec3::Z, 0.0).unwrap()]);
        let above = psq_sdf(&hemi, Vec3::new(0.0, 0.0, 0.5), &pr);
        assert!(above >= 0.5 && above <= 0.5 + tau * LN_2);
        let below = psq_sdf(&hemi, Vec3::new(0.0, 0.0, -0.5), &pr);
        assert!(below >= -0.5 - 1e-9 && below <= -0.5 + tau * LN_2 + 1e-9);
    }

    struct SqField(Superquadric);
    impl ScalarField for SqField {
        fn eval<T: Real>(&self, x: V3<T>) -> T {
            sq_sdf(&self.0.lift(), x)
        }
    }

    #[test]
    fn sq_gradient_matches_fd() {
        let f = SqField(Superquadric::new(0.5, 1.4, Vec3::new(0.6, 1.1, 0.9)).unwrap());
        for x in [Vec3::new(0.7, 0.2, -0.4), Vec3::new(-1.2, 0.9, 0.3)] {
            let (_, g) = gradient(&f, x);
            let fd = finite_difference_gradient(&f, x, 1e-6);
            assert!(g.max_abs_diff(fd) < 1e-6 * g.norm().max(1.0), "{g:?} {fd:?}");
        }
    }

    proptest! {
        #[test]
        fn sphere_exactness(x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0, a in 0.2f64..2.0) {
            let s = Superquadric::sphere(a).unwrap();
            let p = Vec3::new(x, y, z);
            prop_assume!(p.norm() > 1e-3);
            prop_assert!((sq_sdf(&s, p) - (p.norm() - a)).abs() < 1e-9);
        }

        #[test]
        fn sign_consistency(
            x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0,
            e1 in 0.1f64..2.0, e2 in 0.1f64..2.0,
            ax in 0.3f64..1.5, ay in 0.3f64..1.5, az in 0.3f64..1.5,
        ) {
            let s = Superquadric::new(e1, e2, Vec3::new(ax, ay, az)).unwrap();
            let p = Vec3::new(x, y, z);
            let f = sq_inside_outside(&s, p);
            prop_assume!((f - 1.0).abs() > 1e-6);
            prop_assert_eq!(sq_sdf(&s, p) > 0.0, f > 1.0);
        }

        #[test]
        fn combinator_bounds(phis in proptest::collection::vec(-3.0f64..3.0, 2..8)) {
            let pr = SmoothParams::default();
            let k = phis.len() as f64;
            let (lo, hi) = phis.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
            let u = combine_sdf(CombineOp::Union, &phis, &pr).unwrap();
            prop_assert!(u <= lo && u >= lo - pr.tau_min * k.ln());
            let i = combine_sdf(CombineOp::Intersection, &phis, &pr).unwrap();
            prop_assert!(i >= hi && i <= hi + pr.tau_min * k.ln());
        }
    }
}
