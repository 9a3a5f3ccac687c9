//! Swept plane-superquadrics.

use smallvec::SmallVec;

use crate::diffcore::{Real, Vec3, V3};
use crate::error::{Error, Result};
use crate::geometry::{psq_sdf, HalfSpace, Pose, Psq, Superquadric};
use crate::smoothops::{soft_min, SmoothParams};
use crate::spline::{moving_frame, project_point, QuadSpline};

/// Value linearly interpolated between `t = 0` and `t = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linear<V> {
    pub start: V,
    pub end: V,
}

impl<V: Copy> Linear<V> {
    pub fn constant(v: V) -> Self {
        Self { start: v, end: v }
    }
}

impl Linear<f64> {
    #[inline]
    pub fn at<T: Real>(&self, t: T) -> T {
        t * (self.end - self.start) + self.start
    }
}

impl Linear<Vec3> {
    #[inline]
    pub fn at<T: Real>(&self, t: T) -> V3<T> {
        V3::new(
            t * (self.end.x - self.start.x) + self.start.x,
            t * (self.end.y - self.start.y) + self.start.y,
            t * (self.end.z - self.start.z) + self.start.z,
        )
    }
}

/// Plane row `[n, h]` scheduled along the spline; the interpolated normal is
/// renormalised.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneSchedule {
    pub start: HalfSpace,
    pub end: HalfSpace,
}

/// PSQ swept along a quadratic spline with linearly scheduled parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Xpsq {
    pub spline: QuadSpline,
    pub up_hint: Vec3,
    pub eps1: Linear<f64>,
    pub eps2: Linear<f64>,
    pub scale: Linear<Vec3>,
    pub planes: Vec<PlaneSchedule>,
}

impl Xpsq {
    /// Validates both endpoint PSQs (clamping ε as [`Superquadric::new`] does)
    /// and normalises `up_hint`.
    pub fn new(
        spline: QuadSpline,
        up_hint: Vec3,
        start: &Psq,
        end: &Psq,
    ) -> Result<Self> {
        if !spline.is_finite() {
            return Err(Error::param("spline", "control points must be finite"));
        }
        let n = up_hint.norm();
        if !(n.is_finite() && n > 1e-9) {
            return Err(Error::param("up", "must be a finite non-zero vector"));
        }
        if start.planes.len() != end.planes.len() {
            return Err(Error::param(
                "planes",
                format!(
                    "start has {} rows, end has {}",
                    start.planes.len(),
                    end.planes.len()
                ),
            ));
        }
        for (i, (a, b)) in start.planes.iter().zip(&end.planes).enumerate() {
            if (a.normal + b.normal).norm() < 1e-6 {
                return Err(Error::param(
                    format!("planes[{i}]"),
                    "endpoint normals are opposite; the interpolated normal vanishes",
                ));
            }
        }
        Ok(Self {
            spline,
            up_hint: up_hint.scale(1.0 / n),
            eps1: Linear { start: start.sq.eps1, end: end.sq.eps1 },
            eps2: Linear { start: start.sq.eps2, end: end.sq.eps2 },
            scale: Linear { start: start.sq.scale, end: end.sq.scale },
            planes: start
                .planes
                .iter()
                .zip(&end.planes)
                .map(|(&start, &end)| PlaneSchedule { start, end })
                .collect(),
        })
    }

    /// Constant cross-section swept along `spline`.
    pub fn constant(spline: QuadSpline, up_hint: Vec3, psq: &Psq) -> Result<Self> {
        Self::new(spline, up_hint, psq, psq)
    }

    pub fn plane_count(&self) -> usize {
        self.planes.len()
    }
}

/// PSQ parameters and frame at spline parameter `t`.
pub fn instantiate_psq<T: Real>(x: &Xpsq, t: T) -> (Psq<T>, Pose<T>) {
    let sq = Superquadric {
        eps1: x.eps1.at(t),
        eps2: x.eps2.at(t),
        scale: x.scale.at(t),
    };
    let planes = x
        .planes
        .iter()
        .map(|p| {
            let n = Linear { start: p.start.normal, end: p.end.normal }.at(t);
            let inv = n.norm().recip();
            HalfSpace {
                normal: n.scale(inv),
                offset: Linear { start: p.start.offset, end: p.end.offset }.at(t),
            }
        })
        .collect();
    let spline = x.spline.lift::<T>();
    let pose = Pose::new(moving_frame(&spline, t, x.up_hint), spline.eval(t));
    (Psq { sq, planes }, pose)
}

/// Smooth minimum of the three PSQ SDFs instantiated at the projected roots.
pub fn xpsq_sdf<T: Real>(x: &Xpsq, q: V3<T>, params: &SmoothParams) -> T {
    let spline = x.spline.lift::<T>();
    let ts = project_point(&spline, q, params);
    let phis: SmallVec<[T; 3]> = ts
        .iter()
        .map(|&t| {
            let (psq, pose) = instantiate_psq(x, t);
            psq_sdf(&psq, pose.to_local(q), params)
        })
        .collect();
    soft_min(&phis, params.tau_min)
}
