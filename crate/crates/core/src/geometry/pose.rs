use crate::diffcore::{Mat3, Real, Vec3, V3};
use crate::error::{Error, Result};

/// Rigid transform `x ↦ R x + t` (local → world).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<T = f64> {
    pub rotation: Mat3<T>,
    pub translation: V3<T>,
}

impl<T: Real> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Pose<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: V3::zero(),
        }
    }

    pub fn new(rotation: Mat3<T>, translation: V3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Local → world.
    #[inline]
    pub fn apply(&self, x: V3<T>) -> V3<T> {
        self.rotation.mul_vec(x) + self.translation
    }

    /// World → local: `Rᵀ(x − t)`.
    #[inline]
    pub fn to_local(&self, x: V3<T>) -> V3<T> {
        self.rotation.tr_mul_vec(x - self.translation)
    }

    #[inline]
    pub fn rotate(&self, v: V3<T>) -> V3<T> {
        self.rotation.mul_vec(v)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation.mul_mat(&other.rotation),
            translation: self.apply(other.translation),
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -rt.mul_vec(self.translation),
        }
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U + Copy) -> Pose<U> {
        Pose {
            rotation: self.rotation.map(f),
            translation: self.translation.map(f),
        }
    }
}

impl Pose<f64> {
    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Mat3::identity(), t)
    }

    /// Broadcasts into any `Real`.
    pub fn lift<T: Real>(&self) -> Pose<T> {
        self.map(T::cst)
    }

    /// World → local for a point of any `Real`, with this pose held constant.
    #[inline]
    pub fn to_local_of<T: Real>(&self, x: V3<T>) -> V3<T> {
        let d = V3::new(
            x.x - self.translation.x,
            x.y - self.translation.y,
            x.z - self.translation.z,
        );
        let r = &self.rotation.m;
        V3::new(
            d.x * r[0][0] + d.y * r[1][0] + d.z * r[2][0],
            d.x * r[0][1] + d.y * r[1][1] + d.z * r[2][1],
            d.x * r[0][2] + d.y * r[1][2] + d.z * r[2][2],
        )
    }

    /// Local → world for a point of any `Real`.
    #[inline]
    pub fn apply_of<T: Real>(&self, x: V3<T>) -> V3<T> {
        let r = &self.rotation.m;
        V3::new(
            x.x * r[0][0] + x.y * r[0][1] + x.z * r[0][2] + self.translation.x,
            x.x * r[1][0] + x.y * r[1][1] + x.z * r[1][2] + self.translation.y,
            x.x * r[2][0] + x.y * r[2][1] + x.z * r[2][2] + self.translation.z,
        )
    }

    /// Unit quaternion in `(w, x, y, z)` order. Rejects quaternions whose norm is
    /// off by more than 1e-6; others are renormalized.
    pub fn from_quaternion(q: [f64; 4], translation: Vec3) -> Result<Self> {
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
            return Err(Error::param(
                "rotation",
                format!("quaternion must have unit norm, got {n}"),
            ));
        }
        let [w, x, y, z] = q.map(|v| v / n);
        let m = [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ];
        Ok(Self::new(Mat3 { m }, translation))
    }

    /// Rotation as a unit quaternion `(w, x, y, z)` with `w ≥ 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let m = &self.rotation.m;
        let tr = m[0][0] + m[1][1] + m[2][2];
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            [
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            ]
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            [
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            ]
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            [
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            ]
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            [
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            ]
        };
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sign = if q[0] < 0.0 { -1.0 } else { 1.0 };
        q.map(|v| sign * v / n)
    }

    /// Rotation by `angle` radians about `axis` (normalized here).
    pub fn rotation_about(axis: Vec3, angle: f64) -> Self {
        let a = axis.normalized().scale(angle);
        Self::new(exp_so3(a), Vec3::zero())
    }

    /// Applies a world-frame twist `[v, ω]`: `R ← Exp(ω) R`, `t ← t + v`.
    ///
    /// With dual-valued twists seeded at zero this yields exact derivatives with
    /// respect to rigid body motion.
    pub fn perturbed<T: Real>(&self, twist: [T; 6]) -> Pose<T> {
        let v = V3::new(twist[0], twist[1], twist[2]);
        let w = V3::new(twist[3], twist[4], twist[5]);
        let rot = exp_so3(w).mul_mat(&self.rotation.map(T::cst));
        Pose::new(rot, V3::cst(self.translation) + v)
    }

    pub fn is_proper_rotation(&self, tol: f64) -> bool {
        self.rotation.orthonormality_error() <= tol && (self.rotation.det() - 1.0).abs() <= tol
    }
}

/// Rodrigues' formula, smooth through `ω = 0` (series branch for small angles).
pub fn exp_so3<T: Real>(w: V3<T>) -> Mat3<T> {
    let th2 = w.norm_sq();
    let th4 = th2 * th2;
    let a_small = T::one() - th2 / 6.0 + th4 / 120.0;
    let b_small = T::cst(0.5) - th2 / 24.0 + th4 / 720.0;
    // Clamp the argument so the unselected large-angle branch never divides by 0.
    let th2_safe = T::select(th2 - 1e-8, th2, T::cst(1.0));
    let th = th2_safe.sqrt();
    let a_big = th.sin() / th;
    let b_big = (T::one() - th.cos()) / th2_safe;
    let a = T::select(th2 - 1e-8, a_big, a_small);
    let b = T::select(th2 - 1e-8, b_big, b_small);
    let k = Mat3::skew(w);
    let k2 = k.mul_mat(&k);
    let mut r = Mat3::identity();
    for i in 0..3 {
        for j in 0..3 {
            r.m[i][j] = r.m[i][j] + k.m[i][j] * a + k2.m[i][j] * b;
        }
    }
    r
}
