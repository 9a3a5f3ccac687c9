//! Quadratic splines, closest-point projection and the moving frame.
//!
//! Projection solves the stationarity cubic of `‖x − p(t)‖²` with both Cardano
//! branches evaluated unconditionally and blended by a sigmoid of the
//! discriminant, so the returned parameters are smooth in the spline and the
//! query point.

use std::f64::consts::PI;

use crate::diffcore::{Mat3, Real, Vec3, V3};
use crate::smoothops::{sigmoid, soft_clip, soft_plus, SmoothParams};

/// Relative size of `c₃` below which the cubic hands over to the linear root.
pub const DEGENERACY_KAPPA: f64 = 1e-6;
/// Relative guard for divisions by cubic coefficients.
pub const COEFF_GUARD: f64 = 1e-12;
/// Scale of `p` (in squared spline-parameter units) below which the normalised
/// discriminant stops being scale-free, so a triple root does not switch
/// branches discontinuously.
pub const DISCRIMINANT_FLOOR: f64 = 0.1;
/// Curvature gate for blending the Frenet binormal with the up hint.
pub const FRENET_GATE: f64 = 1e-3;

/// `p(t) = (1−t)² p₁ + 2t(1−t) p₂ + t² p₃`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadSpline<T = f64> {
    pub p1: V3<T>,
    pub p2: V3<T>,
    pub p3: V3<T>,
}

impl QuadSpline<f64> {
    pub fn from_array(a: [f64; 9]) -> Self {
        Self::new(
            Vec3::new(a[0], a[1], a[2]),
            Vec3::new(a[3], a[4], a[5]),
            Vec3::new(a[6], a[7], a[8]),
        )
    }

    pub fn lift<T: Real>(&self) -> QuadSpline<T> {
        QuadSpline::new(V3::cst(self.p1), V3::cst(self.p2), V3::cst(self.p3))
    }

    pub fn is_finite(&self) -> bool {
        self.p1.all_finite() && self.p2.all_finite() && self.p3.all_finite()
    }
}

impl<T: Real> QuadSpline<T> {
    pub fn new(p1: V3<T>, p2: V3<T>, p3: V3<T>) -> Self {
        Self { p1, p2, p3 }
    }

    /// `A = p₁ − 2p₂ + p₃`.
    #[inline]
    pub fn a(&self) -> V3<T> {
        self.p1 - self.p2.scale_f(2.0) + self.p3
    }

    /// `B = 2(p₂ − p₁)`.
    #[inline]
    pub fn b(&self) -> V3<T> {
        (self.p2 - self.p1).scale_f(2.0)
    }

    #[inline]
    pub fn eval(&self, t: T) -> V3<T> {
        self.p1 + (self.b() + self.a().scale(t)).scale(t)
    }

    /// `p′(t) = 2At + B`.
    #[inline]
    pub fn derivative(&self, t: T) -> V3<T> {
        self.a().scale(t * 2.0) + self.b()
    }

    /// `p″ = 2A`, constant.
    #[inline]
    pub fn second_derivative(&self) -> V3<T> {
        self.a().scale_f(2.0)
    }
}

/// Coefficients `[c₃, c₂, c₁, c₀]` of `c(t) = (x − p(t))·p′(t)`.
#[inline]
pub fn projection_cubic<T: Real>(s: &QuadSpline<T>, x: V3<T>) -> [T; 4] {
    let a = s.a();
    let b = s.b();
    let w = x - s.p1;
    [
        a.dot(a) * -2.0,
        a.dot(b) * -3.0,
        a.dot(w) * 2.0 - b.dot(b),
        b.dot(w),
    ]
}

#[inline]
fn horner<T: Real>(c: &[T; 4], t: T) -> T {
    ((c[0] * t + c[1]) * t + c[2]) * t + c[3]
}

#[inline]
fn horner_deriv<T: Real>(c: &[T; 4], t: T) -> T {
    (c[0] * t * 3.0 + c[1] * 2.0) * t + c[2]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubicSolution<T = f64> {
    /// Blended, soft-clipped roots in `(0, 1)`.
    pub t_star: [T; 3],
    /// Normalised discriminant `Δ / (4(p² + g²)^{3/2} + 27q²)` in `[−1, 1]`.
    pub delta: T,
    /// Raw discriminant `−(4p³ + 27q²)` of the depressed monic cubic.
    pub delta_raw: T,
    /// Weight of the one-real-root branch.
    pub w_neg: T,
    /// Weight of the three-real-root branch; `w_neg + w_pos = 1`.
    pub w_pos: T,
    /// Weight of the cubic solution against the linear fallback.
    pub cubic_gate: T,
    /// Single real root of the negative branch before clipping.
    pub root_neg: T,
    /// Trigonometric roots of the positive branch before clipping, phase order.
    pub roots_pos: [T; 3],
}

/// Soft Cardano solve of `c₃t³ + c₂t² + c₁t + c₀ = 0` for roots in `(0, 1)`.
pub fn solve_cubic_soft<T: Real>(c: [T; 4], params: &SmoothParams) -> CubicSolution<T> {
    let scale = (c[0].sq() + c[1].sq() + c[2].sq() + c[3].sq() + 1e-200).sqrt();
    let eps_d = scale * COEFF_GUARD;

    // Guarded monic normalisation.
    let inv = c[0] / (c[0].sq() + eps_d.sq());
    let a = c[1] * inv;
    let b = c[2] * inv;
    let cc = c[3] * inv;

    // Depressed cubic s³ + p s + q with t = s − a/3.
    let p = b - a.sq() / 3.0;
    let q = a * a * a * (2.0 / 27.0) - a * b / 3.0 + cc;
    let p3 = p * p * p;
    let delta_raw = -(p3 * 4.0 + q.sq() * 27.0);
    let pf = p.sq() + DISCRIMINANT_FLOOR * DISCRIMINANT_FLOOR;
    let norm = pf.sqrt() * pf * 4.0 + q.sq() * 27.0;
    let delta = delta_raw / norm;

    let w_pos = sigmoid(delta / params.tau_cmp);
    let w_neg = T::one() - w_pos;

    // Three real roots: Viète in polar form.
    let d_pos = norm * soft_plus(delta, params.tau_cmp);
    let y = (d_pos / 108.0 + 1e-30).sqrt();
    let half_q = q * 0.5;
    let r = (half_q.sq() + y.sq()).sqrt();
    let theta = y.atan2(-half_q);
    let rho = r.cbrt() * 2.0;
    let shift = a / 3.0;
    let roots_pos = [0.0, 1.0, 2.0].map(|k| rho * ((theta + 2.0 * PI * k) / 3.0).cos() - shift);

    // One real root: Cardano for both signs of the square root, blended by the
    // sign of q. Where the softened cubic has a genuine single root the two
    // agree; near a symmetric triple-root configuration the blend picks the
    // middle instead of flipping between the outer roots.
    let d_neg = (norm * soft_plus(-delta, params.tau_cmp) / 108.0 + 1e-30).sqrt();
    let cardano = |sgn: f64| {
        let big = (-half_q - d_neg * sgn).cbrt();
        big - p * big / ((big.sq() + 1e-30) * 3.0)
    };
    let q_hat = q * 27f64.sqrt() / norm.sqrt();
    let w_sign = sigmoid(q_hat / params.tau_cmp);
    let root_neg = w_sign * cardano(1.0) + (T::one() - w_sign) * cardano(-1.0) - shift;

    // Linear fallback refined on the full cubic, for c₃ → 0.
    let mut t_lin = -(c[3] * c[2]) / (c[2].sq() + eps_d.sq());
    for _ in 0..3 {
        let g = horner(&c, t_lin);
        let dg = horner_deriv(&c, t_lin);
        t_lin -= g * dg / (dg.sq() + eps_d.sq());
    }
    let kappa = c[0] / scale;
    let gate = kappa.sq() / (kappa.sq() + DEGENERACY_KAPPA * DEGENERACY_KAPPA);
    let mix = |t: T| gate * t + (T::one() - gate) * t_lin;

    let clip = |t: T| soft_clip(t, T::zero(), T::one(), params.tau_clip);
    let t_neg = clip(mix(root_neg));
    let t_star = roots_pos.map(|t| w_neg * t_neg + w_pos * clip(mix(t)));

    CubicSolution {
        t_star,
        delta,
        delta_raw,
        w_neg,
        w_pos,
        cubic_gate: gate,
        root_neg,
        roots_pos,
    }
}

/// Three candidate closest-point parameters for `x`.
#[inline]
pub fn project_point<T: Real>(s: &QuadSpline<T>, x: V3<T>, params: &SmoothParams) -> [T; 3] {
    solve_cubic_soft(projection_cubic(s, x), params).t_star
}

/// Rotation whose first column is the unit tangent and whose third column
/// follows `up_hint` (blended with the Frenet binormal where the spline bends).
pub fn moving_frame<T: Real>(s: &QuadSpline<T>, t: T, up_hint: Vec3) -> Mat3<T> {
    let up: V3<T> = V3::cst(up_hint);
    let fallback = fallback_direction(up_hint);
    let d = s.derivative(t);
    let tangent = (d + V3::cst(fallback).scale_f(1e-12)).normalized_guarded(1e-300);

    let dd = s.second_derivative();
    let bn = d.cross(dd);
    let bn_norm = (bn.norm_sq() + 1e-300).sqrt();
    let curv = bn_norm / ((d.norm_sq() * dd.norm_sq() + 1e-300).sqrt() + 1e-12);
    let gate = curv.sq() / (curv.sq() + FRENET_GATE * FRENET_GATE);
    let binormal = bn.scale(bn_norm.recip());
    let aligned = binormal.scale(T::select(binormal.dot(up), T::one(), -T::one()));
    let u = aligned.scale(gate) + up.scale(T::one() - gate);

    let col3 = (u - tangent.scale(u.dot(tangent))).normalized_guarded(1e-12);
    let col2 = col3.cross(tangent);
    Mat3::from_cols(tangent, col2, col3)
}

/// Unit direction orthogonal to `up`, used to break ties for a zero tangent.
fn fallback_direction(up: Vec3) -> Vec3 {
    let seed = if up.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
    (seed - up.scale(seed.dot(up))).normalized()
}
