//! Contact manifolds between a triangle mesh and an SDF body.
//!
//! Every edge of the mesh is sphere-traced from both ends, each face gathers
//! its three vertices and three edge midpoints as candidates, and the
//! candidates are fused with softmax weights on their depths. Body `A` is the
//! mesh and body `B` the SDF; normals are `∇φ_B` and point from `B` towards
//! `A`. The kernel is generic over [`Real`], so the same code yields values,
//! pose derivatives through [`Dual`] numbers, or four configurations at once
//! through [`Lane4`].

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::diffcore::{seed_point, Dual, Lane4, Lanes, Mat3, Real, ScalarField, Vec3, V3};
use crate::error::{Error, Result};
use crate::geometry::{GeometryTree, Pose};
use crate::mesh::{Edge, TriangleMesh};
use crate::smoothops::{sigmoid, soft_argmax_into, soft_clip, soft_min, SmoothParams};

/// Below this norm the fused normal falls back to the dominant candidate.
pub const NORMAL_GUARD: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactMode {
    /// One contact per vertex and per edge.
    Full,
    /// One fused contact per face.
    #[default]
    Reduced,
}

/// How the scalar depth of a fused face contact is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthFusion {
    /// `−LSE(−d)` over the candidates.
    #[default]
    SmoothMin,
    /// `Σ zᵢγᵢdᵢ`.
    Weighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    pub mode: ContactMode,
    pub iters: usize,
    pub depth_fusion: DepthFusion,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            mode: ContactMode::Reduced,
            iters: 3,
            depth_fusion: DepthFusion::SmoothMin,
        }
    }
}

impl ContactConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::param(format!("{prefix}.iters"), "must be at least 1"));
        }
        Ok(())
    }
}

/// Where a contact came from on the mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum ContactSource {
    Face(usize),
    Vertex(usize),
    Edge(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub source: ContactSource,
    /// `Σ zᵢ pᵢ`; diagnostic only.
    pub position: Vec3,
    /// Negative when penetrating.
    pub depth: f64,
    pub normal: Vec3,
    /// `Σ zᵢ γᵢ` in `(0, 1)`.
    pub activity: f64,
    /// Maps `[v_A, ω_A, v_B, ω_B]` to the relative velocity of the contact
    /// point on `A` with respect to `B`, world frame.
    pub jacobian: [[f64; 12]; 3],
    /// Softmax weights over the candidates.
    pub weights: Vec<f64>,
}

/// Result of tracing one edge from both ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeContact {
    pub p_i: Vec3,
    pub p_ii: Vec3,
    pub p_e: Vec3,
    pub phi_at_pe: f64,
    pub alpha_i: f64,
    pub alpha_ii: f64,
    /// Both traces reached the surface but the midpoint is outside, so the
    /// edge likely crosses the surface more than once.
    pub multi_crossing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactManifold {
    pub mode: ContactMode,
    pub mesh_body: String,
    pub sdf_body: String,
    pub contacts: Vec<ContactPoint>,
    pub edges: Vec<EdgeContact>,
}

impl ContactManifold {
    pub fn active(&self, threshold: f64) -> impl Iterator<Item = &ContactPoint> {
        self.contacts.iter().filter(move |c| c.activity > threshold)
    }

    pub fn multi_crossing_edges(&self) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.multi_crossing)
            .map(|(i, _)| i)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Generic kernel
// ---------------------------------------------------------------------------

/// SDF value and gradient at a point.
#[derive(Clone, Copy, Debug)]
pub struct Sample<T> {
    pub p: V3<T>,
    pub phi: T,
    pub grad: V3<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct Trace<T> {
    pub alpha_i: T,
    pub alpha_ii: T,
    pub p_i: V3<T>,
    pub p_ii: V3<T>,
    pub p_e: V3<T>,
    /// φ at the last iterate of each trace, before its final step.
    pub last_phi_i: T,
    pub last_phi_ii: T,
}

/// Gated sphere trace of `v1 → v2` from both ends, clipped softly to the edge.
#[inline]
pub fn trace_edge_generic<T: Real>(
    phi: &impl Fn(V3<T>) -> T,
    v1: V3<T>,
    v2: V3<T>,
    iters: usize,
    params: &SmoothParams,
) -> Trace<T> {
    let d = v2 - v1;
    let len = d.norm();
    let dir = d.scale(len.recip());
    let mut a1 = T::zero();
    let mut a2 = len;
    let mut f1 = T::zero();
    let mut f2 = T::zero();
    for _ in 0..iters {
        f1 = phi(v1 + dir.scale(a1));
        a1 += sigmoid(f1 / params.tau_cmp) * f1;
        f2 = phi(v1 + dir.scale(a2));
        a2 -= sigmoid(f2 / params.tau_cmp) * f2;
    }
    let a1 = soft_clip(a1, T::zero(), len, params.tau_clip);
    let a2 = soft_clip(a2, T::zero(), len, params.tau_clip);
    let p_i = v1 + dir.scale(a1);
    let p_ii = v1 + dir.scale(a2);
    Trace {
        alpha_i: a1,
        alpha_ii: a2,
        p_i,
        p_ii,
        p_e: (p_i + p_ii).scale_f(0.5),
        last_phi_i: f1,
        last_phi_ii: f2,
    }
}

/// Fused record before the Jacobian is assembled.
#[derive(Clone, Copy, Debug)]
pub struct Fused<T> {
    pub position: V3<T>,
    pub depth: T,
    pub normal: V3<T>,
    pub activity: T,
    /// `Σ zᵢγᵢ pᵢ`; the fused Jacobian is linear in it.
    pub lever: V3<T>,
    pub weights: [T; 6],
    pub count: usize,
}

/// Softmax fusion of up to six candidates.
#[inline]
pub fn fuse_generic<T: Real>(c: &[Sample<T>], fusion: DepthFusion, params: &SmoothParams) -> Fused<T> {
    let k = c.len();
    debug_assert!((1..=6).contains(&k));
    let neg: SmallVec<[T; 6]> = c.iter().map(|s| -s.phi).collect();
    let mut z = [T::zero(); 6];
    soft_argmax_into(&neg, params.tau_min, &mut z[..k]);

    let mut normal = V3::zero();
    let mut lever = V3::zero();
    let mut position = V3::zero();
    let mut activity = T::zero();
    let mut weighted_depth = T::zero();
    let mut best_w = -T::one();
    let mut best_n = V3::zero();
    for (s, &zi) in c.iter().zip(&z) {
        let gamma = sigmoid(-s.phi / params.tau_cmp);
        let w = zi * gamma;
        let n = s.grad.normalized_guarded(1e-300);
        normal += n.scale(w);
        lever += s.p.scale(w);
        position += s.p.scale(zi);
        activity += w;
        weighted_depth += w * s.phi;
        let take = w - best_w;
        best_w = T::select(take, w, best_w);
        best_n = V3::new(
            T::select(take, n.x, best_n.x),
            T::select(take, n.y, best_n.y),
            T::select(take, n.z, best_n.z),
        );
    }
    let nn = (normal.norm_sq() + 1e-300).sqrt();
    let unit = normal.scale((nn + 1e-300).recip());
    let ok = nn - NORMAL_GUARD;
    let normal = V3::new(
        T::select(ok, unit.x, best_n.x),
        T::select(ok, unit.y, best_n.y),
        T::select(ok, unit.z, best_n.z),
    );
    let depth = match fusion {
        DepthFusion::SmoothMin => {
            let phis: SmallVec<[T; 6]> = c.iter().map(|s| s.phi).collect();
            soft_min(&phis, params.tau_min)
        }
        DepthFusion::Weighted => weighted_depth,
    };
    Fused {
        position,
        depth,
        normal,
        activity,
        lever,
        weights: z,
        count: k,
    }
}

/// φ and ∇φ of the tree root placed at `pose`, for any primal type. The
/// tree's own pose is not applied.
#[inline]
pub fn sample_generic<T: Real>(
    tree: &GeometryTree,
    pose: &Pose<T>,
    p: V3<T>,
    params: &SmoothParams,
) -> Sample<T> {
    let pd = pose.map(Dual::<T, 3>::constant);
    let out = tree.sdf_posed(&pd, seed_point(p), params);
    Sample {
        p,
        phi: out.re,
        grad: V3::from_array(out.eps),
    }
}

/// All per-configuration intermediate results of one manifold build.
pub struct KernelOutput<T> {
    pub traces: Vec<Trace<T>>,
    pub edge_phi: Vec<T>,
    pub records: Vec<(ContactSource, Fused<T>)>,
}

/// The manifold kernel over any `Real`. `sdf_pose` is the body pose; the
/// tree's own pose is applied on top of it.
pub fn manifold_kernel<T: Real>(
    mesh: &TriangleMesh,
    mesh_pose: &Pose<T>,
    tree: &GeometryTree,
    sdf_pose: &Pose<T>,
    cfg: &ContactConfig,
    params: &SmoothParams,
) -> KernelOutput<T> {
    let world: Vec<V3<T>> = mesh.vertices.iter().map(|&v| mesh_pose.apply(V3::cst(v))).collect();
    let sdf_pose = &sdf_pose.compose(&tree.pose.lift());
    let phi = |x: V3<T>| tree.sdf_posed(sdf_pose, x, params);

    let vertex: Vec<Sample<T>> = world.iter().map(|&p| sample_generic(tree, sdf_pose, p, params)).collect();
    let traces: Vec<Trace<T>> = mesh
        .edges
        .iter()
        .map(|&[i, j]| trace_edge_generic(&phi, world[i], world[j], cfg.iters, params))
        .collect();
    let mids: Vec<Sample<T>> = traces.iter().map(|t| sample_generic(tree, sdf_pose, t.p_e, params)).collect();

    let records = match cfg.mode {
        ContactMode::Reduced => mesh
            .faces
            .iter()
            .zip(&mesh.face_edges)
            .enumerate()
            .map(|(fi, (f, fe))| {
                let cands = [
                    vertex[f[0]],
                    vertex[f[1]],
                    vertex[f[2]],
                    mids[fe[0]],
                    mids[fe[1]],
                    mids[fe[2]],
                ];
                (ContactSource::Face(fi), fuse_generic(&cands, cfg.depth_fusion, params))
            })
            .collect(),
        ContactMode::Full => vertex
            .iter()
            .enumerate()
            .map(|(i, s)| (ContactSource::Vertex(i), fuse_generic(&[*s], cfg.depth_fusion, params)))
            .chain(
                mids.iter()
                    .enumerate()
                    .map(|(i, s)| (ContactSource::Edge(i), fuse_generic(&[*s], cfg.depth_fusion, params))),
            )
            .collect(),
    };
    KernelOutput {
        traces,
        edge_phi: mids.iter().map(|s| s.phi).collect(),
        records,
    }
}

/// `J = [I, −[p − t_A]ₓ, −I, [p − t_B]ₓ]`.
pub fn contact_jacobian(p: Vec3, pose_a: &Pose, pose_b: &Pose) -> [[f64; 12]; 3] {
    fused_jacobian(1.0, p, pose_a.translation, pose_b.translation)
}

/// `Σ wᵢ Jᵢ` from `a = Σ wᵢ` and `q = Σ wᵢ pᵢ`.
fn fused_jacobian(a: f64, q: Vec3, ta: Vec3, tb: Vec3) -> [[f64; 12]; 3] {
    let ra = Mat3::skew(q - ta.scale(a));
    let rb = Mat3::skew(q - tb.scale(a));
    let mut j = [[0.0; 12]; 3];
    for r in 0..3 {
        j[r][r] = a;
        j[r][6 + r] = -a;
        for c in 0..3 {
            j[r][3 + c] = -ra.m[r][c];
            j[r][9 + c] = rb.m[r][c];
        }
    }
    j
}

fn pack_pose<L: Lanes>(poses: &[Pose]) -> Pose<L> {
    let mut rot = Mat3::<L>::identity();
    for r in 0..3 {
        for c in 0..3 {
            let v: SmallVec<[f64; 4]> = poses.iter().map(|p| p.rotation.m[r][c]).collect();
            rot.m[r][c] = L::pack(&v);
        }
    }
    let t = |k: usize| {
        let v: SmallVec<[f64; 4]> = poses.iter().map(|p| p.translation.get(k)).collect();
        L::pack(&v)
    };
    Pose::new(rot, V3::new(t(0), t(1), t(2)))
}

fn lane3<L: Lanes>(v: &V3<L>, i: usize) -> Vec3 {
    Vec3::new(v.x.lane(i), v.y.lane(i), v.z.lane(i))
}

/// Runs up to `L::WIDTH` configurations through one kernel call.
pub fn build_manifolds_lanes<L: Lanes>(
    mesh: &TriangleMesh,
    tree: &GeometryTree,
    poses: &[(Pose, Pose)],
    cfg: &ContactConfig,
    params: &SmoothParams,
) -> Vec<ContactManifold> {
    assert!(!poses.is_empty() && poses.len() <= L::WIDTH);
    let pa: SmallVec<[Pose; 4]> = poses.iter().map(|p| p.0).collect();
    let pb: SmallVec<[Pose; 4]> = poses.iter().map(|p| p.1).collect();
    let out = manifold_kernel(mesh, &pack_pose::<L>(&pa), tree, &pack_pose::<L>(&pb), cfg, params);
    let band = 10.0 * params.tau_cmp;
    (0..poses.len())
        .map(|lane| {
            let (ta, tb) = (poses[lane].0.translation, poses[lane].1.translation);
            let contacts = out
                .records
                .iter()
                .map(|(source, f)| {
                    let a = f.activity.lane(lane);
                    ContactPoint {
                        source: *source,
                        position: lane3(&f.position, lane),
                        depth: f.depth.lane(lane),
                        normal: lane3(&f.normal, lane),
                        activity: a,
                        jacobian: fused_jacobian(a, lane3(&f.lever, lane), ta, tb),
                        weights: f.weights[..f.count].iter().map(|w| w.lane(lane)).collect(),
                    }
                })
                .collect();
            let edges = out
                .traces
                .iter()
                .zip(&out.edge_phi)
                .map(|(t, phi)| {
                    let phi_e = phi.lane(lane);
                    let (a1, a2) = (t.alpha_i.lane(lane), t.alpha_ii.lane(lane));
                    EdgeContact {
                        p_i: lane3(&t.p_i, lane),
                        p_ii: lane3(&t.p_ii, lane),
                        p_e: lane3(&t.p_e, lane),
                        phi_at_pe: phi_e,
                        alpha_i: a1,
                        alpha_ii: a2,
                        multi_crossing: phi_e > band
                            && t.last_phi_i.lane(lane) < band
                            && t.last_phi_ii.lane(lane) < band
                            && a1 < a2,
                    }
                })
                .collect::<Vec<_>>();
            let crossings = edges.iter().filter(|e| e.multi_crossing).count();
            if crossings > 0 {
                log::debug!("{crossings} edge(s) cross the SDF surface more than once; refine the mesh");
            }
            ContactManifold {
                mode: cfg.mode,
                mesh_body: String::new(),
                sdf_body: String::new(),
                contacts,
                edges,
            }
        })
        .collect()
}

/// Manifold for one configuration. Runs the 4-lane kernel with the
/// configuration broadcast, so results are bitwise identical to batched runs.
pub fn build_manifold(
    mesh: &TriangleMesh,
    mesh_pose: &Pose,
    tree: &GeometryTree,
    sdf_pose: &Pose,
    cfg: &ContactConfig,
    params: &SmoothParams,
) -> ContactManifold {
    build_manifolds_lanes::<Lane4>(mesh, tree, &[(*mesh_pose, *sdf_pose)], cfg, params)
        .pop()
        .expect("one configuration in, one out")
}

/// Same as [`build_manifold`] on plain `f64` scalars.
pub fn build_manifold_scalar(
    mesh: &TriangleMesh,
    mesh_pose: &Pose,
    tree: &GeometryTree,
    sdf_pose: &Pose,
    cfg: &ContactConfig,
    params: &SmoothParams,
) -> ContactManifold {
    build_manifolds_lanes::<f64>(mesh, tree, &[(*mesh_pose, *sdf_pose)], cfg, params)
        .pop()
        .expect("one configuration in, one out")
}

// ---------------------------------------------------------------------------
// Checked f64 entry points
// ---------------------------------------------------------------------------

/// Traces `edge` against `phi` from both ends.
pub fn sphere_trace_edge<F: ScalarField + ?Sized>(
    edge: &Edge,
    phi: &F,
    iters: usize,
    params: &SmoothParams,
) -> Result<EdgeContact> {
    if iters == 0 {
        return Err(Error::param("iters", "must be at least 1"));
    }
    let f = |x: Vec3| phi.eval(x);
    let t = trace_edge_generic(&f, edge.origin, edge.end, iters, params);
    let phi_e = f(t.p_e);
    let band = 10.0 * params.tau_cmp;
    Ok(EdgeContact {
        p_i: t.p_i,
        p_ii: t.p_ii,
        p_e: t.p_e,
        phi_at_pe: phi_e,
        alpha_i: t.alpha_i,
        alpha_ii: t.alpha_ii,
        multi_crossing: phi_e > band && t.last_phi_i < band && t.last_phi_ii < band && t.alpha_i < t.alpha_ii,
    })
}

/// The face's three vertices followed by the midpoints of its three edges.
pub fn face_candidates(mesh: &TriangleMesh, face: usize, edges: &[EdgeContact]) -> Result<[Vec3; 6]> {
    let f = mesh.faces.get(face).ok_or(Error::IndexOutOfRange {
        what: "face",
        index: face,
        len: mesh.faces.len(),
    })?;
    let fe = mesh.face_edges[face];
    for &e in &fe {
        if e >= edges.len() {
            return Err(Error::IndexOutOfRange {
                what: "edge contact",
                index: e,
                len: edges.len(),
            });
        }
    }
    Ok([
        mesh.vertices[f[0]],
        mesh.vertices[f[1]],
        mesh.vertices[f[2]],
        edges[fe[0]].p_e,
        edges[fe[1]].p_e,
        edges[fe[2]].p_e,
    ])
}

/// Fuses candidate points against `phi`; the poses only enter the Jacobian.
pub fn fuse_face_contact<F: ScalarField + ?Sized>(
    candidates: &[Vec3],
    phi: &F,
    pose_a: &Pose,
    pose_b: &Pose,
    fusion: DepthFusion,
    params: &SmoothParams,
) -> Result<ContactPoint> {
    if candidates.is_empty() || candidates.len() > 6 {
        return Err(Error::param(
            "candidates",
            format!("expected 1 to 6 points, got {}", candidates.len()),
        ));
    }
    if candidates.iter().any(|c| !c.all_finite()) {
        return Err(Error::NonFinite { op: "fuse_face_contact" });
    }
    let samples: SmallVec<[Sample<f64>; 6]> = candidates
        .iter()
        .map(|&p| {
            let (phi, grad) = crate::diffcore::gradient(phi, p);
            Sample { p, phi, grad }
        })
        .collect();
    let f = fuse_generic(&samples, fusion, params);
    Ok(ContactPoint {
        source: ContactSource::Face(0),
        position: f.position,
        depth: f.depth,
        normal: f.normal,
        activity: f.activity,
        jacobian: fused_jacobian(f.activity, f.lever, pose_a.translation, pose_b.translation),
        weights: f.weights[..f.count].to_vec(),
    })
}

/// Fused face depth and normal with their derivatives with respect to the
/// twists `[v_A, ω_A, v_B, ω_B]` applied to the two body poses.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceSensitivity {
    pub depth: f64,
    pub normal: Vec3,
    pub d_depth: [f64; 12],
    pub d_normal: [[f64; 12]; 3],
}

pub fn face_pose_sensitivity(
    mesh: &TriangleMesh,
    face: usize,
    mesh_pose: &Pose,
    tree: &GeometryTree,
    sdf_pose: &Pose,
    cfg: &ContactConfig,
    params: &SmoothParams,
) -> Result<FaceSensitivity> {
    type D = Dual<f64, 12>;
    let f = *mesh.faces.get(face).ok_or(Error::IndexOutOfRange {
        what: "face",
        index: face,
        len: mesh.faces.len(),
    })?;
    let var = |i: usize| D::variable(0.0, i);
    let pa = mesh_pose.perturbed([var(0), var(1), var(2), var(3), var(4), var(5)]);
    let pb = sdf_pose.perturbed([var(6), var(7), var(8), var(9), var(10), var(11)]);
    let world = f.map(|i| pa.apply(V3::cst(mesh.vertices[i])));
    let pb = pb.compose(&tree.pose.lift());
    let phi = |x: V3<D>| tree.sdf_posed(&pb, x, params);
    let mut cands: SmallVec<[Sample<D>; 6]> = world.iter().map(|&p| sample_generic(tree, &pb, p, params)).collect();
    for k in 0..3 {
        let t = trace_edge_generic(&phi, world[k], world[(k + 1) % 3], cfg.iters, params);
        cands.push(sample_generic(tree, &pb, t.p_e, params));
    }
    let fused = fuse_generic(&cands, cfg.depth_fusion, params);
    Ok(FaceSensitivity {
        depth: fused.depth.re,
        normal: fused.normal.map(|c| c.re),
        d_depth: fused.depth.eps,
        d_normal: [fused.normal.x.eps, fused.normal.y.eps, fused.normal.z.eps],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::finite_difference_gradient;
    use crate::geometry::{HalfSpace, Node, Superquadric};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pr() -> SmoothParams {
        SmoothParams::default()
    }

    fn sphere_tree(c: Vec3, r: f64) -> GeometryTree {
        GeometryTree::new(Node::Superquadric(Superquadric::sphere(r).unwrap())).with_pose(Pose::from_translation(c))
    }

    struct Sphere(f64);
    impl ScalarField for Sphere {
        fn eval<T: Real>(&self, x: V3<T>) -> T {
            x.norm() - self.0
        }
    }

    fn edge(a: Vec3, b: Vec3) -> Edge {
        Edge { origin: a, end: b, dir: (b - a).normalized(), length: (b - a).norm() }
    }

    #[test]
    fn trace_examples() {
        let p = pr();
        let e = sphere_trace_edge(&edge(Vec3::new(-2.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)), &Sphere(1.0), 3, &p).unwrap();
        assert!(e.p_i.max_abs_diff(Vec3::new(-1.0, 0.0, 0.0)) < 1e-3);
        assert!(e.p_ii.max_abs_diff(Vec3::new(1.0, 0.0, 0.0)) < 1e-3);
        assert!(e.p_e.norm() < 1e-3);
        assert!((e.phi_at_pe + 1.0).abs() < 1e-3);
        assert_eq!(e.p_e, (e.p_i + e.p_ii).scale(0.5));

        let out = sphere_trace_edge(&edge(Vec3::new(-2.0, 0.0, 3.0), Vec3::new(2.0, 0.0, 3.0)), &Sphere(1.0), 3, &p).unwrap();
        assert!(out.phi_at_pe > 0.0);

        let half = sphere_trace_edge(&edge(Vec3::zero(), Vec3::new(2.0, 0.0, 0.0)), &Sphere(1.0), 3, &p).unwrap();
        assert!(half.p_i.norm() < 1e-3);
        assert!(half.p_ii.max_abs_diff(Vec3::X) < 1e-3);
        assert!(half.p_e.max_abs_diff(Vec3::new(0.5, 0.0, 0.0)) < 1e-3);
        let slack = p.tau_clip * std::f64::consts::LN_2;
        for a in [half.alpha_i, half.alpha_ii] {
            assert!(a > -slack && a < 2.0 + slack);
        }
    }

    #[test]
    fn multi_crossing_is_flagged() {
        let p = pr();
        let two = GeometryTree::new(
            Node::combine(
                crate::geometry::CombineOp::Union,
                vec![
                    Node::Superquadric(Superquadric::sphere(0.5).unwrap()).posed(Pose::from_translation(Vec3::new(-1.0, 0.0, 0.0))),
                    Node::Superquadric(Superquadric::sphere(0.5).unwrap()).posed(Pose::from_translation(Vec3::new(1.0, 0.0, 0.0))),
                ],
            )
            .unwrap(),
        );
        let f = two.field(&p);
        let e = sphere_trace_edge(&edge(Vec3::new(-2.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)), &f, 3, &p).unwrap();
        assert!(e.multi_crossing);
        let e = sphere_trace_edge(&edge(Vec3::new(-2.0, 0.0, 0.0), Vec3::new(-0.8, 0.0, 0.0)), &f, 3, &p).unwrap();
        assert!(!e.multi_crossing);
    }

    #[test]
    fn jacobian_examples() {
        let id = Pose::identity();
        let j = contact_jacobian(Vec3::zero(), &id, &id);
        for r in 0..3 {
            for c in 0..12 {
                let want = if c == r { 1.0 } else if c == 6 + r { -1.0 } else { 0.0 };
                assert_eq!(j[r][c], want);
            }
        }
        let j = contact_jacobian(Vec3::X, &id, &Pose::from_translation(Vec3::X));
        let s = Mat3::skew(Vec3::X);
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(j[r][3 + c], -s.m[r][c]);
                assert_eq!(j[r][9 + c], 0.0);
            }
        }
    }

    #[test]
    fn jacobian_reproduces_kinematics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut r = || Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        for _ in 0..100 {
            let (p, ta, tb) = (r(), r(), r());
            let (va, wa, vb, wb) = (r(), r(), r(), r());
            let j = contact_jacobian(p, &Pose::from_translation(ta), &Pose::from_translation(tb));
            let twist: Vec<f64> = [va, wa, vb, wb].iter().flat_map(|v| v.to_array()).collect();
            let got = Vec3::from_array([0, 1, 2].map(|row| (0..12).map(|c| j[row][c] * twist[c]).sum()));
            let want = (va + wa.cross(p - ta)) - (vb + wb.cross(p - tb));
            assert!(got.max_abs_diff(want) < 1e-12);
        }
    }

    #[test]
    fn fusion_examples() {
        let p = pr();
        let plane = GeometryTree::new(Node::HalfSpace(HalfSpace::new(Vec3::Z, 0.0).unwrap()));
        let f = plane.field(&p);
        let id = Pose::identity();
        // Equal depths: uniform weights, shared normal, averaged Jacobian.
        let cands: Vec<Vec3> = (0..6).map(|k| Vec3::new(k as f64 * 0.1, 0.0, -0.01)).collect();
        let c = fuse_face_contact(&cands, &f, &id, &id, DepthFusion::SmoothMin, &p).unwrap();
        for w in &c.weights {
            assert!((w - 1.0 / 6.0).abs() < 1e-12);
        }
        assert!(c.normal.max_abs_diff(Vec3::Z) < 1e-12);
        let mut avg = [[0.0; 12]; 3];
        for q in &cands {
            let j = contact_jacobian(*q, &id, &id);
            for r in 0..3 {
                for k in 0..12 {
                    avg[r][k] += j[r][k] * c.activity / 6.0;
                }
            }
        }
        for r in 0..3 {
            for k in 0..12 {
                assert!((avg[r][k] - c.jacobian[r][k]).abs() < 1e-12);
            }
        }
        // One candidate deeper by 50 τ_min dominates.
        let mut cands2 = cands.clone();
        cands2[4].z -= 50.0 * p.tau_min;
        let c = fuse_face_contact(&cands2, &f, &id, &id, DepthFusion::SmoothMin, &p).unwrap();
        assert!(c.weights[4] > 1.0 - 1e-9 * 1e3);
        // Four deep, two shallow.
        let depths = [-0.02, -0.02, -0.02, -0.02, 0.05, 0.05];
        let cands3: Vec<Vec3> = depths.iter().enumerate().map(|(k, &d)| Vec3::new(k as f64, 0.0, d)).collect();
        let c = fuse_face_contact(&cands3, &f, &id, &id, DepthFusion::SmoothMin, &p).unwrap();
        for k in 0..4 {
            assert!((c.weights[k] - 0.25).abs() < 1e-3);
        }
        assert!(c.weights[4] < 1e-3);
        let w: f64 = c.weights.iter().sum();
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn opposing_normals_fall_back() {
        let p = pr();
        let cands = [
            Sample { p: Vec3::zero(), phi: -0.1, grad: Vec3::Z },
            Sample { p: Vec3::X, phi: -0.1, grad: -Vec3::Z },
        ];
        let f = fuse_generic(&cands, DepthFusion::SmoothMin, &p);
        assert!((f.normal.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lane_and_scalar_kernels_agree() {
        let p = pr();
        let mesh = TriangleMesh::icosphere(1, 0.5);
        let tree = sphere_tree(Vec3::zero(), 0.6);
        let pa = Pose::from_quaternion([0.9, 0.1, -0.3, 0.2].map(|v| v / 0.9f64.hypot(0.1).hypot(0.3).hypot(0.2)), Vec3::new(0.3, 0.1, 0.0)).unwrap();
        let pb = Pose::from_translation(Vec3::new(0.0, 0.2, 0.1));
        for mode in [ContactMode::Reduced, ContactMode::Full] {
            let cfg = ContactConfig { mode, ..Default::default() };
            let a = build_manifold(&mesh, &pa, &tree, &pb, &cfg, &p);
            let b = build_manifold_scalar(&mesh, &pa, &tree, &pb, &cfg, &p);
            let want = match mode {
                ContactMode::Reduced => mesh.faces.len(),
                ContactMode::Full => mesh.vertices.len() + mesh.edges.len(),
            };
            assert_eq!(a.contacts.len(), want);
            for (x, y) in a.contacts.iter().zip(&b.contacts) {
                assert!((x.depth - y.depth).abs() < 1e-12);
                assert!(x.normal.max_abs_diff(y.normal) < 1e-12);
                let s: f64 = x.weights.iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert!((x.normal.norm() - 1.0).abs() < 1e-9);
                assert!(x.activity > 0.0 && x.activity < 1.0 + 1e-15);
            }
        }
    }

    #[test]
    fn batched_lanes_match_single_runs() {
        let p = pr();
        let mesh = TriangleMesh::cuboid(Vec3::new(0.3, 0.3, 0.3));
        let tree = sphere_tree(Vec3::zero(), 0.5);
        let cfg = ContactConfig::default();
        let poses: Vec<(Pose, Pose)> = (0..3)
            .map(|k| (Pose::from_translation(Vec3::new(0.1 * k as f64, 0.5, 0.0)), Pose::identity()))
            .collect();
        let batched = build_manifolds_lanes::<Lane4>(&mesh, &tree, &poses, &cfg, &p);
        for (b, (pa, pb)) in batched.iter().zip(&poses) {
            assert_eq!(b, &build_manifold(&mesh, pa, &tree, pb, &cfg, &p));
        }
    }

    #[test]
    fn far_apart_bodies_are_inactive() {
        let p = pr();
        let mesh = TriangleMesh::cuboid(Vec3::new(0.5, 0.5, 0.5));
        let tree = sphere_tree(Vec3::zero(), 0.5);
        let m = build_manifold(&mesh, &Pose::from_translation(Vec3::new(5.0, 0.0, 0.0)), &tree, &Pose::identity(), &ContactConfig::default(), &p);
        assert!(m.contacts.iter().all(|c| c.activity < 1e-6));
        assert_eq!(m.active(1e-6).count(), 0);
    }

    #[test]
    fn mirrored_scene_mirrors_contacts() {
        let p = pr();
        let mesh = TriangleMesh::icosphere(1, 0.4);
        let mirror = |v: Vec3| Vec3::new(-v.x, v.y, v.z);
        let mirrored = TriangleMesh::from_triangles(
            mesh.vertices.iter().map(|&v| mirror(v)).collect(),
            mesh.faces.iter().map(|f| [f[0], f[2], f[1]]).collect(),
        )
        .unwrap();
        let c = Vec3::new(0.35, 0.1, -0.05);
        let sq = Superquadric::new(0.6, 0.8, Vec3::new(0.3, 0.25, 0.35)).unwrap();
        let tree = GeometryTree::new(Node::Superquadric(sq)).with_pose(Pose::from_translation(c));
        let tree_m = GeometryTree::new(Node::Superquadric(sq)).with_pose(Pose::from_translation(mirror(c)));
        let cfg = ContactConfig::default();
        let a = build_manifold_scalar(&mesh, &Pose::identity(), &tree, &Pose::identity(), &cfg, &p);
        let b = build_manifold_scalar(&mirrored, &Pose::identity(), &tree_m, &Pose::identity(), &cfg, &p);
        for (x, y) in a.contacts.iter().zip(&b.contacts) {
            assert!(mirror(x.position).max_abs_diff(y.position) < 1e-9);
            assert!(mirror(x.normal).max_abs_diff(y.normal) < 1e-9, "{x:?} {y:?}");
            assert!((x.depth - y.depth).abs() < 1e-9);
        }
    }

    #[test]
    fn pose_sensitivity_matches_fd() {
        let p = pr();
        let mesh = TriangleMesh::icosphere(1, 0.5);
        let sq = Superquadric::new(0.7, 0.9, Vec3::new(0.5, 0.4, 0.45)).unwrap();
        let tree = GeometryTree::new(Node::Superquadric(sq));
        let pa = Pose::from_translation(Vec3::new(0.55, 0.2, 0.3));
        let pb = Pose::rotation_about(Vec3::new(0.2, 1.0, 0.1), 0.4);
        let cfg = ContactConfig::default();
        let reference = build_manifold_scalar(&mesh, &pa, &tree, &pb, &cfg, &p);
        let mut checked = 0;
        for (fi, c) in reference.contacts.iter().enumerate() {
            if c.activity < 0.05 {
                continue;
            }
            let s = face_pose_sensitivity(&mesh, fi, &pa, &tree, &pb, &cfg, &p).unwrap();
            assert!((s.depth - c.depth).abs() < 1e-12);
            let h = 1e-6;
            for k in 0..12 {
                let mut tw = [0.0; 12];
                tw[k] = h;
                let run = |tw: [f64; 12]| {
                    let a = pa.perturbed([tw[0], tw[1], tw[2], tw[3], tw[4], tw[5]]);
                    let b = pb.perturbed([tw[6], tw[7], tw[8], tw[9], tw[10], tw[11]]);
                    build_manifold_scalar(&mesh, &a, &tree, &b, &cfg, &p).contacts[fi].clone()
                };
                let plus = run(tw);
                let minus = run(tw.map(|v| -v));
                let fd = (plus.depth - minus.depth) / (2.0 * h);
                assert!((fd - s.d_depth[k]).abs() <= 1e-3 * fd.abs().max(1e-2), "face {fi} k {k}: {fd} vs {}", s.d_depth[k]);
                let fdn = (plus.normal - minus.normal).scale(0.5 / h);
                for r in 0..3 {
                    assert!((fdn.get(r) - s.d_normal[r][k]).abs() <= 1e-3 * fdn.norm().max(1e-1));
                }
            }
            checked += 1;
            if checked >= 4 {
                break;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn spatial_gradient_of_tree_used_for_normals() {
        let p = pr();
        let tree = sphere_tree(Vec3::new(0.1, 0.0, 0.0), 0.5);
        let s = sample_generic(&tree, &tree.pose, Vec3::new(0.4, 0.3, -0.2), &p);
        let fd = finite_difference_gradient(&tree.field(&p), Vec3::new(0.4, 0.3, -0.2), 1e-6);
        assert!(s.grad.max_abs_diff(fd) < 1e-8);
    }
}
