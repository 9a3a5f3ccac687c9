use smallvec::SmallVec;

use crate::diffcore::{Real, ScalarField, Vec3, V3};
use crate::error::Result;
use crate::smoothops::SmoothParams;
use crate::xpsq::{xpsq_sdf, Xpsq};

use super::{combine, halfspace_sdf, psq_sdf, sq_sdf, CombineOp, HalfSpace, Pose, Psq, Superquadric};

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    HalfSpace(HalfSpace),
    Superquadric(Superquadric),
    Psq(Psq),
    Xpsq(Box<Xpsq>),
    Combine { op: CombineOp, children: Vec<Node> },
    /// Child expressed in a frame posed relative to the parent.
    Transform { pose: Pose, child: Box<Node> },
}

impl Node {
    pub fn combine(op: CombineOp, children: Vec<Node>) -> Result<Self> {
        op.check_arity(children.len())?;
        Ok(Node::Combine { op, children })
    }

    pub fn posed(self, pose: Pose) -> Self {
        Node::Transform {
            pose,
            child: Box::new(self),
        }
    }

    /// Number of leaf primitives.
    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Combine { children, .. } => children.iter().map(Node::leaf_count).sum(),
            Node::Transform { child, .. } => child.leaf_count(),
            _ => 1,
        }
    }

    /// Number of superquadrics, counting one per PSQ or XPSQ.
    pub fn superquadric_count(&self) -> usize {
        match self {
            Node::HalfSpace(_) => 0,
            Node::Combine { children, .. } => children.iter().map(Node::superquadric_count).sum(),
            Node::Transform { child, .. } => child.superquadric_count(),
            _ => 1,
        }
    }

    /// SDF in this node's parent frame.
    pub fn sdf<T: Real>(&self, x: V3<T>, params: &SmoothParams) -> T {
        match self {
            Node::HalfSpace(h) => halfspace_sdf(&h.lift(), x),
            Node::Superquadric(s) => sq_sdf(&s.lift(), x),
            Node::Psq(p) => psq_sdf(&p.lift(), x, params),
            Node::Xpsq(xp) => xpsq_sdf(xp, x, params),
            Node::Combine { op, children } => {
                let mut phis: SmallVec<[T; 8]> =
                    children.iter().map(|c| c.sdf(x, params)).collect();
                combine(*op, &mut phis, params.tau_min)
            }
            Node::Transform { pose, child } => child.sdf(pose.to_local_of(x), params),
        }
    }
}

/// SDF tree with a rigid pose at the root.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometryTree {
    pub pose: Pose,
    pub root: Node,
}

impl GeometryTree {
    pub fn new(root: Node) -> Self {
        Self {
            pose: Pose::identity(),
            root,
        }
    }

    pub fn with_pose(mut self, pose: Pose) -> Self {
        self.pose = pose;
        self
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    pub fn superquadric_count(&self) -> usize {
        self.root.superquadric_count()
    }

    /// The SDF with an explicit world pose, which may carry derivatives.
    #[inline]
    pub fn sdf_posed<T: Real>(&self, pose: &Pose<T>, x: V3<T>, params: &SmoothParams) -> T {
        self.root.sdf(pose.to_local(x), params)
    }

    /// Binds smoothing parameters into a [`ScalarField`] in world coordinates.
    pub fn field<'a>(&'a self, params: &'a SmoothParams) -> TreeField<'a> {
        TreeField { tree: self, params }
    }
}

/// World-frame SDF at the tree's own pose.
#[inline]
pub fn tree_sdf<T: Real>(tree: &GeometryTree, x: V3<T>, params: &SmoothParams) -> T {
    tree.root.sdf(tree.pose.to_local_of(x), params)
}

/// Checked `f64` evaluation.
pub fn tree_sdf_checked(tree: &GeometryTree, x: Vec3, params: &SmoothParams) -> Result<f64> {
    if !x.all_finite() {
        return Err(crate::Error::NonFinite { op: "tree_sdf" });
    }
    Ok(tree_sdf(tree, x, params))
}

#[derive(Clone, Copy, Debug)]
pub struct TreeField<'a> {
    pub tree: &'a GeometryTree,
    pub params: &'a SmoothParams,
}

impl ScalarField for TreeField<'_> {
    #[inline]
    fn eval<T: Real>(&self, x: V3<T>) -> T {
        tree_sdf(self.tree, x, self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{finite_difference_gradient, gradient};
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn sphere_at(c: Vec3, r: f64) -> Node {
        Node::Superquadric(Superquadric::sphere(r).unwrap()).posed(Pose::from_translation(c))
    }

    fn sample_tree() -> GeometryTree {
        let boxy = Psq::new(
            Superquadric::new(0.3, 0.6, Vec3::new(0.6, 0.4, 0.5)).unwrap(),
            [HalfSpace::new(Vec3::new(0.0, 0.3, 1.0), -0.1).unwrap()],
        );
        let inner = Node::combine(
            CombineOp::Subtraction,
            vec![Node::Psq(boxy), sphere_at(Vec3::new(0.3, 0.0, 0.0), 0.25)],
        )
        .unwrap();
        let root = Node::combine(
            CombineOp::Union,
            vec![
                inner,
                sphere_at(Vec3::new(-0.8, 0.1, 0.2), 0.3),
                Node::HalfSpace(HalfSpace::new(Vec3::Z, 1.0).unwrap()),
            ],
        )
        .unwrap();
        GeometryTree::new(root)
    }

    #[test]
    fn single_leaf_is_leaf_composed_with_pose() {
        let pr = SmoothParams::default();
        let sq = Superquadric::new(0.4, 1.3, Vec3::new(0.5, 0.8, 0.3)).unwrap();
        let pose = Pose::from_quaternion([0.6, 0.0, 0.8, 0.0], Vec3::new(1.0, 2.0, -1.0)).unwrap();
        let tree = GeometryTree::new(Node::Superquadric(sq)).with_pose(pose);
        let x = Vec3::new(0.7, 2.2, -0.4);
        assert_eq!(tree_sdf(&tree, x, &pr), sq_sdf(&sq, pose.to_local(x)));
    }

    #[test]
    fn union_of_disjoint_spheres_at_midpoint() {
        let pr = SmoothParams::default();
        let tree = GeometryTree::new(
            Node::combine(
                CombineOp::Union,
                vec![sphere_at(Vec3::new(-1.0, 0.0, 0.0), 0.5), sphere_at(Vec3::new(1.0, 0.0, 0.0), 0.5)],
            )
            .unwrap(),
        );
        let phi = tree_sdf(&tree, Vec3::zero(), &pr);
        assert!((phi - (0.5 - pr.tau_min * LN_2)).abs() < 1e-12);
    }

    #[test]
    fn counts() {
        let t = sample_tree();
        assert_eq!(t.leaf_count(), 4);
        assert_eq!(t.superquadric_count(), 3);
    }

    #[test]
    fn tree_gradient_matches_fd() {
        let pr = SmoothParams::default();
        let t = sample_tree();
        let f = t.field(&pr);
        for x in [Vec3::new(0.2, 0.3, 0.9), Vec3::new(-0.5, -0.4, 0.1), Vec3::new(1.2, 0.1, -0.3)] {
            let (_, g) = gradient(&f, x);
            let fd = finite_difference_gradient(&f, x, 1e-6);
            assert!(g.max_abs_diff(fd) < 1e-5 * g.norm().max(1.0), "{g:?} {fd:?}");
        }
    }

    #[test]
    fn exact_primitives_have_unit_gradient_near_surface() {
        let pr = SmoothParams::default();
        let t = GeometryTree::new(sphere_at(Vec3::new(0.1, 0.2, 0.3), 0.7));
        let f = t.field(&pr);
        let (_, g) = gradient(&f, Vec3::new(0.1, 0.2, 1.0 + 1e-4));
        assert!((g.norm() - 1.0).abs() < 1e-2);
    }

    proptest! {
        #[test]
        fn pose_equivariance(
            q in proptest::array::uniform4(-1.0f64..1.0),
            t in proptest::array::uniform3(-2.0f64..2.0),
            x in proptest::array::uniform3(-1.5f64..1.5),
        ) {
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assume!(n > 0.1);
            let pr = SmoothParams::default();
            let base = sample_tree();
            let rigid = Pose::from_quaternion(q.map(|v| v / n), Vec3::from_array(t)).unwrap();
            let moved = base.clone().with_pose(rigid.compose(&base.pose));
            let x = Vec3::from_array(x);
            let a = tree_sdf(&base, x, &pr);
            let b = tree_sdf(&moved, rigid.apply(x), &pr);
            prop_assert!((a - b).abs() < 1e-9, "{} {}", a, b);
        }
    }
}
