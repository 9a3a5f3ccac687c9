//! Poses, SDF primitives, smooth booleans and the recursive geometry tree.

mod pose;
mod primitives;
mod tree;

pub use pose::{exp_so3, Pose};
pub use primitives::{
    combine, combine_sdf, halfspace_sdf, psq_sdf, sq_inside_outside, sq_sdf, CombineOp, HalfSpace,
    Planes, Psq, Superquadric, EPS_MAX, EPS_MIN, SQ_GUARD,
};
pub use tree::{tree_sdf, tree_sdf_checked, GeometryTree, Node, TreeField};
