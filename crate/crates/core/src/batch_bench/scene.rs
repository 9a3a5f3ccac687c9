//! Scene documents: bodies, smoothing, contact and benchmark settings.
//!
//! A scene is a JSON object:
//!
//! ```json
//! {
//!   "smoothing": { "tau_cmp": 1e-3, "tau_min": 1e-2, "tau_clip": 1e-3 },
//!   "contact": { "mode": "reduced", "iters": 3, "depth_fusion": "smooth_min" },
//!   "bench": { "pair": ["cube", "floor"], "batch_sizes": [1, 4096] },
//!   "bodies": [
//!     { "name": "floor", "sdf": { "kind": "half_space", "normal": [0, 0, 1], "offset": 0 } },
//!     { "name": "cube", "pose": { "translation": [0, 0, 0.45] }, "mesh": { "cuboid": [0.5, 0.5, 0.5] } }
//!   ]
//! }
//! ```
//!
//! SDF nodes have a `kind` of `half_space`, `superquadric`, `psq`, `xpsq`,
//! `union`, `intersection` or `subtraction`, and an optional `pose`. Meshes are
//! an OBJ `file` (relative to the scene), a `cuboid` half-extent or an
//! `icosphere` with `level` and `radius`. Poses are a `translation` and a unit
//! quaternion `rotation` in `(w, x, y, z)` order.

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::contact::{ContactConfig, ContactMode, DepthFusion};
use crate::diffcore::{Real, Vec3, V3};
use crate::error::{Error, Result};
use crate::geometry::{tree_sdf, CombineOp, GeometryTree, HalfSpace, Node, Pose, Psq, Superquadric};
use crate::mesh::{load_obj, TriangleMesh};
use crate::smoothops::SmoothParams;
use crate::spline::QuadSpline;
use crate::xpsq::Xpsq;

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Sdf(GeometryTree),
    Mesh(TriangleMesh),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Body {
    pub name: String,
    pub pose: Pose,
    pub shape: Shape,
}

impl Body {
    pub fn tree(&self) -> Option<&GeometryTree> {
        match &self.shape {
            Shape::Sdf(t) => Some(t),
            Shape::Mesh(_) => None,
        }
    }

    pub fn mesh(&self) -> Option<&TriangleMesh> {
        match &self.shape {
            Shape::Mesh(m) => Some(m),
            Shape::Sdf(_) => None,
        }
    }

    /// World-frame SDF of an SDF body.
    pub fn sdf<T: Real>(&self, x: V3<T>, params: &SmoothParams) -> Result<T> {
        let tree = self.tree().ok_or_else(|| {
            Error::param(format!("body `{}`", self.name), "is a mesh, not an SDF body")
        })?;
        Ok(tree_sdf(tree, self.pose.to_local_of(x), params))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchSettings {
    /// Mesh body and SDF body, by name.
    pub pair: Option<(String, String)>,
    pub batch_sizes: Vec<usize>,
    pub trials: usize,
    pub warmups: usize,
    /// Batch calls per trial.
    pub queries: usize,
    pub seed: u64,
    /// Box for the random mesh-body translation, relative to the SDF body.
    pub translation_min: Vec3,
    pub translation_max: Vec3,
    /// Superquadric counts to sweep by truncating the top-level union; empty
    /// means the full scene only.
    pub complexity_levels: Vec<usize>,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            pair: None,
            batch_sizes: vec![1, 16, 256, 4096],
            trials: 5,
            warmups: 2,
            queries: 1,
            seed: 0,
            translation_min: Vec3::new(-0.1, -0.1, -0.1),
            translation_max: Vec3::new(0.1, 0.1, 0.1),
            complexity_levels: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub bodies: Vec<Body>,
    pub smoothing: SmoothParams,
    pub contact: ContactConfig,
    pub bench: BenchSettings,
}

impl Scene {
    pub fn body(&self, name: &str) -> Result<&Body> {
        self.bodies
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::UnknownBody(name.to_owned()))
    }

    /// Resolves a mesh body and an SDF body; accepts them in either order.
    pub fn pair(&self, a: &str, b: &str) -> Result<BodyPair<'_>> {
        let (a, b) = (self.body(a)?, self.body(b)?);
        let (mesh_body, sdf_body) = match (&a.shape, &b.shape) {
            (Shape::Mesh(_), Shape::Sdf(_)) => (a, b),
            (Shape::Sdf(_), Shape::Mesh(_)) => (b, a),
            _ => {
                return Err(Error::param(
                    "pair",
                    format!("`{}` and `{}` must be one mesh body and one SDF body", a.name, b.name),
                ))
            }
        };
        Ok(BodyPair {
            mesh_body,
            sdf_body,
            mesh: mesh_body.mesh().expect("checked above"),
            tree: sdf_body.tree().expect("checked above"),
            contact: self.contact,
            smoothing: self.smoothing,
        })
    }

    /// The pair named in the bench settings, or the only mesh/SDF pair.
    pub fn default_pair(&self) -> Result<BodyPair<'_>> {
        if let Some((a, b)) = &self.bench.pair {
            return self.pair(a, b);
        }
        let meshes: Vec<_> = self.bodies.iter().filter(|b| b.mesh().is_some()).collect();
        let sdfs: Vec<_> = self.bodies.iter().filter(|b| b.tree().is_some()).collect();
        match (meshes.as_slice(), sdfs.as_slice()) {
            ([m], [s]) => self.pair(&m.name, &s.name),
            _ => Err(Error::param(
                "bench.pair",
                "required when the scene has more than one mesh or SDF body",
            )),
        }
    }
}

/// A resolved mesh/SDF body pair with the scene's settings.
#[derive(Clone, Copy, Debug)]
pub struct BodyPair<'a> {
    pub mesh_body: &'a Body,
    pub sdf_body: &'a Body,
    pub mesh: &'a TriangleMesh,
    pub tree: &'a GeometryTree,
    pub contact: ContactConfig,
    pub smoothing: SmoothParams,
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scene(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Parses a scene document; mesh files resolve against `base_dir`.
pub fn parse_scene(text: &str, base_dir: &Path) -> Result<Scene> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        source_name: "scene".into(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let root = object(&doc, "")?;
    known_keys(root, "", &["bodies", "smoothing", "contact", "bench"])?;

    let smoothing = match root.get("smoothing") {
        Some(v) => smoothing(v, "smoothing")?,
        None => SmoothParams::default(),
    };
    let contact = match root.get("contact") {
        Some(v) => contact(v, "contact")?,
        None => ContactConfig::default(),
    };
    let bench = match root.get("bench") {
        Some(v) => bench(v, "bench")?,
        None => BenchSettings::default(),
    };

    let list = root
        .get("bodies")
        .ok_or_else(|| Error::param("bodies", "missing"))?
        .as_array()
        .ok_or_else(|| Error::param("bodies", "expected an array"))?;
    let mut bodies: Vec<Body> = Vec::with_capacity(list.len());
    for (i, v) in list.iter().enumerate() {
        let body = body(v, &format!("bodies[{i}]"), base_dir)?;
        if bodies.iter().any(|b| b.name == body.name) {
            return Err(Error::param(format!("bodies[{i}].name"), format!("duplicate body name `{}`", body.name)));
        }
        bodies.push(body);
    }
    let scene = Scene {
        bodies,
        smoothing,
        contact,
        bench,
    };
    if let Some((a, b)) = &scene.bench.pair {
        scene.pair(a, b).map_err(|e| match e {
            Error::UnknownBody(n) => Error::param("bench.pair", format!("unknown body `{n}`")),
            e => e,
        })?;
    }
    Ok(scene)
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_owned()
    } else {
        format!("{path}.{key}")
    }
}

/// Re-roots parameter errors raised by constructors under `path`.
fn under(path: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { field, reason } => Error::InvalidParameter {
            field: join(path, &field),
            reason,
        },
        Error::Arity { op, expected, got } => {
            Error::param(join(path, "children"), format!("{op} expects {expected} operands, got {got}"))
        }
        e => e,
    }
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::param(display(path), "expected an object"))
}

fn display(path: &str) -> &str {
    if path.is_empty() {
        "<root>"
    } else {
        path
    }
}

fn known_keys(m: &Map<String, Value>, path: &str, keys: &[&str]) -> Result<()> {
    for k in m.keys() {
        if !keys.contains(&k.as_str()) {
            return Err(Error::param(join(path, k), format!("unknown field; expected one of {keys:?}")));
        }
    }
    Ok(())
}

fn required<'a>(m: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value> {
    m.get(key).ok_or_else(|| Error::param(join(path, key), "missing"))
}

fn real(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::param(path, "expected a finite number"))
}

fn count(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| Error::param(path, "expected a non-negative integer"))
}

fn reals<const N: usize>(v: &Value, path: &str) -> Result<[f64; N]> {
    let a = v
        .as_array()
        .filter(|a| a.len() == N)
        .ok_or_else(|| Error::param(path, format!("expected an array of {N} numbers")))?;
    let mut out = [0.0; N];
    for (i, x) in a.iter().enumerate() {
        out[i] = real(x, &format!("{path}[{i}]"))?;
    }
    Ok(out)
}

fn vec3(v: &Value, path: &str) -> Result<Vec3> {
    reals::<3>(v, path).map(Vec3::from_array)
}

fn positive(m: &Map<String, Value>, path: &str, key: &str, default: f64) -> Result<f64> {
    match m.get(key) {
        None => Ok(default),
        Some(v) => {
            let p = join(path, key);
            let x = real(v, &p)?;
            if x <= 0.0 {
                return Err(Error::param(p, format!("must be > 0, got {x}")));
            }
            Ok(x)
        }
    }
}

fn smoothing(v: &Value, path: &str) -> Result<SmoothParams> {
    let m = object(v, path)?;
    known_keys(m, path, &["tau_cmp", "tau_min", "tau_clip"])?;
    let d = SmoothParams::default();
    Ok(SmoothParams {
        tau_cmp: positive(m, path, "tau_cmp", d.tau_cmp)?,
        tau_min: positive(m, path, "tau_min", d.tau_min)?,
        tau_clip: positive(m, path, "tau_clip", d.tau_clip)?,
    })
}

fn enum_str<'a>(v: &'a Value, path: &str, options: &[&str]) -> Result<&'a str> {
    v.as_str()
        .filter(|s| options.contains(s))
        .ok_or_else(|| Error::param(path, format!("expected one of {options:?}")))
}

fn contact(v: &Value, path: &str) -> Result<ContactConfig> {
    let m = object(v, path)?;
    known_keys(m, path, &["mode", "iters", "depth_fusion"])?;
    let mut cfg = ContactConfig::default();
    if let Some(v) = m.get("mode") {
        cfg.mode = match enum_str(v, &join(path, "mode"), &["full", "reduced"])? {
            "full" => ContactMode::Full,
            _ => ContactMode::Reduced,
        };
    }
    if let Some(v) = m.get("iters") {
        cfg.iters = count(v, &join(path, "iters"))?;
    }
    if let Some(v) = m.get("depth_fusion") {
        cfg.depth_fusion = match enum_str(v, &join(path, "depth_fusion"), &["smooth_min", "weighted"])? {
            "weighted" => DepthFusion::Weighted,
            _ => DepthFusion::SmoothMin,
        };
    }
    cfg.validate(path)?;
    Ok(cfg)
}

fn counts(v: &Value, path: &str) -> Result<Vec<usize>> {
    let a = v.as_array().ok_or_else(|| Error::param(path, "expected an array"))?;
    a.iter()
        .enumerate()
        .map(|(i, x)| {
            let p = format!("{path}[{i}]");
            let n = count(x, &p)?;
            if n == 0 {
                return Err(Error::param(p, "must be positive"));
            }
            Ok(n)
        })
        .collect()
}

fn bench(v: &Value, path: &str) -> Result<BenchSettings> {
    let m = object(v, path)?;
    known_keys(
        m,
        path,
        &[
            "pair",
            "batch_sizes",
            "trials",
            "warmups",
            "queries",
            "seed",
            "translation_min",
            "translation_max",
            "complexity_levels",
        ],
    )?;
    let mut s = BenchSettings::default();
    if let Some(v) = m.get("pair") {
        let p = join(path, "pair");
        let a = v
            .as_array()
            .filter(|a| a.len() == 2 && a.iter().all(Value::is_string))
            .ok_or_else(|| Error::param(&p, "expected two body names"))?;
        s.pair = Some((a[0].as_str().unwrap().to_owned(), a[1].as_str().unwrap().to_owned()));
    }
    if let Some(v) = m.get("batch_sizes") {
        let p = join(path, "batch_sizes");
        s.batch_sizes = counts(v, &p)?;
        if s.batch_sizes.is_empty() {
            return Err(Error::param(p, "must not be empty"));
        }
    }
    for (key, slot) in [("trials", &mut s.trials), ("queries", &mut s.queries)] {
        if let Some(v) = m.get(key) {
            let p = join(path, key);
            *slot = count(v, &p)?;
            if *slot == 0 {
                return Err(Error::param(p, "must be positive"));
            }
        }
    }
    if let Some(v) = m.get("warmups") {
        s.warmups = count(v, &join(path, "warmups"))?;
    }
    if let Some(v) = m.get("seed") {
        s.seed = v.as_u64().ok_or_else(|| Error::param(join(path, "seed"), "expected a non-negative integer"))?;
    }
    if let Some(v) = m.get("translation_min") {
        s.translation_min = vec3(v, &join(path, "translation_min"))?;
    }
    if let Some(v) = m.get("translation_max") {
        s.translation_max = vec3(v, &join(path, "translation_max"))?;
    }
    for k in 0..3 {
        if s.translation_min.get(k) > s.translation_max.get(k) {
            return Err(Error::param(join(path, "translation_max"), "must be componentwise ≥ translation_min"));
        }
    }
    if let Some(v) = m.get("complexity_levels") {
        s.complexity_levels = counts(v, &join(path, "complexity_levels"))?;
    }
    Ok(s)
}

pub(crate) fn pose(v: &Value, path: &str) -> Result<Pose> {
    let m = object(v, path)?;
    known_keys(m, path, &["translation", "rotation"])?;
    let t = match m.get("translation") {
        Some(v) => vec3(v, &join(path, "translation"))?,
        None => Vec3::zero(),
    };
    let q = match m.get("rotation") {
        Some(v) => reals::<4>(v, &join(path, "rotation"))?,
        None => [1.0, 0.0, 0.0, 0.0],
    };
    Pose::from_quaternion(q, t).map_err(|_| {
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        Error::param(join(path, "rotation"), format!("quaternion must have unit norm, got {n}"))
    })
}

fn body(v: &Value, path: &str, base_dir: &Path) -> Result<Body> {
    let m = object(v, path)?;
    known_keys(m, path, &["name", "pose", "sdf", "mesh"])?;
    let name = required(m, path, "name")?
        .as_str()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::param(join(path, "name"), "expected a non-empty string"))?
        .to_owned();
    let pose = match m.get("pose") {
        Some(v) => pose(v, &join(path, "pose"))?,
        None => Pose::identity(),
    };
    let shape = match (m.get("sdf"), m.get("mesh")) {
        (Some(n), None) => Shape::Sdf(GeometryTree::new(node(n, &join(path, "sdf"))?)),
        (None, Some(v)) => Shape::Mesh(mesh(v, &join(path, "mesh"), base_dir)?),
        _ => return Err(Error::param(display(path), "exactly one of `sdf` or `mesh` is required")),
    };
    Ok(Body { name, pose, shape })
}

fn mesh(v: &Value, path: &str, base_dir: &Path) -> Result<TriangleMesh> {
    let m = object(v, path)?;
    known_keys(m, path, &["file", "cuboid", "icosphere"])?;
    if m.len() != 1 {
        return Err(Error::param(display(path), "expected exactly one of `file`, `cuboid`, `icosphere`"));
    }
    if let Some(f) = m.get("file") {
        let p = join(path, "file");
        let rel = f.as_str().ok_or_else(|| Error::param(&p, "expected a path string"))?;
        let full: PathBuf = base_dir.join(rel);
        if !full.is_file() {
            return Err(Error::MissingMesh { field: p, path: full });
        }
        return load_obj(&full);
    }
    if let Some(c) = m.get("cuboid") {
        let p = join(path, "cuboid");
        let h = vec3(c, &p)?;
        if h.to_array().iter().any(|&x| x <= 0.0) {
            return Err(Error::param(p, "half extents must be > 0"));
        }
        return Ok(TriangleMesh::cuboid(h));
    }
    let ico = object(&m["icosphere"], &join(path, "icosphere"))?;
    let ip = join(path, "icosphere");
    known_keys(ico, &ip, &["level", "radius"])?;
    let level = match ico.get("level") {
        Some(v) => count(v, &join(&ip, "level"))?,
        None => 1,
    };
    if level > 6 {
        return Err(Error::param(join(&ip, "level"), "at most 6"));
    }
    let radius = positive(ico, &ip, "radius", 1.0)?;
    Ok(TriangleMesh::icosphere(level as u32, radius))
}

fn with(extra: &[&'static str]) -> Vec<&'static str> {
    let mut k = vec!["kind", "pose"];
    k.extend_from_slice(extra);
    k
}

const SQ_KEYS: [&str; 3] = ["eps1", "eps2", "scale"];

fn superquadric(m: &Map<String, Value>, path: &str) -> Result<Superquadric> {
    let e1 = real(required(m, path, "eps1")?, &join(path, "eps1"))?;
    let e2 = real(required(m, path, "eps2")?, &join(path, "eps2"))?;
    let scale = vec3(required(m, path, "scale")?, &join(path, "scale"))?;
    Superquadric::new(e1, e2, scale).map_err(|e| under(path, e))
}

fn plane_row(v: &Value, path: &str) -> Result<HalfSpace> {
    let [x, y, z, h] = reals::<4>(v, path)?;
    HalfSpace::new(Vec3::new(x, y, z), h).map_err(|e| under(path, e))
}

fn psq(m: &Map<String, Value>, path: &str) -> Result<Psq> {
    let sq = superquadric(m, path)?;
    let planes = match m.get("planes") {
        None => Vec::new(),
        Some(v) => {
            let p = join(path, "planes");
            v.as_array()
                .ok_or_else(|| Error::param(&p, "expected an array of [nx, ny, nz, h] rows"))?
                .iter()
                .enumerate()
                .map(|(i, r)| plane_row(r, &format!("{p}[{i}]")))
                .collect::<Result<_>>()?
        }
    };
    Ok(Psq::new(sq, planes))
}

fn node(v: &Value, path: &str) -> Result<Node> {
    let m = object(v, path)?;
    let kind_path = join(path, "kind");
    let kind = required(m, path, "kind")?
        .as_str()
        .ok_or_else(|| Error::param(&kind_path, "expected a string"))?;
    let n = match kind {
        "half_space" => {
            known_keys(m, path, &with(&["normal", "offset"]))?;
            let n = vec3(required(m, path, "normal")?, &join(path, "normal"))?;
            let h = real(required(m, path, "offset")?, &join(path, "offset"))?;
            Node::HalfSpace(HalfSpace::new(n, h).map_err(|e| under(path, e))?)
        }
        "superquadric" => {
            known_keys(m, path, &with(&SQ_KEYS))?;
            Node::Superquadric(superquadric(m, path)?)
        }
        "psq" => {
            known_keys(m, path, &with(&["eps1", "eps2", "scale", "planes"]))?;
            Node::Psq(psq(m, path)?)
        }
        "xpsq" => {
            known_keys(m, path, &with(&["spline", "up", "start", "end"]))?;
            let spline = QuadSpline::from_array(reals::<9>(required(m, path, "spline")?, &join(path, "spline"))?);
            let up = match m.get("up") {
                Some(v) => vec3(v, &join(path, "up"))?,
                None => Vec3::Z,
            };
            let section = |key: &str| -> Result<Psq> {
                let p = join(path, key);
                let s = object(required(m, path, key)?, &p)?;
                known_keys(s, &p, &["eps1", "eps2", "scale", "planes"])?;
                psq(s, &p)
            };
            let start = section("start")?;
            let end = match m.get("end") {
                Some(_) => section("end")?,
                None => start.clone(),
            };
            Node::Xpsq(Box::new(Xpsq::new(spline, up, &start, &end).map_err(|e| under(path, e))?))
        }
        "union" | "intersection" | "subtraction" => {
            known_keys(m, path, &with(&["children"]))?;
            let op = match kind {
                "union" => CombineOp::Union,
                "intersection" => CombineOp::Intersection,
                _ => CombineOp::Subtraction,
            };
            let cp = join(path, "children");
            let children = required(m, path, "children")?
                .as_array()
                .ok_or_else(|| Error::param(&cp, "expected an array of nodes"))?
                .iter()
                .enumerate()
                .map(|(i, c)| node(c, &format!("{cp}[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            Node::combine(op, children).map_err(|e| under(path, e))?
        }
        other => {
            return Err(Error::UnknownNodeKind {
                field: kind_path,
                kind: other.to_owned(),
            })
        }
    };
    Ok(match m.get("pose") {
        Some(p) => n.posed(pose(p, &join(path, "pose"))?),
        None => n,
    })
}

/// Keeps the first `k` superquadric-bearing children of a top-level union.
pub fn truncate_union(tree: &GeometryTree, k: usize) -> Result<GeometryTree> {
    let Node::Combine { op: CombineOp::Union, children } = &tree.root else {
        return Err(Error::param("bench.complexity_levels", "the SDF body root must be a union"));
    };
    let mut kept = Vec::new();
    let mut n = 0;
    for c in children {
        if n >= k {
            break;
        }
        n += c.superquadric_count();
        kept.push(c.clone());
    }
    if n < k {
        return Err(Error::param(
            "bench.complexity_levels",
            format!("requested {k} superquadrics, the scene has {n}"),
        ));
    }
    let root = if kept.len() == 1 {
        kept.pop().unwrap()
    } else {
        Node::combine(CombineOp::Union, kept)?
    };
    Ok(GeometryTree { pose: tree.pose, root })
}
