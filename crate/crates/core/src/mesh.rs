//! Triangle meshes: OBJ ingestion, edge topology and edge parameterisation.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::diffcore::Vec3;
use crate::error::{Error, Result};

/// Twice the triangle area below which a face counts as degenerate, relative
/// to the squared length of its longest edge.
const DEGENERATE_AREA: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// Unique edges, smaller vertex index first, in first-seen order.
    pub edges: Vec<[usize; 2]>,
    /// Edge indices of `(v0,v1)`, `(v1,v2)`, `(v2,v0)` per face.
    pub face_edges: Vec<[usize; 3]>,
    /// Unit normals following the face winding.
    pub face_normals: Vec<Vec3>,
    /// Faces dropped as degenerate during construction.
    pub dropped_faces: usize,
}

/// Edge `e(α) = v_I + α e_t` for `α ∈ [0, L]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub origin: Vec3,
    pub end: Vec3,
    pub dir: Vec3,
    pub length: f64,
}

impl Edge {
    #[inline]
    pub fn at(&self, alpha: f64) -> Vec3 {
        self.origin + self.dir.scale(alpha)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct MeshSummary {
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub euler_characteristic: i64,
    pub components: usize,
    pub boundary_edges: usize,
    pub non_manifold_edges: usize,
    pub dropped_faces: usize,
    /// Closed and every component satisfies `V − E + F = 2`.
    pub closed_genus0: bool,
}

impl fmt::Display for MeshSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "V={} E={} F={} chi={} components={} boundary_edges={} non_manifold_edges={} dropped_faces={}",
            self.vertices,
            self.edges,
            self.faces,
            self.euler_characteristic,
            self.components,
            self.boundary_edges,
            self.non_manifold_edges,
            self.dropped_faces
        )
    }
}

impl TriangleMesh {
    /// Builds topology from polygons; polygons with more than three corners
    /// are fan-triangulated from their first vertex.
    pub fn from_polygons(vertices: Vec<Vec3>, polygons: &[Vec<usize>]) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let mut faces = Vec::with_capacity(polygons.len());
        for poly in polygons {
            for &i in poly {
                if i >= vertices.len() {
                    return Err(Error::IndexOutOfRange {
                        what: "vertex",
                        index: i,
                        len: vertices.len(),
                    });
                }
            }
            for k in 1..poly.len().saturating_sub(1) {
                faces.push([poly[0], poly[k], poly[k + 1]]);
            }
        }
        Self::from_triangles(vertices, faces)
    }

    pub fn from_triangles(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let mut faces = Vec::with_capacity(triangles.len());
        let mut face_normals = Vec::with_capacity(triangles.len());
        let mut dropped = 0;
        for f in triangles {
            if let Some(&bad) = f.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::IndexOutOfRange {
                    what: "vertex",
                    index: bad,
                    len: vertices.len(),
                });
            }
            let [a, b, c] = f.map(|i| vertices[i]);
            let n = (b - a).cross(c - a);
            let longest = (b - a).norm_sq().max((c - b).norm_sq()).max((a - c).norm_sq());
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] || n.norm() <= DEGENERATE_AREA * longest {
                dropped += 1;
                continue;
            }
            faces.push(f);
            face_normals.push(n.normalized());
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate face(s)");
        }

        let mut index: HashMap<[usize; 2], usize> = HashMap::with_capacity(faces.len() * 3 / 2);
        let mut edges = Vec::new();
        let mut face_edges = Vec::with_capacity(faces.len());
        for f in &faces {
            let mut fe = [0; 3];
            for (k, slot) in fe.iter_mut().enumerate() {
                let (i, j) = (f[k], f[(k + 1) % 3]);
                let key = [i.min(j), i.max(j)];
                *slot = *index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edges.len() - 1
                });
            }
            face_edges.push(fe);
        }

        Ok(Self {
            vertices,
            faces,
            edges,
            face_edges,
            face_normals,
            dropped_faces: dropped,
        })
    }

    pub fn edge_param(&self, index: usize) -> Result<Edge> {
        let [i, j] = *self.edges.get(index).ok_or(Error::IndexOutOfRange {
            what: "edge",
            index,
            len: self.edges.len(),
        })?;
        let (origin, end) = (self.vertices[i], self.vertices[j]);
        let d = end - origin;
        let length = d.norm();
        if !(length > 0.0) {
            return Err(Error::DegenerateEdge { index });
        }
        Ok(Edge {
            origin,
            end,
            dir: d.scale(1.0 / length),
            length,
        })
    }

    pub fn summary(&self) -> MeshSummary {
        let v = self.vertices.len();
        let mut uses = vec![0u32; self.edges.len()];
        for fe in &self.face_edges {
            for &e in fe {
                uses[e] += 1;
            }
        }
        let boundary_edges = uses.iter().filter(|&&u| u == 1).count();
        let non_manifold_edges = uses.iter().filter(|&&u| u > 2).count();

        // Components over vertices referenced by faces.
        let mut parent: Vec<usize> = (0..v).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for &[a, b] in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        let mut used = vec![false; v];
        for f in &self.faces {
            for &i in f {
                used[i] = true;
            }
        }
        let mut per: HashMap<usize, [i64; 3]> = HashMap::new();
        for i in (0..v).filter(|&i| used[i]) {
            let r = find(&mut parent, i);
            per.entry(r).or_default()[0] += 1;
        }
        for &[a, _] in &self.edges {
            let r = find(&mut parent, a);
            per.entry(r).or_default()[1] += 1;
        }
        for f in &self.faces {
            let r = find(&mut parent, f[0]);
            per.entry(r).or_default()[2] += 1;
        }
        let closed_genus0 = boundary_edges == 0
            && non_manifold_edges == 0
            && !per.is_empty()
            && per.values().all(|c| c[0] - c[1] + c[2] == 2);

        MeshSummary {
            vertices: v,
            edges: self.edges.len(),
            faces: self.faces.len(),
            euler_characteristic: v as i64 - self.edges.len() as i64 + self.faces.len() as i64,
            components: per.len(),
            boundary_edges,
            non_manifold_edges,
            dropped_faces: self.dropped_faces,
            closed_genus0,
        }
    }

    /// Merges vertices closer than `eps` (grid hashing, first vertex wins) and
    /// rebuilds topology. Faces that collapse are dropped.
    pub fn welded(&self, eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::param("weld", format!("must be > 0, got {eps}")));
        }
        let cell = |p: Vec3| p.to_array().map(|c| (c / eps).floor() as i64);
        let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        let mut remap = Vec::with_capacity(self.vertices.len());
        let mut kept: Vec<Vec3> = Vec::new();
        for &p in &self.vertices {
            let c = cell(p);
            let mut hit = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(list) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            if let Some(&k) = list.iter().find(|&&k| (kept[k] - p).norm() <= eps) {
                                hit = Some(k);
                                break 'search;
                            }
                        }
                    }
                }
            }
            let k = hit.unwrap_or_else(|| {
                kept.push(p);
                grid.entry(c).or_default().push(kept.len() - 1);
                kept.len() - 1
            });
            remap.push(k);
        }
        let faces = self.faces.iter().map(|f| f.map(|i| remap[i])).collect();
        Self::from_triangles(kept, faces)
    }

    /// Axis-aligned box centred at the origin, two outward-wound triangles
    /// per side.
    pub fn cuboid(half: Vec3) -> Self {
        let mut v = Vec::with_capacity(8);
        for i in 0..8 {
            v.push(Vec3::new(
                if i & 1 == 0 { -half.x } else { half.x },
                if i & 2 == 0 { -half.y } else { half.y },
                if i & 4 == 0 { -half.z } else { half.z },
            ));
        }
        let quads = [
            vec![0, 2, 3, 1], // z-
            vec![4, 5, 7, 6], // z+
            vec![0, 1, 5, 4], // y-
            vec![2, 6, 7, 3], // y+
            vec![0, 4, 6, 2], // x-
            vec![1, 3, 7, 5], // x+
        ];
        Self::from_polygons(v, &quads).expect("cuboid is well formed")
    }

    /// Icosahedron refined `level` times by midpoint subdivision, projected to
    /// a sphere of `radius`.
    pub fn icosphere(level: u32, radius: f64) -> Self {
        let g = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vec3> = [
            (-1.0, g, 0.0),
            (1.0, g, 0.0),
            (-1.0, -g, 0.0),
            (1.0, -g, 0.0),
            (0.0, -1.0, g),
            (0.0, 1.0, g),
            (0.0, -1.0, -g),
            (0.0, 1.0, -g),
            (g, 0.0, -1.0),
            (g, 0.0, 1.0),
            (-g, 0.0, -1.0),
            (-g, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..level {
            let mut mid: HashMap<[usize; 2], usize> = HashMap::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            for f in &faces {
                let mut m = [0; 3];
                for k in 0..3 {
                    let (a, b) = (f[k], f[(k + 1) % 3]);
                    m[k] = *mid.entry([a.min(b), a.max(b)]).or_insert_with(|| {
                        verts.push((verts[a] + verts[b]).normalized());
                        verts.len() - 1
                    });
                }
                next.push([f[0], m[0], m[2]]);
                next.push([f[1], m[1], m[0]]);
                next.push([f[2], m[2], m[1]]);
                next.push(m);
            }
            faces = next;
        }
        let verts = verts.into_iter().map(|p| p.scale(radius)).collect();
        Self::from_triangles(verts, faces).expect("icosphere is well formed")
    }

    pub fn translated(mut self, t: Vec3) -> Self {
        for v in &mut self.vertices {
            *v = *v + t;
        }
        self
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for f in &self.faces {
            s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        s
    }
}

/// Parses ASCII OBJ `v` and `f` records (1-based indices; `i/t/n` forms accept
/// the leading vertex index). Other record types are ignored.
pub fn parse_obj(text: &str, source_name: &str) -> Result<TriangleMesh> {
    let err = |line: usize, msg: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        msg,
    };
    let mut vertices = Vec::new();
    let mut polys: Vec<Vec<usize>> = Vec::new();
    let mut poly_lines = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut it = content.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .by_ref()
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|e| err(line, format!("bad coordinate `{s}`: {e}"))))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(err(line, "vertex needs 3 coordinates".into()));
                }
                if c.iter().any(|x| !x.is_finite()) {
                    return Err(err(line, "non-finite coordinate".into()));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in it {
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| err(line, format!("bad face index `{tok}`")))?;
                    if idx < 1 {
                        return Err(err(
                            line,
                            format!("face index {idx} unsupported (indices are 1-based and positive)"),
                        ));
                    }
                    poly.push(idx as usize - 1);
                }
                if poly.len() < 3 {
                    return Err(err(line, "face needs at least 3 vertices".into()));
                }
                polys.push(poly);
                poly_lines.push(line);
            }
            _ => {}
        }
    }
    if vertices.is_empty() {
        return Err(Error::EmptyMesh);
    }
    for (poly, &line) in polys.iter().zip(&poly_lines) {
        if let Some(&bad) = poly.iter().find(|&&i| i >= vertices.len()) {
            return Err(err(
                line,
                format!("vertex index {} out of range ({} vertices)", bad + 1, vertices.len()),
            ));
        }
    }
    TriangleMesh::from_polygons(vertices, &polys)
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, &path.display().to_string())
}
