//! Regular SDF grids for offline isosurface extraction.
//!
//! Samples are row-major with `x` slowest and `z` fastest: sample `(i, j, k)`
//! sits at index `(i·ny + j)·nz + k` and at `lo + (hi − lo)·(i, j, k)/(n − 1)`.
//!
//! Binary layout, all little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `CTXG` |
//! | 4 | `u32` version (1) |
//! | 12 | `u32` nx, ny, nz |
//! | 24 | `f32` lo x, y, z, hi x, y, z |
//! | 4·nx·ny·nz | `f32` φ values |

use std::io::{self, Read, Write};

use crate::diffcore::Vec3;
use crate::error::{Error, Result};

use super::Scene;

pub const GRID_MAGIC: [u8; 4] = *b"CTXG";
pub const GRID_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub dims: [usize; 3],
    pub lo: Vec3,
    pub hi: Vec3,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let idx = [i, j, k];
        Vec3::from_array([0, 1, 2].map(|a| {
            let (lo, hi) = (self.lo.get(a), self.hi.get(a));
            lo + (hi - lo) * idx[a] as f64 / (self.dims[a] - 1) as f64
        }))
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec3, f64)> + '_ {
        let [nx, ny, nz] = self.dims;
        (0..nx).flat_map(move |i| {
            (0..ny).flat_map(move |j| (0..nz).map(move |k| (self.point(i, j, k), self.value(i, j, k))))
        })
    }

    pub fn write_binary(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&GRID_MAGIC)?;
        w.write_all(&GRID_VERSION.to_le_bytes())?;
        for d in self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in self.lo.to_array().into_iter().chain(self.hi.to_array()) {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        for &v in &self.values {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the binary layout back; values come back at `f32` precision.
    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let bad = |msg: &str| Error::Parse {
            source_name: "grid".into(),
            line: 0,
            msg: msg.into(),
        };
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|e| Error::io("grid", e))?;
        if buf.len() < 44 || buf[..4] != GRID_MAGIC {
            return Err(bad("not a CTXG grid"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let f32_at = |o: usize| f32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as f64;
        if u32_at(4) != GRID_VERSION {
            return Err(bad("unsupported grid version"));
        }
        let dims = [u32_at(8), u32_at(12), u32_at(16)].map(|d| d as usize);
        let n = dims.iter().product::<usize>();
        if buf.len() != 44 + 4 * n {
            return Err(bad("grid size does not match its header"));
        }
        Ok(Self {
            dims,
            lo: Vec3::new(f32_at(20), f32_at(24), f32_at(28)),
            hi: Vec3::new(f32_at(32), f32_at(36), f32_at(40)),
            values: (0..n).map(|i| f32_at(44 + 4 * i)).collect(),
        })
    }

    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "x,y,z,phi")?;
        for (p, v) in self.iter() {
            writeln!(w, "{},{},{},{}", p.x, p.y, p.z, v)?;
        }
        Ok(())
    }
}

/// Samples the world-frame SDF of `body` on a regular grid.
pub fn sample_grid(scene: &Scene, body: &str, dims: [usize; 3], lo: Vec3, hi: Vec3) -> Result<Grid> {
    let b = scene.body(body)?;
    if b.tree().is_none() {
        return Err(Error::param("body", format!("`{body}` is a mesh body; only SDF bodies can be sampled")));
    }
    for (a, &n) in ["x", "y", "z"].iter().zip(&dims) {
        if n < 2 {
            return Err(Error::param(format!("res.{a}"), "at least 2 samples per axis"));
        }
    }
    if !(lo.all_finite() && hi.all_finite()) || (0..3).any(|a| lo.get(a) >= hi.get(a)) {
        return Err(Error::param("bounds", "need finite lo < hi on every axis"));
    }
    let mut grid = Grid {
        dims,
        lo,
        hi,
        values: Vec::with_capacity(dims.iter().product()),
    };
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let v = b.sdf(grid.point(i, j, k), &scene.smoothing)?;
                grid.values.push(v);
            }
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch_bench::parse_scene;
    use std::path::Path;

    fn scene(sdf: &str) -> Scene {
        parse_scene(&format!(r#"{{ "bodies": [ {{ "name": "b", "sdf": {sdf} }}, {{ "name": "m", "mesh": {{ "cuboid": [1, 1, 1] }} }} ] }}"#), Path::new(".")).unwrap()
    }

    #[test]
    fn half_space_grid_is_z() {
        let s = scene(r#"{ "kind": "half_space", "normal": [0, 0, 1], "offset": 0 }"#);
        let g = sample_grid(&s, "b", [2, 2, 2], Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(g.values.len(), 8);
        for (p, v) in g.iter() {
            assert_eq!(v, p.z);
        }
        assert_eq!(g.value(0, 0, 1), 1.0);
        assert_eq!(g.value(1, 1, 0), -1.0);
    }

    #[test]
    fn sphere_sign_flips_at_radius() {
        let s = scene(r#"{ "kind": "superquadric", "eps1": 1, "eps2": 1, "scale": [1, 1, 1] }"#);
        let g = sample_grid(&s, "b", [21, 21, 21], Vec3::new(-2.0, -2.0, -2.0), Vec3::new(2.0, 2.0, 2.0)).unwrap();
        for (p, v) in g.iter().filter(|(p, _)| (p.norm() - 1.0).abs() > 1e-9) {
            assert_eq!(v < 0.0, p.norm() < 1.0, "{p:?} {v}");
        }
    }

    #[test]
    fn binary_round_trip_and_errors() {
        let s = scene(r#"{ "kind": "superquadric", "eps1": 0.5, "eps2": 1, "scale": [1, 0.5, 1] }"#);
        let g = sample_grid(&s, "b", [3, 4, 5], Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 2.0, 3.0)).unwrap();
        let mut bytes = Vec::new();
        g.write_binary(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"CTXG");
        assert_eq!(bytes.len(), 44 + 4 * 60);
        let back = Grid::read_binary(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.dims, g.dims);
        for (a, b) in back.values.iter().zip(&g.values) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert!(Grid::read_binary(&mut &bytes[..40]).is_err());

        let mut csv = Vec::new();
        g.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 61);

        assert!(matches!(sample_grid(&s, "zz", [2, 2, 2], Vec3::zero(), Vec3::new(1.0, 1.0, 1.0)), Err(Error::UnknownBody(_))));
        assert!(sample_grid(&s, "m", [2, 2, 2], Vec3::zero(), Vec3::new(1.0, 1.0, 1.0)).is_err());
        assert!(sample_grid(&s, "b", [1, 2, 2], Vec3::zero(), Vec3::new(1.0, 1.0, 1.0)).is_err());
    }
}
