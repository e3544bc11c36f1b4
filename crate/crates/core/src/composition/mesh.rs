use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{ray_aabb, ray_triangle, Rigid};

/// Indexed triangle mesh with per-vertex albedo.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub albedo: Vec<[f64; 3]>,
}

const DEGENERATE_AREA: f64 = 1e-12;

impl TriangleMesh {
    /// Validates indices and drops zero-area triangles.
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[u32; 3]>,
        albedo: Vec<[f64; 3]>,
    ) -> Result<Self> {
        if albedo.len() != vertices.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} albedo entries for {} vertices",
                albedo.len(),
                vertices.len()
            )));
        }
        let n = vertices.len() as u32;
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::ShapeMismatch(format!(
                "triangle {t:?} indexes past {n} vertices"
            )));
        }
        let triangles = triangles
            .into_iter()
            .filter(|t| {
                let [a, b, c] = t.map(|i| vertices[i as usize]);
                (b - a).cross(&(c - a)).norm() > DEGENERATE_AREA
            })
            .collect();
        let albedo = albedo
            .into_iter()
            .map(|c| c.map(|v| v.clamp(0.0, 1.0)))
            .collect();
        Ok(Self {
            vertices,
            triangles,
            albedo,
        })
    }

    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            triangles: Vec::new(),
            albedo: Vec::new(),
        }
    }

    /// Axis-aligned box `[lo, hi]` with outward-facing triangles.
    pub fn cuboid(lo: Vector3<f64>, hi: Vector3<f64>, albedo: [f64; 3]) -> Self {
        let vertices: Vec<_> = (0..8)
            .map(|i| {
                Vector3::new(
                    if i & 1 == 0 { lo.x } else { hi.x },
                    if i & 2 == 0 { lo.y } else { hi.y },
                    if i & 4 == 0 { lo.z } else { hi.z },
                )
            })
            .collect();
        let quads: [[u32; 4]; 6] = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        Self::new(vertices, triangles, vec![albedo; 8]).expect("cuboid is well formed")
    }

    /// A car-like body: chassis plus a narrower cabin, resting on `z = 0`
    /// and centered on the origin, facing `+x`.
    pub fn vehicle(length: f64, width: f64, height: f64, albedo: [f64; 3]) -> Self {
        let (hl, hw) = (0.5 * length, 0.5 * width);
        let chassis = 0.55 * height;
        let mut mesh = Self::cuboid(
            Vector3::new(-hl, -hw, 0.0),
            Vector3::new(hl, hw, chassis),
            albedo,
        );
        let cabin = Self::cuboid(
            Vector3::new(-0.35 * length, -0.9 * hw, chassis),
            Vector3::new(0.2 * length, 0.9 * hw, height),
            albedo.map(|c| 0.6 * c),
        );
        mesh.append(&cabin);
        mesh
    }

    pub fn append(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.albedo.extend_from_slice(&other.albedo);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|i| i + base)));
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn transformed(&self, pose: &Rigid) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| pose.apply(v)).collect(),
            triangles: self.triangles.clone(),
            albedo: self.albedo.clone(),
        }
    }

    /// Returns `(lo, hi)`; both are zero for an empty mesh.
    pub fn aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        if self.vertices.is_empty() {
            return (Vector3::zeros(), Vector3::zeros());
        }
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn triangle(&self, i: usize) -> [Vector3<f64>; 3] {
        self.triangles[i].map(|k| self.vertices[k as usize])
    }

    pub fn face_normal(&self, i: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(i);
        (b - a).cross(&(c - a)).normalize()
    }

    /// Albedo interpolated with barycentrics `(1−u−v, u, v)`.
    pub fn albedo_at(&self, i: usize, u: f64, v: f64) -> [f64; 3] {
        let [a, b, c] = self.triangles[i].map(|k| self.albedo[k as usize]);
        let w = 1.0 - u - v;
        [0, 1, 2].map(|ch| w * a[ch] + u * b[ch] + v * c[ch])
    }

    /// Whether the ray `origin + t·dir`, `t ∈ (t_min, t_max)`, hits any triangle.
    pub fn occludes(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        t_min: f64,
        t_max: f64,
    ) -> bool {
        if self.is_empty() {
            return false;
        }
        let (lo, hi) = self.aabb();
        match ray_aabb(origin, dir, &lo, &hi) {
            Some((t0, t1)) if t1 > t_min && t0 < t_max => {}
            _ => return false,
        }
        (0..self.triangles.len()).any(|i| {
            let [a, b, c] = self.triangle(i);
            matches!(ray_triangle(origin, dir, &a, &b, &c), Some((t, _, _)) if t > t_min && t < t_max)
        })
    }

    /// Reads the ASCII OBJ subset: `v x y z [r g b]`, `f` with `i`, `i/t`,
    /// `i/t/n` or `i//n` references (polygons fan-triangulated, negative
    /// indices relative). Other statements are ignored. Vertices without a
    /// color get mid-gray albedo.
    pub fn load_obj(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_obj(&text).map_err(|d| Error::format(path, d))
    }

    pub fn parse_obj(text: &str) -> std::result::Result<Self, String> {
        let mut vertices = Vec::new();
        let mut albedo = Vec::new();
        let mut triangles = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("");
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let vals: Vec<f64> = it
                        .map(|s| s.parse::<f64>().map_err(|e| format!("line {}: {e}", n + 1)))
                        .collect::<std::result::Result<_, _>>()?;
                    if vals.len() != 3 && vals.len() != 6 {
                        return Err(format!("line {}: expected 3 or 6 vertex values", n + 1));
                    }
                    vertices.push(Vector3::new(vals[0], vals[1], vals[2]));
                    albedo.push(if vals.len() == 6 {
                        [vals[3], vals[4], vals[5]]
                    } else {
                        [0.5; 3]
                    });
                }
                Some("f") => {
                    let idx: Vec<u32> = it
                        .map(|s| {
                            let head = s.split('/').next().unwrap_or("");
                            let i: i64 =
                                head.parse().map_err(|e| format!("line {}: {e}", n + 1))?;
                            let resolved = if i < 0 {
                                vertices.len() as i64 + i
                            } else {
                                i - 1
                            };
                            if resolved < 0 {
                                return Err(format!("line {}: bad index {i}", n + 1));
                            }
                            Ok(resolved as u32)
                        })
                        .collect::<std::result::Result<_, String>>()?;
                    if idx.len() < 3 {
                        return Err(format!("line {}: face with fewer than 3 vertices", n + 1));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        Self::new(vertices, triangles, albedo).map_err(|e| e.to_string())
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for (v, c) in self.vertices.iter().zip(&self.albedo) {
            let _ = writeln!(s, "v {} {} {} {} {} {}", v.x, v.y, v.z, c[0], c[1], c[2]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    pub fn save_obj(&self, path: &Path) -> Result<()> {
        crate::field::write_atomic(path, self.to_obj().as_bytes())
    }
}
