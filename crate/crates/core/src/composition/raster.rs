use nalgebra::{Vector2, Vector3};

use super::mesh::TriangleMesh;
use crate::geometry::CameraModel;
use crate::image::{Grid2, Image, Mask};

/// Vertices closer than this to the camera plane cull their triangle.
pub const NEAR_PLANE: f64 = 1e-3;

/// Triangle index and perspective-correct barycentrics `(u, v)` of
/// vertices 1 and 2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fragment {
    pub triangle: u32,
    pub u: f64,
    pub v: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    /// Camera `z`-depth, `+∞` where uncovered.
    pub depth: Image,
    pub mask: Mask,
    pub fragments: Grid2<Option<Fragment>>,
}

/// Screen-space barycentrics of pixel center `p`, or `None` when outside.
fn coverage(s: &[Vector2<f64>; 3], area: f64, p: Vector2<f64>) -> Option<[f64; 3]> {
    let e = |a: Vector2<f64>, b: Vector2<f64>| (b - a).perp(&(p - a)) / area;
    let l0 = e(s[1], s[2]);
    let l1 = e(s[2], s[0]);
    let l2 = e(s[0], s[1]);
    (l0 >= 0.0 && l1 >= 0.0 && l2 >= 0.0).then_some([l0, l1, l2])
}

/// Fill every pixel whose center lies in the screen triangle `s`.
pub(crate) fn fill_triangle(
    width: usize,
    height: usize,
    s: &[Vector2<f64>; 3],
    mut f: impl FnMut(usize, usize, [f64; 3]),
) {
    let area = (s[1] - s[0]).perp(&(s[2] - s[0]));
    if area.abs() < 1e-12 || !area.is_finite() {
        return;
    }
    let xmin = s
        .iter()
        .map(|p| p.x)
        .fold(f64::INFINITY, f64::min)
        .ceil()
        .max(0.0);
    let xmax = s
        .iter()
        .map(|p| p.x)
        .fold(f64::NEG_INFINITY, f64::max)
        .floor()
        .min(width as f64 - 1.0);
    let ymin = s
        .iter()
        .map(|p| p.y)
        .fold(f64::INFINITY, f64::min)
        .ceil()
        .max(0.0);
    let ymax = s
        .iter()
        .map(|p| p.y)
        .fold(f64::NEG_INFINITY, f64::max)
        .floor()
        .min(height as f64 - 1.0);
    if xmin > xmax || ymin > ymax {
        return;
    }
    for y in ymin as usize..=ymax as usize {
        for x in xmin as usize..=xmax as usize {
            if let Some(l) = coverage(s, area, Vector2::new(x as f64, y as f64)) {
                f(x, y, l);
            }
        }
    }
}

/// Z-buffered rasterization of a mesh given in the camera frame. Depth is
/// interpolated as `1/z` in screen space; triangles with a vertex behind the
/// near plane are culled.
pub fn rasterize_depth(mesh: &TriangleMesh, cam: &CameraModel) -> Raster {
    let (w, h) = (cam.width, cam.height);
    let mut depth = Image::filled(w, h, 1, f64::INFINITY);
    let mut mask = Mask::filled(w, h, false);
    let mut fragments = Grid2::filled(w, h, None);
    for (ti, _) in mesh.triangles.iter().enumerate() {
        let v: [Vector3<f64>; 3] = mesh.triangle(ti);
        if v.iter().any(|p| p.z <= NEAR_PLANE) {
            continue;
        }
        let s = v.map(|p| Vector2::new(cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy));
        let inv_z = v.map(|p| 1.0 / p.z);
        fill_triangle(w, h, &s, |x, y, l| {
            let iz = l[0] * inv_z[0] + l[1] * inv_z[1] + l[2] * inv_z[2];
            let z = 1.0 / iz;
            if z < depth.at(x, y, 0) {
                depth.set(x, y, 0, z);
                mask.set(x, y, true);
                fragments.set(
                    x,
                    y,
                    Some(Fragment {
                        triangle: ti as u32,
                        u: l[1] * inv_z[1] * z,
                        v: l[2] * inv_z[2] * z,
                    }),
                );
            }
        });
    }
    Raster {
        depth,
        mask,
        fragments,
    }
}

/// Rasterize a world-space mesh through `cam`'s refined pose.
pub fn rasterize_world(mesh: &TriangleMesh, cam: &CameraModel) -> Raster {
    let pose = cam.refined_pose().inverse();
    rasterize_depth(&mesh.transformed(&pose), cam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rigid;

    fn cam() -> CameraModel {
        CameraModel::with_fov(32, 24, 1.2, Rigid::identity())
    }

    fn quad(z: f64, half: f64) -> TriangleMesh {
        let v = vec![
            Vector3::new(-half, -half, z),
            Vector3::new(half, -half, z),
            Vector3::new(half, half, z),
            Vector3::new(-half, half, z),
        ];
        TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]], vec![[0.5; 3]; 4]).unwrap()
    }

    #[test]
    fn fronto_parallel_triangle_has_constant_depth() {
        let r = rasterize_depth(&quad(3.0, 0.5), &cam());
        let mut covered = 0;
        for y in 0..24 {
            for x in 0..32 {
                if *r.mask.get(x, y) {
                    covered += 1;
                    assert!((r.depth.at(x, y, 0) - 3.0).abs() < 1e-12);
                } else {
                    assert_eq!(r.depth.at(x, y, 0), f64::INFINITY);
                    assert!(r.fragments.get(x, y).is_none());
                }
            }
        }
        assert!(covered > 10 && covered < 32 * 24);
        assert!(!*r.mask.get(0, 0));
    }

    #[test]
    fn nearest_triangle_wins() {
        let mut m = quad(5.0, 2.0);
        m.append(&quad(2.0, 0.4));
        let r = rasterize_depth(&m, &cam());
        let c = r.depth.at(16, 12, 0);
        assert!((c - 2.0).abs() < 1e-12, "{c}");
        let mut both = 0;
        for y in 0..24 {
            for x in 0..32 {
                let d = r.depth.at(x, y, 0);
                if d < 4.0 {
                    both += 1;
                    assert!((d - 2.0).abs() < 1e-12);
                }
            }
        }
        assert!(both > 4);
    }

    #[test]
    fn slanted_plane_depth_matches_ray_intersection() {
        let v = vec![
            Vector3::new(-3.0, -3.0, 2.0),
            Vector3::new(3.0, -3.0, 6.0),
            Vector3::new(0.0, 3.0, 4.0),
        ];
        let m = TriangleMesh::new(v, vec![[0, 1, 2]], vec![[0.5; 3]; 3]).unwrap();
        let c = cam();
        let r = rasterize_depth(&m, &c);
        let [a, b, d] = m.triangle(0);
        let n = (b - a).cross(&(d - a));
        for y in 0..24 {
            for x in 0..32 {
                if *r.mask.get(x, y) {
                    let dir = c.pixel_dir_camera(x as f64, y as f64);
                    let z = n.dot(&a) / n.dot(&dir);
                    assert!((r.depth.at(x, y, 0) - z).abs() < 1e-9);
                    let f = r.fragments.get(x, y).unwrap();
                    let p = a * (1.0 - f.u - f.v) + b * f.u + d * f.v;
                    assert!((p - dir * z).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn behind_camera_is_culled() {
        let r = rasterize_depth(&quad(-3.0, 0.5), &cam());
        assert!(r.mask.iter().all(|m| !m));
    }
}
