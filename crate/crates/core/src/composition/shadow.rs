use nalgebra::{Vector2, Vector3};

use super::mesh::TriangleMesh;
use super::raster::fill_triangle;
use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::image::{Image, Mask};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NaiveShadowConfig {
    pub closing_radius: i64,
    pub blur_sigma: f64,
    pub strength: f64,
}

impl Default for NaiveShadowConfig {
    fn default() -> Self {
        Self {
            closing_radius: 3,
            blur_sigma: 2.0,
            strength: 0.5,
        }
    }
}

/// Vertices projected along `light` onto the plane `z = ground`.
pub fn project_to_ground(
    mesh: &TriangleMesh,
    light: &Vector3<f64>,
    ground: f64,
) -> Result<Vec<Vector3<f64>>> {
    if !(light.z < 0.0) {
        return Err(Error::InvalidLight(light.z));
    }
    Ok(mesh
        .vertices
        .iter()
        .map(|v| {
            let s = (ground - v.z) / light.z;
            v + light * s
        })
        .collect())
}

/// Binary image-space mask of the ground-projected mesh: projected triangles
/// filled plus each projected vertex splatted.
pub fn coarse_shadow_mask(
    mesh: &TriangleMesh,
    light: &Vector3<f64>,
    ground: f64,
    cam: &CameraModel,
) -> Result<Mask> {
    let ground_pts = project_to_ground(mesh, light, ground)?;
    let pose = cam.refined_pose();
    let screen: Vec<Option<Vector2<f64>>> = ground_pts
        .iter()
        .map(|p| {
            cam.project_with(&pose, p)
                .ok()
                .map(|q| Vector2::new(q.x, q.y))
        })
        .collect();
    let (w, h) = (cam.width, cam.height);
    let mut mask = Mask::filled(w, h, false);
    for t in &mesh.triangles {
        if let [Some(a), Some(b), Some(c)] = t.map(|i| screen[i as usize]) {
            fill_triangle(w, h, &[a, b, c], |x, y, _| mask.set(x, y, true));
        }
    }
    for s in screen.iter().flatten() {
        let (x, y) = (s.x.round(), s.y.round());
        if x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64 {
            mask.set(x as usize, y as usize, true);
        }
    }
    Ok(mask)
}

fn disk(radius: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if dx * dx + dy * dy <= radius * radius {
                out.push((dx, dy));
            }
        }
    }
    out
}

fn morph(m: &Mask, offsets: &[(i64, i64)], dilate: bool) -> Mask {
    let (w, h) = (m.width() as i64, m.height() as i64);
    Mask::from_fn(m.width(), m.height(), |x, y| {
        let hit = |&(dx, dy): &(i64, i64)| {
            let (u, v) = (x as i64 + dx, y as i64 + dy);
            if u < 0 || v < 0 || u >= w || v >= h {
                // outside counts as background for dilation, foreground for erosion
                return !dilate;
            }
            *m.get(u as usize, v as usize)
        };
        if dilate {
            offsets.iter().any(hit)
        } else {
            offsets.iter().all(hit)
        }
    })
}

/// Dilation then erosion with a disk of the given radius.
pub fn closing(m: &Mask, radius: i64) -> Mask {
    let d = disk(radius);
    morph(&morph(m, &d, true), &d, false)
}

/// Separable Gaussian blur truncated at `3σ`, edges clamped.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let pass = |src: &Image, horizontal: bool| {
        Image::from_fn(w, h, ch, |x, y, c| {
            k.iter()
                .zip(-r..=r)
                .map(|(kv, o)| {
                    let (u, v) = if horizontal {
                        ((x as i64 + o).clamp(0, w as i64 - 1) as usize, y)
                    } else {
                        (x, (y as i64 + o).clamp(0, h as i64 - 1) as usize)
                    };
                    kv * src.at(u, v, c)
                })
                .sum()
        })
    };
    pass(&pass(img, true), false)
}

/// Soft shadow mask in `[0,1]`: coarse projection, closing, blur.
pub fn naive_shadow_mask(
    mesh: &TriangleMesh,
    light: &Vector3<f64>,
    ground: f64,
    cam: &CameraModel,
    cfg: &NaiveShadowConfig,
) -> Result<Image> {
    let coarse = coarse_shadow_mask(mesh, light, ground, cam)?;
    let closed = closing(&coarse, cfg.closing_radius);
    let binary = Image::from_fn(cam.width, cam.height, 1, |x, y, _| {
        if *closed.get(x, y) {
            1.0
        } else {
            0.0
        }
    });
    Ok(gaussian_blur(&binary, cfg.blur_sigma))
}

/// Darken `frame` by `1 − strength·mask` under the mesh's projected shadow.
/// `mesh` is in world coordinates.
pub fn naive_shadow(
    frame: &Image,
    mesh: &TriangleMesh,
    light: &Vector3<f64>,
    ground: f64,
    cam: &CameraModel,
    cfg: &NaiveShadowConfig,
) -> Result<Image> {
    let mask = naive_shadow_mask(mesh, light, ground, cam, cfg)?;
    let mut out = frame.clone();
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            let m = mask.at(x, y, 0);
            if m > 0.0 {
                for c in 0..frame.channels() {
                    out.set(x, y, c, frame.at(x, y, c) * (1.0 - cfg.strength * m));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PixelPoint, Rigid};
    use nalgebra::Matrix3;

    /// Camera 20 m above the origin looking straight down, 0.1 m per pixel
    /// at the ground.
    fn top_down() -> CameraModel {
        let rot = Matrix3::from_columns(&[Vector3::x(), -Vector3::y(), -Vector3::z()]);
        let mut c =
            CameraModel::with_fov(80, 80, 1.0, Rigid::new(rot, Vector3::new(0.0, 0.0, 20.0)));
        c.fx = 200.0;
        c.fy = 200.0;
        c
    }

    fn ground_xy(cam: &CameraModel, x: f64, y: f64) -> Vector2<f64> {
        let p = cam.unproject(&PixelPoint::new(x, y, 20.0)).unwrap();
        Vector2::new(p.x, p.y)
    }

    fn cube() -> TriangleMesh {
        TriangleMesh::cuboid(
            Vector3::new(-1.0, -0.5, 0.0),
            Vector3::new(0.0, 0.5, 1.0),
            [0.5; 3],
        )
    }

    #[test]
    fn non_downward_light_is_rejected() {
        let cam = top_down();
        let f = Image::filled(80, 80, 3, 0.5);
        let cfg = NaiveShadowConfig::default();
        for l in [Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.3)] {
            assert!(matches!(
                naive_shadow(&f, &cube(), &l, 0.0, &cam, &cfg),
                Err(Error::InvalidLight(_))
            ));
        }
    }

    #[test]
    fn straight_down_light_covers_the_footprint() {
        let cam = top_down();
        let mesh = cube();
        let down = -Vector3::z();
        let closed = closing(&coarse_shadow_mask(&mesh, &down, 0.0, &cam).unwrap(), 3);
        let soft =
            naive_shadow_mask(&mesh, &down, 0.0, &cam, &NaiveShadowConfig::default()).unwrap();
        for v in &mesh.vertices {
            let q = cam.project(&Vector3::new(v.x, v.y, 0.0)).unwrap();
            let (x, y) = (q.x.round() as usize, q.y.round() as usize);
            assert!(*closed.get(x, y));
            assert!(soft.at(x, y, 0) > 0.1);
        }
    }

    #[test]
    fn mesh_out_of_view_leaves_frame_unchanged() {
        let cam = top_down();
        let mesh = TriangleMesh::cuboid(
            Vector3::new(50.0, 50.0, 0.0),
            Vector3::new(51.0, 51.0, 1.0),
            [0.5; 3],
        );
        let f = Image::from_fn(80, 80, 3, |x, y, c| ((x * y + c) % 11) as f64 / 11.0);
        let out = naive_shadow(
            &f,
            &mesh,
            &Vector3::new(0.3, 0.2, -1.0),
            0.0,
            &cam,
            &NaiveShadowConfig::default(),
        )
        .unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn slanted_light_shifts_the_shadow_centroid() {
        let cam = top_down();
        let mesh = TriangleMesh::cuboid(
            Vector3::new(-0.5, -0.5, 0.0),
            Vector3::new(0.5, 0.5, 1.0),
            [0.5; 3],
        );
        let light = Vector3::new(1.0, 0.0, -1.0).normalize();
        let mask =
            naive_shadow_mask(&mesh, &light, 0.0, &cam, &NaiveShadowConfig::default()).unwrap();
        let (mut sum, mut acc) = (0.0, Vector2::zeros());
        for y in 0..80 {
            for x in 0..80 {
                let m = mask.at(x, y, 0);
                sum += m;
                acc += ground_xy(&cam, x as f64, y as f64) * m;
            }
        }
        let centroid = acc / sum;
        // region [−0.5, 1.5] × [−0.5, 0.5]: centroid moves by the mean height
        let expected = Vector2::new(0.5, 0.0);
        assert!((centroid - expected).norm() <= 0.1, "{centroid:?}");
    }

    #[test]
    fn blur_preserves_mass_away_from_edges() {
        let mut img = Image::new(31, 31, 1);
        img.set(15, 15, 0, 1.0);
        let b = gaussian_blur(&img, 2.0);
        let s: f64 = b.data().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(b.at(15, 15, 0) > b.at(16, 15, 0));
    }

    #[test]
    fn closing_fills_small_gaps() {
        let m = Mask::from_fn(20, 20, |x, y| {
            (5..15).contains(&y) && (5..15).contains(&x) && x != 9
        });
        let c = closing(&m, 3);
        assert!(*c.get(9, 10));
        assert!(!*c.get(2, 2));
    }
}
