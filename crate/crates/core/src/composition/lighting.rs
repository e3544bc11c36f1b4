use nalgebra::Vector3;

use super::envmap::{eval_sum, EnvMap};
use super::mesh::TriangleMesh;
use super::raster::{rasterize_world, Raster};
use crate::error::Result;
use crate::geometry::CameraModel;
use crate::image::Image;

/// Default Monte-Carlo ray count for hemisphere integrals.
pub const DEFAULT_RAYS: usize = 1024;
/// Offset along the normal before casting visibility rays.
const RAY_BIAS: f64 = 1e-6;

fn radical_inverse(mut i: u32) -> f64 {
    i = i.reverse_bits();
    i as f64 / 4294967296.0
}

/// Hammersley points mapped uniformly over the solid angle of the `+z`
/// hemisphere. The `z` component is the cosine to the pole.
pub fn hemisphere_samples(n: usize) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|i| {
            let z = (i as f64 + 0.5) / n as f64;
            let phi = 2.0 * std::f64::consts::PI * radical_inverse(i as u32);
            let r = (1.0 - z * z).max(0.0).sqrt();
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Orthonormal `(t, b)` completing `n`.
fn tangent_frame(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let a = if n.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let t = n.cross(&a).normalize();
    (t, n.cross(&t))
}

/// The hemisphere sample set rotated so its pole is `n`.
pub fn oriented_samples(local: &[Vector3<f64>], n: &Vector3<f64>) -> Vec<Vector3<f64>> {
    let (t, b) = tangent_frame(n);
    local.iter().map(|d| t * d.x + b * d.y + n * d.z).collect()
}

/// `∫ L_s |ω·n| v dω / ∫ L_s |ω·n| dω` over the upper hemisphere at ground
/// point `x`, with the channel mean of `L_s` as the weight.
pub fn shadow_intensity(x: &Vector3<f64>, mesh: &TriangleMesh, ls: &EnvMap, rays: usize) -> f64 {
    let origin = x + Vector3::z() * RAY_BIAS;
    let (mut num, mut den) = (0.0, 0.0);
    for d in hemisphere_samples(rays.max(1)) {
        let l = ls.eval(&d);
        let a = (l[0] + l[1] + l[2]) / 3.0 * d.z;
        den += a;
        if !mesh.occludes(&origin, &d, 0.0, f64::INFINITY) {
            num += a;
        }
    }
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Lambertian irradiance factor `(1/π)∫ L(ω)|ω·n| dω` per channel, so that
/// unit radiance gives 1.
pub fn lambert_irradiance(maps: &[&EnvMap], n: &Vector3<f64>, local: &[Vector3<f64>]) -> [f64; 3] {
    let mut acc = [0.0; 3];
    for (d, l) in oriented_samples(local, n).iter().zip(local) {
        let v = eval_sum(maps, d);
        for k in 0..3 {
            acc[k] += v[k] * l.z;
        }
    }
    acc.map(|a| 2.0 * a / local.len() as f64)
}

/// Face normal flipped toward the camera center.
pub fn facing_normal(mesh: &TriangleMesh, tri: usize, eye: &Vector3<f64>) -> Vector3<f64> {
    let n = mesh.face_normal(tri);
    let [a, b, c] = mesh.triangle(tri);
    if n.dot(&(eye - (a + b + c) / 3.0)) < 0.0 {
        -n
    } else {
        n
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Relit {
    pub rgb: Image,
    /// Coverage as a 0/1 image.
    pub mask: Image,
    pub raster: Raster,
}

/// Diffuse relighting of a world-space mesh under `L_i = Σ maps`:
/// `albedo/π · ∫ L_i(ω)|ω·n| dω` per covered pixel.
pub fn relight_object(
    mesh: &TriangleMesh,
    maps: &[&EnvMap],
    cam: &CameraModel,
    rays: usize,
) -> Relit {
    let raster = rasterize_world(mesh, cam);
    let eye = cam.center();
    let local = hemisphere_samples(rays.max(1));
    let irradiance: Vec<[f64; 3]> = (0..mesh.triangles.len())
        .map(|t| lambert_irradiance(maps, &facing_normal(mesh, t, &eye), &local))
        .collect();
    let (w, h) = (cam.width, cam.height);
    let mut rgb = Image::new(w, h, 3);
    let mut mask = Image::new(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            if let Some(f) = raster.fragments.get(x, y) {
                let a = mesh.albedo_at(f.triangle as usize, f.u, f.v);
                let e = irradiance[f.triangle as usize];
                for k in 0..3 {
                    rgb.set(x, y, k, a[k] * e[k]);
                }
                mask.set(x, y, 0, 1.0);
            }
        }
    }
    Relit { rgb, mask, raster }
}

/// `I_c = I_bg·Intensity·(1 − M) + I_fg·M`.
pub fn composed_pbr(bg: &Image, fg: &Image, mask: &Image, intensity: &Image) -> Result<Image> {
    bg.check_shape(fg)?;
    mask.check_shape(intensity)?;
    if mask.width() != bg.width() || mask.height() != bg.height() {
        return Err(crate::Error::ShapeMismatch(format!(
            "mask {}x{} vs image {}x{}",
            mask.width(),
            mask.height(),
            bg.width(),
            bg.height()
        )));
    }
    Ok(Image::from_fn(
        bg.width(),
        bg.height(),
        bg.channels(),
        |x, y, c| {
            let m = mask.at(x, y, 0);
            bg.at(x, y, c) * intensity.at(x, y, 0) * (1.0 - m) + fg.at(x, y, c) * m
        },
    ))
}

/// Shadow intensity for every pixel whose ground point is given; other
/// pixels get 1.
pub fn intensity_map(
    ground: &[Option<Vector3<f64>>],
    width: usize,
    height: usize,
    mesh: &TriangleMesh,
    ls: &EnvMap,
    rays: usize,
) -> Image {
    Image::from_fn(width, height, 1, |x, y, _| match ground[y * width + x] {
        Some(p) => shadow_intensity(&p, mesh, ls, rays),
        None => 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composition::envmap::{from_lat_long, Gaussian};
    use crate::geometry::Rigid;
    use crate::harness::look_rotation;

    /// Triangulated partial dome of radius `r` around `c` covering
    /// longitudes in `[lon0, lon1]` and all latitudes above the horizon.
    fn dome(c: Vector3<f64>, r: f64, lon0: f64, lon1: f64) -> TriangleMesh {
        let (nl, nt) = (45, 23);
        let mut v = Vec::new();
        for i in 0..=nl {
            for j in 0..=nt {
                let lon = lon0 + (lon1 - lon0) * i as f64 / nl as f64;
                let lat = -0.05 + (std::f64::consts::FRAC_PI_2 + 0.05) * j as f64 / nt as f64;
                v.push(c + from_lat_long([lon, lat]) * r);
            }
        }
        let id = |i: usize, j: usize| (i * (nt + 1) + j) as u32;
        let mut t = Vec::new();
        for i in 0..nl {
            for j in 0..nt {
                t.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                t.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let n = v.len();
        TriangleMesh::new(v, t, vec![[0.5; 3]; n]).unwrap()
    }

    #[test]
    fn hemisphere_samples_are_unit_and_upward() {
        let s = hemisphere_samples(1024);
        assert!(s
            .iter()
            .all(|d| (d.norm() - 1.0).abs() < 1e-12 && d.z > 0.0));
        let mean_cos: f64 = s.iter().map(|d| d.z).sum::<f64>() / 1024.0;
        assert!((mean_cos - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_mesh_gives_exactly_one() {
        let ls = EnvMap::random(10, 3.0, 0.4, 1);
        assert_eq!(
            shadow_intensity(&Vector3::zeros(), &TriangleMesh::empty(), &ls, DEFAULT_RAYS),
            1.0
        );
        let far = TriangleMesh::cuboid(
            Vector3::new(10.0, 10.0, -3.0),
            Vector3::new(11.0, 11.0, -2.0),
            [0.5; 3],
        );
        assert_eq!(
            shadow_intensity(&Vector3::zeros(), &far, &ls, DEFAULT_RAYS),
            1.0
        );
    }

    #[test]
    fn full_dome_blocks_everything() {
        let ls = EnvMap::constant([1.0; 3]);
        let mesh = dome(Vector3::zeros(), 5.0, 0.1, 0.1 + 2.0 * std::f64::consts::PI);
        assert_eq!(
            shadow_intensity(&Vector3::zeros(), &mesh, &ls, DEFAULT_RAYS),
            0.0
        );
    }

    #[test]
    fn half_dome_blocks_half() {
        let ls = EnvMap::constant([1.0; 3]);
        let mesh = dome(
            Vector3::zeros(),
            5.0,
            std::f64::consts::PI,
            2.0 * std::f64::consts::PI,
        );
        let v = shadow_intensity(&Vector3::zeros(), &mesh, &ls, DEFAULT_RAYS);
        assert!((v - 0.5).abs() <= 0.02, "{v}");
    }

    #[test]
    fn nested_occluders_are_monotone() {
        let ls = EnvMap::random(8, 4.0, 0.5, 3);
        let mut last = 1.0;
        for k in 1..=6 {
            let lon1 = k as f64 * std::f64::consts::PI / 3.0;
            let v = shadow_intensity(
                &Vector3::zeros(),
                &dome(Vector3::zeros(), 5.0, 0.0, lon1),
                &ls,
                256,
            );
            assert!((0.0..=1.0).contains(&v));
            assert!(v <= last + 1e-12, "{k}: {v} > {last}");
            last = v;
        }
    }

    fn camera() -> CameraModel {
        CameraModel::with_fov(
            32,
            32,
            0.8,
            Rigid::new(look_rotation(0.0), Vector3::new(-6.0, 0.0, 0.5)),
        )
    }

    fn colored_cube() -> TriangleMesh {
        let mut m = TriangleMesh::cuboid(
            Vector3::new(-1.0, -1.0, -0.5),
            Vector3::new(1.0, 1.0, 1.5),
            [0.0; 3],
        );
        for (i, a) in m.albedo.iter_mut().enumerate() {
            *a = [0.1 + 0.1 * i as f64, 0.9 - 0.1 * i as f64, 0.5];
        }
        m
    }

    #[test]
    fn white_dome_reproduces_albedo() {
        let mesh = colored_cube();
        let white = EnvMap::constant([1.0; 3]);
        let r = relight_object(&mesh, &[&white], &camera(), DEFAULT_RAYS);
        let mut n = 0;
        for y in 0..32 {
            for x in 0..32 {
                if let Some(f) = r.raster.fragments.get(x, y) {
                    n += 1;
                    let a = mesh.albedo_at(f.triangle as usize, f.u, f.v);
                    for k in 0..3 {
                        assert!((r.rgb.at(x, y, k) - a[k]).abs() <= 0.02 * a[k].max(1e-3));
                    }
                }
            }
        }
        assert!(n > 50);
    }

    #[test]
    fn black_light_is_black() {
        let r = relight_object(
            &colored_cube(),
            &[&EnvMap::constant([0.0; 3])],
            &camera(),
            64,
        );
        assert!(r.rgb.data().iter().all(|&v| v == 0.0));
        assert!(r.mask.data().contains(&1.0));
    }

    #[test]
    fn brightness_follows_cosine_law() {
        let light = Gaussian {
            p: [0.0, 0.0],
            c: [1.0; 3],
            alpha: 1.0,
            s: [0.12, 0.12],
        };
        let env = EnvMap::new(vec![light]);
        let local = hemisphere_samples(16384);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in 0..9 {
            let tilt = k as f64 * 0.15;
            let n = Vector3::new(tilt.cos(), 0.0, tilt.sin());
            xs.push(tilt.cos());
            ys.push(lambert_irradiance(&[&env], &n, &local)[0]);
        }
        let mx = xs.iter().sum::<f64>() / 9.0;
        let my = ys.iter().sum::<f64>() / 9.0;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        // (1/π)∫G dω on a fine longitude/latitude quadrature
        let m = 400;
        let h = 12.0 * 0.12 / m as f64;
        let mut flux = 0.0;
        for i in 0..m {
            for j in 0..m {
                let lon = -6.0 * 0.12 + (i as f64 + 0.5) * h;
                let lat = -6.0 * 0.12 + (j as f64 + 0.5) * h;
                flux += env.eval(&from_lat_long([lon, lat]))[0] * lat.cos() * h * h;
            }
        }
        let expected = flux / std::f64::consts::PI;
        assert!(
            (slope - expected).abs() / expected < 0.05,
            "{slope} vs {expected}"
        );
    }

    #[test]
    fn composed_image_formula() {
        let bg = Image::from_fn(4, 4, 3, |x, y, c| (x + y + c) as f64 / 10.0);
        let fg = Image::from_fn(4, 4, 3, |x, y, c| 1.0 - (x * y + c) as f64 / 20.0);
        let ones = Image::filled(4, 4, 1, 1.0);
        let zeros = Image::new(4, 4, 1);
        assert_eq!(composed_pbr(&bg, &fg, &zeros, &ones).unwrap(), bg);
        assert_eq!(
            composed_pbr(&bg, &fg, &ones, &Image::filled(4, 4, 1, 0.3)).unwrap(),
            fg
        );
        let checker = Image::from_fn(4, 4, 1, |x, y, _| ((x + y) % 2) as f64);
        let inten = Image::from_fn(4, 4, 1, |x, _, _| 0.25 * x as f64);
        let out = composed_pbr(&bg, &fg, &checker, &inten).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                for c in 0..3 {
                    let expect = if (x + y) % 2 == 1 {
                        fg.at(x, y, c)
                    } else {
                        bg.at(x, y, c) * (0.25 * x as f64)
                    };
                    assert_eq!(out.at(x, y, c), expect);
                }
            }
        }
        assert!(composed_pbr(&bg, &fg, &Image::new(3, 4, 1), &Image::new(3, 4, 1)).is_err());
    }
}
