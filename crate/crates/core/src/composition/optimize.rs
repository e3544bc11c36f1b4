use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::envmap::EnvMap;
use super::lighting::{facing_normal, hemisphere_samples, oriented_samples, DEFAULT_RAYS};
use super::mesh::TriangleMesh;
use super::raster::rasterize_world;
use crate::error::{Error, Result};
use crate::field::{GroupKind, ParamTape};
use crate::geometry::{CameraModel, PixelPoint};
use crate::image::{Image, LabelMap};
use crate::training::{Adam, OptimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LightingConfig {
    pub steps: usize,
    pub peak_lr: f64,
    pub rays: usize,
    /// Abort when the loss grows by this factor over `divergence_window` steps.
    pub divergence_factor: f64,
    pub divergence_window: usize,
    /// Losses below this fraction of the first loss never count as
    /// divergence.
    pub divergence_floor: f64,
}

impl Default for LightingConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            peak_lr: 5e-3,
            rays: DEFAULT_RAYS,
            divergence_factor: 10.0,
            divergence_window: 100,
            divergence_floor: 1e-6,
        }
    }
}

/// World point of every pixel labeled in `ground_labels`, from `z`-depth.
pub fn ground_points(
    depth: &Image,
    labels: &LabelMap,
    cam: &CameraModel,
    ground_labels: &[u16],
) -> Vec<Option<Vector3<f64>>> {
    let pose = cam.refined_pose();
    let mut out = Vec::with_capacity(depth.width() * depth.height());
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            let d = depth.at(x, y, 0);
            let ok = ground_labels.contains(labels.get(x, y)) && d > 0.0 && d.is_finite();
            out.push(
                ok.then(|| {
                    cam.unproject_with(&pose, &PixelPoint::new(x as f64, y as f64, d))
                        .ok()
                })
                .flatten(),
            );
        }
    }
    out
}

struct FaceSamples {
    dirs: Vec<Vector3<f64>>,
    /// `(pixel index, albedo)` of every pixel this face covers.
    pixels: Vec<(usize, [f64; 3])>,
}

struct Receiver {
    pixel: usize,
    visible: Vec<bool>,
}

/// Precomputed geometry for the composed-image model
/// `I_c = I_bg·Intensity(L_s)·(1 − M) + I_fg(L_s + L_c)·M`: hemisphere
/// samples, per-face sample directions and per-pixel visibility of the
/// ground points the mesh can shadow.
pub struct LightingProblem {
    width: usize,
    height: usize,
    bg: Image,
    mask: Image,
    up: Vec<Vector3<f64>>,
    faces: Vec<FaceSamples>,
    receivers: Vec<Receiver>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LightingFit {
    pub ls: EnvMap,
    pub lc: EnvMap,
    pub losses: Vec<f64>,
}

impl LightingProblem {
    /// `ground` holds the receiving world point per pixel (see
    /// [`ground_points`]); `mesh` is in world coordinates.
    pub fn new(
        bg: &Image,
        ground: &[Option<Vector3<f64>>],
        mesh: &TriangleMesh,
        cam: &CameraModel,
        rays: usize,
    ) -> Result<Self> {
        let (w, h) = (cam.width, cam.height);
        if bg.width() != w || bg.height() != h || bg.channels() != 3 || ground.len() != w * h {
            return Err(Error::ShapeMismatch(format!(
                "lighting inputs must be {w}x{h} RGB"
            )));
        }
        let up = hemisphere_samples(rays.max(1));
        let raster = rasterize_world(mesh, cam);
        let eye = cam.center();
        let mut faces: Vec<FaceSamples> = Vec::new();
        let mut face_slot = vec![usize::MAX; mesh.triangles.len()];
        let mut mask = Image::new(w, h, 1);
        for y in 0..h {
            for x in 0..w {
                if let Some(f) = raster.fragments.get(x, y) {
                    let t = f.triangle as usize;
                    if face_slot[t] == usize::MAX {
                        face_slot[t] = faces.len();
                        faces.push(FaceSamples {
                            dirs: oriented_samples(&up, &facing_normal(mesh, t, &eye)),
                            pixels: Vec::new(),
                        });
                    }
                    faces[face_slot[t]]
                        .pixels
                        .push((y * w + x, mesh.albedo_at(t, f.u, f.v)));
                    mask.set(x, y, 0, 1.0);
                }
            }
        }
        let receivers = (0..w * h)
            .into_par_iter()
            .filter_map(|i| {
                let p = ground[i]?;
                if mask.data()[i] > 0.0 {
                    return None;
                }
                let origin = p + Vector3::z() * 1e-6;
                let visible: Vec<bool> = up
                    .iter()
                    .map(|d| !mesh.occludes(&origin, d, 0.0, f64::INFINITY))
                    .collect();
                (!visible.iter().all(|&v| v)).then_some(Receiver { pixel: i, visible })
            })
            .collect();
        Ok(Self {
            width: w,
            height: h,
            bg: bg.clone(),
            mask,
            up,
            faces,
            receivers,
        })
    }

    pub fn mask(&self) -> &Image {
        &self.mask
    }

    /// Sample weights `A_k = mean_c L_s(ω_k)·cos θ_k` and their sum.
    fn sky_weights(&self, ls: &EnvMap) -> (Vec<f64>, f64) {
        let a: Vec<f64> = self
            .up
            .iter()
            .map(|d| {
                let l = ls.eval(d);
                (l[0] + l[1] + l[2]) / 3.0 * d.z
            })
            .collect();
        let den = a.iter().sum();
        (a, den)
    }

    fn face_irradiance(&self, face: &FaceSamples, ls: &EnvMap, lc: &EnvMap) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for (d, l) in face.dirs.iter().zip(&self.up) {
            let (s, c) = (ls.eval_raw(d), lc.eval_raw(d));
            for k in 0..3 {
                acc[k] += (s[k] + c[k]).max(0.0) * l.z;
            }
        }
        acc.map(|v| 2.0 * v / self.up.len() as f64)
    }

    /// Per-pixel shadow intensity under `L_s`.
    pub fn intensity(&self, ls: &EnvMap) -> Image {
        let (a, den) = self.sky_weights(ls);
        let mut out = Image::filled(self.width, self.height, 1, 1.0);
        if den > 0.0 {
            for r in &self.receivers {
                let num: f64 = a
                    .iter()
                    .zip(&r.visible)
                    .filter(|(_, &v)| v)
                    .map(|(a, _)| a)
                    .sum();
                out.data_mut()[r.pixel] = (num / den).clamp(0.0, 1.0);
            }
        }
        out
    }

    pub fn render(&self, ls: &EnvMap, lc: &EnvMap) -> Image {
        let inten = self.intensity(ls);
        let mut out = Image::from_fn(self.width, self.height, 3, |x, y, c| {
            self.bg.at(x, y, c) * inten.at(x, y, 0) * (1.0 - self.mask.at(x, y, 0))
        });
        for f in &self.faces {
            let e = self.face_irradiance(f, ls, lc);
            let data = out.data_mut();
            for &(p, a) in &f.pixels {
                for k in 0..3 {
                    data[3 * p + k] = a[k] * e[k];
                }
            }
        }
        out
    }

    /// Mean squared error against `reference` and its gradient with respect
    /// to the flattened parameters of both maps.
    pub fn loss_and_grad(
        &self,
        ls: &EnvMap,
        lc: &EnvMap,
        reference: &Image,
        g_ls: &mut [f64],
        g_lc: &mut [f64],
    ) -> Result<f64> {
        reference.check_shape(&self.bg)?;
        let img = self.render(ls, lc);
        let n = (self.width * self.height * 3) as f64;
        let resid: Vec<f64> = img
            .data()
            .iter()
            .zip(reference.data())
            .map(|(a, b)| a - b)
            .collect();
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;
        let d_img: Vec<f64> = resid.iter().map(|r| 2.0 * r / n).collect();

        let (a, den) = self.sky_weights(ls);
        if den > 0.0 {
            let mut g_a = vec![0.0; a.len()];
            for r in &self.receivers {
                let num: f64 = a
                    .iter()
                    .zip(&r.visible)
                    .filter(|(_, &v)| v)
                    .map(|(a, _)| a)
                    .sum();
                let inten = num / den;
                let p = r.pixel;
                let g_i: f64 = (0..3)
                    .map(|k| d_img[3 * p + k] * self.bg.data()[3 * p + k])
                    .sum();
                if g_i == 0.0 {
                    continue;
                }
                for (g, &v) in g_a.iter_mut().zip(&r.visible) {
                    *g += g_i * ((v as u8) as f64 - inten) / den;
                }
            }
            for ((d, g), _) in self.up.iter().zip(&g_a).zip(&a) {
                if *g == 0.0 {
                    continue;
                }
                let raw = ls.eval_raw(d);
                let d_out = [0, 1, 2].map(|k| if raw[k] > 0.0 { g * d.z / 3.0 } else { 0.0 });
                ls.grad_raw(d, d_out, g_ls);
            }
        }

        let scale = 2.0 / self.up.len() as f64;
        for f in &self.faces {
            let mut g_e = [0.0; 3];
            for &(p, alb) in &f.pixels {
                for k in 0..3 {
                    g_e[k] += d_img[3 * p + k] * alb[k];
                }
            }
            for (d, l) in f.dirs.iter().zip(&self.up) {
                let (s, c) = (ls.eval_raw(d), lc.eval_raw(d));
                let d_out = [0, 1, 2].map(|k| {
                    if s[k] + c[k] > 0.0 {
                        g_e[k] * scale * l.z
                    } else {
                        0.0
                    }
                });
                ls.grad_raw(d, d_out, g_ls);
                lc.grad_raw(d, d_out, g_lc);
            }
        }
        Ok(loss)
    }
}

/// Adam on all lobe parameters of `L_s` and `L_c` against a reference
/// composite, cosine-decayed from `peak_lr`. Fails with
/// [`Error::Diverged`] when the loss grows `divergence_factor`-fold within
/// `divergence_window` steps.
pub fn optimize_lighting(
    problem: &LightingProblem,
    init_ls: &EnvMap,
    init_lc: &EnvMap,
    reference: &Image,
    cfg: &LightingConfig,
) -> Result<LightingFit> {
    let (mut ls, mut lc) = (init_ls.clone(), init_lc.clone());
    let mut tape = ParamTape::new();
    let off_s = tape.alloc("ls", GroupKind::Lighting, ls.params());
    let off_c = tape.alloc("lc", GroupKind::Lighting, lc.params());
    let (n_s, n_c) = (ls.params().len(), lc.params().len());
    let optim = OptimConfig {
        lr_mlp: cfg.peak_lr,
        final_lr_ratio: 0.0,
        warmup_steps: 0,
        ..OptimConfig::default()
    };
    let mut adam = Adam::new(optim, tape.len());
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        tape.zero_grad();
        let loss = {
            let g = tape.grads_mut();
            let (gs, gc) = g.split_at_mut(off_c);
            problem.loss_and_grad(
                &ls,
                &lc,
                reference,
                &mut gs[off_s..off_s + n_s],
                &mut gc[..n_c],
            )?
        };
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                detail: format!("lighting loss {loss}"),
            });
        }
        losses.push(loss);
        if step >= cfg.divergence_window {
            let reference_loss = losses[step - cfg.divergence_window];
            if loss > cfg.divergence_floor * losses[0]
                && loss > cfg.divergence_factor * reference_loss
            {
                return Err(Error::Diverged {
                    step,
                    loss,
                    reference: reference_loss,
                });
            }
        }
        adam.step(&mut tape, optim.schedule(step, cfg.steps));
        ls.set_params(&tape.params()[off_s..off_s + n_s]);
        lc.set_params(&tape.params()[off_c..off_c + n_c]);
        let clamped: Vec<f64> = ls.params().into_iter().chain(lc.params()).collect();
        tape.set_params(&clamped)?;
    }
    Ok(LightingFit { ls, lc, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composition::envmap::Gaussian;
    use crate::composition::lighting::{composed_pbr, intensity_map, relight_object};
    use crate::geometry::Rigid;
    use crate::harness::{look_rotation, GROUND};

    fn scene(
        rays: usize,
    ) -> (
        LightingProblem,
        TriangleMesh,
        CameraModel,
        Vec<Option<Vector3<f64>>>,
        Image,
    ) {
        let rot = look_rotation(0.0)
            * nalgebra::Rotation3::from_axis_angle(&Vector3::x_axis(), -0.4).into_inner();
        let cam = CameraModel::with_fov(24, 20, 1.0, Rigid::new(rot, Vector3::new(-7.0, 0.0, 3.0)));
        let mesh = TriangleMesh::vehicle(3.0, 1.6, 1.4, [0.7, 0.3, 0.2]);
        let labels = LabelMap::filled(24, 20, GROUND);
        let depth = Image::from_fn(24, 20, 1, |x, y, _| {
            let r = cam.ray(x as f64, y as f64, 0.0, 100.0);
            if r.dir.z < 0.0 {
                -r.origin.z / r.dir.z * cam.z_per_distance(x as f64, y as f64)
            } else {
                f64::INFINITY
            }
        });
        let bg = Image::from_fn(24, 20, 3, |x, y, c| 0.3 + 0.02 * ((x + y + c) % 9) as f64);
        let ground = ground_points(&depth, &labels, &cam, &[GROUND]);
        let p = LightingProblem::new(&bg, &ground, &mesh, &cam, rays).unwrap();
        (p, mesh, cam, ground, bg)
    }

    fn sun() -> EnvMap {
        EnvMap::new(vec![Gaussian {
            p: [0.9, 0.7],
            c: [1.0, 0.95, 0.9],
            alpha: 3.0,
            s: [0.3, 0.3],
        }])
    }

    #[test]
    fn render_matches_the_standalone_operators() {
        let (p, mesh, cam, ground, bg) = scene(128);
        let (ls, lc) = (sun(), EnvMap::random(3, 0.5, 0.4, 2));
        let relit = relight_object(&mesh, &[&ls, &lc], &cam, 128);
        let inten = intensity_map(&ground, 24, 20, &mesh, &ls, 128);
        let expect = composed_pbr(&bg, &relit.rgb, &relit.mask, &inten).unwrap();
        let got = p.render(&ls, &lc);
        for (a, b) in got.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(inten.data().iter().any(|&v| v < 0.9));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (p, ..) = scene(64);
        let reference = p.render(&sun(), &EnvMap::default());
        let mut ls = sun();
        ls.lobes[0].p = [0.6, 0.9];
        ls.lobes[0].s = [0.4, 0.35];
        let lc = EnvMap::new(vec![Gaussian {
            p: [2.0, 0.3],
            c: [0.2, 0.3, 0.4],
            alpha: 0.5,
            s: [0.6, 0.5],
        }]);
        let mut gs = vec![0.0; 8];
        let mut gc = vec![0.0; 8];
        p.loss_and_grad(&ls, &lc, &reference, &mut gs, &mut gc)
            .unwrap();
        let eps = 1e-6;
        for which in 0..2 {
            for i in 0..8 {
                let eval = |delta: f64| {
                    let (mut s, mut c) = (ls.clone(), lc.clone());
                    let m = if which == 0 { &mut s } else { &mut c };
                    let mut v = m.params();
                    v[i] += delta;
                    m.set_params(&v);
                    let mut d1 = vec![0.0; 8];
                    let mut d2 = vec![0.0; 8];
                    p.loss_and_grad(&s, &c, &reference, &mut d1, &mut d2)
                        .unwrap()
                };
                let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
                let an = if which == 0 { gs[i] } else { gc[i] };
                assert!(
                    (fd - an).abs() <= 1e-5 * fd.abs().max(1e-4),
                    "map {which} param {i}: fd {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn ground_truth_init_has_zero_loss_and_zero_steps_change_nothing() {
        let (p, ..) = scene(64);
        let reference = p.render(&sun(), &EnvMap::default());
        let cfg = LightingConfig {
            steps: 1,
            rays: 64,
            ..LightingConfig::default()
        };
        let fit = optimize_lighting(&p, &sun(), &EnvMap::default(), &reference, &cfg).unwrap();
        assert_eq!(fit.losses[0], 0.0);
        let init = EnvMap::random(4, 2.0, 0.3, 5);
        let none = optimize_lighting(
            &p,
            &init,
            &EnvMap::default(),
            &reference,
            &LightingConfig { steps: 0, ..cfg },
        )
        .unwrap();
        assert_eq!(none.ls, init);
        assert!(none.losses.is_empty());
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let (p, ..) = scene(32);
        let reference = p.render(&sun(), &EnvMap::default());
        let mut init = sun();
        init.lobes[0].p[0] += 1e-3;
        let cfg = LightingConfig {
            steps: 400,
            peak_lr: 50.0,
            rays: 32,
            ..LightingConfig::default()
        };
        match optimize_lighting(&p, &init, &EnvMap::default(), &reference, &cfg) {
            Err(Error::Diverged { .. }) => {}
            other => panic!(
                "expected divergence, got {:?}",
                other.map(|f| f.losses.last().copied())
            ),
        }
    }

    #[test]
    fn loss_decreases_from_a_perturbed_start() {
        let (p, ..) = scene(64);
        let reference = p.render(&sun(), &EnvMap::default());
        let mut init = sun();
        init.lobes[0].p = [0.6, 0.9];
        let cfg = LightingConfig {
            steps: 200,
            peak_lr: 2e-2,
            rays: 64,
            ..LightingConfig::default()
        };
        let fit = optimize_lighting(&p, &init, &EnvMap::default(), &reference, &cfg).unwrap();
        assert!(
            fit.losses.last().unwrap() < &(0.2 * fit.losses[0]),
            "{:?}",
            (fit.losses[0], fit.losses.last())
        );
    }
}
