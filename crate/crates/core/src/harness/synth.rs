//! Procedural driving scene with analytic ground truth.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ray_aabb, CameraModel, Keyframe, Rigid, TrackedBox};
use crate::image::{Image, LabelMap};

pub const CLASS_NAMES: [&str; 5] = ["road", "building", "vegetation", "vehicle", "sky"];
pub const GROUND: u16 = 0;
pub const BUILDING: u16 = 1;
pub const VEGETATION: u16 = 2;
pub const VEHICLE: u16 = 3;
pub const SKY: u16 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarSpec {
    pub beams: usize,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub azimuth_step_deg: f64,
    pub height: f64,
    pub max_range: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            beams: 32,
            elevation_min_deg: -25.0,
            elevation_max_deg: 8.0,
            azimuth_step_deg: 0.75,
            height: 1.9,
            max_range: 80.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps: f64,
    pub fov_deg: f64,
    pub ego_speed: f64,
    pub camera_height: f64,
    /// Yaw of each rig camera relative to the driving direction.
    pub camera_yaws_deg: Vec<f64>,
    pub lidar: LidarSpec,
    /// Fraction of LiDAR returns replaced by `range × f`, `f ∈ [0.3, 3]`,
    /// `|f − 1| ≥ 0.4`.
    pub outlier_rate: f64,
    /// Strength of the procedural surface texture in `[0, 1]`.
    pub texture_contrast: f64,
    pub moving_box: bool,
    /// RGB supersampling factor per axis.
    pub supersample: usize,
    pub buildings_per_side: usize,
    pub trees: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            frames: 30,
            fps: 10.0,
            fov_deg: 75.0,
            ego_speed: 4.0,
            camera_height: 1.6,
            camera_yaws_deg: vec![0.0, 60.0, -60.0],
            lidar: LidarSpec::default(),
            outlier_rate: 0.0,
            texture_contrast: 0.3,
            moving_box: true,
            supersample: 2,
            buildings_per_side: 5,
            trees: 6,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.width < 2 || self.height < 2 {
            return bad("image must be at least 2x2");
        }
        if self.frames < 2 {
            return bad("need at least 2 frames");
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive");
        }
        if !(self.fov_deg > 1.0 && self.fov_deg < 170.0) {
            return bad("fov must be in (1, 170) degrees");
        }
        if self.camera_yaws_deg.is_empty() {
            return bad("need at least one camera");
        }
        if self.supersample == 0 {
            return bad("supersample must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return bad("outlier_rate must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.texture_contrast) {
            return bad("texture_contrast must be in [0, 1]");
        }
        if self.lidar.beams < 2 || !(self.lidar.azimuth_step_deg > 0.0) {
            return bad("lidar needs >= 2 beams and a positive azimuth step");
        }
        Ok(())
    }

    pub fn time(&self, frame: usize) -> f64 {
        frame as f64 / self.fps
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticBox {
    pub lo: Vector3<f64>,
    pub hi: Vector3<f64>,
    pub albedo: [f64; 3],
    pub class: u16,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub albedo: [f64; 3],
    pub class: u16,
}

/// Moving box with one albedo per face: `+x, −x, +y, −y, +z, −z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub track: TrackedBox,
    pub face_albedo: [[f64; 3]; 6],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub spec: SynthSpec,
    pub seed: u64,
    pub buildings: Vec<StaticBox>,
    pub spheres: Vec<Sphere>,
    pub vehicles: Vec<Vehicle>,
    pub sun: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub albedo: [f64; 3],
    pub class: u16,
    /// Index into `vehicles` for dynamic hits.
    pub vehicle: Option<usize>,
}

fn hash01(i: i64, j: i64, seed: u64) -> f64 {
    let mut z = (i as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
        .wrapping_add(seed.wrapping_mul(0x1656_67B1_9E37_79F9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Blend `base` toward a dark or bright version of its hue, picked by `h`.
fn speckle(base: [f64; 3], h: f64, k: f64) -> [f64; 3] {
    let m = base[0].max(base[1]).max(base[2]).max(1e-6);
    let level = if h < 0.5 { 0.12 } else { 0.9 };
    std::array::from_fn(|i| (1.0 - k) * base[i] + k * level * base[i] / m)
}

fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Camera→world rotation for a camera looking along world yaw `psi`
/// (x right, y down, z forward in the camera frame; world z up).
pub fn look_rotation(psi: f64) -> Matrix3<f64> {
    let (s, c) = psi.sin_cos();
    Matrix3::from_columns(&[
        Vector3::new(s, -c, 0.0),
        Vector3::new(0.0, 0.0, -1.0),
        Vector3::new(c, s, 0.0),
    ])
}

impl SyntheticScene {
    /// Lay out buildings, trees and the moving vehicle for `spec`.
    pub fn new(spec: SynthSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let length = spec.ego_speed * spec.time(spec.frames - 1);
        let mut buildings = Vec::new();
        for side in [-1.0, 1.0] {
            let mut x = -15.0;
            for _ in 0..spec.buildings_per_side {
                let len = rng.gen_range(6.0..12.0);
                let depth = rng.gen_range(5.0..9.0);
                let height = rng.gen_range(5.0..14.0);
                let near = 8.0;
                let (y0, y1) = if side > 0.0 {
                    (near, near + depth)
                } else {
                    (-near - depth, -near)
                };
                let tint: [f64; 3] = [
                    rng.gen_range(0.45..0.85),
                    rng.gen_range(0.4..0.75),
                    rng.gen_range(0.35..0.7),
                ];
                buildings.push(StaticBox {
                    lo: Vector3::new(x, y0, 0.0),
                    hi: Vector3::new(x + len, y1, height),
                    albedo: tint,
                    class: BUILDING,
                });
                x += len + rng.gen_range(1.0..4.0);
            }
        }
        let mut spheres = Vec::new();
        for k in 0..spec.trees {
            let side = if k % 2 == 0 { 1.0 } else { -1.0 };
            let r = rng.gen_range(0.8..1.4);
            spheres.push(Sphere {
                center: Vector3::new(
                    rng.gen_range(-5.0..length + 25.0),
                    side * 5.8,
                    r + rng.gen_range(0.0..1.0),
                ),
                radius: r,
                albedo: [
                    rng.gen_range(0.15..0.3),
                    rng.gen_range(0.45..0.7),
                    rng.gen_range(0.15..0.3),
                ],
                class: VEGETATION,
            });
        }
        let mut vehicles = Vec::new();
        if spec.moving_box {
            let dim = Vector3::new(4.2, 1.8, 1.5);
            let speed = spec.ego_speed * 1.5;
            let times: Vec<f64> = (0..spec.frames).map(|f| spec.time(f)).collect();
            let keyframes = times
                .iter()
                .map(|&t| Keyframe {
                    time: t,
                    rot: Matrix3::identity(),
                    trans: Vector3::new(9.0 + speed * t, -2.0, 0.5 * dim.z),
                })
                .collect();
            let track = TrackedBox::new(1, VEHICLE, keyframes, dim)?.with_offset_times(times);
            vehicles.push(Vehicle {
                track,
                face_albedo: [
                    [0.92, 0.9, 0.8],
                    [0.85, 0.25, 0.15],
                    [0.8, 0.12, 0.1],
                    [0.75, 0.1, 0.12],
                    [0.25, 0.25, 0.3],
                    [0.05, 0.05, 0.05],
                ],
            });
        }
        Ok(Self {
            spec,
            seed,
            buildings,
            spheres,
            vehicles,
            sun: Vector3::new(0.45, 0.3, 0.84).normalize(),
        })
    }

    /// Ego body pose at `time`: driving along +x at constant speed.
    pub fn ego_pose(&self, time: f64) -> Rigid {
        Rigid::new(
            Matrix3::identity(),
            Vector3::new(self.spec.ego_speed * time, 0.0, 0.0),
        )
    }

    pub fn camera(&self, cam: usize, frame: usize) -> CameraModel {
        let ego = self.ego_pose(self.spec.time(frame));
        let psi = self.spec.camera_yaws_deg[cam].to_radians();
        let pose = Rigid::new(
            look_rotation(psi),
            ego.trans + Vector3::new(1.5, 0.0, self.spec.camera_height),
        );
        CameraModel::with_fov(
            self.spec.width,
            self.spec.height,
            self.spec.fov_deg.to_radians(),
            pose,
        )
    }

    pub fn lidar_pose(&self, frame: usize) -> Rigid {
        let ego = self.ego_pose(self.spec.time(frame));
        Rigid::new(
            ego.rot,
            ego.trans + Vector3::new(0.0, 0.0, self.spec.lidar.height),
        )
    }

    fn texture_fade(&self, p: &Vector3<f64>) -> f64 {
        let length = self.spec.ego_speed * self.spec.time(self.spec.frames - 1);
        let dx = if p.x < 0.0 {
            -p.x
        } else if p.x > length {
            p.x - length
        } else {
            0.0
        };
        let d = (dx * dx + p.y * p.y).sqrt();
        1.0 - smoothstep(12.0, 25.0, d)
    }

    fn ground_albedo(&self, p: &Vector3<f64>) -> [f64; 3] {
        let ay = p.y.abs();
        let mut base = if ay < 3.5 {
            [0.32, 0.32, 0.34]
        } else if ay < 6.5 {
            [0.62, 0.6, 0.56]
        } else {
            [0.3, 0.48, 0.22]
        };
        // Lane dashes.
        if ay < 0.12 && p.x.rem_euclid(4.0) < 2.0 {
            base = [0.95, 0.95, 0.9];
        }
        let h = hash01(
            (p.x * 2.0).floor() as i64,
            (p.y * 2.0).floor() as i64,
            self.seed,
        );
        speckle(base, h, self.spec.texture_contrast * self.texture_fade(p))
    }

    fn building_albedo(&self, b: &StaticBox, p: &Vector3<f64>, n: &Vector3<f64>) -> [f64; 3] {
        let u = if n.x.abs() > 0.5 { p.y } else { p.x };
        let fu = (u / 2.0).rem_euclid(1.0);
        let fv = (p.z / 2.5).rem_euclid(1.0);
        let window = n.z.abs() < 0.5 && (0.3..0.7).contains(&fu) && (0.35..0.8).contains(&fv);
        let k = self.spec.texture_contrast;
        if window {
            scale3(b.albedo, 1.0 - 0.85 * k.max(0.3))
        } else {
            let h = hash01(
                (u * 1.5).floor() as i64,
                (p.z * 1.5).floor() as i64,
                self.seed ^ 0xB1D,
            );
            speckle(b.albedo, h, k)
        }
    }

    fn sphere_albedo(&self, s: &Sphere, n: &Vector3<f64>) -> [f64; 3] {
        let lat = (n.z.clamp(-1.0, 1.0).asin() * 4.0).floor() as i64;
        let lon = (n.y.atan2(n.x) * 4.0).floor() as i64;
        speckle(
            s.albedo,
            hash01(lat, lon, self.seed ^ 0x7EE),
            self.spec.texture_contrast,
        )
    }

    /// Nearest surface hit along a ray at scene time `time`.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, time: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let eps = 1e-9;
        let mut consider = |h: Hit| {
            if h.t > eps && best.is_none_or(|b| h.t < b.t) {
                best = Some(h);
            }
        };
        if dir.z < 0.0 {
            let t = -origin.z / dir.z;
            let p = origin + dir * t;
            consider(Hit {
                t,
                point: p,
                normal: Vector3::z(),
                albedo: self.ground_albedo(&p),
                class: GROUND,
                vehicle: None,
            });
        }
        for b in &self.buildings {
            if let Some((t0, _)) = ray_aabb(origin, dir, &b.lo, &b.hi) {
                if t0 > eps {
                    let p = origin + dir * t0;
                    let n = box_normal(&p, &b.lo, &b.hi);
                    consider(Hit {
                        t: t0,
                        point: p,
                        normal: n,
                        albedo: self.building_albedo(b, &p, &n),
                        class: b.class,
                        vehicle: None,
                    });
                }
            }
        }
        for s in &self.spheres {
            let oc = origin - s.center;
            let bq = oc.dot(dir);
            let c = oc.norm_squared() - s.radius * s.radius;
            let disc = bq * bq - c;
            if disc >= 0.0 {
                let t = -bq - disc.sqrt();
                if t > eps {
                    let p = origin + dir * t;
                    let n = (p - s.center) / s.radius;
                    consider(Hit {
                        t,
                        point: p,
                        normal: n,
                        albedo: self.sphere_albedo(s, &n),
                        class: s.class,
                        vehicle: None,
                    });
                }
            }
        }
        for (k, v) in self.vehicles.iter().enumerate() {
            let Ok(bp) = v.track.interpolate_pose(time) else {
                continue;
            };
            let o = bp.pose.apply_inverse(origin);
            let d = bp.pose.rot.tr_mul(dir);
            let half = v.track.dim * 0.5;
            if let Some((t0, _)) = ray_aabb(&o, &d, &-half, &half) {
                if t0 > eps {
                    let pl = o + d * t0;
                    let nl = box_normal(&pl, &-half, &half);
                    let face = if nl.x > 0.5 {
                        0
                    } else if nl.x < -0.5 {
                        1
                    } else if nl.y > 0.5 {
                        2
                    } else if nl.y < -0.5 {
                        3
                    } else if nl.z > 0.5 {
                        4
                    } else {
                        5
                    };
                    consider(Hit {
                        t: t0,
                        point: origin + dir * t0,
                        normal: bp.pose.rot * nl,
                        albedo: v.face_albedo[face],
                        class: v.track.class,
                        vehicle: Some(k),
                    });
                }
            }
        }
        best
    }

    pub fn sky_color(&self, dir: &Vector3<f64>) -> [f64; 3] {
        let h = dir.z.clamp(0.0, 1.0).sqrt();
        let horizon = [0.78, 0.86, 0.95];
        let zenith = [0.32, 0.52, 0.88];
        [
            horizon[0] + (zenith[0] - horizon[0]) * h,
            horizon[1] + (zenith[1] - horizon[1]) * h,
            horizon[2] + (zenith[2] - horizon[2]) * h,
        ]
    }

    pub fn shade(&self, hit: &Hit) -> [f64; 3] {
        let lambert = hit.normal.dot(&self.sun).max(0.0);
        let light = 0.4 + 0.6 * lambert;
        [
            (hit.albedo[0] * light).clamp(0.0, 1.0),
            (hit.albedo[1] * light).clamp(0.0, 1.0),
            (hit.albedo[2] * light).clamp(0.0, 1.0),
        ]
    }

    pub fn radiance(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, time: f64) -> [f64; 3] {
        match self.intersect(origin, dir, time) {
            Some(h) => self.shade(&h),
            None => self.sky_color(dir),
        }
    }

    /// World point of a hit at `time` carried to `time2` (moves with the
    /// vehicle it belongs to).
    pub fn advect(&self, hit: &Hit, time: f64, time2: f64) -> Option<Vector3<f64>> {
        match hit.vehicle {
            None => Some(hit.point),
            Some(k) => {
                let tr = &self.vehicles[k].track;
                let a = tr.interpolate_pose(time).ok()?.pose;
                let b = tr.interpolate_pose(time2).ok()?.pose;
                Some(b.apply(&a.apply_inverse(&hit.point)))
            }
        }
    }

    /// Ground-truth view: supersampled RGB, exact `z`-depth (0 on sky),
    /// labels and forward flow to `next` (same camera, next frame).
    pub fn render_view(
        &self,
        cam: &CameraModel,
        time: f64,
        next: Option<(&CameraModel, f64)>,
    ) -> ViewTruth {
        let (w, h) = (cam.width, cam.height);
        let ss = self.spec.supersample;
        let pose = cam.refined_pose();
        let mut rgb = Image::new(w, h, 3);
        let mut depth = Image::new(w, h, 1);
        let mut labels = LabelMap::filled(w, h, SKY);
        let mut flow = next.map(|_| Image::new(w, h, 2));
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for sy in 0..ss {
                    for sx in 0..ss {
                        let px = x as f64 + (sx as f64 + 0.5) / ss as f64 - 0.5;
                        let py = y as f64 + (sy as f64 + 0.5) / ss as f64 - 0.5;
                        let d = (pose.rot * cam.pixel_dir_camera(px, py)).normalize();
                        let c = self.radiance(&pose.trans, &d, time);
                        for k in 0..3 {
                            acc[k] += c[k];
                        }
                    }
                }
                let n = (ss * ss) as f64;
                for k in 0..3 {
                    rgb.set(x, y, k, acc[k] / n);
                }
                let dc = cam.pixel_dir_camera(x as f64, y as f64);
                let d = (pose.rot * dc).normalize();
                let hit = self.intersect(&pose.trans, &d, time);
                if let Some(hh) = &hit {
                    depth.set(x, y, 0, hh.t / dc.norm());
                    labels.set(x, y, hh.class);
                }
                if let (Some(fl), Some((cam2, t2))) = (flow.as_mut(), next) {
                    let target = match &hit {
                        Some(hh) => self
                            .advect(hh, time, t2)
                            .and_then(|p| cam2.project(&p).ok()),
                        None => {
                            // Points at infinity move with camera rotation only.
                            let p2 = cam2.refined_pose();
                            let pc = p2.rot.tr_mul(&d);
                            (pc.z > 0.0).then(|| crate::geometry::PixelPoint {
                                x: cam2.fx * pc.x / pc.z + cam2.cx,
                                y: cam2.fy * pc.y / pc.z + cam2.cy,
                                d: f64::INFINITY,
                            })
                        }
                    };
                    match target {
                        Some(t) => {
                            fl.set(x, y, 0, t.x - x as f64);
                            fl.set(x, y, 1, t.y - y as f64);
                        }
                        None => {
                            fl.set(x, y, 0, f64::NAN);
                            fl.set(x, y, 1, f64::NAN);
                        }
                    }
                }
            }
        }
        ViewTruth {
            rgb,
            depth,
            labels,
            flow,
        }
    }

    /// One LiDAR sweep at `frame`; points in the sensor frame.
    pub fn lidar_sweep(&self, frame: usize) -> LidarFrame {
        let l = &self.spec.lidar;
        let pose = self.lidar_pose(frame);
        let time = self.spec.time(frame);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (0xA5A5_0000 + frame as u64));
        let steps = (360.0 / l.azimuth_step_deg).round() as usize;
        let mut points = Vec::new();
        let mut outlier = Vec::new();
        for b in 0..l.beams {
            let e = (l.elevation_min_deg
                + (l.elevation_max_deg - l.elevation_min_deg) * b as f64 / (l.beams - 1) as f64)
                .to_radians();
            for a in 0..steps {
                let az = (a as f64 * l.azimuth_step_deg).to_radians();
                let d_local = Vector3::new(e.cos() * az.cos(), e.cos() * az.sin(), e.sin());
                let d = pose.rot * d_local;
                let Some(hit) = self.intersect(&pose.trans, &d, time) else {
                    continue;
                };
                if hit.t > l.max_range {
                    continue;
                }
                let mut range = hit.t;
                let mut bad = false;
                if self.spec.outlier_rate > 0.0 && rng.gen::<f64>() < self.spec.outlier_rate {
                    let f = loop {
                        let f: f64 = rng.gen_range(0.3..3.0);
                        if (f - 1.0).abs() >= 0.4 {
                            break f;
                        }
                    };
                    range *= f;
                    bad = true;
                }
                points.push(d_local * range);
                outlier.push(bad);
            }
        }
        LidarFrame {
            pose,
            points,
            outlier,
        }
    }
}

fn box_normal(p: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Vector3<f64> {
    let mut best = (f64::INFINITY, Vector3::zeros());
    for k in 0..3 {
        for (face, sign) in [(lo[k], -1.0), (hi[k], 1.0)] {
            let d = (p[k] - face).abs();
            if d < best.0 {
                let mut n = Vector3::zeros();
                n[k] = sign;
                best = (d, n);
            }
        }
    }
    best.1
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewTruth {
    pub rgb: Image,
    pub depth: Image,
    pub labels: LabelMap,
    pub flow: Option<Image>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarFrame {
    /// Sensor→world.
    pub pose: Rigid,
    pub points: Vec<Vector3<f64>>,
    pub outlier: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameView {
    pub camera: CameraModel,
    pub rgb: Image,
    pub depth: Image,
    pub labels: LabelMap,
    pub flow: Option<Image>,
}

/// All ground truth for a scene: `views[frame][camera]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: SynthSpec,
    pub seed: u64,
    pub times: Vec<f64>,
    pub views: Vec<Vec<FrameView>>,
    pub lidar: Vec<LidarFrame>,
    pub boxes: Vec<TrackedBox>,
}

impl Dataset {
    pub fn frames(&self) -> usize {
        self.views.len()
    }

    pub fn cameras(&self) -> usize {
        self.views.first().map_or(0, |v| v.len())
    }
}

/// Build the scene and render its ground truth, parallel over frames.
pub fn generate_scene(spec: &SynthSpec, seed: u64) -> Result<(SyntheticScene, Dataset)> {
    let scene = SyntheticScene::new(spec.clone(), seed)?;
    let n_cam = spec.camera_yaws_deg.len();
    let frames: Vec<(Vec<FrameView>, LidarFrame)> = (0..spec.frames)
        .into_par_iter()
        .map(|f| {
            let t = spec.time(f);
            let views = (0..n_cam)
                .map(|c| {
                    let cam = scene.camera(c, f);
                    let next =
                        (f + 1 < spec.frames).then(|| (scene.camera(c, f + 1), spec.time(f + 1)));
                    let truth = scene.render_view(&cam, t, next.as_ref().map(|(c2, t2)| (c2, *t2)));
                    FrameView {
                        camera: cam,
                        rgb: truth.rgb,
                        depth: truth.depth,
                        labels: truth.labels,
                        flow: truth.flow,
                    }
                })
                .collect();
            (views, scene.lidar_sweep(f))
        })
        .collect();
    let (views, lidar) = frames.into_iter().unzip();
    let dataset = Dataset {
        spec: spec.clone(),
        seed,
        times: (0..spec.frames).map(|f| spec.time(f)).collect(),
        views,
        lidar,
        boxes: scene.vehicles.iter().map(|v| v.track.clone()).collect(),
    };
    Ok((scene, dataset))
}
