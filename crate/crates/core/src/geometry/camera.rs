use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::ray::Ray;
use super::transform::{apply_pose_offset, so3_left_jacobian, Rigid};
use crate::error::{Error, Result};

/// Pinhole camera with a camera→world pose and learnable pose refinement.
///
/// Camera frame: `x` right, `y` down, `z` forward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub pose: Rigid,
    #[serde(default = "Vector3::zeros")]
    pub refine_rot: Vector3<f64>,
    #[serde(default = "Vector3::zeros")]
    pub refine_trans: Vector3<f64>,
}

/// Continuous pixel coordinates plus depth along the camera `z` axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
    pub d: f64,
}

impl PixelPoint {
    pub fn new(x: f64, y: f64, d: f64) -> Self {
        Self { x, y, d }
    }
}

impl CameraModel {
    /// Camera with principal point at the image center and the given
    /// horizontal field of view.
    pub fn with_fov(width: usize, height: usize, fov_x: f64, pose: Rigid) -> Self {
        let fx = 0.5 * width as f64 / (0.5 * fov_x).tan();
        Self {
            fx,
            fy: fx,
            cx: 0.5 * (width as f64 - 1.0),
            cy: 0.5 * (height as f64 - 1.0),
            width,
            height,
            pose,
            refine_rot: Vector3::zeros(),
            refine_trans: Vector3::zeros(),
        }
    }

    /// The pose with refinement offsets applied.
    pub fn refined_pose(&self) -> Rigid {
        apply_pose_offset(&self.pose, &self.refine_rot, &self.refine_trans)
    }

    pub fn center(&self) -> Vector3<f64> {
        self.pose.trans + self.refine_trans
    }

    /// Pixel footprint growth per unit distance along a ray.
    pub fn cone_radius_rate(&self) -> f64 {
        1.0 / (self.fx * 12f64.sqrt())
    }

    pub fn project(&self, p: &Vector3<f64>) -> Result<PixelPoint> {
        self.project_with(&self.refined_pose(), p)
    }

    /// Projection with a precomputed refined pose (hot loops).
    #[inline]
    pub fn project_with(&self, pose: &Rigid, p: &Vector3<f64>) -> Result<PixelPoint> {
        let pc = pose.apply_inverse(p);
        if pc.z <= 0.0 {
            return Err(Error::BehindCamera(pc.z));
        }
        Ok(PixelPoint {
            x: self.fx * pc.x / pc.z + self.cx,
            y: self.fy * pc.y / pc.z + self.cy,
            d: pc.z,
        })
    }

    pub fn unproject(&self, px: &PixelPoint) -> Result<Vector3<f64>> {
        self.unproject_with(&self.refined_pose(), px)
    }

    #[inline]
    pub fn unproject_with(&self, pose: &Rigid, px: &PixelPoint) -> Result<Vector3<f64>> {
        if !(px.d > 0.0) {
            return Err(Error::InvalidDepth(px.d));
        }
        let pc = Vector3::new(
            (px.x - self.cx) / self.fx * px.d,
            (px.y - self.cy) / self.fy * px.d,
            px.d,
        );
        Ok(pose.apply(&pc))
    }

    /// Unnormalized camera-frame direction through a pixel (`z = 1`).
    #[inline]
    pub fn pixel_dir_camera(&self, x: f64, y: f64) -> Vector3<f64> {
        Vector3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }

    /// World ray through continuous pixel coordinates using the refined pose.
    pub fn ray(&self, x: f64, y: f64, t_near: f64, t_far: f64) -> Ray {
        let pose = self.refined_pose();
        let dc = self.pixel_dir_camera(x, y);
        let dir = (pose.rot * dc).normalize();
        Ray {
            origin: pose.trans,
            dir,
            cone_radius_rate: self.cone_radius_rate(),
            t_near,
            t_far,
        }
    }

    /// `z`-depth per unit of ray distance for the ray through `(x, y)`.
    pub fn z_per_distance(&self, x: f64, y: f64) -> f64 {
        1.0 / self.pixel_dir_camera(x, y).norm()
    }

    /// Chain gradients w.r.t. a generated ray's origin and unit direction into
    /// gradients w.r.t. `(refine_rot, refine_trans)`.
    pub fn ray_offset_gradient(
        &self,
        dir: &Vector3<f64>,
        d_origin: &Vector3<f64>,
        d_dir: &Vector3<f64>,
    ) -> (Vector3<f64>, Vector3<f64>) {
        let jl: Matrix3<f64> = so3_left_jacobian(&self.refine_rot);
        (jl.tr_mul(&dir.cross(d_dir)), *d_origin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::transform::so3_exp;
    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam(pose: Rigid) -> CameraModel {
        CameraModel {
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            width: 100,
            height: 100,
            pose,
            refine_rot: Vector3::zeros(),
            refine_trans: Vector3::zeros(),
        }
    }

    /// Homogeneous 4×4 projection used as an independent oracle.
    fn matrix_project(c: &CameraModel, p: &Vector3<f64>) -> (f64, f64, f64) {
        let pose = c.refined_pose();
        let mut c2w = Matrix4::identity();
        c2w.fixed_view_mut::<3, 3>(0, 0).copy_from(&pose.rot);
        c2w.fixed_view_mut::<3, 1>(0, 3).copy_from(&pose.trans);
        let w2c = c2w.try_inverse().unwrap();
        let mut k = Matrix4::identity();
        k[(0, 0)] = c.fx;
        k[(1, 1)] = c.fy;
        k[(0, 2)] = c.cx;
        k[(1, 2)] = c.cy;
        let h = k * w2c * p.push(1.0);
        (h.x / h.z, h.y / h.z, h.z)
    }

    #[test]
    fn on_axis_point_projects_to_principal_point() {
        let c = cam(Rigid::identity());
        let px = c.project(&Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((px.x, px.y, px.d), (50.0, 50.0, 1.0));
        let px = c.project(&Vector3::new(0.0, 0.0, 5.0)).unwrap();
        assert_eq!((px.x, px.y, px.d), (c.cx, c.cy, 5.0));
    }

    #[test]
    fn rotated_pose_matches_matrix_oracle() {
        let mut c = cam(Rigid::new(
            so3_exp(&Vector3::new(0.0, std::f64::consts::FRAC_PI_2, 0.0)),
            Vector3::zeros(),
        ));
        c.cx = 0.0;
        c.cy = 0.0;
        let p = Vector3::new(1.0, 2.0, 4.0);
        let px = c.project(&p).unwrap();
        let (ox, oy, od) = matrix_project(&c, &p);
        assert!((px.x - ox).abs() < 1e-9 && (px.y - oy).abs() < 1e-9 && (px.d - od).abs() < 1e-9);
        // Optical axis is world +x here, so a point at -x is behind.
        assert!(matches!(
            c.project(&Vector3::new(-3.0, 0.0, 0.0)),
            Err(Error::BehindCamera(_))
        ));
    }

    #[test]
    fn unproject_principal_point() {
        let c = cam(Rigid::identity());
        let p = c.unproject(&PixelPoint::new(50.0, 50.0, 1.0)).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 1.0));
        assert!(matches!(
            c.unproject(&PixelPoint::new(1.0, 1.0, 0.0)),
            Err(Error::InvalidDepth(_))
        ));
    }

    #[test]
    fn unproject_matches_matrix_oracle_with_refinement() {
        let mut c = cam(Rigid::new(
            so3_exp(&Vector3::new(0.2, -0.5, 0.1)),
            Vector3::new(1.0, -2.0, 0.5),
        ));
        c.refine_rot = Vector3::new(0.01, 0.02, -0.03);
        c.refine_trans = Vector3::new(0.1, 0.0, -0.1);
        let px = PixelPoint::new(12.5, 77.25, 3.5);
        let p = c.unproject(&px).unwrap();
        let (ox, oy, od) = matrix_project(&c, &p);
        assert!((ox - px.x).abs() < 1e-9 && (oy - px.y).abs() < 1e-9 && (od - px.d).abs() < 1e-9);
    }

    #[test]
    fn round_trip_random_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let mut c = cam(Rigid::new(
                so3_exp(&Vector3::new(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                )),
                Vector3::new(
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                ),
            ));
            c.refine_rot = Vector3::new(rng.gen_range(-0.1..0.1), 0.0, rng.gen_range(-0.1..0.1));
            let px = PixelPoint::new(
                rng.gen_range(0.0..100.0),
                rng.gen_range(0.0..100.0),
                rng.gen_range(0.1..80.0),
            );
            let back = c.project(&c.unproject(&px).unwrap()).unwrap();
            assert!(
                (back.x - px.x).abs() < 1e-6
                    && (back.y - px.y).abs() < 1e-6
                    && (back.d - px.d).abs() < 1e-6
            );
        }
    }

    #[test]
    fn ray_offset_gradient_matches_finite_differences() {
        let mut c = cam(Rigid::new(
            so3_exp(&Vector3::new(0.3, 0.1, -0.2)),
            Vector3::new(1.0, 2.0, 3.0),
        ));
        c.refine_rot = Vector3::new(0.05, -0.02, 0.04);
        let g_dir = Vector3::new(0.7, -0.1, 0.4);
        let g_org = Vector3::new(-0.3, 0.2, 0.9);
        let f = |c: &CameraModel| {
            let r = c.ray(31.0, 62.0, 0.0, 1.0);
            g_dir.dot(&r.dir) + g_org.dot(&r.origin)
        };
        let r = c.ray(31.0, 62.0, 0.0, 1.0);
        let (drot, dtrans) = c.ray_offset_gradient(&r.dir, &g_org, &g_dir);
        let eps = 1e-6;
        for k in 0..3 {
            let mut cp = c.clone();
            cp.refine_rot[k] += eps;
            let mut cm = c.clone();
            cm.refine_rot[k] -= eps;
            let fd = (f(&cp) - f(&cm)) / (2.0 * eps);
            assert!((fd - drot[k]).abs() < 1e-7);
            let mut cp = c.clone();
            cp.refine_trans[k] += eps;
            let mut cm = c.clone();
            cm.refine_trans[k] -= eps;
            let fd = (f(&cp) - f(&cm)) / (2.0 * eps);
            assert!((fd - dtrans[k]).abs() < 1e-7);
        }
    }
}
