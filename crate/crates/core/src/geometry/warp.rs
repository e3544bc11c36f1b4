use super::camera::{CameraModel, PixelPoint};
use crate::image::{Grid2, Image};

/// Per source pixel: its location and depth in the target view, or `None`
/// when the source depth is invalid, the point falls behind the target camera
/// or lands outside the sampleable target frame.
pub type WarpField = Grid2<Option<PixelPoint>>;

/// `X_t = ψ(ψ⁻¹(X_s, P_s), P_t)` for every pixel of a source depth map.
pub fn warp_pixels(src_depth: &Image, cam_s: &CameraModel, cam_t: &CameraModel) -> WarpField {
    let pose_s = cam_s.refined_pose();
    let pose_t = cam_t.refined_pose();
    let (w, h) = (cam_t.width as f64, cam_t.height as f64);
    Grid2::from_fn(src_depth.width(), src_depth.height(), |x, y| {
        let d = src_depth.at(x, y, 0);
        let p = cam_s
            .unproject_with(&pose_s, &PixelPoint::new(x as f64, y as f64, d))
            .ok()?;
        let mut q = cam_t.project_with(&pose_t, &p).ok()?;
        const EPS: f64 = 1e-9;
        if q.x < -EPS || q.y < -EPS || q.x > w - 1.0 + EPS || q.y > h - 1.0 + EPS {
            return None;
        }
        q.x = q.x.clamp(0.0, w - 1.0);
        q.y = q.y.clamp(0.0, h - 1.0);
        Some(q)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::transform::{so3_exp, Rigid};
    use nalgebra::Vector3;

    fn cam(pose: Rigid) -> CameraModel {
        CameraModel::with_fov(32, 24, 1.2, pose)
    }

    fn depth() -> Image {
        Image::from_fn(32, 24, 1, |x, y, _| 4.0 + 0.1 * x as f64 + 0.05 * y as f64)
    }

    #[test]
    fn identical_cameras_are_identity() {
        let c = cam(Rigid::new(
            so3_exp(&Vector3::new(0.1, 0.2, 0.3)),
            Vector3::new(1.0, 2.0, 3.0),
        ));
        let d = depth();
        let w = warp_pixels(&d, &c, &c);
        for y in 0..24 {
            for x in 0..32 {
                let q = w.get(x, y).unwrap();
                assert!((q.x - x as f64).abs() < 1e-9 && (q.y - y as f64).abs() < 1e-9);
                assert!((q.d - d.at(x, y, 0)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lateral_translation_gives_stereo_disparity() {
        let s = cam(Rigid::identity());
        let b = 0.3;
        let t = cam(Rigid::new(
            nalgebra::Matrix3::identity(),
            Vector3::new(b, 0.0, 0.0),
        ));
        let d = depth();
        let w = warp_pixels(&d, &s, &t);
        for y in 0..24 {
            for x in 0..32 {
                if let Some(q) = w.get(x, y) {
                    let expect = x as f64 - s.fx * b / d.at(x, y, 0);
                    assert!((q.x - expect).abs() < 1e-9);
                    assert!((q.y - y as f64).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn general_pose_pair_matches_composition() {
        let s = cam(Rigid::new(
            so3_exp(&Vector3::new(0.0, 0.1, 0.0)),
            Vector3::zeros(),
        ));
        let mut t = cam(Rigid::new(
            so3_exp(&Vector3::new(0.02, -0.1, 0.01)),
            Vector3::new(0.4, -0.1, 0.3),
        ));
        t.refine_trans = Vector3::new(0.01, 0.0, 0.0);
        let d = depth();
        let w = warp_pixels(&d, &s, &t);
        let mut valid = 0;
        for y in 0..24 {
            for x in 0..32 {
                let p = s
                    .unproject(&PixelPoint::new(x as f64, y as f64, d.at(x, y, 0)))
                    .unwrap();
                let q = t.project(&p).unwrap();
                match w.get(x, y) {
                    Some(wq) => {
                        valid += 1;
                        assert!(
                            (wq.x - q.x).abs() < 1e-9
                                && (wq.y - q.y).abs() < 1e-9
                                && (wq.d - q.d).abs() < 1e-12
                        );
                    }
                    None => assert!(
                        !(q.x >= 1e-6 && q.y >= 1e-6 && q.x <= 31.0 - 1e-6 && q.y <= 23.0 - 1e-6)
                    ),
                }
            }
        }
        assert!(valid > 300);
    }

    #[test]
    fn invalid_depth_is_flagged() {
        let c = cam(Rigid::identity());
        let mut d = depth();
        d.set(3, 4, 0, 0.0);
        d.set(5, 4, 0, f64::NAN);
        let w = warp_pixels(&d, &c, &c);
        assert!(w.get(3, 4).is_none() && w.get(5, 4).is_none() && w.get(6, 4).is_some());
    }
}
