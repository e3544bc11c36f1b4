//! LiDAR accumulation and projection to sparse image depth.

use nalgebra::Vector3;

use crate::geometry::{CameraModel, Rigid};
use crate::image::{Image, Mask};

/// Image-shaped sparse depth (`z` in meters). `outlier` carries the source
/// point's flag when known, for evaluation only.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseDepth {
    pub depth: Image,
    pub valid: Mask,
    pub outlier: Mask,
}

impl SparseDepth {
    pub fn count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Bring every frame's sensor-frame points into the frame of `target`
/// (sensor→world poses) and concatenate, without filtering.
pub fn accumulate_lidar(frames: &[(&[Vector3<f64>], &Rigid)], target: &Rigid) -> Vec<Vector3<f64>> {
    let inv = target.inverse();
    let mut out = Vec::with_capacity(frames.iter().map(|f| f.0.len()).sum());
    for (points, pose) in frames {
        let delta = inv.compose(pose);
        out.extend(points.iter().map(|p| delta.apply(p)));
    }
    out
}

/// Project world-frame points into `cam`, rounding to the nearest pixel and
/// keeping the nearest point per pixel.
pub fn project_points(
    points: &[Vector3<f64>],
    outlier: Option<&[bool]>,
    cam: &CameraModel,
) -> SparseDepth {
    let (w, h) = (cam.width, cam.height);
    let pose = cam.refined_pose();
    let mut depth = Image::new(w, h, 1);
    let mut valid = Mask::filled(w, h, false);
    let mut flags = Mask::filled(w, h, false);
    for (i, p) in points.iter().enumerate() {
        let Ok(q) = cam.project_with(&pose, p) else {
            continue;
        };
        let (x, y) = (q.x.round(), q.y.round());
        if x < 0.0 || y < 0.0 || x > (w - 1) as f64 || y > (h - 1) as f64 {
            continue;
        }
        let (x, y) = (x as usize, y as usize);
        if !*valid.get(x, y) || q.d < depth.at(x, y, 0) {
            depth.set(x, y, 0, q.d);
            valid.set(x, y, true);
            flags.set(x, y, outlier.is_some_and(|o| o[i]));
        }
    }
    SparseDepth {
        depth,
        valid,
        outlier: flags,
    }
}
