//! Per-view supervision targets built from a dataset.

use rayon::prelude::*;

use crate::confidence::{accumulate_lidar, complete_depth, N_MAPS};
use crate::error::Result;
use crate::geometry::{CameraModel, Rigid};
use crate::harness::{dataset_view_confidence, sweep_to_sparse, Dataset};
use crate::image::{Image, LabelMap, Mask};

use super::config::TrainConfig;

/// One LiDAR return seen from a camera, at sub-pixel image coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LidarTarget {
    pub x: f64,
    pub y: f64,
    /// Inverse ray distance.
    pub disparity: f64,
    pub outlier: bool,
}

#[derive(Clone, Debug)]
pub struct ViewTargets {
    pub frame: usize,
    pub cam: usize,
    pub time: f64,
    pub camera: CameraModel,
    pub rgb: Image,
    pub gray: Image,
    pub labels: LabelMap,
    /// Dense disparity target (inverse ray distance); sky pixels hold
    /// `1/sky_distance`.
    pub disparity: Image,
    /// `C_rgb, C_ssim, C_feat, C_depth, C_flow`; `None` means `Ĉ = 1`.
    pub maps: Option<[Image; N_MAPS]>,
    pub sky: Mask,
    pub lidar: Vec<LidarTarget>,
}

impl ViewTargets {
    /// Map values at a pixel, or `None` where `Ĉ` is fixed to 1.
    pub fn confidence_at(&self, x: usize, y: usize) -> Option<[f64; N_MAPS]> {
        if *self.sky.get(x, y) {
            return None;
        }
        self.maps
            .as_ref()
            .map(|m| std::array::from_fn(|i| m[i].at(x, y, 0)))
    }
}

fn lidar_targets(data: &Dataset, frame: usize, cam: &CameraModel) -> Vec<LidarTarget> {
    let sweep = &data.lidar[frame];
    let world = accumulate_lidar(&[(&sweep.points, &sweep.pose)], &Rigid::identity());
    let pose = cam.refined_pose();
    let (w, h) = (cam.width as f64, cam.height as f64);
    let mut out = Vec::new();
    for (p, &outlier) in world.iter().zip(&sweep.outlier) {
        let Ok(q) = cam.project_with(&pose, p) else {
            continue;
        };
        if q.x < -0.5 || q.y < -0.5 || q.x >= w - 0.5 || q.y >= h - 0.5 {
            continue;
        }
        out.push(LidarTarget {
            x: q.x,
            y: q.y,
            disparity: cam.z_per_distance(q.x, q.y) / q.d,
            outlier,
        });
    }
    out
}

/// Build targets for every view, in `(frame, camera)` order. Views without a
/// next frame get no confidence maps.
pub fn build_targets(data: &Dataset, cfg: &TrainConfig) -> Result<Vec<ViewTargets>> {
    let keys: Vec<(usize, usize)> = (0..data.frames())
        .flat_map(|f| (0..data.cameras()).map(move |c| (f, c)))
        .collect();
    let sky_class = cfg.scene.sky_class as u16;
    let inv_sky = 1.0 / cfg.scene.sky_distance;
    keys.par_iter()
        .map(|&(frame, cam)| {
            let view = &data.views[frame][cam];
            let camera = view.camera.clone();
            let (dense, maps) = if cfg.use_confidence && frame + 1 < data.frames() {
                let (vc, _) = dataset_view_confidence(data, cam, frame, &cfg.completion, cfg.tau)?;
                (vc.dense_s, Some(vc.pack.maps))
            } else {
                let sparse = sweep_to_sparse(&data.lidar[frame], &camera);
                (complete_depth(&sparse, &view.rgb, &cfg.completion)?, None)
            };
            let (w, h) = (camera.width, camera.height);
            let sky = Mask::from_fn(w, h, |x, y| *view.labels.get(x, y) == sky_class);
            let disparity = Image::from_fn(w, h, 1, |x, y, _| {
                if *sky.get(x, y) {
                    inv_sky
                } else {
                    camera.z_per_distance(x as f64, y as f64) / dense.at(x, y, 0)
                }
            });
            Ok(ViewTargets {
                frame,
                cam,
                time: data.times[frame],
                lidar: lidar_targets(data, frame, &camera),
                camera,
                gray: view.rgb.to_gray(),
                rgb: view.rgb.clone(),
                labels: view.labels.clone(),
                disparity,
                maps,
                sky,
            })
        })
        .collect()
}
