//! Scoring confidence maps against recorded LiDAR outlier flags.

use serde::{Deserialize, Serialize};

use super::metrics::auc;
use super::synth::{Dataset, SyntheticScene};
use crate::confidence::{
    accumulate_lidar, combine_confidence, project_points, view_confidence, CompletionConfig,
    SparseDepth, ViewConfidence, ViewPair, N_MAPS,
};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Rigid};
use crate::harness::LidarFrame;

/// Project one sweep (sensor frame) into `cam`, keeping outlier flags.
pub fn sweep_to_sparse(sweep: &LidarFrame, cam: &CameraModel) -> SparseDepth {
    let world = accumulate_lidar(&[(&sweep.points, &sweep.pose)], &Rigid::identity());
    project_points(&world, Some(&sweep.outlier), cam)
}

/// Confidence for camera `cam` between `source` and `target` frames of a
/// procedural scene, with exact flow rendered between the two.
pub fn scene_view_confidence(
    scene: &SyntheticScene,
    cam: usize,
    source: usize,
    target: usize,
    completion: &CompletionConfig,
    tau: f64,
) -> Result<(ViewConfidence, SparseDepth)> {
    let spec = &scene.spec;
    let cam_s = scene.camera(cam, source);
    let cam_t = scene.camera(cam, target);
    let truth_s = scene.render_view(&cam_s, spec.time(source), Some((&cam_t, spec.time(target))));
    let truth_t = scene.render_view(&cam_t, spec.time(target), None);
    let sp_s = sweep_to_sparse(&scene.lidar_sweep(source), &cam_s);
    let sp_t = sweep_to_sparse(&scene.lidar_sweep(target), &cam_t);
    let flow = truth_s.flow.as_ref().expect("flow requested");
    let vc = view_confidence(
        &ViewPair {
            cam_s: &cam_s,
            cam_t: &cam_t,
            rgb_s: &truth_s.rgb,
            rgb_t: &truth_t.rgb,
            sparse_s: &sp_s,
            sparse_t: &sp_t,
            flow,
        },
        completion,
        tau,
    )?;
    Ok((vc, sp_s))
}

/// Confidence for a stored dataset view against the next frame, using the
/// stored flow.
pub fn dataset_view_confidence(
    data: &Dataset,
    cam: usize,
    frame: usize,
    completion: &CompletionConfig,
    tau: f64,
) -> Result<(ViewConfidence, SparseDepth)> {
    if frame + 1 >= data.frames() || cam >= data.cameras() {
        return Err(Error::Config(format!(
            "no view pair for camera {cam}, frame {frame}"
        )));
    }
    let (vs, vt) = (&data.views[frame][cam], &data.views[frame + 1][cam]);
    let flow = vs
        .flow
        .as_ref()
        .ok_or_else(|| Error::Config(format!("view {cam}/{frame} has no flow")))?;
    let sp_s = sweep_to_sparse(&data.lidar[frame], &vs.camera);
    let sp_t = sweep_to_sparse(&data.lidar[frame + 1], &vt.camera);
    let vc = view_confidence(
        &ViewPair {
            cam_s: &vs.camera,
            cam_t: &vt.camera,
            rgb_s: &vs.rgb,
            rgb_t: &vt.rgb,
            sparse_s: &sp_s,
            sparse_t: &sp_t,
            flow,
        },
        completion,
        tau,
    )?;
    Ok((vc, sp_s))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub clean: usize,
    pub outliers: usize,
    pub mean_clean: f64,
    pub mean_outlier: f64,
    /// Probability that a clean pixel scores above an outlier pixel.
    pub auc: f64,
    pub per_map_clean: [f64; N_MAPS],
    pub per_map_outlier: [f64; N_MAPS],
}

/// Accumulates combined confidence at LiDAR pixels, split by outlier flag.
#[derive(Clone, Debug, Default)]
pub struct SeparationTally {
    clean: Vec<f64>,
    bad: Vec<f64>,
    map_clean: [f64; N_MAPS],
    map_bad: [f64; N_MAPS],
}

impl SeparationTally {
    pub fn add(&mut self, vc: &ViewConfidence, sparse: &SparseDepth) {
        let chat = combine_confidence(&vc.pack);
        for y in 0..chat.height() {
            for x in 0..chat.width() {
                if !*sparse.valid.get(x, y) {
                    continue;
                }
                let v = vc.pack.at(x, y);
                let (list, maps) = if *sparse.outlier.get(x, y) {
                    (&mut self.bad, &mut self.map_bad)
                } else {
                    (&mut self.clean, &mut self.map_clean)
                };
                list.push(chat.at(x, y, 0));
                for (m, vi) in maps.iter_mut().zip(v) {
                    *m += vi;
                }
            }
        }
    }

    pub fn report(&self) -> SeparationReport {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let (nc, nb) = (self.clean.len().max(1) as f64, self.bad.len().max(1) as f64);
        SeparationReport {
            clean: self.clean.len(),
            outliers: self.bad.len(),
            mean_clean: mean(&self.clean),
            mean_outlier: mean(&self.bad),
            auc: auc(&self.clean, &self.bad),
            per_map_clean: self.map_clean.map(|v| v / nc),
            per_map_outlier: self.map_bad.map(|v| v / nb),
        }
    }
}
