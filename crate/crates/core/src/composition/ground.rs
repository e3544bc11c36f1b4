use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraModel, PixelPoint};
use crate::harness::{GROUND, SKY};
use crate::image::{Grid2, Image, LabelMap};

/// Label of cells that received no points.
pub const UNKNOWN: u16 = u16::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundConfig {
    pub cell: f64,
    pub keep_ratio: f64,
    /// Labels whose points define the ground height.
    pub ground_labels: Vec<u16>,
    /// Labels never lifted into the point cloud.
    pub ignore_labels: Vec<u16>,
    /// Points farther than this from their camera are dropped.
    pub max_range: f64,
    pub seed: u64,
}

impl Default for GroundConfig {
    fn default() -> Self {
        Self {
            cell: 0.25,
            keep_ratio: 0.1,
            ground_labels: vec![GROUND],
            ignore_labels: vec![SKY],
            max_range: 80.0,
            seed: 0,
        }
    }
}

/// One semantic view: labels, `z`-depth and the camera that produced them.
#[derive(Clone, Copy, Debug)]
pub struct SemanticView<'a> {
    pub labels: &'a LabelMap,
    pub depth: &'a Image,
    pub camera: &'a CameraModel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SemanticPoint {
    pub position: Vector3<f64>,
    pub label: u16,
}

/// Bird's-eye semantic and height grid. Cell `(i, j)` covers
/// `[origin + (i, j)·cell, origin + (i+1, j+1)·cell)` in world `x, y`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundPlan {
    pub origin: [f64; 2],
    pub cell: f64,
    pub labels: Grid2<u16>,
    pub heights: Grid2<f64>,
}

/// Lift every labeled pixel into a world point, keeping each with
/// probability `keep_ratio` (fixed-seed draw per pixel, views in order).
pub fn semantic_point_cloud(views: &[SemanticView<'_>], cfg: &GroundConfig) -> Vec<SemanticPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for v in views {
        let pose = v.camera.refined_pose();
        for y in 0..v.labels.height() {
            for x in 0..v.labels.width() {
                let keep = rng.gen::<f64>() < cfg.keep_ratio;
                let label = *v.labels.get(x, y);
                let d = v.depth.at(x, y, 0);
                if !keep || cfg.ignore_labels.contains(&label) || !(d > 0.0) || !d.is_finite() {
                    continue;
                }
                let p = v
                    .camera
                    .unproject_with(&pose, &PixelPoint::new(x as f64, y as f64, d))
                    .expect("positive depth");
                if (p - pose.trans).norm() > cfg.max_range {
                    continue;
                }
                out.push(SemanticPoint { position: p, label });
            }
        }
    }
    out
}

/// Vertical binning: majority label per cell (ties to the smaller id),
/// median height of ground-labeled points, or the lowest point when a cell
/// has none.
pub fn bin_points(points: &[SemanticPoint], cfg: &GroundConfig) -> GroundPlan {
    if points.is_empty() {
        return GroundPlan {
            origin: [0.0, 0.0],
            cell: cfg.cell,
            labels: Grid2::filled(0, 0, UNKNOWN),
            heights: Grid2::filled(0, 0, f64::NAN),
        };
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p.position[k]);
            hi[k] = hi[k].max(p.position[k]);
        }
    }
    let origin = lo.map(|v| (v / cfg.cell).floor() * cfg.cell);
    let w = ((hi[0] - origin[0]) / cfg.cell).floor() as usize + 1;
    let h = ((hi[1] - origin[1]) / cfg.cell).floor() as usize + 1;
    let mut votes: Vec<Vec<(u16, u32)>> = vec![Vec::new(); w * h];
    let mut ground_z: Vec<Vec<f64>> = vec![Vec::new(); w * h];
    let mut min_z = vec![f64::INFINITY; w * h];
    for p in points {
        let i = (((p.position.x - origin[0]) / cfg.cell).floor() as usize).min(w - 1);
        let j = (((p.position.y - origin[1]) / cfg.cell).floor() as usize).min(h - 1);
        let c = j * w + i;
        match votes[c].iter_mut().find(|(l, _)| *l == p.label) {
            Some(v) => v.1 += 1,
            None => votes[c].push((p.label, 1)),
        }
        if cfg.ground_labels.contains(&p.label) {
            ground_z[c].push(p.position.z);
        }
        min_z[c] = min_z[c].min(p.position.z);
    }
    let labels = votes
        .iter()
        .map(|v| {
            v.iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map_or(UNKNOWN, |&(l, _)| l)
        })
        .collect();
    let heights = ground_z
        .iter_mut()
        .zip(&min_z)
        .map(|(zs, &mz)| {
            if zs.is_empty() {
                return if mz.is_finite() { mz } else { f64::NAN };
            }
            zs.sort_by(f64::total_cmp);
            let n = zs.len();
            if n % 2 == 1 {
                zs[n / 2]
            } else {
                0.5 * (zs[n / 2 - 1] + zs[n / 2])
            }
        })
        .collect();
    GroundPlan {
        origin,
        cell: cfg.cell,
        labels: Grid2::from_vec(w, h, labels).expect("sized"),
        heights: Grid2::from_vec(w, h, heights).expect("sized"),
    }
}

pub fn build_ground_plan(views: &[SemanticView<'_>], cfg: &GroundConfig) -> GroundPlan {
    bin_points(&semantic_point_cloud(views, cfg), cfg)
}

impl GroundPlan {
    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let i = ((x - self.origin[0]) / self.cell).floor();
        let j = ((y - self.origin[1]) / self.cell).floor();
        if i < 0.0 || j < 0.0 || i >= self.width() as f64 || j >= self.height() as f64 {
            return None;
        }
        Some((i as usize, j as usize))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.cell,
            self.origin[1] + (j as f64 + 0.5) * self.cell,
        ]
    }

    pub fn label_at(&self, x: f64, y: f64) -> u16 {
        self.cell_of(x, y)
            .map_or(UNKNOWN, |(i, j)| *self.labels.get(i, j))
    }

    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        self.cell_of(x, y)
            .filter(|&(i, j)| *self.labels.get(i, j) != UNKNOWN)
            .map(|(i, j)| *self.heights.get(i, j))
    }

    /// Cells whose label is in `valid`, row-major.
    pub fn cells_with(&self, valid: &[u16]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.height() {
            for i in 0..self.width() {
                if valid.contains(self.labels.get(i, j)) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}
