//! Ray batches: 2×2 pixel patches plus rays through LiDAR returns.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::data::ViewTargets;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchRay {
    pub view: usize,
    /// Continuous pixel coordinates (integers for patch rays).
    pub x: f64,
    pub y: f64,
    /// Exact LiDAR disparity for rays cast through a return.
    pub lidar: Option<f64>,
}

impl BatchRay {
    pub fn pixel(&self) -> (usize, usize) {
        (
            self.x.round().max(0.0) as usize,
            self.y.round().max(0.0) as usize,
        )
    }
}

/// Patch rays are ordered `(0,0) (1,0) (0,1) (1,1)` within each patch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainBatch {
    pub patches: Vec<[BatchRay; 4]>,
    pub lidar: Vec<BatchRay>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        4 * self.patches.len() + self.lidar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rays in evaluation order: patches first, then LiDAR rays.
    pub fn rays(&self) -> impl Iterator<Item = &BatchRay> {
        self.patches.iter().flatten().chain(&self.lidar)
    }
}

pub fn sample_batch(
    views: &[ViewTargets],
    train: &[usize],
    patches: usize,
    lidar: usize,
    rng: &mut ChaCha8Rng,
) -> TrainBatch {
    let mut batch = TrainBatch::default();
    if train.is_empty() {
        return batch;
    }
    for _ in 0..patches {
        let view = train[rng.gen_range(0..train.len())];
        let v = &views[view];
        let x0 = rng.gen_range(0..v.camera.width - 1) as f64;
        let y0 = rng.gen_range(0..v.camera.height - 1) as f64;
        batch.patches.push(
            [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)].map(|(dx, dy)| BatchRay {
                view,
                x: x0 + dx,
                y: y0 + dy,
                lidar: None,
            }),
        );
    }
    let with_lidar: Vec<usize> = train
        .iter()
        .copied()
        .filter(|&i| !views[i].lidar.is_empty())
        .collect();
    if with_lidar.is_empty() {
        return batch;
    }
    for _ in 0..lidar {
        let view = with_lidar[rng.gen_range(0..with_lidar.len())];
        let pts = &views[view].lidar;
        let p = pts[rng.gen_range(0..pts.len())];
        batch.lidar.push(BatchRay {
            view,
            x: p.x,
            y: p.y,
            lidar: Some(p.disparity),
        });
    }
    batch
}
