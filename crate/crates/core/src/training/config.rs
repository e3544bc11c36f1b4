use serde::{Deserialize, Serialize};

use crate::confidence::CompletionConfig;
use crate::error::{Error, Result};
use crate::field::GroupKind;
use crate::renderer::SceneConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub depth: f64,
    pub lidar: f64,
    pub semantic: f64,
    pub distortion: f64,
    pub proposal: f64,
    pub smoothness: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            depth: 0.3,
            lidar: 0.3,
            semantic: 4e-3,
            distortion: 0.01,
            proposal: 1.0,
            smoothness: 1e-3,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.depth,
            self.lidar,
            self.semantic,
            self.distortion,
            self.proposal,
            self.smoothness,
        ];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub lr_grid: f64,
    pub lr_mlp: f64,
    pub lr_pose: f64,
    pub lr_track: f64,
    pub lr_confidence: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Final learning rate as a fraction of the peak.
    pub final_lr_ratio: f64,
    pub warmup_steps: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr_grid: 1e-2,
            lr_mlp: 1e-3,
            lr_pose: 1e-4,
            lr_track: 1e-4,
            lr_confidence: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-12,
            final_lr_ratio: 0.03,
            warmup_steps: 0,
        }
    }
}

impl OptimConfig {
    pub fn lr_for(&self, kind: GroupKind) -> f64 {
        match kind {
            GroupKind::Grid => self.lr_grid,
            GroupKind::Mlp => self.lr_mlp,
            GroupKind::PoseOffset => self.lr_pose,
            GroupKind::TrackOffset => self.lr_track,
            GroupKind::Confidence => self.lr_confidence,
            GroupKind::Lighting => self.lr_mlp,
        }
    }

    /// Cosine decay from the peak to `final_lr_ratio × peak`, after a linear
    /// warmup.
    pub fn schedule(&self, step: usize, total: usize) -> f64 {
        if step < self.warmup_steps {
            return (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = total.saturating_sub(self.warmup_steps).max(1) as f64;
        let p = ((step - self.warmup_steps) as f64 / span).min(1.0);
        self.final_lr_ratio
            + (1.0 - self.final_lr_ratio) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
    }
}

/// Everything `train` reads from `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub seed: u64,
    /// Rays per step, drawn as 2×2 pixel patches.
    pub batch_rays: usize,
    /// Extra rays per step at pixels with a LiDAR return.
    pub lidar_rays: usize,
    pub weights: LossWeights,
    pub optim: OptimConfig,
    pub scene: SceneConfig,
    /// Weight depth supervision by the learned confidence; otherwise Ĉ = 1.
    pub use_confidence: bool,
    pub tau: f64,
    pub completion: CompletionConfig,
    /// Jitter sample positions during training.
    pub jitter: bool,
    /// Camera views held out of training, as `(frame, camera)`.
    pub holdout: Vec<(usize, usize)>,
    pub log_every: usize,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            seed: 0,
            batch_rays: 4096,
            lidar_rays: 512,
            weights: LossWeights::default(),
            optim: OptimConfig::default(),
            scene: SceneConfig::default(),
            use_confidence: true,
            tau: crate::confidence::DEFAULT_TAU,
            completion: CompletionConfig::default(),
            jitter: true,
            holdout: Vec::new(),
            log_every: 50,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// Settings sized for the default 64×64 synthetic scene on a few cores:
    /// compact fields, 1024 rays plus 128 LiDAR rays per step.
    pub fn toy() -> Self {
        Self {
            batch_rays: 1024,
            lidar_rays: 128,
            scene: SceneConfig::compact(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.batch_rays < 4 || !self.batch_rays.is_multiple_of(4) {
            return Err(Error::Config(
                "batch_rays must be a positive multiple of 4".into(),
            ));
        }
        let o = &self.optim;
        let lrs = [o.lr_grid, o.lr_mlp, o.lr_pose, o.lr_track, o.lr_confidence];
        if lrs.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(Error::Config("Adam betas must be in [0, 1)".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config("tau must be in (0, 1]".into()));
        }
        Ok(())
    }
}
