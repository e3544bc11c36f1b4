//! Loss assembly and joint optimization of fields, confidence weights and
//! pose/track offsets.

pub mod batch;
pub mod config;
pub mod data;
pub mod losses;
pub mod optimizer;
pub mod trainer;

pub use batch::{sample_batch, BatchRay, TrainBatch};
pub use config::{LossWeights, OptimConfig, TrainConfig};
pub use data::{build_targets, LidarTarget, ViewTargets};
pub use optimizer::Adam;
pub use trainer::{
    build_model, refined_camera, resolve_config, BatchLoss, LoadedModel, LogRow, LossReport,
    ModelLayout, PlanMode, Trainer,
};
