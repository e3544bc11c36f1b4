//! Synthetic scenes with exact ground truth, dataset files and metrics.

pub mod dataset;
pub mod io;
pub mod metrics;
pub mod separation;
pub mod synth;

pub use dataset::{load_dataset, load_manifest, write_dataset, Manifest};
pub use metrics::{auc, masked_psnr, psnr, ssim, PSNR_CAP};
pub use separation::{
    dataset_view_confidence, scene_view_confidence, sweep_to_sparse, SeparationReport,
    SeparationTally,
};
pub use synth::{
    generate_scene, look_rotation, Dataset, FrameView, Hit, LidarFrame, LidarSpec, SynthSpec,
    SyntheticScene, BUILDING, CLASS_NAMES, GROUND, SKY, VEGETATION, VEHICLE,
};
