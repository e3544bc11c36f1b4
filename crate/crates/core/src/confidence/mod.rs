//! Dense depth supervision from LiDAR and per-pixel confidence maps.

pub mod completion;
pub mod features;
pub mod lidar;
pub mod maps;
pub mod pipeline;
pub mod ssim;

pub use completion::{complete_depth, CompletionConfig};
pub use features::{feature_pyramid, FEATURE_DIM};
pub use lidar::{accumulate_lidar, project_points, SparseDepth};
pub use maps::{
    combine_backward, combine_confidence, gamma, geometry_confidence, perception_confidence,
    softmax, ConfidencePack, GeometryMaps, PerceptionMaps, DEFAULT_TAU, N_MAPS,
};
pub use pipeline::{view_confidence, ViewConfidence, ViewPair};
pub use ssim::{gaussian_filter, ssim_map};
