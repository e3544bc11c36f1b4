//! Cascade sampling with object routing and volume rendering.

pub mod frame;
pub mod sampling;
pub mod scene;
pub mod volume;

pub use frame::{render_image, RenderedFrame};
pub use sampling::{
    outer_bound, resample_edges, route_intervals, s_to_t, t_to_s, uniform_edges, RaySamples, Route,
    SamplingConfig,
};
pub use scene::{
    ObjectSlot, RayGrad, RayPlan, RayTrace, RenderOutput, SceneConfig, SceneModel, SceneScratch,
    StageTrace, TraceMode,
};
pub use volume::{composite, weights_backward};
