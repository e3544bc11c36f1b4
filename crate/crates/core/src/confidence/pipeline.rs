//! One source/target view pair from sparse depth to the full confidence pack.

use super::completion::{complete_depth, CompletionConfig};
use super::features::feature_pyramid;
use super::lidar::SparseDepth;
use super::maps::{geometry_confidence, perception_confidence, ConfidencePack};
use crate::error::Result;
use crate::geometry::{warp_pixels, CameraModel, WarpField};
use crate::image::Image;

pub struct ViewPair<'a> {
    pub cam_s: &'a CameraModel,
    pub cam_t: &'a CameraModel,
    pub rgb_s: &'a Image,
    pub rgb_t: &'a Image,
    pub sparse_s: &'a SparseDepth,
    pub sparse_t: &'a SparseDepth,
    /// Source→target pixel flow, 2 channels.
    pub flow: &'a Image,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewConfidence {
    pub dense_s: Image,
    pub dense_t: Image,
    pub warp: WarpField,
    pub pack: ConfidencePack,
}

pub fn view_confidence(
    pair: &ViewPair,
    completion: &CompletionConfig,
    tau: f64,
) -> Result<ViewConfidence> {
    let dense_s = complete_depth(pair.sparse_s, pair.rgb_s, completion)?;
    let dense_t = complete_depth(pair.sparse_t, pair.rgb_t, completion)?;
    let warp = warp_pixels(&dense_s, pair.cam_s, pair.cam_t);
    let f_s = feature_pyramid(pair.rgb_s);
    let f_t = feature_pyramid(pair.rgb_t);
    let p = perception_confidence(pair.rgb_s, pair.rgb_t, &f_s, &f_t, &warp)?;
    let g = geometry_confidence(&dense_s, &dense_t, pair.flow, &warp, tau)?;
    Ok(ViewConfidence {
        dense_s,
        dense_t,
        warp,
        pack: ConfidencePack::new(p, g),
    })
}
