//! Cameras, rays, rigid transforms, pixel warping, object-box coordinates and
//! ray/primitive intersection.

mod camera;
mod intersect;
mod ray;
mod track;
mod transform;
mod warp;

pub use camera::{CameraModel, PixelPoint};
pub use intersect::{ray_aabb, ray_box_segments, ray_triangle, segments_for_poses, BoxSegment};
pub use ray::Ray;
pub use track::{box_to_object, BoxPose, Keyframe, ObjectCoords, TrackedBox};
pub use transform::{
    apply_pose_offset, rot_z, skew, slerp, so3_exp, so3_left_jacobian, wrap_pi, yaw_of, Rigid,
};
pub use warp::{warp_pixels, WarpField};
