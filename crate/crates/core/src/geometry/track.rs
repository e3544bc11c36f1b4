use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::transform::{rot_z, slerp, Rigid};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub time: f64,
    pub rot: Matrix3<f64>,
    pub trans: Vector3<f64>,
}

/// A dynamic object: a time-indexed 6DoF box track with fixed dimensions and
/// per-timestamp learnable translation/yaw refinements.
///
/// `dim` holds the box extent along the object-frame `x`, `y` and `z` axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedBox {
    pub id: u32,
    pub class: u16,
    pub keyframes: Vec<Keyframe>,
    pub dim: Vector3<f64>,
    /// Timestamps at which refinement offsets are defined (usually the
    /// camera capture times). Offsets are linearly interpolated in between.
    #[serde(default)]
    pub offset_times: Vec<f64>,
    #[serde(default)]
    pub refine_trans: Vec<Vector3<f64>>,
    #[serde(default)]
    pub refine_yaw: Vec<f64>,
}

/// Interpolated box pose (object→world) and the offset stencil that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxPose {
    pub pose: Rigid,
    /// `(offset index, weight)` pairs used for the refinement at this time.
    pub offset_weights: [(usize, f64); 2],
}

impl TrackedBox {
    pub fn new(id: u32, class: u16, keyframes: Vec<Keyframe>, dim: Vector3<f64>) -> Result<Self> {
        if keyframes.is_empty() {
            return Err(Error::Config(format!("track {id} has no keyframes")));
        }
        if keyframes.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(Error::Config(format!(
                "track {id}: keyframe times must be strictly increasing"
            )));
        }
        if dim.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Config(format!(
                "track {id}: dimensions must be positive"
            )));
        }
        Ok(Self {
            id,
            class,
            keyframes,
            dim,
            offset_times: Vec::new(),
            refine_trans: Vec::new(),
            refine_yaw: Vec::new(),
        })
    }

    /// Allocate zero refinement offsets at the given (sorted) timestamps.
    pub fn with_offset_times(mut self, times: Vec<f64>) -> Self {
        self.refine_trans = vec![Vector3::zeros(); times.len()];
        self.refine_yaw = vec![0.0; times.len()];
        self.offset_times = times;
        self
    }

    pub fn span(&self) -> (f64, f64) {
        (
            self.keyframes[0].time,
            self.keyframes[self.keyframes.len() - 1].time,
        )
    }

    pub fn contains_time(&self, t: f64) -> bool {
        let (a, b) = self.span();
        t >= a && t <= b
    }

    /// Yaw refinement at offset index `i`, wrapped into `[0, 2π)`.
    pub fn wrapped_yaw(&self, i: usize) -> f64 {
        self.refine_yaw[i].rem_euclid(std::f64::consts::TAU)
    }

    fn offset_stencil(&self, t: f64) -> [(usize, f64); 2] {
        let n = self.offset_times.len();
        if n == 0 {
            return [(usize::MAX, 0.0), (usize::MAX, 0.0)];
        }
        let k = self.offset_times.partition_point(|&s| s <= t);
        if k == 0 {
            return [(0, 1.0), (usize::MAX, 0.0)];
        }
        if k == n {
            return [(n - 1, 1.0), (usize::MAX, 0.0)];
        }
        let (a, b) = (self.offset_times[k - 1], self.offset_times[k]);
        let alpha = (t - a) / (b - a);
        [(k - 1, 1.0 - alpha), (k, alpha)]
    }

    /// Box pose at time `t`: translation interpolated linearly, rotation along
    /// the shortest arc, then the refinement offsets added on top.
    pub fn interpolate_pose(&self, t: f64) -> Result<BoxPose> {
        self.interpolate_pose_with(t, &self.offsets_flat())
    }

    /// [`interpolate_pose`](Self::interpolate_pose) with refinement offsets
    /// taken from a flat `[δx, δy, δz, δθ]`-per-timestamp slice.
    pub fn interpolate_pose_with(&self, t: f64, offsets: &[f64]) -> Result<BoxPose> {
        let (start, end) = self.span();
        if !(t >= start && t <= end) {
            return Err(Error::OutOfRange { t, start, end });
        }
        let k = self.keyframes.partition_point(|kf| kf.time <= t);
        let (rot, trans) = if k >= self.keyframes.len() {
            let kf = &self.keyframes[self.keyframes.len() - 1];
            (kf.rot, kf.trans)
        } else {
            let (a, b) = (&self.keyframes[k - 1], &self.keyframes[k]);
            let alpha = (t - a.time) / (b.time - a.time);
            (slerp(&a.rot, &b.rot, alpha), a.trans.lerp(&b.trans, alpha))
        };
        let stencil = self.offset_stencil(t);
        let mut d_trans = Vector3::zeros();
        let mut d_yaw = 0.0;
        for &(i, w) in &stencil {
            if i != usize::MAX {
                let o = &offsets[4 * i..4 * i + 4];
                d_trans += Vector3::new(o[0], o[1], o[2]) * w;
                d_yaw += o[3] * w;
            }
        }
        Ok(BoxPose {
            pose: Rigid::new(rot_z(d_yaw) * rot, trans + d_trans),
            offset_weights: stencil,
        })
    }

    /// Refinement offsets as `[δx, δy, δz, δθ]` per offset timestamp.
    pub fn offsets_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.offset_times.len());
        for (t, y) in self.refine_trans.iter().zip(&self.refine_yaw) {
            out.extend_from_slice(&[t.x, t.y, t.z, *y]);
        }
        out
    }

    pub fn set_offsets_flat(&mut self, offsets: &[f64]) {
        for (i, o) in offsets.chunks_exact(4).enumerate() {
            self.refine_trans[i] = Vector3::new(o[0], o[1], o[2]);
            self.refine_yaw[i] = o[3];
        }
    }

    /// Box-local coordinates of the 8 corners, in world space at time `t`.
    pub fn corners(&self, t: f64) -> Result<[Vector3<f64>; 8]> {
        let pose = self.interpolate_pose(t)?.pose;
        let mut out = [Vector3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let s = Vector3::new(
                if i & 1 == 0 { -0.5 } else { 0.5 },
                if i & 2 == 0 { -0.5 } else { 0.5 },
                if i & 4 == 0 { -0.5 } else { 0.5 },
            );
            *c = pose.apply(&s.component_mul(&self.dim));
        }
        Ok(out)
    }
}

/// A point, direction and cone radius expressed in the unit box frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectCoords {
    pub pos: Vector3<f64>,
    pub dir: Vector3<f64>,
    pub radius: f64,
}

impl ObjectCoords {
    pub fn inside(&self) -> bool {
        self.pos.iter().all(|v| v.abs() <= 0.5)
    }
}

/// World → normalized object frame: `x_o = Rᵀ(x−T)∘(1/dim)`, `d_o = Rᵀd`,
/// `r_o = r / mean(dim)`.
pub fn box_to_object(
    x: &Vector3<f64>,
    d: &Vector3<f64>,
    r: f64,
    pose: &Rigid,
    dim: &Vector3<f64>,
) -> ObjectCoords {
    let local = pose.apply_inverse(x);
    ObjectCoords {
        pos: local.component_div(dim),
        dir: pose.rot.tr_mul(d),
        radius: r / (dim.sum() / 3.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::transform::{wrap_pi, yaw_of};

    fn track() -> TrackedBox {
        TrackedBox::new(
            3,
            1,
            vec![
                Keyframe {
                    time: 0.0,
                    rot: rot_z(350f64.to_radians()),
                    trans: Vector3::new(0.0, 0.0, 0.0),
                },
                Keyframe {
                    time: 1.0,
                    rot: rot_z(10f64.to_radians()),
                    trans: Vector3::new(2.0, 0.0, 0.0),
                },
            ],
            Vector3::new(4.0, 2.0, 1.5),
        )
        .unwrap()
    }

    #[test]
    fn keyframe_times_reproduce_keyframes() {
        let b = track();
        let p = b.interpolate_pose(0.0).unwrap().pose;
        assert!((p.rot - b.keyframes[0].rot).abs().max() < 1e-12);
        assert_eq!(p.trans, Vector3::zeros());
    }

    #[test]
    fn midpoint_interpolation_is_shortest_path() {
        let b = track();
        let p = b.interpolate_pose(0.5).unwrap().pose;
        assert!((p.trans - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!(wrap_pi(yaw_of(&p.rot)).abs() < 1e-9);
    }

    #[test]
    fn out_of_span_is_an_error() {
        assert!(matches!(
            track().interpolate_pose(1.5),
            Err(Error::OutOfRange { .. })
        ));
        assert!(matches!(
            track().interpolate_pose(-0.1),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn offsets_are_added_after_interpolation() {
        let mut b = track().with_offset_times(vec![0.0, 1.0]);
        b.refine_trans[0] = Vector3::new(0.0, 1.0, 0.0);
        b.refine_yaw[1] = 0.2;
        let p = b.interpolate_pose(0.5).unwrap().pose;
        assert!((p.trans - Vector3::new(1.0, 0.5, 0.0)).norm() < 1e-12);
        assert!((wrap_pi(yaw_of(&p.rot)) - 0.1).abs() < 1e-9);
        b.refine_yaw[1] = -0.5;
        assert!((b.wrapped_yaw(1) - (std::f64::consts::TAU - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn invalid_tracks_are_rejected() {
        let kf = |t| Keyframe {
            time: t,
            rot: Matrix3::identity(),
            trans: Vector3::zeros(),
        };
        assert!(TrackedBox::new(0, 0, vec![kf(1.0), kf(1.0)], Vector3::repeat(1.0)).is_err());
        assert!(TrackedBox::new(0, 0, vec![kf(0.0)], Vector3::new(1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn center_and_corners_map_to_unit_box() {
        let b = track();
        let pose = b.interpolate_pose(0.3).unwrap().pose;
        let d = Vector3::new(0.0, 0.0, 1.0);
        let c = box_to_object(&pose.trans, &d, 0.9, &pose, &b.dim);
        assert!(c.pos.norm() < 1e-12);
        assert!((c.radius - 0.9 / 2.5).abs() < 1e-12);
        let mut seen = std::collections::BTreeSet::new();
        for corner in b.corners(0.3).unwrap() {
            let o = box_to_object(&corner, &d, 0.0, &pose, &b.dim);
            for v in o.pos.iter() {
                assert!((v.abs() - 0.5).abs() < 1e-12);
            }
            seen.insert((o.pos.x > 0.0, o.pos.y > 0.0, o.pos.z > 0.0));
            assert!((o.dir.norm() - 1.0).abs() < 1e-12);
        }
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn yawed_box_matches_rigid_oracle() {
        let yaw: f64 = 0.7;
        let pose = Rigid::from_yaw(yaw, Vector3::new(3.0, -1.0, 0.5));
        let dim = Vector3::new(4.0, 2.0, 1.5);
        let x = Vector3::new(4.1, 0.2, 0.9);
        let o = box_to_object(&x, &Vector3::x(), 0.0, &pose, &dim);
        // Oracle: undo translation, rotate by -yaw by hand, scale.
        let (s, c) = yaw.sin_cos();
        let v = x - pose.trans;
        let local = Vector3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z);
        assert!((o.pos - local.component_div(&dim)).norm() < 1e-12);
        assert!((o.dir - Vector3::new(c, -s, 0.0)).norm() < 1e-12);
    }
}
