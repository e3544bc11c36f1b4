use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Rigid transform `p ↦ rot · p + trans`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rigid {
    pub rot: Matrix3<f64>,
    pub trans: Vector3<f64>,
}

impl Default for Rigid {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rigid {
    pub fn identity() -> Self {
        Self {
            rot: Matrix3::identity(),
            trans: Vector3::zeros(),
        }
    }

    pub fn new(rot: Matrix3<f64>, trans: Vector3<f64>) -> Self {
        Self { rot, trans }
    }

    pub fn from_yaw(yaw: f64, trans: Vector3<f64>) -> Self {
        Self {
            rot: rot_z(yaw),
            trans,
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot * p + self.trans
    }

    #[inline]
    pub fn apply_inverse(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot.tr_mul(&(p - self.trans))
    }

    pub fn inverse(&self) -> Rigid {
        let rt = self.rot.transpose();
        Rigid {
            rot: rt,
            trans: -(rt * self.trans),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Rigid) -> Rigid {
        Rigid {
            rot: self.rot * other.rot,
            trans: self.rot * other.trans + self.trans,
        }
    }

    pub fn orthonormality_error(&self) -> f64 {
        (self.rot.transpose() * self.rot - Matrix3::identity())
            .abs()
            .max()
    }
}

/// Refined pose `R' = exp(rot_offset)·R`, `T' = T + trans_offset`.
pub fn apply_pose_offset(
    pose: &Rigid,
    rot_offset: &Vector3<f64>,
    trans_offset: &Vector3<f64>,
) -> Rigid {
    Rigid {
        rot: so3_exp(rot_offset) * pose.rot,
        trans: pose.trans + trans_offset,
    }
}

pub fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*w).into_inner()
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Left Jacobian of SO(3): `exp(w + δ) ≈ exp(J_l(w) δ) · exp(w)`.
pub fn so3_left_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let k = skew(w);
    let k2 = k * k;
    let (a, b) = if theta2 < 1e-8 {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Matrix3::identity() + k * a + k2 * b
}

pub fn rot_z(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Yaw of a rotation about the world up axis (`z`).
pub fn yaw_of(rot: &Matrix3<f64>) -> f64 {
    rot[(1, 0)].atan2(rot[(0, 0)])
}

/// Shortest-path rotation interpolation.
pub fn slerp(a: &Matrix3<f64>, b: &Matrix3<f64>, alpha: f64) -> Matrix3<f64> {
    let qa = UnitQuaternion::from_matrix(a);
    let qb = UnitQuaternion::from_matrix(b);
    let qb = if qa.coords.dot(&qb.coords) < 0.0 {
        UnitQuaternion::new_unchecked(-qb.into_inner())
    } else {
        qb
    };
    qa.slerp(&qb, alpha).to_rotation_matrix().into_inner()
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_pi(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w + std::f64::consts::TAU
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_offset_is_identity() {
        let pose = Rigid::new(
            so3_exp(&Vector3::new(0.3, -0.2, 1.1)),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let out = apply_pose_offset(&pose, &Vector3::zeros(), &Vector3::zeros());
        assert_eq!(out, pose);
    }

    #[test]
    fn half_turn_twice_restores_rotation() {
        let pose = Rigid::new(so3_exp(&Vector3::new(0.1, 0.7, -0.4)), Vector3::zeros());
        let off = Vector3::new(0.0, 0.0, PI);
        let twice = apply_pose_offset(
            &apply_pose_offset(&pose, &off, &Vector3::zeros()),
            &off,
            &Vector3::zeros(),
        );
        assert!((twice.rot - pose.rot).abs().max() < 1e-9);
    }

    #[test]
    fn left_jacobian_matches_finite_differences() {
        let w = Vector3::new(0.4, -1.3, 0.9);
        let v = Vector3::new(0.3, 0.5, -0.8);
        let jl = so3_left_jacobian(&w);
        let base = so3_exp(&w) * v;
        let analytic = -skew(&base) * jl;
        let eps = 1e-6;
        for k in 0..3 {
            let mut wp = w;
            wp[k] += eps;
            let mut wm = w;
            wm[k] -= eps;
            let fd = (so3_exp(&wp) * v - so3_exp(&wm) * v) / (2.0 * eps);
            assert!((fd - analytic.column(k)).norm() < 1e-8, "column {k}");
        }
    }

    #[test]
    fn slerp_takes_shortest_yaw_path() {
        let a = rot_z(350f64.to_radians());
        let b = rot_z(10f64.to_radians());
        let mid = slerp(&a, &b, 0.5);
        assert!(wrap_pi(yaw_of(&mid)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn offsets_preserve_orthonormality(
            r in prop::array::uniform3(-4.0f64..4.0),
            o in prop::array::uniform3(-4.0f64..4.0),
            t in prop::array::uniform3(-10.0f64..10.0),
        ) {
            let pose = Rigid::new(so3_exp(&Vector3::from(r)), Vector3::zeros());
            let out = apply_pose_offset(&pose, &Vector3::from(o), &Vector3::from(t));
            prop_assert!(out.orthonormality_error() < 1e-9);
            prop_assert!((out.rot.determinant() - 1.0).abs() < 1e-9);
        }
    }
}
