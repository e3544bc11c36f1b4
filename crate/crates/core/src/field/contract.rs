//! Unbounded-scene contraction into the ball of radius 2.

use nalgebra::{Matrix3, Vector3};

/// `x` inside the unit ball, `(2 − 1/‖x‖)·x/‖x‖` outside.
#[inline]
pub fn contract(x: &Vector3<f64>) -> Vector3<f64> {
    let r2 = x.norm_squared();
    if r2 <= 1.0 {
        *x
    } else {
        let r = r2.sqrt();
        x * ((2.0 - 1.0 / r) / r)
    }
}

/// Contraction together with its Jacobian.
#[inline]
pub fn contract_with_jacobian(x: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let r2 = x.norm_squared();
    if r2 <= 1.0 {
        return (*x, Matrix3::identity());
    }
    let r = r2.sqrt();
    let f = (2.0 - 1.0 / r) / r;
    let df = -2.0 / r2 + 2.0 / (r2 * r);
    let j = Matrix3::identity() * f + (x * x.transpose()) * (df / r);
    (x * f, j)
}

/// Isotropic local scale of the contraction, `det(J)^(1/3)`, and its
/// gradient w.r.t. `x`. Used to carry a cone radius into contracted space.
#[inline]
pub fn contraction_scale(x: &Vector3<f64>) -> (f64, Vector3<f64>) {
    let r2 = x.norm_squared();
    if r2 <= 1.0 {
        return (1.0, Vector3::zeros());
    }
    let r = r2.sqrt();
    let f = (2.0 - 1.0 / r) / r;
    let df = -2.0 / r2 + 2.0 / (r2 * r);
    // Radial stretch is 1/r², tangential stretch f (twice).
    let s = (f * f / r2).cbrt();
    let ds_dr = s * (2.0 / 3.0) * (df / f - 1.0 / r);
    (s, x * (ds_dr / r))
}
